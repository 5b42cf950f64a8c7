//! The jump process on component indices: jump counts, self-intersection
//! times, the non-self-jumping walk, and the split of local time by state.

use super::matching::{Jump, Matching};
use crate::bridge_mc::{LocalTimeField, SparseRow};
use crate::error::{invalid, Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// 2·Poisson((r − 1)²‖L‖²/2), the number of jumps.
pub fn sample_jump_count<R: Rng + ?Sized>(l2norm2: f64, r: usize, rng: &mut R) -> Result<usize> {
    if !(l2norm2 >= 0.0) || !l2norm2.is_finite() {
        return Err(invalid(format!("‖L‖² must be finite and nonnegative, got {l2norm2}")));
    }
    let rate = (r.saturating_sub(1) as f64).powi(2) * l2norm2 / 2.0;
    if rate == 0.0 {
        return Ok(0);
    }
    let pois = Poisson::new(rate).map_err(|e| invalid(e.to_string()))?;
    Ok(2 * pois.sample(rng) as usize)
}

/// Times drawn from the self-intersection measure of a matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiTimes {
    /// T_ℓ for ℓ = 1, …, n (index ℓ − 1).
    pub times: Vec<f64>,
    /// Field row containing each T_ℓ.
    pub cells: Vec<usize>,
}

/// Sampler for cell pairs (a, b) with probability ⟨L_a, L_b⟩ / ‖L‖².
pub struct SiSampler<'a> {
    field: &'a LocalTimeField,
    cumulative: Vec<f64>,
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative[cumulative.len() - 1];
    cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1)
}

fn cumulate(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w.max(0.0);
            acc
        })
        .collect()
}

impl<'a> SiSampler<'a> {
    pub fn new(field: &'a LocalTimeField) -> Result<Self> {
        let total = field.total();
        let cumulative = cumulate(field.rows.iter().map(|r| r.dot(&total)));
        if !(cumulative.last().copied().unwrap_or(0.0) > 0.0) {
            return Err(Error::Degenerate("local-time field has zero norm".into()));
        }
        Ok(Self { field, cumulative })
    }

    /// One cell pair: a from its marginal, then b given a.
    pub fn cell_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let a = pick(&self.cumulative, rng.random());
        let row = &self.field.rows[a];
        let cond = cumulate(self.field.rows.iter().map(|r| row.dot(r)));
        (a, pick(&cond, rng.random()))
    }

    fn time_in<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> f64 {
        let (lo, hi) = self.field.intervals[cell];
        lo + (hi - lo) * rng.random::<f64>()
    }

    /// Independent cell pairs for every pair of `q`, times uniform within cells.
    pub fn sample<R: Rng + ?Sized>(&self, q: &Matching, rng: &mut R) -> SiTimes {
        let mut times = vec![0.0; q.n];
        let mut cells = vec![0; q.n];
        for &(l1, l2) in &q.pairs {
            let (a, b) = self.cell_pair(rng);
            cells[l1 - 1] = a;
            cells[l2 - 1] = b;
            times[l1 - 1] = self.time_in(a, rng);
            times[l2 - 1] = self.time_in(b, rng);
        }
        SiTimes { times, cells }
    }
}

/// Self-intersection times for the matching `q` on a single bridge's field.
pub fn sample_si_times<R: Rng + ?Sized>(field: &LocalTimeField, q: &Matching, rng: &mut R) -> Result<SiTimes> {
    Ok(SiSampler::new(field)?.sample(q, rng))
}

/// A piecewise-constant path on states 0..r with its jump times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    pub horizon: f64,
    pub r: usize,
    /// τ̂₁ ≤ … ≤ τ̂_N.
    pub times: Vec<f64>,
    /// M₀ = start, M₁, …, M_N.
    pub states: Vec<usize>,
}

impl JumpPath {
    pub fn constant(start: usize, r: usize, horizon: f64) -> Self {
        Self { horizon, r, times: Vec::new(), states: vec![start] }
    }

    pub fn start(&self) -> usize {
        self.states[0]
    }

    pub fn end_state(&self) -> usize {
        self.states[self.states.len() - 1]
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    /// J_ℓ = (M_{ℓ−1}, M_ℓ).
    pub fn jumps(&self) -> Vec<Jump> {
        self.states.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Û(s), right-continuous.
    pub fn state_at(&self, s: f64) -> usize {
        self.states[self.times.partition_point(|&tau| tau <= s)]
    }

    pub fn is_valid(&self) -> bool {
        self.states.len() == self.times.len() + 1
            && self.states.iter().all(|&s| s < self.r)
            && self.states.windows(2).all(|w| w[0] != w[1])
            && self.times.windows(2).all(|w| w[0] <= w[1])
            && self.times.iter().all(|&t| (0.0..=self.horizon).contains(&t))
    }
}

/// Sorts the labelled times T into τ̂, runs the non-self-jumping walk from
/// `start`, and returns the path with the matching p̂ induced on sorted
/// positions.
pub fn build_jump_path<R: Rng + ?Sized>(
    start: usize,
    horizon: f64,
    times: &[f64],
    q: &Matching,
    r: usize,
    rng: &mut R,
) -> Result<(JumpPath, Matching)> {
    if start >= r {
        return Err(invalid(format!("start state {start} outside 0..{r}")));
    }
    if times.len() != q.n {
        return Err(invalid(format!("{} times for a matching of size {}", times.len(), q.n)));
    }
    if times.is_empty() {
        return Ok((JumpPath::constant(start, r, horizon), Matching::empty()));
    }
    if r < 2 {
        return Err(invalid("jumps need at least two states"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    // position of label ℓ (1-based) among the sorted times
    let mut position = vec![0; times.len() + 1];
    for (pos, &label) in order.iter().enumerate() {
        position[label + 1] = pos + 1;
    }
    let p_hat = q.relabel(|l| position[l])?;
    let mut states = Vec::with_capacity(times.len() + 1);
    states.push(start);
    let mut state = start;
    for _ in 0..times.len() {
        let mut next = rng.random_range(0..r - 1);
        if next >= state {
            next += 1;
        }
        states.push(next);
        state = next;
    }
    let sorted = order.iter().map(|&k| times[k]).collect();
    Ok((JumpPath { horizon, r, times: sorted, states }, p_hat))
}

/// State of Û at the midpoint of every field row.
pub fn row_states(jump: &JumpPath, intervals: &[(f64, f64)]) -> Vec<usize> {
    intervals.iter().map(|&(a, b)| jump.state_at(0.5 * (a + b))).collect()
}

/// Sums per-row values by state.
pub fn split_by_state(jump: &JumpPath, intervals: &[(f64, f64)], per_row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; jump.r];
    for (s, v) in row_states(jump, intervals).into_iter().zip(per_row) {
        out[s] += v;
    }
    out
}

/// Local time of X accumulated while Û = j, one row per state.
pub fn combined_local_times(jump: &JumpPath, field: &LocalTimeField) -> Result<Vec<SparseRow>> {
    let end = field.intervals.last().map(|iv| iv.1).unwrap_or(0.0);
    if (end - jump.horizon).abs() > 1e-9 * jump.horizon.max(1.0) {
        return Err(invalid(format!("field horizon {end} differs from path horizon {}", jump.horizon)));
    }
    let mut out = vec![SparseRow { first_bin: 0, values: Vec::new() }; jump.r];
    for (row, s) in field.rows.iter().zip(row_states(jump, &field.intervals)) {
        out[s].add_scaled(row, 1.0);
    }
    Ok(out)
}

/// ‖row‖₂² for bin width δ.
pub fn row_norm2(row: &SparseRow, delta: f64) -> f64 {
    row.values.iter().map(|v| v * v).sum::<f64>() * delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge_mc::{local_time_field, sample_reflected_bridge_with, TimePartition};
    use crate::seed;

    fn synthetic(rows: Vec<Vec<f64>>) -> LocalTimeField {
        let n = rows.len();
        LocalTimeField {
            delta: 1.0,
            intervals: (0..n).map(|k| (k as f64, (k + 1) as f64)).collect(),
            rows: rows.into_iter().map(|values| SparseRow { first_bin: 0, values }).collect(),
        }
    }

    #[test]
    fn jump_count_laws() {
        let mut rng = seed::rng(1);
        assert!((0..100).all(|_| sample_jump_count(3.0, 1, &mut rng).unwrap() == 0));
        let n = 100_000;
        let draws: Vec<usize> = (0..n).map(|_| sample_jump_count(1.0, 3, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|d| d % 2 == 0));
        let mean = draws.iter().map(|&d| d as f64 / 2.0).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.04, "mean {mean}");
        let p0 = draws.iter().filter(|&&d| d == 0).count() as f64 / n as f64;
        let exact = (-2.0f64).exp();
        assert!((p0 - exact).abs() < 4.0 * (exact * (1.0 - exact) / n as f64).sqrt());
        assert!(sample_jump_count(-1.0, 2, &mut rng).is_err());
    }

    #[test]
    fn si_times_on_single_cell() {
        let field = synthetic(vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![0.0, 0.0]]);
        let q = Matching::new(2, vec![(1, 2)]).unwrap();
        let mut rng = seed::rng(2);
        for _ in 0..100 {
            let s = sample_si_times(&field, &q, &mut rng).unwrap();
            assert_eq!(s.cells, vec![1, 1]);
            assert!(s.times.iter().all(|&t| (1.0..2.0).contains(&t)));
        }
        assert!(sample_si_times(&synthetic(vec![vec![0.0]]), &q, &mut rng).is_err());
    }

    #[test]
    fn si_cell_pairs_follow_inner_products() {
        // two identical cells plus a partially overlapping third
        let field = synthetic(vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 2.0]]);
        let gram = |a: usize, b: usize| field.inner(a, b);
        let total: f64 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| gram(a, b)).sum();
        let sampler = SiSampler::new(&field).unwrap();
        let mut rng = seed::rng(3);
        let n = 100_000;
        let mut counts = [[0usize; 3]; 3];
        for _ in 0..n {
            let (a, b) = sampler.cell_pair(&mut rng);
            let (lo, hi) = (a.min(b), a.max(b));
            counts[lo][hi] += 1;
        }
        for a in 0..3 {
            for b in a..3 {
                let p = if a == b { gram(a, a) } else { 2.0 * gram(a, b) } / total;
                let f = counts[a][b] as f64 / n as f64;
                assert!((f - p).abs() < 0.02 * p.max(0.05), "({a},{b}): {f} vs {p}");
            }
        }
    }

    #[test]
    fn si_pairs_share_one_marginal() {
        let field = synthetic(vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 3.0]]);
        let q = Matching::new(4, vec![(1, 3), (2, 4)]).unwrap();
        let mut rng = seed::rng(5);
        let n = 40_000;
        let mut c = [[0usize; 3]; 2];
        for _ in 0..n {
            let s = sample_si_times(&field, &q, &mut rng).unwrap();
            c[0][s.cells[0]] += 1;
            c[1][s.cells[1]] += 1;
        }
        for k in 0..3 {
            assert!((c[0][k] as f64 - c[1][k] as f64).abs() / (n as f64) < 0.015);
        }
    }

    #[test]
    fn jump_paths() {
        let mut rng = seed::rng(6);
        let (p, m) = build_jump_path(1, 1.0, &[], &Matching::empty(), 3, &mut rng).unwrap();
        assert_eq!((p.end_state(), p.state_at(0.7), m.n), (1, 1, 0));
        let q = Matching::new(4, vec![(1, 2), (3, 4)]).unwrap();
        let (p, m) = build_jump_path(0, 1.0, &[0.9, 0.1, 0.5, 0.3], &q, 2, &mut rng).unwrap();
        assert_eq!(p.states, vec![0, 1, 0, 1, 0]);
        assert_eq!(p.times, vec![0.1, 0.3, 0.5, 0.9]);
        // labels 1..4 sit at sorted positions 4, 1, 3, 2
        assert_eq!(m.pairs, vec![(1, 4), (2, 3)]);
        assert!(p.is_valid());
        assert_eq!(p.state_at(0.2), 1);
        assert!(build_jump_path(0, 1.0, &[0.2, 0.4], &Matching::new(2, vec![(1, 2)]).unwrap(), 1, &mut rng).is_err());
    }

    #[test]
    fn two_jumps_return_with_probability_one_over_r_minus_one() {
        let mut rng = seed::rng(7);
        let q = Matching::new(2, vec![(1, 2)]).unwrap();
        let n = 100_000;
        let home = (0..n)
            .filter(|_| build_jump_path(2, 1.0, &[0.2, 0.6], &q, 4, &mut rng).unwrap().0.end_state() == 2)
            .count();
        assert!((home as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02 / 3.0);
    }

    #[test]
    fn combined_local_times_add_up() {
        let mut rng = seed::rng(8);
        let path = sample_reflected_bridge_with(&mut rng, 0.4, 0.4, 1.0, 512);
        let field = local_time_field(&path, 0.05, &TimePartition::PerStep).unwrap();
        let q = Matching::new(6, vec![(1, 4), (2, 6), (3, 5)]).unwrap();
        let si = sample_si_times(&field, &q, &mut rng).unwrap();
        let (jump, _) = build_jump_path(0, 1.0, &si.times, &q, 3, &mut rng).unwrap();
        let parts = combined_local_times(&jump, &field).unwrap();
        let mut sum = SparseRow { first_bin: 0, values: Vec::new() };
        for p in &parts {
            sum.add_scaled(p, 1.0);
        }
        let total = field.total();
        let mut diff = sum.clone();
        diff.add_scaled(&total, -1.0);
        assert!(diff.values.iter().all(|v| v.abs() < 1e-12));
        let constant = combined_local_times(&JumpPath::constant(2, 3, 1.0), &field).unwrap();
        assert!(constant[0].values.is_empty() && constant[1].values.is_empty());
        assert!((row_norm2(&constant[2], 0.05) - field.norm2_squared()).abs() < 1e-12);
        assert!(combined_local_times(&JumpPath::constant(0, 3, 2.0), &field).is_err());
    }

    #[test]
    fn alternating_path_halves_a_symmetric_field() {
        let field = synthetic(vec![vec![1.0, 2.0]; 8]);
        let jump = JumpPath { horizon: 8.0, r: 2, times: vec![2.0, 4.0, 6.0], states: vec![0, 1, 0, 1] };
        let parts = combined_local_times(&jump, &field).unwrap();
        assert_eq!(parts[0].values, vec![4.0, 8.0]);
        assert_eq!(parts[1].values, vec![4.0, 8.0]);
        let per_row = vec![1.0; 8];
        assert_eq!(split_by_state(&jump, &field.intervals, &per_row), vec![4.0, 4.0]);
    }
}
