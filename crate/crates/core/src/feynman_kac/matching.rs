//! Perfect pair matchings and the sign-weighted constants attached to them.

use crate::ensembles::FieldTag;
use crate::error::{invalid, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest matching size handled by enumeration.
pub const MAX_ENUMERATED: usize = 12;
/// Largest jump count for the quaternion sign enumeration.
pub const MAX_SIGN_ENUMERATION: usize = 16;

/// A perfect matching of {1, …, n}; n = 0 is the empty matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    pub n: usize,
    /// 1-based pairs (a, b) with a < b, sorted by a.
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn empty() -> Self {
        Self { n: 0, pairs: Vec::new() }
    }

    /// Builds and validates a matching from arbitrary pairs.
    pub fn new(n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if n % 2 != 0 {
            return Err(invalid(format!("matchings need an even size, got {n}")));
        }
        let mut seen = vec![false; n + 1];
        let mut canon = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            if a == 0 || b > n || a == b || seen[a] || seen[b] {
                return Err(invalid("pairs must be disjoint 2-subsets of 1..=n"));
            }
            seen[a] = true;
            seen[b] = true;
            canon.push((a, b));
        }
        if canon.len() * 2 != n {
            return Err(invalid("pairs do not cover 1..=n"));
        }
        canon.sort_unstable();
        Ok(Self { n, pairs: canon })
    }

    pub fn is_valid(&self) -> bool {
        Matching::new(self.n, self.pairs.clone()).map(|m| m == *self).unwrap_or(false)
    }

    /// Partner of `l` (1-based).
    pub fn partner(&self, l: usize) -> Option<usize> {
        self.pairs.iter().find_map(|&(a, b)| match l {
            _ if l == a => Some(b),
            _ if l == b => Some(a),
            _ => None,
        })
    }

    /// Uniformly random matching of {1, …, n}.
    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n % 2 != 0 {
            return Err(invalid(format!("matchings need an even size, got {n}")));
        }
        let mut perm: Vec<usize> = (1..=n).collect();
        perm.shuffle(rng);
        Matching::new(n, perm.chunks_exact(2).map(|c| (c[0], c[1])).collect())
    }

    /// The matching induced on new labels: {a, b} ↦ {relabel(a), relabel(b)}.
    pub fn relabel(&self, relabel: impl Fn(usize) -> usize) -> Result<Self> {
        Matching::new(self.n, self.pairs.iter().map(|&(a, b)| (relabel(a), relabel(b))).collect())
    }
}

/// (n − 1)!!, the number of perfect matchings of n points (1 for n = 0).
pub fn double_factorial_odd(n: usize) -> u64 {
    (1..n).step_by(2).map(|k| k as u64).product()
}

/// All perfect matchings of {1, …, n}, in the order obtained by pairing the
/// smallest free point with each remaining point in turn.
pub fn enumerate_matchings(n: usize) -> Result<Vec<Matching>> {
    if n % 2 != 0 {
        return Err(invalid(format!("matchings need an even size, got {n}")));
    }
    if n > MAX_ENUMERATED {
        return Err(invalid(format!("enumeration is limited to n ≤ {MAX_ENUMERATED}")));
    }
    fn rec(free: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.is_empty() {
            out.push(acc.clone());
            return;
        }
        let a = free[0];
        for k in 1..free.len() {
            let rest: Vec<usize> = free[1..].iter().enumerate().filter(|(i, _)| *i != k - 1).map(|(_, &v)| v).collect();
            acc.push((a, free[k]));
            rec(&rest, acc, out);
            acc.pop();
        }
    }
    let mut raw = Vec::new();
    rec(&(1..=n).collect::<Vec<_>>(), &mut Vec::new(), &mut raw);
    raw.into_iter().map(|p| Matching::new(n, p)).collect()
}

/// A jump between states, (from, to).
pub type Jump = (usize, usize);

fn reversed(j: Jump) -> Jump {
    (j.1, j.0)
}

/// Weight of a matched jump sequence: for real entries every matched pair
/// must repeat or reverse, for complex entries every pair must reverse, and
/// for quaternion entries pairs may repeat or reverse and the weight is the
/// signed count of respecting binary sequences, scaled by 2^{−N/2}.
pub fn combinatorial_constant(p: &Matching, jumps: &[Jump], field: FieldTag) -> Result<f64> {
    if jumps.len() != p.n {
        return Err(invalid(format!("{} jumps for a matching of size {}", jumps.len(), p.n)));
    }
    if p.n == 0 {
        return Ok(1.0);
    }
    let j = |l: usize| jumps[l - 1];
    let admissible = p.pairs.iter().all(|&(a, b)| match field {
        FieldTag::Complex => j(a) == reversed(j(b)),
        _ => j(a) == j(b) || j(a) == reversed(j(b)),
    });
    if !admissible {
        return Ok(0.0);
    }
    match field {
        FieldTag::Real | FieldTag::Complex => Ok(1.0),
        FieldTag::Quaternion => quaternion_sign_sum(p, jumps),
    }
}

/// A binary sequence m = (m₀, …, m_n).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySequence {
    pub m: Vec<u8>,
}

impl BinarySequence {
    pub fn new(m: Vec<u8>) -> Result<Self> {
        if m.is_empty() || m.iter().any(|&b| b > 1) {
            return Err(invalid("binary sequences need at least one entry, all in {0, 1}"));
        }
        Ok(Self { m })
    }

    /// Number of steps n.
    pub fn steps(&self) -> usize {
        self.m.len() - 1
    }

    /// Endpoint classes (m₀, m_n).
    pub fn endpoints(&self) -> (u8, u8) {
        (self.m[0], self.m[self.m.len() - 1])
    }

    fn step(&self, l: usize) -> (u8, u8) {
        (self.m[l - 1], self.m[l])
    }

    /// Number of flips if the sequence respects (p, J), otherwise `None`.
    pub fn respects(&self, p: &Matching, jumps: &[Jump]) -> Option<usize> {
        if self.steps() != p.n || jumps.len() != p.n {
            return None;
        }
        let mut flips = 0;
        for &(a, b) in &p.pairs {
            let (sa, sb) = (self.step(a), self.step(b));
            let cross = (sa == (0, 1) && sb == (1, 0)) || (sa == (1, 0) && sb == (0, 1));
            if jumps[a - 1] == jumps[b - 1] {
                let flat = (sa == (0, 0) && sb == (1, 1)) || (sa == (1, 1) && sb == (0, 0));
                if cross {
                    flips += 1;
                } else if !flat {
                    return None;
                }
            } else if jumps[a - 1] == reversed(jumps[b - 1]) {
                let same = sa == sb && sa.0 == sa.1;
                if !(same || cross) {
                    return None;
                }
            } else {
                return None;
            }
        }
        Some(flips)
    }

    /// All sequences with n steps and fixed endpoints (h, l).
    pub fn with_endpoints(n: usize, h: u8, l: u8) -> impl Iterator<Item = BinarySequence> {
        let interior = n.saturating_sub(1) as u32;
        (0u64..(1u64 << interior)).filter_map(move |mask| {
            if n == 0 && h != l {
                return None;
            }
            let mut m = Vec::with_capacity(n + 1);
            m.push(h);
            for k in 1..n {
                m.push(((mask >> (k - 1)) & 1) as u8);
            }
            if n > 0 {
                m.push(l);
            }
            Some(BinarySequence { m })
        })
    }
}

fn quaternion_sign_sum(p: &Matching, jumps: &[Jump]) -> Result<f64> {
    let n = p.n;
    if n > MAX_SIGN_ENUMERATION {
        return Err(invalid(format!("sign enumeration is limited to N ≤ {MAX_SIGN_ENUMERATION}")));
    }
    let total: i64 = BinarySequence::with_endpoints(n, 0, 0)
        .filter_map(|m| m.respects(p, jumps))
        .map(|flips| if flips % 2 == 0 { 1 } else { -1 })
        .sum();
    Ok(total as f64 * 2f64.powf(-(n as f64) / 2.0))
}
