//! Path-integral machinery for expected traces of the generalized operator:
//! perfect matchings, the jump process on component indices, combined local
//! times, the field-dependent combinatorial constants, a Monte Carlo of the
//! expected trace split by jump count, and eigenvalue-based trace fits.

mod estimator;
mod jumps;
mod matching;
mod trace_fit;

pub use estimator::{
    draw_fk_sample, mc_expected_trace, mc_expected_trace_with, FkEstimate, FkOptions, FkSample, TraceSplit,
    MAX_COMPONENTS, VARIANCE_FLAG,
};
pub use jumps::{
    build_jump_path, combined_local_times, row_norm2, row_states, sample_jump_count, sample_si_times, split_by_state,
    JumpPath, SiSampler, SiTimes,
};
pub use matching::{
    combinatorial_constant, double_factorial_odd, enumerate_matchings, BinarySequence, Jump, Matching,
    MAX_ENUMERATED, MAX_SIGN_ENUMERATION,
};
pub use trace_fit::{
    boundary_half_order, DifferenceModel,
    column_summary, eigen_trace_table, eigen_traces, fit_difference_curve, fit_trace_curve, paired_constant_fit,
    trace_constant_fit, trace_covariance_check, CovariancePair, CovarianceReport, PairedFit, TraceFit,
    TracePointSummary, BOOTSTRAP, CONDITION_LIMIT,
};
