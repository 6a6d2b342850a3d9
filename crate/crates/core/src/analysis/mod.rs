//! Closed-form steady-state predictions: Lyapunov covariances, MSD, the
//! distribution of the clustering statistic and its error bounds.

pub mod chisq;
pub mod covariance;
pub mod errprob;
pub mod lyapunov;
pub mod predict;

pub use chisq::{central_chi2_pdf, delta_sq_pdf_special_case, ln_bessel_i, noncentral_chi2_pdf};
pub use covariance::{build_pi, delta_between_groups, normalized_msd, LowDimModel, MsdPrediction};
pub use errprob::{delta_stat_moments, type1_bound, type2_bound};
pub use lyapunov::{
    solve_continuous_lyapunov, solve_discrete_lyapunov, solve_discrete_lyapunov_with,
    spectral_radius, DiscreteMethod, DISCRETE_TOL,
};
pub use predict::{predict, to_db, MatrixJson, PredictOptions, TheoryReport};
