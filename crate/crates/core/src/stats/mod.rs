//! Scalar distributions and numerical optimization.

pub mod chi2;
pub mod normal;
pub mod optimize;

pub use chi2::chi2_sf;
pub use normal::{
    log_add_exp, log_sum_exp, norm_cdf, norm_log_cdf, norm_log_pdf, norm_log_sf, norm_pdf, norm_quantile, norm_sf,
};
pub use optimize::{
    finite_diff_gradient, finite_diff_jacobian, maximize, FnObjective, MaximizeOptions, Objective, OptimizerReport,
};
