//! Scalar and small-vector statistical primitives.

pub mod bvn;
pub mod gaussian;
pub mod normal;
pub mod quadrature;
pub mod truncnorm;

pub use bvn::bivariate_normal_rect;
pub use gaussian::{
    cholesky_with_jitter, condition_number, conditional_moments, missingness_probability,
    sample_gaussian_canonical,
};
pub use normal::{
    normal_cdf, normal_interval_mass, std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf,
};
pub use truncnorm::{sample_truncated_normal, ConditionalMoments, TruncationInterval};
