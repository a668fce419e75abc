//! Data model: column schemas, datasets, auxiliary quantiles, binning and
//! known marginals.

pub mod binning;
pub mod marginal;
pub mod quantiles;
pub mod schema;

pub use binning::{bin_values, build_bins, BinInterval, BinnedColumn};
pub use marginal::{known_marginal_transform, Cdf, Marginal};
pub use quantiles::{
    augment_with_intermediate, empirical_quantile, validate_aux, AugmentedQuantiles, AuxPoint,
    AuxiliaryQuantileSet, QuantileEdge, DEFAULT_CANDIDATE_BINS,
};
pub use schema::{ColumnKind, ColumnSchema, Dataset, MissingnessMode};
