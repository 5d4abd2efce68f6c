pub mod embed;
pub mod error;
pub mod field;
pub mod geodesy;
pub mod io;
pub mod metrics;
pub mod profiles;
pub mod provinces;
pub mod synth;
pub mod transport;
pub mod trend;

pub use embed::{classical_mds, MdsEmbedding};
pub use error::{Error, ErrorClass, Result};
pub use field::{load_field, save_field, Bounds, Cell, Coord, Geometry, MassField};
pub use geodesy::{build_cost, great_circle_km, CostMatrix, DistanceUnit, Sparsity};
pub use metrics::{distance_matrix, rmse, w2, DistanceMatrix, MatrixMetric, MatrixOptions, Metric, W2Options};
pub use transport::{solve_exact, solve_sinkhorn, PlanArc, SinkhornParams, TransportPlan};
pub use trend::{build_pairs, fit_trend, slope_ratio, PairObservation, TrendFit, YearMonth};
pub use provinces::{boundary_w2, extract_boundary, kmeans_1d, BoundaryField, BoundaryOptions};
pub use profiles::{
    aggregate_transfer, colocalize, compare_series, dcm, load_samples, w2_1d_closed_form, Colocalized, DepthPlan,
    DepthProfile, LineFit, ProfilePair, SamplePoint, SeriesComparison, TransferMatrix,
};
pub use synth::{gen_patch_shift, LonLatGrid, PatchFamily, PatchShift};
