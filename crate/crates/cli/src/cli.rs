use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use omd_core::{Geometry, MatrixMetric, Metric};

#[derive(Debug, Parser)]
#[command(name = "omd", version, about = "Wasserstein and RMSE distances between ocean maps and depth profiles")]
pub struct Cli {
    /// Worker threads for pairwise, per-column and per-date work. Defaults
    /// to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Seed for every random choice (k-means restarts, generators).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two fields, optionally with the transport plan.
    Compare(CompareArgs),
    /// Pairwise distance matrix of many fields.
    Distmat(DistmatArgs),
    /// Two-dimensional classical scaling of a distance matrix.
    Mds(MdsArgs),
    /// Trend and seasonal regression on a month-labelled distance matrix.
    Trend(TrendArgs),
    /// Province boundaries of one map, or the boundary W2 between two.
    Provinces(ProvincesArgs),
    /// Colocalize profiles and regress distances on the DCM shift.
    Depth(DepthArgs),
    /// Write a synthetic family of eastward-shifted Gaussian patches.
    GenPatchShift(GenPatchShiftArgs),
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// Input geometry: `lonlat` or `depth`.
    #[arg(long, default_value = "lonlat")]
    pub geometry: Geometry,

    /// `w2` or `rmse`.
    #[arg(long, default_value = "w2")]
    pub metric: Metric,

    /// Forbid transport over more than this base distance (km, or m for
    /// depth profiles).
    #[arg(long)]
    pub cutoff: Option<f64>,

    /// Solve with entropic regularization at this relative epsilon.
    #[arg(long)]
    pub sinkhorn_epsilon: Option<f64>,

    /// RMSE on raw values instead of normalized masses.
    #[arg(long)]
    pub raw_rmse: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub field_a: PathBuf,
    pub field_b: PathBuf,

    #[command(flatten)]
    pub distance: DistanceArgs,

    /// Write the transport plan CSV here.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,

    /// Mass share marked `is_major` in the plan.
    #[arg(long, default_value_t = 0.1)]
    pub top_fraction: f64,
}

#[derive(Debug, Args)]
pub struct DistmatArgs {
    #[arg(required = true, num_args = 2..)]
    pub fields: Vec<PathBuf>,

    #[command(flatten)]
    pub distance: DistanceArgs,

    /// Leave failing pairs blank instead of aborting.
    #[arg(long)]
    pub skip_errors: bool,

    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MdsArgs {
    pub matrix: PathBuf,

    /// What the matrix holds: `w2_km`, `w2_m` or `rmse`.
    #[arg(long, default_value = "w2_km")]
    pub metric: MatrixMetric,

    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrendArgs {
    /// Distance matrix whose labels are `YYYY-MM`.
    pub matrix: PathBuf,

    #[arg(long, default_value = "w2_km")]
    pub metric: MatrixMetric,

    /// Regress the matrix entries themselves instead of their square roots.
    #[arg(long)]
    pub raw_response: bool,

    /// A second matrix; its trend slope divides this one's in the output.
    #[arg(long)]
    pub baseline: Option<PathBuf>,

    /// Fit JSON.
    #[arg(long, short)]
    pub out: PathBuf,

    /// Also write predicted curves for lags `0..=max_lag`.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,

    #[arg(long, default_value_t = 120)]
    pub max_lag: u64,
}

#[derive(Debug, Args)]
pub struct ProvincesArgs {
    /// One map, or two maps on the same grid.
    #[arg(required = true, num_args = 1..=2)]
    pub maps: Vec<PathBuf>,

    #[arg(long, default_value_t = 10)]
    pub restarts: usize,

    /// Cluster raw values instead of their logarithm.
    #[arg(long)]
    pub no_log: bool,

    /// One clustering over the whole map instead of one per column.
    #[arg(long)]
    pub whole_map: bool,

    /// Directory for `<label>_boundary.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Transport plan between the two boundaries.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,

    #[arg(long, default_value_t = 0.1)]
    pub top_fraction: f64,
}

#[derive(Debug, Args)]
pub struct DepthArgs {
    /// Sparse reference samples, `date,depth_m,value`.
    #[arg(long)]
    pub reference: PathBuf,

    /// Dense samples in the same layout.
    #[arg(long)]
    pub dense: PathBuf,

    #[arg(long, default_value_t = 2)]
    pub day_window: i64,

    #[arg(long, default_value_t = 5.0)]
    pub depth_window_m: f64,

    #[arg(long)]
    pub raw_rmse: bool,

    /// Directory for `comparison.csv`, `regression.json` and, when every
    /// date shares one depth grid, `transfer.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenPatchShiftArgs {
    /// Eastward shifts in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0, 20.0, 30.0, 40.0])]
    pub shifts: Vec<f64>,

    #[arg(long, default_value_t = 2.0)]
    pub sigma_deg: f64,

    /// Patch center before shifting.
    #[arg(long, default_value_t = -170.0, allow_negative_numbers = true)]
    pub center_lon: f64,

    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub center_lat: f64,

    #[arg(long, default_value_t = 0.01)]
    pub background_level: f64,

    #[arg(long)]
    pub out_dir: PathBuf,
}
