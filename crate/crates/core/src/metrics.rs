//! Pointwise and transport distances between fields, and labeled pairwise
//! distance matrices.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Geometry, MassField};
use crate::geodesy::{build_cost, CostMatrix, DistanceUnit};
use crate::io::{csv_error, fmt_num, io_error};
use crate::transport::{solve_exact, solve_sinkhorn, PlanArc, SinkhornParams, TransportPlan};

/// Requested distance between two fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    W2,
    Rmse,
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Metric, String> {
        match s {
            "w2" => Ok(Metric::W2),
            "rmse" => Ok(Metric::Rmse),
            other => Err(format!("unknown metric `{other}` (expected w2 or rmse)")),
        }
    }
}

/// What the entries of a [`DistanceMatrix`] measure, including units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMetric {
    W2Km,
    W2M,
    Rmse,
}

impl MatrixMetric {
    pub fn new(metric: Metric, geometry: Geometry) -> MatrixMetric {
        match (metric, geometry) {
            (Metric::Rmse, _) => MatrixMetric::Rmse,
            (Metric::W2, Geometry::LonLat) => MatrixMetric::W2Km,
            (Metric::W2, Geometry::Depth) => MatrixMetric::W2M,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixMetric::W2Km => "w2_km",
            MatrixMetric::W2M => "w2_m",
            MatrixMetric::Rmse => "rmse",
        }
    }

    pub fn is_w2(&self) -> bool {
        !matches!(self, MatrixMetric::Rmse)
    }
}

impl fmt::Display for MatrixMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatrixMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<MatrixMetric, String> {
        match s {
            "w2_km" => Ok(MatrixMetric::W2Km),
            "w2_m" => Ok(MatrixMetric::W2M),
            "rmse" => Ok(MatrixMetric::Rmse),
            other => Err(format!("unknown matrix metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct W2Options {
    /// Arcs longer than this base distance (km or m) are not allowed.
    pub cutoff: Option<f64>,
    /// Use entropic regularization instead of the exact solver.
    pub sinkhorn: Option<SinkhornParams>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixOptions {
    pub w2: W2Options,
    /// RMSE on raw values instead of normalized ones.
    pub raw_rmse: bool,
    /// Record failing pairs as missing entries instead of aborting.
    pub skip_errors: bool,
}

fn check_aligned(p: &MassField, q: &MassField) -> Result<()> {
    if p.same_cells(q) {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "`{}` ({} cells) and `{}` ({} cells)",
            p.label(),
            p.len(),
            q.label(),
            q.len()
        )))
    }
}

/// Root-mean-squared difference of raw values on identical cells.
pub fn rmse_raw(p: &MassField, q: &MassField) -> Result<f64> {
    check_aligned(p, q)?;
    let sum: f64 = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / p.len() as f64).sqrt())
}

/// Root-mean-squared difference of the normalized fields.
pub fn rmse(p: &MassField, q: &MassField) -> Result<f64> {
    check_aligned(p, q)?;
    rmse_raw(&p.normalize()?, &q.normalize()?)
}

/// Indices of cells with positive mass, and the field restricted to them.
fn positive_part(field: &MassField) -> Result<(Vec<usize>, MassField)> {
    let index = (0..field.len()).filter(|&i| field.values()[i] > 0.0).collect();
    Ok((index, field.support()?))
}

fn solve(p: &MassField, q: &MassField, cost: &CostMatrix, options: &W2Options) -> Result<TransportPlan> {
    match options.sinkhorn {
        Some(params) => solve_sinkhorn(p, q, cost, params),
        None => solve_exact(p, q, cost),
    }
}

/// Optimal plan between the normalized fields. The solve runs on the
/// positive-mass cells only; arc indices refer to the input cell lists.
pub fn w2_plan(p: &MassField, q: &MassField, options: &W2Options) -> Result<TransportPlan> {
    let (p, q) = (p.normalize()?, q.normalize()?);
    let (pi, ps) = positive_part(&p)?;
    let (qi, qs) = positive_part(&q)?;
    let cost = build_cost(&ps, &qs, options.cutoff)?;
    let plan = solve(&ps, &qs, &cost, options)?;
    let arcs = plan
        .arcs
        .iter()
        .map(|a| PlanArc {
            source: pi[a.source],
            target: qi[a.target],
            ..*a
        })
        .collect();
    Ok(TransportPlan {
        n_source: p.len(),
        n_target: q.len(),
        arcs,
        ..plan
    })
}

/// 2-Wasserstein distance in the base unit (km for maps, m for depths).
pub fn w2(p: &MassField, q: &MassField, options: &W2Options) -> Result<f64> {
    w2_plan(p, q, options).map(|plan| plan.w2)
}

/// A pair whose distance could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub a: String,
    pub b: String,
    pub kind: String,
    pub message: String,
}

/// Labeled symmetric matrix of pairwise distances. Missing entries (from
/// skipped failures) are stored as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    entries: Vec<Option<f64>>,
    metric: MatrixMetric,
    failures: Vec<PairFailure>,
}

const SYMMETRY_TOLERANCE: f64 = 1e-12;

impl DistanceMatrix {
    /// Builds a matrix from row-major entries, checking symmetry, the zero
    /// diagonal and nonnegativity.
    pub fn new(labels: Vec<String>, entries: Vec<Option<f64>>, metric: MatrixMetric) -> Result<DistanceMatrix> {
        let n = labels.len();
        if entries.len() != n * n {
            return Err(Error::Precondition(format!(
                "{} entries for {n} labels",
                entries.len()
            )));
        }
        for a in 0..n {
            match entries[a * n + a] {
                Some(d) if d == 0.0 => {}
                _ => {
                    return Err(Error::Precondition(format!("diagonal entry of `{}` is not 0", labels[a])));
                }
            }
            for b in 0..n {
                let (x, y) = (entries[a * n + b], entries[b * n + a]);
                let ok = match (x, y) {
                    (Some(x), Some(y)) => {
                        x >= 0.0 && x.is_finite() && (x - y).abs() <= SYMMETRY_TOLERANCE * x.abs().max(y.abs()).max(1.0)
                    }
                    (None, None) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::Precondition(format!(
                        "entries ({}, {}) are not a symmetric nonnegative pair",
                        labels[a], labels[b]
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            labels,
            entries,
            metric,
            failures: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn metric(&self) -> MatrixMetric {
        self.metric
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.entries[a * self.len() + b]
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    pub fn failures(&self) -> &[PairFailure] {
        &self.failures
    }

    /// Row-major entries, failing if any is missing.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .map(|e| e.ok_or_else(|| Error::Precondition("distance matrix has missing entries".into())))
            .collect()
    }

    /// CSV with a label header row and a label first column. Missing
    /// entries are left blank.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Precondition(format!("writing matrix: {e}"));
        let header = std::iter::once("label").chain(self.labels.iter().map(String::as_str));
        w.write_record(header).map_err(csv_err)?;
        for (a, label) in self.labels.iter().enumerate() {
            let row = (0..self.len()).map(|b| self.get(a, b).map(fmt_num).unwrap_or_default());
            w.write_record(std::iter::once(label.clone()).chain(row)).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing matrix: {e}")))
    }

    pub fn read_csv(input: impl Read, path: &Path, metric: MatrixMetric) -> Result<DistanceMatrix> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = r.headers().map_err(csv_error(path))?.clone();
        let labels: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let n = labels.len();
        let mut entries = Vec::with_capacity(n * n);
        let mut rows = 0;
        for record in r.records() {
            let record = record.map_err(csv_error(path))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if rows >= n || record.get(0) != Some(labels[rows].as_str()) {
                return Err(parse_err("row labels must repeat the header labels in order".into()));
            }
            for field in record.iter().skip(1) {
                let field = field.trim();
                if field.is_empty() {
                    entries.push(None);
                } else {
                    let v: f64 = field.parse().map_err(|_| parse_err(format!("`{field}` is not a number")))?;
                    entries.push(Some(v));
                }
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: rows as u64 + 1,
                message: format!("expected {n} rows, found {rows}"),
            });
        }
        // entries were rounded on output; restore exact symmetry
        for a in 0..n {
            for b in a + 1..n {
                if let (Some(x), Some(y)) = (entries[a * n + b], entries[b * n + a]) {
                    if (x - y).abs() <= 1e-9 * x.abs().max(y.abs()) {
                        entries[b * n + a] = Some(x);
                    }
                }
            }
        }
        DistanceMatrix::new(labels, entries, metric).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn load(path: impl AsRef<Path>, metric: MatrixMetric) -> Result<DistanceMatrix> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(io_error(path))?;
        DistanceMatrix::read_csv(std::io::BufReader::new(file), path, metric)
    }
}

/// Shared cost matrix for a family on one cell list, when most cells carry
/// mass in every field (otherwise per-pair support costs are cheaper).
fn shared_cost(fields: &[MassField], metric: Metric, options: &W2Options) -> Result<Option<CostMatrix>> {
    if metric != Metric::W2 || !fields.iter().all(|f| f.same_cells(&fields[0])) {
        return Ok(None);
    }
    let dense_enough = fields
        .iter()
        .all(|f| 2 * f.values().iter().filter(|&&v| v > 0.0).count() >= f.len());
    if !dense_enough {
        return Ok(None);
    }
    build_cost(&fields[0], &fields[0], options.cutoff).map(Some)
}

/// All pairwise distances of `fields`. Pairs are computed in parallel on
/// the current rayon pool.
pub fn distance_matrix(fields: &[MassField], metric: Metric, options: &MatrixOptions) -> Result<DistanceMatrix> {
    let n = fields.len();
    if n < 2 {
        return Err(Error::Precondition("a distance matrix needs at least 2 fields".into()));
    }
    let geometry = fields[0].geometry();
    if let Some(f) = fields.iter().find(|f| f.geometry() != geometry) {
        return Err(Error::Geometry(format!(
            "`{}` is {} but `{}` is {geometry}",
            f.label(),
            f.geometry(),
            fields[0].label()
        )));
    }
    if metric == Metric::Rmse {
        for f in &fields[1..] {
            check_aligned(&fields[0], f)?;
        }
    }
    let shared = shared_cost(fields, metric, &options.w2)?;
    let normalized: Vec<MassField> = match shared {
        Some(_) => fields.iter().map(MassField::normalize).collect::<Result<_>>()?,
        None => Vec::new(),
    };

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let pair = |&(a, b): &(usize, usize)| -> Result<f64> {
        match (metric, &shared) {
            (Metric::Rmse, _) if options.raw_rmse => rmse_raw(&fields[a], &fields[b]),
            (Metric::Rmse, _) => rmse(&fields[a], &fields[b]),
            (Metric::W2, Some(cost)) => solve(&normalized[a], &normalized[b], cost, &options.w2).map(|p| p.w2),
            (Metric::W2, None) => w2(&fields[a], &fields[b], &options.w2),
        }
    };
    let results: Vec<Result<f64>> = pairs.par_iter().map(pair).collect();

    let mut entries = vec![Some(0.0); n * n];
    let mut failures = Vec::new();
    for (&(a, b), result) in pairs.iter().zip(results) {
        let value = match result {
            Ok(d) => Some(d),
            Err(e) => {
                let e = e.context(format!("pair ({}, {})", fields[a].label(), fields[b].label()));
                if !options.skip_errors {
                    return Err(e);
                }
                failures.push(PairFailure {
                    a: fields[a].label().to_owned(),
                    b: fields[b].label().to_owned(),
                    kind: e.root().kind().to_owned(),
                    message: e.to_string(),
                });
                None
            }
        };
        entries[a * n + b] = value;
        entries[b * n + a] = value;
    }
    let labels = fields.iter().map(|f| f.label().to_owned()).collect();
    let mut matrix = DistanceMatrix::new(labels, entries, MatrixMetric::new(metric, geometry))?;
    matrix.failures = failures;
    Ok(matrix)
}

/// Unit of the entries of a matrix, for metadata.
pub fn matrix_unit(metric: MatrixMetric) -> &'static str {
    match metric {
        MatrixMetric::W2Km => DistanceUnit::Km.as_str(),
        MatrixMetric::W2M => DistanceUnit::M.as_str(),
        MatrixMetric::Rmse => "normalized",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::brute_force;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn depth_point(label: &str, d: f64) -> MassField {
        MassField::from_depths(label, &[(d, 1.0)]).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let p = MassField::from_depths("p", &[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let q = MassField::from_depths("q", &[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(rmse(&p, &p).unwrap(), 0.0);
        assert!((rmse(&p, &q).unwrap() - 1.0).abs() < 1e-15);
        let four = MassField::from_depths("a", &[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).unwrap();
        let five = MassField::from_depths("b", &[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0)]).unwrap();
        assert!(matches!(rmse(&four, &five), Err(Error::Alignment(_))));
    }

    #[test]
    fn rmse_normalizes_unless_raw() {
        let p = MassField::from_depths("p", &[(0.0, 2.0), (1.0, 2.0)]).unwrap();
        let q = MassField::from_depths("q", &[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        assert_eq!(rmse(&p, &q).unwrap(), 0.0);
        assert_eq!(rmse_raw(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn w2_examples() {
        let a = depth_point("a", 96.0);
        let b = depth_point("b", 140.0);
        assert_eq!(w2(&a, &a, &W2Options::default()).unwrap(), 0.0);
        assert!((w2(&a, &b, &W2Options::default()).unwrap() - 44.0).abs() < 1e-12);
    }

    #[test]
    fn w2_matches_brute_force_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64, f64)> {
            (0..10)
                .map(|_| (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.01..1.0)))
                .collect()
        };
        let p = MassField::from_lonlat("p", &pts(&mut rng)).unwrap().normalize().unwrap();
        let q = MassField::from_lonlat("q", &pts(&mut rng)).unwrap().normalize().unwrap();
        let cost = build_cost(&p, &q, None).unwrap();
        let oracle = brute_force(&p, &q, &cost).unwrap().objective.sqrt();
        let got = w2(&p, &q, &W2Options::default()).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn plan_indices_refer_to_input_cells() {
        let p = MassField::from_depths("p", &[(0.0, 0.0), (10.0, 1.0), (20.0, 0.0)]).unwrap();
        let q = MassField::from_depths("q", &[(0.0, 0.0), (10.0, 0.0), (20.0, 1.0)]).unwrap();
        let plan = w2_plan(&p, &q, &W2Options::default()).unwrap();
        assert_eq!((plan.n_source, plan.n_target), (3, 3));
        assert_eq!(plan.arcs.len(), 1);
        assert_eq!((plan.arcs[0].source, plan.arcs[0].target), (1, 2));
        assert!((plan.w2 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_of_identical_fields_is_zero() {
        let f = depth_point("a", 5.0);
        let m = distance_matrix(&[f.clone(), f.with_label("b")], Metric::W2, &MatrixOptions::default()).unwrap();
        assert_eq!(m.dense().unwrap(), vec![0.0; 4]);
        assert_eq!(m.metric(), MatrixMetric::W2M);
    }

    #[test]
    fn matrix_of_depth_point_masses() {
        let fields = [depth_point("0", 0.0), depth_point("10", 10.0), depth_point("30", 30.0)];
        let m = distance_matrix(&fields, Metric::W2, &MatrixOptions::default()).unwrap();
        let close = |a: usize, b: usize, v: f64| (m.get(a, b).unwrap() - v).abs() < 1e-12;
        assert!(close(0, 1, 10.0) && close(0, 2, 30.0) && close(1, 2, 20.0));
        assert!(close(1, 0, 10.0) && close(2, 0, 30.0) && close(2, 1, 20.0));
    }

    #[test]
    fn pair_failures_abort_or_become_holes() {
        let zero = MassField::from_depths("z", &[(0.0, 0.0)]).unwrap();
        let fields = [depth_point("a", 0.0), depth_point("b", 1.0), zero];
        let err = distance_matrix(&fields, Metric::W2, &MatrixOptions::default()).unwrap_err();
        assert!(err.to_string().contains("pair (a, z)"), "{err}");
        let options = MatrixOptions {
            skip_errors: true,
            ..MatrixOptions::default()
        };
        let m = distance_matrix(&fields, Metric::W2, &options).unwrap();
        assert!(!m.is_complete());
        assert_eq!(m.get(0, 2), None);
        assert_eq!(m.get(0, 1), Some(1.0));
        assert_eq!(m.failures().len(), 2);
        assert_eq!(m.failures()[0].kind, "degenerate_mass");
        assert!(m.dense().is_err());
    }

    #[test]
    fn rmse_matrix_requires_shared_cells() {
        let fields = [depth_point("a", 0.0), depth_point("b", 1.0)];
        assert!(matches!(
            distance_matrix(&fields, Metric::Rmse, &MatrixOptions::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let fields = [depth_point("x", 0.0), depth_point("y", 1.0 / 3.0), depth_point("z", 2.0)];
        let m = distance_matrix(&fields, Metric::W2, &MatrixOptions::default()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,x,y,z\nx,0.0,0.333333333333,2.0\n"), "{text}");
        let back = DistanceMatrix::read_csv(&buf[..], Path::new("m.csv"), MatrixMetric::W2M).unwrap();
        assert_eq!(back.labels(), m.labels());
        for a in 0..3 {
            for b in 0..3 {
                assert!((back.get(a, b).unwrap() - m.get(a, b).unwrap()).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn csv_rejects_asymmetry() {
        let text = "label,a,b\na,0,1\nb,2,0\n";
        assert!(DistanceMatrix::read_csv(text.as_bytes(), Path::new("m.csv"), MatrixMetric::Rmse).is_err());
    }

    fn grid_field(label: &str, values: &[f64]) -> MassField {
        let pts: Vec<(f64, f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| ((k % 4) as f64, (k / 4) as f64, v))
            .collect();
        MassField::from_lonlat(label, &pts).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn shared_cell_matrices_are_metric(
            a in prop::collection::vec(0.01f64..1.0, 16),
            b in prop::collection::vec(0.01f64..1.0, 16),
            c in prop::collection::vec(0.01f64..1.0, 16),
        ) {
            let fields = [grid_field("a", &a), grid_field("b", &b), grid_field("c", &c)];
            let m = distance_matrix(&fields, Metric::W2, &MatrixOptions::default()).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let (ij, jk, ik) = (m.get(i, j).unwrap(), m.get(j, k).unwrap(), m.get(i, k).unwrap());
                        prop_assert!(ik <= ij + jk + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn zero_iff_identical(a in prop::collection::vec(0.0f64..1.0, 16), scale in 0.5f64..4.0) {
            prop_assume!(a.iter().sum::<f64>() > 0.1);
            let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
            let (p, q) = (grid_field("p", &a), grid_field("q", &scaled));
            prop_assert!(rmse(&p, &q).unwrap() <= 1e-12);
            prop_assert!(w2(&p, &q, &W2Options::default()).unwrap() <= 1e-12);
        }
    }
}
