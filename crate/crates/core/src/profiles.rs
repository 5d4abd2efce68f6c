//! Depth profiles: colocalization of a dense dataset onto irregular
//! reference samples, deep maximum depth, per-date distances and the
//! regression of those distances on the shift of the maximum.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::MassField;
use crate::io::{csv_error, fmt_num, io_error};
use crate::metrics::{rmse, rmse_raw, w2_plan, W2Options};
use crate::transport::TransportPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub date: NaiveDate,
    pub depth_m: f64,
    /// `None` for a missing measurement.
    pub value: Option<f64>,
}

/// Reads `date,depth_m,value` rows; blank or `NaN` values are missing.
pub fn read_samples(input: impl Read, path: &Path) -> Result<Vec<SamplePoint>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(csv_error(path))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (cd, cz, cv) = (column("date")?, column("depth_m")?, column("value")?);
    let mut samples = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_error(path))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |k: usize| record.get(k).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(cd), "%Y-%m-%d")
            .map_err(|_| err(format!("`{}` is not an ISO date", field(cd))))?;
        let depth_m: f64 = field(cz).parse().map_err(|_| err(format!("`{}` is not a depth", field(cz))))?;
        if !depth_m.is_finite() {
            return Err(err(format!("depth {depth_m} is not finite")));
        }
        let value = match field(cv) {
            "" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| err(format!("`{s}` is not a number")))?;
                if v.is_nan() {
                    None
                } else if v < 0.0 || v.is_infinite() {
                    return Err(err(format!("value {v} must be finite and nonnegative")));
                } else {
                    Some(v)
                }
            }
        };
        samples.push(SamplePoint { date, depth_m, value });
    }
    Ok(samples)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<SamplePoint>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    read_samples(std::io::BufReader::new(file), path)
}

pub fn write_samples(samples: &[SamplePoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Precondition(format!("writing samples: {e}"));
    w.write_record(["date", "depth_m", "value"]).map_err(err)?;
    for s in samples {
        let value = s.value.map(fmt_num).unwrap_or_default();
        w.write_record([s.date.to_string(), fmt_num(s.depth_m), value]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Precondition(format!("writing samples: {e}")))
}

/// Concentrations on strictly increasing depths for one date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthProfile {
    pub date: NaiveDate,
    pub source: String,
    depths: Vec<f64>,
    values: Vec<f64>,
}

impl DepthProfile {
    pub fn new(date: NaiveDate, source: impl Into<String>, depths: Vec<f64>, values: Vec<f64>) -> Result<DepthProfile> {
        let source = source.into();
        if depths.is_empty() || depths.len() != values.len() {
            return Err(Error::Precondition(format!(
                "profile {source} {date}: {} depths and {} values",
                depths.len(),
                values.len()
            )));
        }
        if depths.windows(2).any(|w| !(w[0] < w[1])) || depths.iter().any(|d| !d.is_finite()) {
            return Err(Error::Precondition(format!("profile {source} {date}: depths must increase strictly")));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Precondition(format!(
                "profile {source} {date}: values must be finite and nonnegative"
            )));
        }
        Ok(DepthProfile {
            date,
            source,
            depths,
            values,
        })
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.source, self.date)
    }

    /// The profile as a depth-geometry mass field (not normalized).
    pub fn to_field(&self) -> Result<MassField> {
        let points: Vec<(f64, f64)> = self.depths.iter().copied().zip(self.values.iter().copied()).collect();
        MassField::from_depths(self.name(), &points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePair {
    pub date: NaiveDate,
    pub reference: DepthProfile,
    pub dense: DepthProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Colocalized {
    pub pairs: Vec<ProfilePair>,
    /// Reference samples dropped for a missing value or an empty window.
    pub dropped: usize,
}

/// Pairs every reference sample with the mean of the dense values within
/// `day_window` days and `depth_window_m` meters, both bounds inclusive.
/// Reference samples repeated at one date and depth are averaged first.
pub fn colocalize(
    reference: &[SamplePoint],
    dense: &[SamplePoint],
    day_window: i64,
    depth_window_m: f64,
) -> Result<Colocalized> {
    if reference.is_empty() || dense.is_empty() {
        return Err(Error::Precondition("colocalization needs nonempty reference and dense samples".into()));
    }
    if day_window < 0 || !(depth_window_m >= 0.0) {
        return Err(Error::Range {
            what: "colocalization window",
            value: depth_window_m.min(day_window as f64),
            range: "[0, inf)",
        });
    }
    let mut dense: Vec<(NaiveDate, f64, f64)> =
        dense.iter().filter_map(|s| s.value.map(|v| (s.date, s.depth_m, v))).collect();
    dense.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));

    // (date, depth bits) -> (sum, count) of reference values
    let mut grouped: BTreeMap<NaiveDate, BTreeMap<OrdDepth, (f64, usize)>> = BTreeMap::new();
    let mut dropped = 0;
    for s in reference {
        match s.value {
            Some(v) => {
                let slot = grouped.entry(s.date).or_default().entry(OrdDepth(s.depth_m)).or_insert((0.0, 0));
                slot.0 += v;
                slot.1 += 1;
            }
            None => dropped += 1,
        }
    }

    let mut pairs = Vec::new();
    for (date, depths) in grouped {
        let lo = dense.partition_point(|d| (d.0 - date).num_days() < -day_window);
        let hi = dense.partition_point(|d| (d.0 - date).num_days() <= day_window);
        let window = &dense[lo..hi];
        let (mut zs, mut refs, mut means) = (Vec::new(), Vec::new(), Vec::new());
        for (OrdDepth(z), (sum, count)) in depths {
            let (total, n) = window
                .iter()
                .filter(|d| (d.1 - z).abs() <= depth_window_m)
                .fold((0.0, 0usize), |(t, n), d| (t + d.2, n + 1));
            if n == 0 {
                dropped += count;
                continue;
            }
            zs.push(z);
            refs.push(sum / count as f64);
            means.push(total / n as f64);
        }
        if zs.is_empty() {
            continue;
        }
        pairs.push(ProfilePair {
            date,
            reference: DepthProfile::new(date, "reference", zs.clone(), refs)?,
            dense: DepthProfile::new(date, "dense", zs, means)?,
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairing { dropped });
    }
    Ok(Colocalized { pairs, dropped })
}

/// Depth key ordered numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdDepth(f64);

impl Eq for OrdDepth {}

impl PartialOrd for OrdDepth {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdDepth {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Depth of the largest value, the shallowest on ties.
pub fn dcm(p: &DepthProfile) -> Result<f64> {
    let (k, &max) = p
        .values
        .iter()
        .enumerate()
        .fold((0, &p.values[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
    if !(max > 0.0) {
        return Err(Error::DegenerateProfile(p.name()));
    }
    Ok(p.depths[k])
}

fn normalized_masses(p: &DepthProfile) -> Result<Vec<f64>> {
    let total: f64 = p.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateProfile(p.name()));
    }
    Ok(p.values.iter().map(|v| v / total).collect())
}

/// W2 in meters between the normalized profiles, as the L2 distance of
/// their quantile functions.
pub fn w2_1d_closed_form(p: &DepthProfile, q: &DepthProfile) -> Result<f64> {
    let (a, b) = (normalized_masses(p)?, normalized_masses(q)?);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    let mut total = 0.0;
    loop {
        let step = ra.min(rb);
        let d = p.depths[i] - q.depths[j];
        total += step * d * d;
        ra -= step;
        rb -= step;
        // advance whichever side ran out; round-off leftovers at the end
        // are absorbed by the last bin
        if ra <= rb {
            i += 1;
            if i == a.len() {
                break;
            }
            ra += a[i];
        } else {
            j += 1;
            if j == b.len() {
                break;
            }
            rb += b[j];
        }
    }
    Ok(total.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthComparison {
    pub date: NaiveDate,
    pub w2_m: f64,
    pub rmse: f64,
    pub dcm_a: f64,
    pub dcm_b: f64,
    pub delta_dcm: f64,
}

/// Least-squares line `y = intercept + slope * x`. `slope` and
/// `intercept` are `None` when `x` has no variance; `r_squared` is `None`
/// when either variable has none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub degenerate: bool,
    pub n: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    // variances at round-off level of the means count as zero
    let flat = |s: f64, m: f64| s <= (1e-12 * m.abs().max(f64::MIN_POSITIVE)).powi(2) * n as f64;
    let (x_flat, y_flat) = (flat(sxx, mx), flat(syy, my));
    let slope = (!x_flat).then(|| sxy / sxx);
    LineFit {
        slope,
        intercept: slope.map(|s| my - s * mx),
        r_squared: (!x_flat && !y_flat).then(|| (sxy * sxy / (sxx * syy)).min(1.0)),
        degenerate: x_flat || y_flat,
        n,
    }
}

/// A per-date plan with the depth grid shared by both of its profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPlan {
    pub date: NaiveDate,
    pub depths: Vec<f64>,
    pub plan: TransportPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesComparison {
    pub records: Vec<DepthComparison>,
    /// W2 regressed on the DCM shift.
    pub w2_fit: LineFit,
    /// RMSE regressed on the DCM shift.
    pub rmse_fit: LineFit,
    pub plans: Vec<DepthPlan>,
}

impl SeriesComparison {
    /// CSV `date,w2_m,rmse,dcm_a_m,dcm_b_m,delta_dcm_m`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Precondition(format!("writing comparison: {e}"));
        w.write_record(["date", "w2_m", "rmse", "dcm_a_m", "dcm_b_m", "delta_dcm_m"]).map_err(err)?;
        for r in &self.records {
            w.write_record([
                r.date.to_string(),
                fmt_num(r.w2_m),
                fmt_num(r.rmse),
                fmt_num(r.dcm_a),
                fmt_num(r.dcm_b),
                fmt_num(r.delta_dcm),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing comparison: {e}")))
    }
}

/// Per-date W2, RMSE and DCM shift over paired profiles, with the two
/// regressions on the DCM shift.
pub fn compare_series(pairs: &[ProfilePair], raw_rmse: bool) -> Result<SeriesComparison> {
    if pairs.len() < 3 {
        return Err(Error::Precondition(format!("{} profile pairs; at least 3 are needed", pairs.len())));
    }
    let compare = |pair: &ProfilePair| -> Result<(DepthComparison, DepthPlan)> {
        let (a, b) = (pair.reference.to_field()?, pair.dense.to_field()?);
        let plan = w2_plan(&a, &b, &W2Options::default())?;
        let rmse = if raw_rmse { rmse_raw(&a, &b)? } else { rmse(&a, &b)? };
        let (dcm_a, dcm_b) = (dcm(&pair.reference)?, dcm(&pair.dense)?);
        let record = DepthComparison {
            date: pair.date,
            w2_m: plan.w2,
            rmse,
            dcm_a,
            dcm_b,
            delta_dcm: (dcm_a - dcm_b).abs(),
        };
        let depths = pair.reference.depths().to_vec();
        Ok((record, DepthPlan { date: pair.date, depths, plan }))
    };
    let results: Vec<Result<(DepthComparison, DepthPlan)>> = pairs.par_iter().map(compare).collect();
    let mut records = Vec::with_capacity(pairs.len());
    let mut plans = Vec::with_capacity(pairs.len());
    for (pair, result) in pairs.iter().zip(results) {
        let (r, p) = result.map_err(|e| e.context(format!("date {}", pair.date)))?;
        records.push(r);
        plans.push(p);
    }
    let x: Vec<f64> = records.iter().map(|r| r.delta_dcm).collect();
    let w2: Vec<f64> = records.iter().map(|r| r.w2_m).collect();
    let rm: Vec<f64> = records.iter().map(|r| r.rmse).collect();
    Ok(SeriesComparison {
        w2_fit: fit_line(&x, &w2),
        rmse_fit: fit_line(&x, &rm),
        records,
        plans,
    })
}

/// Mass summed over plans by (from depth, to depth).
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub depths: Vec<f64>,
    /// Row-major `from x to`.
    pub mass: Vec<f64>,
    /// Depths of the largest entry, the lowest `(from, to)` index on ties.
    pub argmax: (f64, f64),
}

impl TransferMatrix {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.mass[from * self.depths.len() + to]
    }

    /// CSV `from_depth_m,to_depth_m,mass` over the nonzero entries.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Precondition(format!("writing transfer: {e}"));
        w.write_record(["from_depth_m", "to_depth_m", "mass"]).map_err(err)?;
        let n = self.depths.len();
        for (k, &m) in self.mass.iter().enumerate() {
            if m > 0.0 {
                w.write_record([fmt_num(self.depths[k / n]), fmt_num(self.depths[k % n]), fmt_num(m)])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing transfer: {e}")))
    }
}

/// Elementwise sum of plans defined on one depth grid.
pub fn aggregate_transfer(plans: &[DepthPlan]) -> Result<TransferMatrix> {
    let first = plans.first().ok_or_else(|| Error::Precondition("no plans to aggregate".into()))?;
    let depths = first.depths.clone();
    let n = depths.len();
    let mut mass = vec![0.0; n * n];
    for p in plans {
        if p.depths != depths || p.plan.n_source != n || p.plan.n_target != n {
            return Err(Error::Grid(format!("plan for {} is not on the depth grid of {}", p.date, first.date)));
        }
        for arc in &p.plan.arcs {
            mass[arc.source * n + arc.target] += arc.mass;
        }
    }
    let best = mass
        .iter()
        .enumerate()
        .fold(0, |best, (k, &m)| if m > mass[best] { k } else { best });
    Ok(TransferMatrix {
        argmax: (depths[best / n], depths[best % n]),
        depths,
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::build_cost;
    use crate::transport::solve_exact;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 9, d).unwrap()
    }

    fn sample(d: u32, z: f64, v: f64) -> SamplePoint {
        SamplePoint {
            date: day(d),
            depth_m: z,
            value: Some(v),
        }
    }

    fn profile(depths: &[f64], values: &[f64]) -> DepthProfile {
        DepthProfile::new(day(1), "t", depths.to_vec(), values.to_vec()).unwrap()
    }

    /// Bump template on a 5 m grid, shifted down by `shift` meters.
    fn shifted(shift: f64, d: u32) -> DepthProfile {
        let depths: Vec<f64> = (0..60).map(|k| 5.0 * k as f64).collect();
        let values = depths
            .iter()
            .map(|z| {
                let x = z - 100.0 - shift;
                if x.abs() < 25.0 {
                    25.0 - x.abs()
                } else {
                    0.0
                }
            })
            .collect();
        DepthProfile::new(day(d), "t", depths, values).unwrap()
    }

    #[test]
    fn window_mean() {
        let dense = [sample(14, 50.0, 1.0), sample(15, 50.0, 2.0), sample(16, 50.0, 3.0)];
        let c = colocalize(&[sample(15, 50.0, 7.0)], &dense, 2, 5.0).unwrap();
        assert_eq!(c.pairs[0].dense.values(), &[2.0]);
        assert_eq!(c.pairs[0].reference.values(), &[7.0]);
        assert_eq!(c.dropped, 0);
    }

    #[test]
    fn far_dense_points_drop_the_reference() {
        let dense = [sample(18, 50.0, 1.0), sample(15, 80.0, 1.0)];
        let reference = [sample(15, 50.0, 7.0), sample(15, 79.0, 1.0)];
        let c = colocalize(&reference, &dense, 2, 5.0).unwrap();
        assert_eq!(c.dropped, 1);
        assert_eq!(c.pairs[0].reference.depths(), &[79.0]);
        assert!(matches!(
            colocalize(&reference[..1], &dense, 2, 5.0),
            Err(Error::EmptyPairing { dropped: 1 })
        ));
    }

    #[test]
    fn inclusive_depth_window() {
        let dense = [sample(15, 92.0, 1.0), sample(15, 99.0, 3.0), sample(15, 101.0, 100.0)];
        let c = colocalize(&[sample(15, 95.0, 1.0)], &dense, 2, 5.0).unwrap();
        assert_eq!(c.pairs[0].dense.values(), &[2.0]);
        // and inclusive days
        let dense = [sample(13, 95.0, 4.0), sample(17, 95.0, 6.0), sample(18, 95.0, 100.0)];
        let c = colocalize(&[sample(15, 95.0, 1.0)], &dense, 2, 5.0).unwrap();
        assert_eq!(c.pairs[0].dense.values(), &[5.0]);
    }

    #[test]
    fn duplicate_references_are_averaged() {
        let dense = [sample(15, 10.0, 1.0)];
        let c = colocalize(&[sample(15, 10.0, 2.0), sample(15, 10.0, 4.0)], &dense, 2, 5.0).unwrap();
        assert_eq!(c.pairs[0].reference.values(), &[3.0]);
    }

    #[test]
    fn dcm_rules() {
        assert_eq!(dcm(&profile(&[50.0, 100.0, 150.0], &[0.1, 0.5, 0.2])).unwrap(), 100.0);
        assert_eq!(dcm(&profile(&[80.0, 100.0, 120.0], &[0.5, 0.1, 0.5])).unwrap(), 80.0);
        assert_eq!(dcm(&profile(&[0.0, 10.0, 20.0], &[0.9, 0.5, 0.2])).unwrap(), 0.0);
        assert!(matches!(dcm(&profile(&[0.0, 10.0], &[0.0, 0.0])), Err(Error::DegenerateProfile(_))));
    }

    #[test]
    fn closed_form_examples() {
        let a = profile(&[96.0], &[1.0]);
        let b = profile(&[140.0], &[1.0]);
        assert!((w2_1d_closed_form(&a, &b).unwrap() - 44.0).abs() < 1e-12);
        let p = profile(&[0.0, 10.0, 30.0], &[0.2, 0.5, 0.3]);
        assert_eq!(w2_1d_closed_form(&p, &p).unwrap(), 0.0);
        assert!(w2_1d_closed_form(&p, &profile(&[0.0], &[0.0])).is_err());
    }

    #[test]
    fn closed_form_matches_solver_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let grid = |rng: &mut ChaCha8Rng| {
                let mut z = 0.0;
                (0..20)
                    .map(|_| {
                        z += rng.random_range(0.5..10.0);
                        z
                    })
                    .collect::<Vec<f64>>()
            };
            let masses = |rng: &mut ChaCha8Rng| (0..20).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
            let p = DepthProfile::new(day(1), "p", grid(&mut rng), masses(&mut rng)).unwrap();
            let q = DepthProfile::new(day(1), "q", grid(&mut rng), masses(&mut rng)).unwrap();
            let (fp, fq) = (p.to_field().unwrap().normalize().unwrap(), q.to_field().unwrap().normalize().unwrap());
            let exact = solve_exact(&fp, &fq, &build_cost(&fp, &fq, None).unwrap()).unwrap().w2;
            assert!((w2_1d_closed_form(&p, &q).unwrap() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_family_regression() {
        let shifts = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
        let pairs: Vec<ProfilePair> = shifts
            .iter()
            .enumerate()
            .map(|(k, &s)| ProfilePair {
                date: day(k as u32 + 1),
                reference: shifted(0.0, k as u32 + 1),
                dense: shifted(s, k as u32 + 1),
            })
            .collect();
        let c = compare_series(&pairs, false).unwrap();
        for (r, s) in c.records.iter().zip(shifts) {
            assert!((r.w2_m - s).abs() < 1e-9);
            assert_eq!(r.delta_dcm, s);
        }
        assert!((c.w2_fit.r_squared.unwrap() - 1.0).abs() < 1e-9);
        assert!((c.w2_fit.slope.unwrap() - 1.0).abs() < 1e-6);
        assert!(c.rmse_fit.r_squared.unwrap() < c.w2_fit.r_squared.unwrap());
    }

    #[test]
    fn identical_pairs_are_degenerate() {
        let pairs: Vec<ProfilePair> = (1..=3)
            .map(|d| ProfilePair {
                date: day(d),
                reference: shifted(0.0, d),
                dense: shifted(0.0, d),
            })
            .collect();
        let c = compare_series(&pairs, false).unwrap();
        for fit in [c.w2_fit, c.rmse_fit] {
            assert!(fit.degenerate);
            assert_eq!(fit.r_squared, None);
        }
        assert!(compare_series(&pairs[..2], false).is_err());
    }

    #[test]
    fn aggregation_sums_and_checks_grids() {
        let pairs: Vec<ProfilePair> = (1..=3)
            .map(|d| ProfilePair {
                date: day(d),
                reference: shifted(0.0, d),
                dense: shifted(10.0, d),
            })
            .collect();
        let c = compare_series(&pairs, false).unwrap();
        let one = aggregate_transfer(&c.plans[..1]).unwrap();
        let two = aggregate_transfer(&[c.plans[0].clone(), c.plans[0].clone()]).unwrap();
        assert_eq!(aggregate_transfer(&c.plans).unwrap().argmax, (100.0, 110.0));
        for (a, b) in one.mass.iter().zip(&two.mass) {
            assert_eq!(2.0 * a, *b);
        }
        let single: f64 = c.plans[0].plan.arcs.iter().map(|a| a.mass).sum();
        assert!((one.mass.iter().sum::<f64>() - single).abs() < 1e-15);
        let mut other = c.plans[1].clone();
        other.depths[0] = -1.0;
        assert!(matches!(aggregate_transfer(&[c.plans[0].clone(), other]), Err(Error::Grid(_))));
    }

    #[test]
    fn sample_csv_round_trip() {
        let text = "date,depth_m,value\n2014-09-15,5,0.1\n2014-09-15,25.5,\n2014-09-16,10,NaN\n";
        let s = read_samples(text.as_bytes(), Path::new("s.csv")).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].value, Some(0.1));
        assert_eq!(s[1].value, None);
        assert_eq!(s[2].value, None);
        let mut buf = Vec::new();
        write_samples(&s, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "date,depth_m,value\n2014-09-15,5.0,0.1\n2014-09-15,25.5,\n2014-09-16,10.0,\n"
        );
        let bad = "date,depth_m,value\n15/09/2014,5,0.1\n";
        assert!(matches!(read_samples(bad.as_bytes(), Path::new("s.csv")), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn colocalize_ignores_dense_order(
            dense in prop::collection::vec((1u32..10, 0.0f64..50.0, 0.0f64..5.0), 1..40),
            reference in prop::collection::vec((1u32..10, 0.0f64..50.0, 0.0f64..5.0), 1..10),
            rot in 0usize..40,
        ) {
            let to_samples = |v: &[(u32, f64, f64)]| v.iter().map(|&(d, z, x)| sample(d, z, x)).collect::<Vec<_>>();
            let (r, mut d) = (to_samples(&reference), to_samples(&dense));
            let first = colocalize(&r, &d, 2, 5.0);
            let k = rot % d.len();
            d.rotate_left(k);
            let second = colocalize(&r, &d, 2, 5.0);
            match (first, second) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "order changed the outcome"),
            }
        }

        #[test]
        fn translation_on_grid(shift_bins in 0usize..20) {
            let s = 5.0 * shift_bins as f64;
            let (p, q) = (shifted(0.0, 1), shifted(s, 1));
            prop_assert!((w2_1d_closed_form(&p, &q).unwrap() - s).abs() <= 2.5);
            prop_assert_eq!(dcm(&q).unwrap(), dcm(&p).unwrap() + s);
        }
    }
}
