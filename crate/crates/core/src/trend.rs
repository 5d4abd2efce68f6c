//! Regression of pairwise distances on the time lag between fields, with
//! an annual seasonal term in calendar-month distance.
//!
//! The model for a pair `(a, b)` with lag `L` months and circular calendar
//! distance `k` in `0..=6` is `y = b0 + b1 * L + s_k`, with `sum(s_k) = 0`.
//! The constraint is built into the design: six free seasonal columns, the
//! seventh coefficient being minus their sum.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::metrics::DistanceMatrix;

/// Number of calendar-month distance levels, `0..=6`.
pub const SEASONAL_LEVELS: usize = 7;

const N_COEF: usize = 2 + SEASONAL_LEVELS - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1 to 12.
    pub month: u32,
}

impl YearMonth {
    /// Months since year 0: `year * 12 + month - 1`.
    pub fn index(&self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }
}

impl FromStr for YearMonth {
    type Err = Error;
    fn from_str(s: &str) -> Result<YearMonth> {
        let bad = || Error::Label(s.to_owned());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 || !y.bytes().chain(m.bytes()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Circular distance between calendar months, in `0..=6`.
pub fn calmonth_distance(month_a: u32, month_b: u32) -> usize {
    let d = month_a.abs_diff(month_b) as usize;
    d.min(12 - d)
}

/// Calendar-month distance implied by a lag of `lag` months.
pub fn calmonth_of_lag(lag: u64) -> usize {
    let r = (lag % 12) as usize;
    r.min(12 - r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairObservation {
    pub label_a: String,
    pub label_b: String,
    pub ym_a: i64,
    pub ym_b: i64,
    pub lag: u64,
    pub calmonth_dist: usize,
    pub response: f64,
}

/// One observation per unordered pair `a < b`. The response is the square
/// root of the matrix entry unless `raw_response` is set.
pub fn build_pairs(matrix: &DistanceMatrix, raw_response: bool) -> Result<Vec<PairObservation>> {
    let months: Vec<YearMonth> = matrix.labels().iter().map(|l| l.parse()).collect::<Result<_>>()?;
    let n = matrix.len();
    let mut obs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let d = matrix.get(a, b).ok_or_else(|| {
                Error::Precondition(format!(
                    "missing distance for pair ({}, {})",
                    matrix.labels()[a],
                    matrix.labels()[b]
                ))
            })?;
            let (ma, mb) = (months[a], months[b]);
            obs.push(PairObservation {
                label_a: matrix.labels()[a].clone(),
                label_b: matrix.labels()[b].clone(),
                ym_a: ma.index(),
                ym_b: mb.index(),
                lag: ma.index().abs_diff(mb.index()),
                calmonth_dist: calmonth_distance(ma.month, mb.month),
                response: if raw_response { d } else { d.sqrt() },
            });
        }
    }
    Ok(obs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendFit {
    pub beta0: f64,
    /// Trend per month of lag.
    pub beta1: f64,
    /// Seasonal effects for calendar distance `0..=6`; they sum to zero.
    pub beta2: [f64; SEASONAL_LEVELS],
    pub se_beta0: f64,
    pub se_beta1: f64,
    pub se_beta2: [f64; SEASONAL_LEVELS],
    /// `None` when the responses have zero variance.
    pub r_squared: Option<f64>,
    pub n_obs: usize,
    pub residual_sum_squares: f64,
}

impl TrendFit {
    /// The straight trend line `beta0 + beta1 * lag`.
    pub fn trend(&self, lag: f64) -> f64 {
        self.beta0 + self.beta1 * lag
    }

    /// Trend plus the seasonal effect for an integer lag.
    pub fn predict(&self, lag: u64) -> f64 {
        self.trend(lag as f64) + self.beta2[calmonth_of_lag(lag)]
    }

    pub fn seasonal_sum(&self) -> f64 {
        self.beta2.iter().sum()
    }

    /// CSV `lag,seasonal_pred,trend_pred` for every integer lag in `lags`.
    pub fn write_curve(&self, lags: impl IntoIterator<Item = u64>, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Precondition(format!("writing curve: {e}"));
        w.write_record(["lag", "seasonal_pred", "trend_pred"]).map_err(err)?;
        for lag in lags {
            w.write_record([lag.to_string(), fmt_num(self.predict(lag)), fmt_num(self.trend(lag as f64))])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing curve: {e}")))
    }
}

fn design_row(o: &PairObservation) -> [f64; N_COEF] {
    let mut row = [0.0; N_COEF];
    row[0] = 1.0;
    row[1] = o.lag as f64;
    if o.calmonth_dist + 1 < SEASONAL_LEVELS {
        row[2 + o.calmonth_dist] = 1.0;
    } else {
        row[2..].iter_mut().for_each(|v| *v = -1.0);
    }
    row
}

/// Names what the observations fail to vary in, for a rank-deficient design.
fn diagnose(obs: &[PairObservation]) -> String {
    let mut seen = [false; SEASONAL_LEVELS];
    for o in obs {
        seen[o.calmonth_dist] = true;
    }
    let missing: Vec<String> = (0..SEASONAL_LEVELS).filter(|&k| !seen[k]).map(|k| k.to_string()).collect();
    if obs.iter().all(|o| o.lag == obs[0].lag) {
        format!("lag is constant ({} months)", obs[0].lag)
    } else if !missing.is_empty() {
        format!("calendar-month distances {} never occur", missing.join(", "))
    } else {
        "lag is collinear with the seasonal terms".to_owned()
    }
}

/// Ordinary least squares fit of the trend model.
pub fn fit_trend(obs: &[PairObservation]) -> Result<TrendFit> {
    let n = obs.len();
    if n <= N_COEF {
        return Err(Error::Precondition(format!(
            "{n} observations; at least {} are needed",
            N_COEF + 1
        )));
    }
    let x = DMatrix::from_fn(n, N_COEF, |r, c| design_row(&obs[r])[c]);
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.response));

    // column scaling keeps the lag column comparable to the indicators
    let scales: Vec<f64> = (0..N_COEF).map(|c| x.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    let xs = DMatrix::from_fn(n, N_COEF, |r, c| x[(r, c)] / scales[c]);
    let svd = xs.svd(true, true);
    let s_max = svd.singular_values.max();
    let rank_tol = 1e-10 * s_max * (n as f64).sqrt();
    if svd.singular_values.iter().any(|&s| s <= rank_tol) {
        return Err(Error::SingularDesign(diagnose(obs)));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * &y;
    let scaled_coef = v_t.transpose() * DVector::from_fn(N_COEF, |k, _| uty[k] / svd.singular_values[k]);
    let coef: Vec<f64> = (0..N_COEF).map(|c| scaled_coef[c] / scales[c]).collect();

    let fitted = &x * DVector::from_column_slice(&coef);
    let rss: f64 = (&y - &fitted).norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = (tss > 0.0).then(|| 1.0 - rss / tss);

    // covariance sigma^2 (X'X)^-1 via the SVD of the scaled design
    let sigma2 = rss / (n - N_COEF) as f64;
    let vs = DMatrix::from_fn(N_COEF, N_COEF, |r, k| v_t[(k, r)] / svd.singular_values[k] / scales[r]);
    let cov = (&vs * vs.transpose()) * sigma2;

    let mut beta2 = [0.0; SEASONAL_LEVELS];
    beta2[..SEASONAL_LEVELS - 1].copy_from_slice(&coef[2..]);
    beta2[SEASONAL_LEVELS - 1] = -coef[2..].iter().sum::<f64>();
    let mut se_beta2 = [0.0; SEASONAL_LEVELS];
    for k in 0..SEASONAL_LEVELS - 1 {
        se_beta2[k] = cov[(2 + k, 2 + k)].max(0.0).sqrt();
    }
    let last: f64 = (2..N_COEF).flat_map(|r| (2..N_COEF).map(move |c| (r, c))).map(|(r, c)| cov[(r, c)]).sum();
    se_beta2[SEASONAL_LEVELS - 1] = last.max(0.0).sqrt();

    Ok(TrendFit {
        beta0: coef[0],
        beta1: coef[1],
        beta2,
        se_beta0: cov[(0, 0)].max(0.0).sqrt(),
        se_beta1: cov[(1, 1)].max(0.0).sqrt(),
        se_beta2,
        r_squared,
        n_obs: n,
        residual_sum_squares: rss,
    })
}

/// Ratio of trend slopes `a.beta1 / b.beta1`. A denominator slope below
/// `1e-12` of its fit's intercept scale counts as zero.
pub fn slope_ratio(a: &TrendFit, b: &TrendFit) -> Result<f64> {
    let scale = b.beta0.abs().max(1.0);
    if b.beta1.abs() <= 1e-12 * scale {
        return Err(Error::ZeroSlope);
    }
    Ok(a.beta1 / b.beta1)
}
