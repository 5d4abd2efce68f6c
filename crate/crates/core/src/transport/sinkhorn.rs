use serde::{Deserialize, Serialize};

use super::{check_inputs, PlanArc, TransportPlan, MASS_EPSILON};
use crate::error::{Error, Result};
use crate::field::MassField;
use crate::geodesy::CostMatrix;

/// Entropic regularization settings. `epsilon` is dimensionless: the
/// kernel is `exp(-C / (epsilon * max C))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornParams {
    pub epsilon: f64,
    pub max_iter: usize,
    /// Target L1 residual of the row marginals.
    pub tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 1e-2,
            max_iter: 100_000,
            tol: 1e-8,
        }
    }
}

impl SinkhornParams {
    pub fn with_epsilon(epsilon: f64) -> SinkhornParams {
        SinkhornParams {
            epsilon,
            ..SinkhornParams::default()
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn sinkhorn_sweep(scaled: &[f64], log_p: &[f64], log_q: &[f64], f: &mut [f64], g: &mut [f64]) {
    let nc = g.len();
    for (a, fa) in f.iter_mut().enumerate() {
        let row = &scaled[a * nc..(a + 1) * nc];
        *fa = log_p[a] - log_sum_exp(row.iter().zip(g.iter()).map(|(c, gj)| gj - c));
    }
    for (b, gb) in g.iter_mut().enumerate() {
        *gb = log_q[b] - log_sum_exp(f.iter().enumerate().map(|(a, fa)| fa - scaled[a * nc + b]));
    }
}

fn row_residual(scaled: &[f64], row_mass: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let nc = g.len();
    f.iter()
        .enumerate()
        .map(|(a, fa)| {
            let row = &scaled[a * nc..(a + 1) * nc];
            let s: f64 = row.iter().zip(g).map(|(c, gj)| (fa + gj - c).exp()).sum();
            (s - row_mass[a]).abs()
        })
        .sum()
}

/// Log-domain Sinkhorn iterations on a dense cost matrix, with epsilon
/// scaling from `1` down to `params.epsilon`.
pub fn solve_sinkhorn(
    p: &MassField,
    q: &MassField,
    cost: &CostMatrix,
    params: SinkhornParams,
) -> Result<TransportPlan> {
    check_inputs(p, q, cost)?;
    if !cost.is_dense() {
        return Err(Error::Precondition("sinkhorn requires a dense cost matrix".into()));
    }
    if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
        return Err(Error::Range {
            what: "epsilon",
            value: params.epsilon,
            range: "(0, inf)",
        });
    }

    let rows: Vec<usize> = (0..p.len()).filter(|&i| p.values()[i] > MASS_EPSILON).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q.values()[j] > MASS_EPSILON).collect();
    let (mr, nc) = (rows.len(), cols.len());
    let max_cost = cost.max_cost();
    let unit_reg = if max_cost > 0.0 { max_cost } else { 1.0 };

    let mut block = Vec::with_capacity(mr * nc);
    for &i in &rows {
        let (_, row) = cost.row(i);
        block.extend(cols.iter().map(|&j| row[j]));
    }
    let log_p: Vec<f64> = rows.iter().map(|&i| p.values()[i].ln()).collect();
    let log_q: Vec<f64> = cols.iter().map(|&j| q.values()[j].ln()).collect();
    let row_mass: Vec<f64> = rows.iter().map(|&i| p.values()[i]).collect();

    // epsilon scaling: solve a ladder of decreasing regularizations, each
    // warm-started from the previous dual potentials (kept in cost units)
    let mut ladder = Vec::new();
    let mut e = params.epsilon;
    while e < 1.0 {
        ladder.push(e);
        e *= 10.0;
    }
    ladder.push(e.max(params.epsilon));
    ladder.reverse();

    let mut f = vec![0.0; mr];
    let mut g = vec![0.0; nc];
    let mut scaled = vec![0.0; mr * nc];
    let mut iterations = 0;
    for &stage in &ladder {
        let reg = stage * unit_reg;
        for (s, c) in scaled.iter_mut().zip(&block) {
            *s = c / reg;
        }
        for v in f.iter_mut().chain(g.iter_mut()) {
            *v /= reg;
        }
        let mut residual = f64::INFINITY;
        while iterations < params.max_iter {
            iterations += 1;
            sinkhorn_sweep(&scaled, &log_p, &log_q, &mut f, &mut g);
            // columns are exact after the g-update; measure the rows
            if iterations % 10 == 0 || iterations == params.max_iter {
                residual = row_residual(&scaled, &row_mass, &f, &g);
                if residual <= params.tol {
                    break;
                }
            }
        }
        for v in f.iter_mut().chain(g.iter_mut()) {
            *v *= reg;
        }
        if residual > params.tol {
            return Err(Error::Convergence { iterations, residual });
        }
    }
    let reg = params.epsilon * unit_reg;
    for v in f.iter_mut().chain(g.iter_mut()) {
        *v /= reg;
    }

    let mut arcs = Vec::new();
    for (a, &i) in rows.iter().enumerate() {
        let (_, row) = cost.row(i);
        for (b, &j) in cols.iter().enumerate() {
            let mass = (f[a] + g[b] - scaled[a * nc + b]).exp();
            if mass > 0.0 {
                arcs.push(PlanArc {
                    source: i,
                    target: j,
                    mass,
                    cost: row[j],
                });
            }
        }
    }
    Ok(TransportPlan::from_arcs(cost, arcs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::build_cost;
    use crate::transport::solve_exact;

    fn line(values: &[f64]) -> MassField {
        let pts: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        MassField::from_depths("line", &pts).unwrap().normalize().unwrap()
    }

    #[test]
    fn identical_fields_are_close_to_zero() {
        let p = line(&[0.2, 0.3, 0.5]);
        let c = build_cost(&p, &p, None).unwrap();
        for eps in [1e-1, 1e-2, 1e-3] {
            let plan = solve_sinkhorn(&p, &p, &c, SinkhornParams::with_epsilon(eps)).unwrap();
            // W2 of a blurred identity is O(sqrt(eps)) in units of the max cost
            assert!(plan.w2 <= 2.0 * (eps * c.max_cost()).sqrt() + 1e-9, "eps {eps}: {}", plan.w2);
        }
    }

    #[test]
    fn shrinking_epsilon_approaches_exact() {
        let p = line(&[0.5, 0.5, 0.0]);
        let q = line(&[0.0, 0.5, 0.5]);
        let c = build_cost(&p, &q, None).unwrap();
        let exact = solve_exact(&p, &q, &c).unwrap().objective;
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let plan = solve_sinkhorn(&p, &q, &c, SinkhornParams::with_epsilon(eps)).unwrap();
            assert!(plan.objective >= exact - 1e-8);
            assert!(plan.objective <= last);
            last = plan.objective;
        }
        assert!((last - exact).abs() < 1e-3);
    }

    #[test]
    fn huge_epsilon_gives_independent_coupling() {
        let p = line(&[0.1, 0.6, 0.3]);
        let q = line(&[0.25, 0.25, 0.5]);
        let c = build_cost(&p, &q, None).unwrap();
        let plan = solve_sinkhorn(&p, &q, &c, SinkhornParams::with_epsilon(1e6)).unwrap();
        for a in &plan.arcs {
            let outer = p.values()[a.source] * q.values()[a.target];
            assert!((a.mass - outer).abs() < 1e-6, "{a:?} vs {outer}");
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = line(&[0.5, 0.5, 0.0]);
        let q = line(&[0.0, 0.5, 0.5]);
        let c = build_cost(&p, &q, None).unwrap();
        let params = SinkhornParams {
            epsilon: 1e-3,
            max_iter: 1,
            tol: 1e-14,
        };
        assert!(matches!(
            solve_sinkhorn(&p, &q, &c, params),
            Err(Error::Convergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn sparse_costs_are_rejected() {
        let p = line(&[0.5, 0.5]);
        let c = build_cost(&p, &p, Some(0.5)).unwrap();
        assert!(matches!(
            solve_sinkhorn(&p, &p, &c, SinkhornParams::default()),
            Err(Error::Precondition(_))
        ));
    }
}
