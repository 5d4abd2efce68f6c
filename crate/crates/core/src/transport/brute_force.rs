//! Dense tableau simplex on the transportation LP, written independently of
//! the network simplex so it can serve as a test oracle.

use super::{check_inputs, PlanArc, TransportPlan, STRANDED_TOLERANCE};
use crate::error::{Error, Result};
use crate::field::MassField;
use crate::geodesy::CostMatrix;

/// Largest `m * n` accepted by [`brute_force`].
pub const BRUTE_FORCE_LIMIT: usize = 400;

const PIVOT_TOL: f64 = 1e-12;

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.a[r].clone();
        for (k, row) in self.a.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost . x` over columns for which `allowed` holds, using
    /// Bland's rule. Returns the objective value.
    fn minimize(&mut self, cost: &[f64], allowed: impl Fn(usize) -> bool) -> f64 {
        let rhs = self.cols;
        loop {
            // reduced costs c_j - c_B B^-1 A_j
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for (r, &b) in self.basis.iter().enumerate() {
                    rc -= cost[b] * self.a[r][j];
                }
                if rc < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { break };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.a.len() {
                let coef = self.a[r][j];
                if coef > PIVOT_TOL {
                    let ratio = self.a[r][rhs] / coef;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - PIVOT_TOL
                                || ((ratio - best).abs() <= PIVOT_TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let (r, _) = leave.expect("transportation LP is bounded");
            self.pivot(r, j);
        }
        self.basis
            .iter()
            .enumerate()
            .map(|(r, &b)| cost[b] * self.a[r][rhs])
            .sum()
    }
}

/// Solves the transportation LP with a generic two-phase simplex.
pub fn brute_force(p: &MassField, q: &MassField, cost: &CostMatrix) -> Result<TransportPlan> {
    check_inputs(p, q, cost)?;
    brute_force_masses(p.values(), q.values(), cost)
}

pub(crate) fn brute_force_masses(supply: &[f64], demand: &[f64], cost: &CostMatrix) -> Result<TransportPlan> {
    let (m, n) = (cost.n_source(), cost.n_target());
    if m * n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard {
            cells: m * n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let vars: Vec<(usize, usize, f64)> = cost.arcs().collect();
    let nv = vars.len();
    // row constraints for every source, column constraints for all but the
    // last target (the dropped one is implied by the mass balance)
    let n_cons = m + n.saturating_sub(1);
    let cols = nv + n_cons;
    let mut a = vec![vec![0.0; cols + 1]; n_cons];
    for (v, &(i, j, _)) in vars.iter().enumerate() {
        a[i][v] = 1.0;
        if j + 1 < n {
            a[m + j][v] = 1.0;
        }
    }
    for i in 0..m {
        a[i][cols] = supply[i];
    }
    for j in 0..n.saturating_sub(1) {
        a[m + j][cols] = demand[j];
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[nv + r] = 1.0;
    }
    let mut t = Tableau {
        a,
        basis: (nv..nv + n_cons).collect(),
        cols,
    };

    let mut phase1 = vec![0.0; cols];
    for c in phase1.iter_mut().skip(nv) {
        *c = 1.0;
    }
    let infeasibility = t.minimize(&phase1, |_| true);
    if infeasibility > STRANDED_TOLERANCE {
        return Err(Error::Infeasible {
            stranded_mass: infeasibility,
        });
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..n_cons {
        if t.basis[r] >= nv {
            if let Some(j) = (0..nv).find(|&j| t.a[r][j].abs() > PIVOT_TOL && !t.basis.contains(&j)) {
                t.pivot(r, j);
            }
        }
    }
    let mut phase2 = vec![0.0; cols];
    for (v, &(_, _, c)) in vars.iter().enumerate() {
        phase2[v] = c;
    }
    t.minimize(&phase2, |j| j < nv);

    let mut x = vec![0.0; nv];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < nv {
            x[b] = t.a[r][cols];
        }
    }
    let arcs = vars
        .iter()
        .zip(&x)
        .filter(|(_, &mass)| mass > PIVOT_TOL)
        .map(|(&(i, j, c), &mass)| PlanArc {
            source: i,
            target: j,
            mass,
            cost: c,
        })
        .collect();
    Ok(TransportPlan::from_arcs(cost, arcs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::DistanceUnit;

    fn uniform(label: &str, values: &[f64]) -> MassField {
        let pts: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        MassField::from_depths(label, &pts).unwrap().normalize().unwrap()
    }

    #[test]
    fn symmetric_two_by_two() {
        let p = uniform("p", &[0.5, 0.5]);
        let c = CostMatrix::from_dense(2, 2, vec![0.0, 1.0, 1.0, 0.0], DistanceUnit::M).unwrap();
        let plan = brute_force(&p, &p, &c).unwrap();
        assert!(plan.objective.abs() < 1e-15);
    }

    #[test]
    fn opposite_point_masses() {
        let p = uniform("p", &[1.0, 0.0]);
        let q = uniform("q", &[0.0, 1.0]);
        let c = CostMatrix::from_dense(2, 2, vec![0.0, 9.0, 9.0, 0.0], DistanceUnit::M).unwrap();
        let plan = brute_force(&p, &q, &c).unwrap();
        assert!((plan.objective - 9.0).abs() < 1e-12);
        assert!((plan.w2 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_cell_polytope_optimum() {
        // vertices of the 3x3 polytope enumerated by hand: the monotone
        // plan 0->1, 1->2 (cost 1) beats 0->2 (cost 4 * 0.5 = 2)
        let p = uniform("p", &[0.5, 0.5, 0.0]);
        let q = uniform("q", &[0.0, 0.5, 0.5]);
        let costs = vec![0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0];
        let c = CostMatrix::from_dense(3, 3, costs, DistanceUnit::M).unwrap();
        let plan = brute_force(&p, &q, &c).unwrap();
        assert!((plan.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let p = uniform("p", &[1.0; 21]);
        let c = CostMatrix::from_dense(21, 21, vec![1.0; 441], DistanceUnit::M).unwrap();
        assert!(matches!(brute_force(&p, &p, &c), Err(Error::SizeGuard { .. })));
    }
}
