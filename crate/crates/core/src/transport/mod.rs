//! Discrete optimal transport between two normalized fields.
//!
//! [`solve_exact`] returns an optimal basic solution of the transportation
//! linear program with squared base distances as costs. [`solve_sinkhorn`]
//! is the entropic approximation and [`brute_force`] a dense-LP oracle for
//! small instances.

mod brute_force;
mod network_simplex;
mod sinkhorn;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use brute_force::{brute_force, BRUTE_FORCE_LIMIT};
pub use network_simplex::MASS_EPSILON;
pub use sinkhorn::{solve_sinkhorn, SinkhornParams};

use crate::error::{Error, Result};
use crate::field::MassField;
use crate::geodesy::{CostMatrix, DistanceUnit};

/// Stranded mass above this is reported as infeasibility.
pub const STRANDED_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanArc {
    /// Index into the source field's cells.
    pub source: usize,
    /// Index into the target field's cells.
    pub target: usize,
    pub mass: f64,
    /// Squared base distance of the arc.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub n_source: usize,
    pub n_target: usize,
    /// Arcs with positive mass, ordered by `(source, target)`.
    pub arcs: Vec<PlanArc>,
    /// Total transport cost, `sum(mass * cost)`, in squared units.
    pub objective: f64,
    /// Square root of the objective.
    pub w2: f64,
    pub unit: DistanceUnit,
}

impl TransportPlan {
    pub(crate) fn from_arcs(cost: &CostMatrix, arcs: Vec<PlanArc>) -> TransportPlan {
        // sum in (source, target) order for reproducibility
        let objective: f64 = arcs.iter().map(|a| a.mass * a.cost).sum();
        let objective = objective.max(0.0);
        TransportPlan {
            n_source: cost.n_source(),
            n_target: cost.n_target(),
            arcs,
            objective,
            w2: objective.sqrt(),
            unit: cost.unit(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.arcs.iter().map(|a| a.mass).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_source];
        for a in &self.arcs {
            out[a.source] += a.mass;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_target];
        for a in &self.arcs {
            out[a.target] += a.mass;
        }
        out
    }

    /// Largest absolute marginal violation against the two fields.
    pub fn max_marginal_residual(&self, p: &MassField, q: &MassField) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let r = rows
            .iter()
            .zip(p.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let c = cols
            .iter()
            .zip(q.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }

    /// Splits arcs into the heaviest ones carrying at least a fraction `q`
    /// of the total mass and the rest. Ties in mass keep `(source, target)`
    /// order.
    pub fn top_fraction(&self, q: f64) -> Result<TopFraction> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Range {
                what: "top fraction",
                value: q,
                range: "(0, 1]",
            });
        }
        if self.arcs.is_empty() {
            return Err(Error::Precondition("transport plan has no arcs".into()));
        }
        let mut sorted = self.arcs.clone();
        sorted.sort_by(|a, b| {
            b.mass
                .partial_cmp(&a.mass)
                .unwrap_or(Ordering::Equal)
                .then((a.source, a.target).cmp(&(b.source, b.target)))
        });
        let split = if q >= 1.0 {
            sorted.len()
        } else {
            let threshold = q * self.total_mass() * (1.0 - 1e-12);
            let mut cum = 0.0;
            let mut k = sorted.len();
            for (idx, a) in sorted.iter().enumerate() {
                cum += a.mass;
                if cum >= threshold {
                    k = idx + 1;
                    break;
                }
            }
            k
        };
        let minor = sorted.split_off(split);
        Ok(TopFraction { major: sorted, minor })
    }
}

/// Result of [`TransportPlan::top_fraction`], both halves sorted by mass
/// descending.
#[derive(Debug, Clone, PartialEq)]
pub struct TopFraction {
    pub major: Vec<PlanArc>,
    pub minor: Vec<PlanArc>,
}

impl TopFraction {
    pub fn is_major(&self, arc: &PlanArc) -> bool {
        self.major
            .iter()
            .any(|a| a.source == arc.source && a.target == arc.target)
    }
}

pub(crate) fn check_inputs(p: &MassField, q: &MassField, cost: &CostMatrix) -> Result<()> {
    for f in [p, q] {
        if !f.is_normalized() {
            return Err(Error::Precondition(format!(
                "field `{}` must be normalized before transport",
                f.label()
            )));
        }
    }
    if cost.n_source() != p.len() || cost.n_target() != q.len() {
        return Err(Error::Precondition(format!(
            "cost matrix is {}x{} but fields have {} and {} cells",
            cost.n_source(),
            cost.n_target(),
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Exact optimal transport by network simplex.
pub fn solve_exact(p: &MassField, q: &MassField, cost: &CostMatrix) -> Result<TransportPlan> {
    check_inputs(p, q, cost)?;
    solve_masses(p.values(), q.values(), cost)
}

/// Exact solve on raw mass vectors. Both must already sum to the same
/// total (normally 1).
pub fn solve_masses(supply: &[f64], demand: &[f64], cost: &CostMatrix) -> Result<TransportPlan> {
    if supply.len() != cost.n_source() || demand.len() != cost.n_target() {
        return Err(Error::Precondition("mass vectors do not match the cost matrix".into()));
    }
    let solution = network_simplex::NetworkSimplex::new(cost, supply, demand).solve();
    if solution.stranded > STRANDED_TOLERANCE {
        return Err(Error::Infeasible {
            stranded_mass: solution.stranded,
        });
    }
    let arcs = solution
        .arcs
        .into_iter()
        .map(|(i, j, mass)| PlanArc {
            source: i,
            target: j,
            mass,
            cost: cost.get(i, j).expect("solver only uses present arcs"),
        })
        .collect();
    Ok(TransportPlan::from_arcs(cost, arcs))
}
