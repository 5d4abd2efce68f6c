//! Base distances between cells and squared-cost matrices.
//!
//! Lon/lat cells use the haversine great-circle distance on a sphere of
//! radius [`EARTH_RADIUS_KM`]; depth cells use the absolute depth
//! difference in meters. Costs are stored squared (km² or m²).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Coord, Geometry, MassField};

/// Mean Earth radius used for all great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine distance in km between two `(lon, lat)` points in degrees.
pub fn great_circle_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = (lat2 - lat1) * 0.5;
    let dlon = (lon2 - lon1) * 0.5;
    let h = dlat.sin().powi(2) + lat1.cos() * lat2.cos() * dlon.sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn depth_distance_m(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Unit of the base distance, and of a W2 value computed from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    Km,
    M,
}

impl DistanceUnit {
    pub fn for_geometry(geometry: Geometry) -> DistanceUnit {
        match geometry {
            Geometry::LonLat => DistanceUnit::Km,
            Geometry::Depth => DistanceUnit::M,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceUnit::Km => "km",
            DistanceUnit::M => "m",
        }
    }
}

/// Base distance between two cells of the same geometry.
pub fn base_distance(a: &Coord, b: &Coord) -> Result<f64> {
    match (*a, *b) {
        (Coord::LonLat { lon: lo1, lat: la1 }, Coord::LonLat { lon: lo2, lat: la2 }) => {
            Ok(great_circle_km((lo1, la1), (lo2, la2)))
        }
        (Coord::Depth(d1), Coord::Depth(d2)) => Ok(depth_distance_m(d1, d2)),
        _ => Err(Error::Geometry("cannot measure between lon/lat and depth cells".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "cutoff")]
pub enum Sparsity {
    Dense,
    /// Arcs longer than the cutoff (in base-distance units) are omitted.
    Cutoff(f64),
}

/// Squared base distances, stored row-wise (one row per source cell) with
/// the target indices of every present arc in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n_source: usize,
    n_target: usize,
    sparsity: Sparsity,
    unit: DistanceUnit,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    costs: Vec<f64>,
}

impl CostMatrix {
    /// Dense matrix from row-major squared costs. Intended for tests and
    /// synthetic instances; field-based matrices come from [`build_cost`].
    pub fn from_dense(n_source: usize, n_target: usize, costs: Vec<f64>, unit: DistanceUnit) -> Result<CostMatrix> {
        if costs.len() != n_source * n_target {
            return Err(Error::Precondition(format!(
                "{} costs supplied for a {n_source}x{n_target} matrix",
                costs.len()
            )));
        }
        if let Some(&c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Range {
                what: "cost",
                value: c,
                range: "[0, inf)",
            });
        }
        let row_start = (0..=n_source).map(|i| i * n_target).collect();
        let cols = (0..n_source).flat_map(|_| 0..n_target as u32).collect();
        Ok(CostMatrix {
            n_source,
            n_target,
            sparsity: Sparsity::Dense,
            unit,
            row_start,
            cols,
            costs,
        })
    }

    /// Sparse matrix from `(source, target, squared cost)` triples.
    pub fn from_arcs(
        n_source: usize,
        n_target: usize,
        mut arcs: Vec<(usize, usize, f64)>,
        sparsity: Sparsity,
        unit: DistanceUnit,
    ) -> Result<CostMatrix> {
        arcs.sort_by_key(|&(i, j, _)| (i, j));
        arcs.dedup_by_key(|a| (a.0, a.1));
        let mut row_start = vec![0usize; n_source + 1];
        let mut cols = Vec::with_capacity(arcs.len());
        let mut costs = Vec::with_capacity(arcs.len());
        for &(i, j, c) in &arcs {
            if i >= n_source || j >= n_target {
                return Err(Error::Precondition(format!("arc ({i}, {j}) out of bounds")));
            }
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Range {
                    what: "cost",
                    value: c,
                    range: "[0, inf)",
                });
            }
            row_start[i + 1] += 1;
            cols.push(j as u32);
            costs.push(c);
        }
        for i in 0..n_source {
            row_start[i + 1] += row_start[i];
        }
        Ok(CostMatrix {
            n_source,
            n_target,
            sparsity,
            unit,
            row_start,
            cols,
            costs,
        })
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn sparsity(&self) -> Sparsity {
        self.sparsity
    }

    pub fn unit(&self) -> DistanceUnit {
        self.unit
    }

    pub fn n_arcs(&self) -> usize {
        self.costs.len()
    }

    pub fn is_dense(&self) -> bool {
        self.n_arcs() == self.n_source * self.n_target
    }

    /// No arc survived the cutoff at all.
    pub fn has_no_arcs(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_start[i]..self.row_start[i + 1];
        (&self.cols[r.clone()], &self.costs[r])
    }

    pub(crate) fn row_start(&self) -> &[usize] {
        &self.row_start
    }

    pub(crate) fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub(crate) fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Squared cost of arc `(i, j)`, or `None` when the arc is forbidden.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, costs) = self.row(i);
        cols.binary_search(&(j as u32)).ok().map(|k| costs[k])
    }

    pub fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    /// Iterates `(source, target, squared cost)` over present arcs, row-major.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_source).flat_map(move |i| {
            let (cols, costs) = self.row(i);
            cols.iter().zip(costs).map(move |(&j, &c)| (i, j as usize, c))
        })
    }
}

/// Builds the squared base-distance matrix between the cells of two
/// fields. With `cutoff`, arcs whose base distance exceeds it are omitted.
pub fn build_cost(source: &MassField, target: &MassField, cutoff: Option<f64>) -> Result<CostMatrix> {
    if source.geometry() != target.geometry() {
        return Err(Error::Geometry(format!(
            "`{}` is {} but `{}` is {}",
            source.label(),
            source.geometry(),
            target.label(),
            target.geometry()
        )));
    }
    let unit = DistanceUnit::for_geometry(source.geometry());
    let m = source.len();
    let n = target.len();
    match cutoff {
        Some(c) if c.is_nan() || c < 0.0 => Err(Error::Range {
            what: "cutoff",
            value: c,
            range: "[0, inf]",
        }),
        Some(c) if c.is_finite() => {
            let mut row_start = Vec::with_capacity(m + 1);
            let mut cols = Vec::new();
            let mut costs = Vec::new();
            row_start.push(0);
            for a in source.cells() {
                for (j, b) in target.cells().iter().enumerate() {
                    let d = base_distance(&a.coord, &b.coord)?;
                    if d <= c {
                        cols.push(j as u32);
                        costs.push(d * d);
                    }
                }
                row_start.push(cols.len());
            }
            Ok(CostMatrix {
                n_source: m,
                n_target: n,
                sparsity: Sparsity::Cutoff(c),
                unit,
                row_start,
                cols,
                costs,
            })
        }
        _ => {
            let mut costs = Vec::with_capacity(m * n);
            match source.geometry() {
                Geometry::LonLat => {
                    // precompute trig terms once per cell
                    let prep = |f: &MassField| -> Vec<(f64, f64, f64)> {
                        f.cells()
                            .iter()
                            .map(|c| match c.coord {
                                Coord::LonLat { lon, lat } => {
                                    let (lon, lat) = (lon.to_radians(), lat.to_radians());
                                    (lon, lat, lat.cos())
                                }
                                Coord::Depth(_) => unreachable!("geometry checked"),
                            })
                            .collect()
                    };
                    let a = prep(source);
                    let b = prep(target);
                    for &(lon1, lat1, cos1) in &a {
                        for &(lon2, lat2, cos2) in &b {
                            let h = ((lat2 - lat1) * 0.5).sin().powi(2)
                                + cos1 * cos2 * ((lon2 - lon1) * 0.5).sin().powi(2);
                            let d = 2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin();
                            costs.push(d * d);
                        }
                    }
                }
                Geometry::Depth => {
                    for a in source.cells() {
                        for b in target.cells() {
                            let d = base_distance(&a.coord, &b.coord)?;
                            costs.push(d * d);
                        }
                    }
                }
            }
            CostMatrix::from_dense(m, n, costs, unit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_distances() {
        assert_eq!(great_circle_km((0.0, 0.0), (0.0, 0.0)), 0.0);
        let quarter = great_circle_km((0.0, 0.0), (0.0, 90.0));
        assert!((quarter - PI / 2.0 * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((quarter - 10007.543).abs() < 1e-3);
        let half = great_circle_km((0.0, 0.0), (-180.0, 0.0));
        assert!((half - PI * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((half - 20015.087).abs() < 1e-3);
    }

    #[test]
    fn depth_distances() {
        assert_eq!(depth_distance_m(96.0, 140.0), 44.0);
        assert_eq!(depth_distance_m(50.0, 50.0), 0.0);
        assert_eq!(depth_distance_m(0.0, 500.0), 500.0);
    }

    #[test]
    fn identical_fields_give_zero_diagonal() {
        let f = MassField::from_lonlat("f", &[(-150.0, 20.0, 1.0), (-140.0, 25.0, 1.0)]).unwrap();
        let c = build_cost(&f, &f, None).unwrap();
        assert!(c.is_dense());
        assert_eq!(c.get(0, 0), Some(0.0));
        assert_eq!(c.get(1, 1), Some(0.0));
        assert_eq!(c.get(0, 1), c.get(1, 0));
        assert!(c.get(0, 1).unwrap() > 0.0);
        assert_eq!(c.unit(), DistanceUnit::Km);
    }

    #[test]
    fn collinear_depth_cells() {
        let f = MassField::from_depths("d", &[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        let c = build_cost(&f, &f, None).unwrap();
        assert_eq!(c.row(0).1, &[0.0, 1.0, 4.0]);
        assert_eq!(c.row(1).1, &[1.0, 0.0, 1.0]);
        assert_eq!(c.row(2).1, &[4.0, 1.0, 0.0]);
        assert_eq!(c.unit(), DistanceUnit::M);
    }

    #[test]
    fn tight_cutoff_leaves_no_arcs() {
        let a = MassField::from_lonlat("a", &[(-150.0, 20.0, 1.0)]).unwrap();
        let b = MassField::from_lonlat("b", &[(-140.0, 20.0, 1.0)]).unwrap();
        let c = build_cost(&a, &b, Some(10.0)).unwrap();
        assert!(c.has_no_arcs());
        assert_eq!(c.sparsity(), Sparsity::Cutoff(10.0));
    }

    #[test]
    fn mixed_geometry_is_an_error() {
        let a = MassField::from_lonlat("a", &[(-150.0, 20.0, 1.0)]).unwrap();
        let b = MassField::from_depths("b", &[(10.0, 1.0)]).unwrap();
        assert!(matches!(build_cost(&a, &b, None), Err(Error::Geometry(_))));
    }

    fn lonlat() -> impl Strategy<Value = (f64, f64)> {
        (-180.0f64..180.0, -90.0f64..=90.0)
    }

    proptest! {
        #[test]
        fn great_circle_is_a_metric(a in lonlat(), b in lonlat(), c in lonlat()) {
            let ab = great_circle_km(a, b);
            let ba = great_circle_km(b, a);
            let bc = great_circle_km(b, c);
            let ac = great_circle_km(a, c);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            prop_assert!(ac <= ab + bc + 1e-9 * (ab + bc).max(1.0));
        }

        #[test]
        fn infinite_cutoff_equals_dense(pts in prop::collection::vec(lonlat(), 1..12)) {
            let cells: Vec<(f64, f64, f64)> = pts.iter().map(|&(lo, la)| (lo, la, 1.0)).collect();
            let f = MassField::from_lonlat("f", &cells).unwrap();
            let dense = build_cost(&f, &f, None).unwrap();
            let inf = build_cost(&f, &f, Some(f64::INFINITY)).unwrap();
            prop_assert_eq!(dense.costs(), inf.costs());
            for i in 0..f.len() {
                for j in 0..f.len() {
                    let ci = &f.cells()[i].coord;
                    let cj = &f.cells()[j].coord;
                    let d = base_distance(ci, cj).unwrap();
                    let got = dense.get(i, j).unwrap();
                    prop_assert!((got - d * d).abs() <= 1e-9 * (d * d).max(1e-300));
                    prop_assert_eq!(dense.get(i, j), dense.get(j, i));
                }
            }
        }
    }
}
