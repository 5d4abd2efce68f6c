//! Two-province segmentation of a lon/lat map by 1-D 2-means on each
//! longitude column, and the boundary between the provinces as a mass field.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Coord, Geometry, MassField};
use crate::io::fmt_num;
use crate::metrics::{w2_plan, W2Options};
use crate::transport::TransportPlan;

/// Offset added before the log transform of map values.
pub const LOG_EPSILON: f64 = 1e-5;

const MAX_LLOYD_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// 0 for the lower-mean cluster, 1 for the higher.
    pub labels: Vec<u8>,
    pub centers: [f64; 2],
    /// Within-cluster sum of squared deviations.
    pub sse: f64,
}

fn assign(values: &[f64], centers: [f64; 2], labels: &mut [u8]) -> bool {
    let mut changed = false;
    for (l, &v) in labels.iter_mut().zip(values) {
        // ties go to the lower center
        let new = u8::from((v - centers[1]).abs() < (v - centers[0]).abs());
        changed |= new != *l;
        *l = new;
    }
    changed
}

fn means(values: &[f64], labels: &[u8]) -> [f64; 2] {
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for (&l, &v) in labels.iter().zip(values) {
        sum[l as usize] += v;
        count[l as usize] += 1;
    }
    [sum[0] / count[0] as f64, sum[1] / count[1] as f64]
}

fn sse(values: &[f64], labels: &[u8], centers: [f64; 2]) -> f64 {
    labels
        .iter()
        .zip(values)
        .map(|(&l, &v)| (v - centers[l as usize]).powi(2))
        .sum()
}

/// k-means++ seeding of two centers, returned in increasing order.
fn seed_centers(values: &[f64], rng: &mut ChaCha8Rng) -> [f64; 2] {
    let first = values[rng.random_range(0..values.len())];
    let weights: Vec<f64> = values.iter().map(|v| (v - first).powi(2)).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random_range(0.0..total);
    let mut second = first;
    for (w, &v) in weights.iter().zip(values) {
        if *w > 0.0 {
            second = v;
            if target < *w {
                break;
            }
            target -= w;
        }
    }
    if first < second {
        [first, second]
    } else {
        [second, first]
    }
}

/// Lloyd's 2-means with k-means++ initialization; the restart with the
/// lowest SSE wins (earliest on ties).
pub fn kmeans_1d(values: &[f64], restarts: usize, seed: u64) -> Result<Clustering> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("k-means input contains {v}")));
    }
    let Some(&first) = values.first() else {
        return Err(Error::DegenerateCluster);
    };
    if values.iter().all(|&v| v == first) {
        return Err(Error::DegenerateCluster);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts.max(1) {
        let mut centers = seed_centers(values, &mut rng);
        let mut labels = vec![0u8; values.len()];
        assign(values, centers, &mut labels);
        for _ in 0..MAX_LLOYD_ITERATIONS {
            centers = means(values, &labels);
            if !assign(values, centers, &mut labels) {
                break;
            }
        }
        centers = means(values, &labels);
        let score = sse(values, &labels, centers);
        if best.as_ref().is_none_or(|b| score < b.sse) {
            best = Some(Clustering {
                labels,
                centers,
                sse: score,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Cluster `log10(value + LOG_EPSILON)` instead of raw values.
    pub log_transform: bool,
    /// One clustering over all cells instead of one per column.
    pub whole_map: bool,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions {
            restarts: 10,
            seed: 0,
            log_transform: true,
            whole_map: false,
        }
    }
}

/// The discretized province boundary of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    /// All map cells; boundary cells share the mass equally.
    pub field: MassField,
    /// Province label of every cell, 1 for the high-value province.
    pub province_labels: Vec<u8>,
    /// Indices of the boundary cells, one per longitude column.
    pub boundary: Vec<usize>,
}

impl BoundaryField {
    pub fn is_boundary(&self, cell: usize) -> bool {
        self.field.values()[cell] > 0.0
    }

    /// CSV `lon,lat,province_label,is_boundary`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Precondition(format!("writing boundary: {e}"));
        w.write_record(["lon", "lat", "province_label", "is_boundary"]).map_err(err)?;
        for (k, cell) in self.field.cells().iter().enumerate() {
            if let Coord::LonLat { lon, lat } = cell.coord {
                let flag = if self.is_boundary(k) { "1" } else { "0" };
                w.write_record([fmt_num(lon), fmt_num(lat), self.province_labels[k].to_string(), flag.to_owned()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing boundary: {e}")))
    }
}

/// A regular lon/lat lattice with cells grouped in longitude columns, each
/// sorted by latitude.
struct Grid {
    lons: Vec<f64>,
    columns: Vec<Vec<usize>>,
}

/// Sorted distinct coordinates, which must sit on one lattice whose step
/// is the smallest gap (missing rows or columns are allowed).
fn regular_axis(name: &str, mut values: Vec<f64>) -> Result<Vec<f64>> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    let step = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    for v in &values {
        let steps = (v - values[0]) / step;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Grid(format!("{name} {v} is off the {step} lattice")));
        }
    }
    Ok(values)
}

fn grid_of(map: &MassField) -> Result<Grid> {
    if map.geometry() != Geometry::LonLat {
        return Err(Error::Geometry("province extraction needs a lon/lat map".into()));
    }
    let coords: Vec<(f64, f64)> = map
        .cells()
        .iter()
        .map(|c| match c.coord {
            Coord::LonLat { lon, lat } => (lon, lat),
            Coord::Depth(_) => unreachable!("geometry checked"),
        })
        .collect();
    let lons = regular_axis("longitude", coords.iter().map(|c| c.0).collect())?;
    let lats = regular_axis("latitude", coords.iter().map(|c| c.1).collect())?;
    if lats.len() < 2 {
        return Err(Error::Grid("the map has a single latitude row".into()));
    }
    let mut columns = vec![Vec::new(); lons.len()];
    for (k, &(lon, _)) in coords.iter().enumerate() {
        let col = lons.partition_point(|&l| l < lon);
        columns[col].push(k);
    }
    for col in &mut columns {
        col.sort_by(|&a, &b| coords[a].1.total_cmp(&coords[b].1));
        if let Some(w) = col.windows(2).find(|w| coords[w[0]].1 == coords[w[1]].1) {
            return Err(Error::Grid(format!(
                "duplicate cell at lon {}, lat {}",
                coords[w[0]].0,
                coords[w[0]].1
            )));
        }
    }
    Ok(Grid { lons, columns })
}

fn latitude(map: &MassField, cell: usize) -> f64 {
    match map.cells()[cell].coord {
        Coord::LonLat { lat, .. } => lat,
        Coord::Depth(_) => unreachable!("lon/lat map"),
    }
}

/// Label changes between latitude-adjacent cells of a column, as
/// `(transition latitude, boundary cell)`; the boundary cell is the one in
/// the high-value province.
fn transitions(map: &MassField, column: &[usize], labels: &[u8]) -> Vec<(f64, usize)> {
    column
        .windows(2)
        .filter(|w| labels[w[0]] != labels[w[1]])
        .map(|w| {
            let mid = 0.5 * (latitude(map, w[0]) + latitude(map, w[1]));
            let high = if labels[w[0]] == 1 { w[0] } else { w[1] };
            (mid, high)
        })
        .collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-column 2-means boundary of a map. Columns with several label
/// changes keep the one nearest the median transition latitude over all
/// columns (the lower one on ties).
pub fn extract_boundary(map: &MassField, options: &BoundaryOptions) -> Result<BoundaryField> {
    let grid = grid_of(map)?;
    let feature = |v: f64| if options.log_transform { (v + LOG_EPSILON).log10() } else { v };
    let features: Vec<f64> = map.values().iter().map(|&v| feature(v)).collect();
    let mut labels = vec![0u8; map.len()];

    if options.whole_map {
        let c = kmeans_1d(&features, options.restarts, options.seed)?;
        labels = c.labels;
    } else {
        let clustered: Vec<Option<Vec<u8>>> = grid
            .columns
            .par_iter()
            .enumerate()
            .map(|(k, column)| {
                if column.len() < 2 {
                    return None;
                }
                let values: Vec<f64> = column.iter().map(|&c| features[c]).collect();
                kmeans_1d(&values, options.restarts, options.seed.wrapping_add(k as u64))
                    .ok()
                    .map(|c| c.labels)
            })
            .collect();
        let bad: Vec<f64> = grid
            .lons
            .iter()
            .zip(&clustered)
            .filter(|(_, c)| c.is_none())
            .map(|(&lon, _)| lon)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Columns { longitudes: bad });
        }
        for (column, col_labels) in grid.columns.iter().zip(clustered) {
            for (&cell, l) in column.iter().zip(col_labels.expect("checked above")) {
                labels[cell] = l;
            }
        }
    }

    let per_column: Vec<Vec<(f64, usize)>> = grid.columns.iter().map(|c| transitions(map, c, &labels)).collect();
    let bad: Vec<f64> = grid
        .lons
        .iter()
        .zip(&per_column)
        .filter(|(_, t)| t.is_empty())
        .map(|(&lon, _)| lon)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Columns { longitudes: bad });
    }
    let centre = median(per_column.iter().flatten().map(|t| t.0).collect());
    let boundary: Vec<usize> = per_column
        .iter()
        .map(|t| {
            // transitions are in increasing latitude, so the first minimum
            // is the lower latitude on ties
            t.iter()
                .fold(t[0], |best, &cand| if (cand.0 - centre).abs() < (best.0 - centre).abs() { cand } else { best })
                .1
        })
        .collect();

    let mut values = vec![0.0; map.len()];
    for &b in &boundary {
        values[b] = 1.0;
    }
    let field = MassField::new(format!("{}:boundary", map.label()), map.cells().to_vec(), values)?.normalize()?;
    Ok(BoundaryField {
        field,
        province_labels: labels,
        boundary,
    })
}

/// Optimal transport between two boundaries, solved on their supports.
pub fn boundary_w2(a: &BoundaryField, b: &BoundaryField, options: &W2Options) -> Result<TransportPlan> {
    w2_plan(&a.field, &b.field, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::great_circle_km;
    use proptest::prelude::*;

    /// Optimal 2-means SSE of 1-D values by trying every split of the
    /// sorted values.
    fn sorted_split_sse(values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let part = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        (1..v.len()).map(|k| part(&v[..k]) + part(&v[k..])).fold(f64::INFINITY, f64::min)
    }

    fn front_map(lons: &[f64], lats: &[f64], front: impl Fn(f64) -> f64) -> MassField {
        let mut pts = Vec::new();
        for &lon in lons {
            for &lat in lats {
                pts.push((lon, lat, if lat > front(lon) { 1.0 } else { 0.05 }));
            }
        }
        MassField::from_lonlat("map", &pts).unwrap()
    }

    fn axis(start: f64, step: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| start + step * k as f64).collect()
    }

    #[test]
    fn separated_clusters() {
        let c = kmeans_1d(&[1.0, 1.0, 1.0, 9.0, 9.0, 9.0], 10, 0).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(c.centers, [1.0, 9.0]);
        let c = kmeans_1d(&[10.0, 0.0], 10, 0).unwrap();
        assert_eq!(c.labels, vec![1, 0]);
        assert_eq!(c.sse, 0.0);
    }

    #[test]
    fn identical_values_are_degenerate() {
        assert!(matches!(kmeans_1d(&[2.0; 5], 10, 0), Err(Error::DegenerateCluster)));
        assert!(matches!(kmeans_1d(&[], 10, 0), Err(Error::DegenerateCluster)));
    }

    #[test]
    fn gaussian_mixture_matches_midpoint_threshold() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let low = Normal::new(0.0, 1.0).unwrap();
        let high = Normal::new(20.0, 1.0).unwrap();
        let values: Vec<f64> = (0..50)
            .map(|k| if k % 2 == 0 { low.sample(&mut rng) } else { high.sample(&mut rng) })
            .collect();
        let c = kmeans_1d(&values, 10, 1).unwrap();
        for (v, l) in values.iter().zip(&c.labels) {
            assert_eq!(*l, u8::from(*v > 10.0));
        }
        assert!((c.sse - sorted_split_sse(&values)).abs() < 1e-9);
    }

    #[test]
    fn reproducible_under_seed() {
        let values: Vec<f64> = (0..40).map(|k| ((k * 37) % 11) as f64).collect();
        assert_eq!(kmeans_1d(&values, 3, 9).unwrap(), kmeans_1d(&values, 3, 9).unwrap());
    }

    #[test]
    fn flat_front_boundary_row() {
        let lats = axis(20.25, 0.5, 40);
        let map = front_map(&axis(-170.0, 1.0, 12), &lats, |_| 30.0);
        let b = extract_boundary(&map, &BoundaryOptions::default()).unwrap();
        assert_eq!(b.boundary.len(), 12);
        for &cell in &b.boundary {
            assert_eq!(latitude(&map, cell), 30.25);
        }
        let expected = 1.0 / 12.0;
        assert!(b.boundary.iter().all(|&c| (b.field.values()[c] - expected).abs() < 1e-15));
        assert!(b.field.is_normalized());
    }

    #[test]
    fn sinusoid_front_is_tracked() {
        let lats = axis(20.0, 0.5, 41);
        let lons = axis(-180.0, 1.0, 60);
        let front = |lon: f64| 30.0 + 2.0 * (lon.to_radians() * 6.0).sin();
        let map = front_map(&lons, &lats, front);
        let b = extract_boundary(&map, &BoundaryOptions::default()).unwrap();
        for &cell in &b.boundary {
            let Coord::LonLat { lon, lat } = map.cells()[cell].coord else { unreachable!() };
            assert!((lat - front(lon)).abs() <= 0.5, "lon {lon}: {lat} vs {}", front(lon));
        }
    }

    #[test]
    fn uniform_map_fails_every_column() {
        let lons = axis(0.0, 1.0, 3);
        let pts: Vec<(f64, f64, f64)> = lons.iter().flat_map(|&lon| (0..4).map(move |k| (lon, k as f64, 1.0))).collect();
        let map = MassField::from_lonlat("u", &pts).unwrap();
        match extract_boundary(&map, &BoundaryOptions::default()) {
            Err(Error::Columns { longitudes }) => assert_eq!(longitudes, lons),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn irregular_grid_is_rejected() {
        let pts = [(0.0, 0.0, 1.0), (0.0, 1.0, 2.0), (0.0, 2.5, 3.0), (1.0, 0.0, 1.0)];
        let map = MassField::from_lonlat("irr", &pts).unwrap();
        assert!(matches!(extract_boundary(&map, &BoundaryOptions::default()), Err(Error::Grid(_))));
    }

    #[test]
    fn noisy_column_keeps_transition_near_median() {
        let lats = axis(0.0, 1.0, 20);
        let lons = axis(0.0, 1.0, 5);
        let mut map = front_map(&lons, &lats, |_| 9.5);
        // a high blob far south in column 2
        let mut values = map.values().to_vec();
        values[2 * 20 + 2] = 1.0;
        map = MassField::new("noisy", map.cells().to_vec(), values).unwrap();
        let b = extract_boundary(&map, &BoundaryOptions::default()).unwrap();
        for &cell in &b.boundary {
            assert_eq!(latitude(&map, cell), 10.0);
        }
    }

    #[test]
    fn whole_map_mode() {
        let map = front_map(&axis(0.0, 1.0, 6), &axis(0.0, 1.0, 10), |_| 4.5);
        let options = BoundaryOptions {
            whole_map: true,
            ..BoundaryOptions::default()
        };
        let b = extract_boundary(&map, &options).unwrap();
        assert!(b.boundary.iter().all(|&c| latitude(&map, c) == 5.0));
    }

    #[test]
    fn one_row_shift_costs_the_row_spacing() {
        let lons = axis(-150.0, 1.0, 20);
        let lats = axis(20.0, 1.0, 20);
        let a = extract_boundary(&front_map(&lons, &lats, |_| 29.5), &BoundaryOptions::default()).unwrap();
        let b = extract_boundary(&front_map(&lons, &lats, |_| 30.5), &BoundaryOptions::default()).unwrap();
        assert_eq!(boundary_w2(&a, &a, &W2Options::default()).unwrap().w2, 0.0);
        let plan = boundary_w2(&a, &b, &W2Options::default()).unwrap();
        let spacing = great_circle_km((0.0, 30.0), (0.0, 31.0));
        assert!((plan.w2 - spacing).abs() <= 0.02 * spacing, "{} vs {spacing}", plan.w2);
        let top = plan.top_fraction(0.1).unwrap();
        for arc in &top.major {
            assert!(a.is_boundary(arc.source) && b.is_boundary(arc.target));
        }
    }

    #[test]
    fn csv_layout() {
        let map = front_map(&[0.0], &axis(0.0, 1.0, 3), |_| 0.5);
        let b = extract_boundary(&map, &BoundaryOptions::default()).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "lon,lat,province_label,is_boundary\n0.0,0.0,0,0\n0.0,1.0,1,1\n0.0,2.0,1,0\n"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lloyd_matches_sorted_split_on_mixtures(
            n_low in 1usize..100,
            n_high in 1usize..100,
            gap in 3.0f64..20.0,
            seed in 0u64..1000,
        ) {
            use rand_distr::{Distribution, Normal};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let low = Normal::new(0.0, 1.0).unwrap();
            let high = Normal::new(gap, 1.0).unwrap();
            let mut values: Vec<f64> = (0..n_low).map(|_| low.sample(&mut rng)).collect();
            values.extend((0..n_high).map(|_| high.sample(&mut rng)));
            prop_assume!(values.len() >= 2);
            let c = kmeans_1d(&values, 10, seed).unwrap();
            prop_assert!((c.sse - sorted_split_sse(&values)).abs() <= 1e-9 * c.sse.max(1.0));
            prop_assert!(c.centers[0] < c.centers[1]);
        }
    }
}
