//! Synthetic fields: a Gaussian patch over a weak random background,
//! shifted eastward by a list of offsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MassField;

/// Regular lon/lat grid of cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLatGrid {
    /// Western edge of the first column, degrees.
    pub west: f64,
    /// Southern edge of the first row, degrees.
    pub south: f64,
    pub step: f64,
    pub n_lon: usize,
    pub n_lat: usize,
}

impl Default for LonLatGrid {
    /// 60 x 60 one-degree cells on the equatorial Pacific.
    fn default() -> Self {
        LonLatGrid {
            west: -180.0,
            south: -30.0,
            step: 1.0,
            n_lon: 60,
            n_lat: 60,
        }
    }
}

impl LonLatGrid {
    pub fn east(&self) -> f64 {
        self.west + self.step * self.n_lon as f64
    }

    pub fn north(&self) -> f64 {
        self.south + self.step * self.n_lat as f64
    }

    /// Cell centers row by row from the south-west corner.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n_lon * self.n_lat);
        for r in 0..self.n_lat {
            for c in 0..self.n_lon {
                out.push((
                    self.west + self.step * (c as f64 + 0.5),
                    self.south + self.step * (r as f64 + 0.5),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchShift {
    pub grid: LonLatGrid,
    /// Patch center before shifting, degrees.
    pub center: (f64, f64),
    pub sigma_deg: f64,
    /// Patch values vanish beyond this many sigmas.
    pub truncate_sigmas: f64,
    pub amplitude: f64,
    /// Background values are drawn uniformly from `[level / 2, level]`.
    pub background_level: f64,
    /// Eastward offsets in degrees.
    pub shifts: Vec<f64>,
    pub seed: u64,
}

impl Default for PatchShift {
    fn default() -> Self {
        PatchShift {
            grid: LonLatGrid::default(),
            center: (-170.0, 0.0),
            sigma_deg: 2.0,
            truncate_sigmas: 3.0,
            amplitude: 1.0,
            background_level: 0.01,
            shifts: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFamily {
    pub background: MassField,
    /// Background plus the patch, one per shift in input order.
    pub shifted: Vec<(f64, MassField)>,
}

/// Label used for the field shifted by `shift` degrees.
pub fn shift_label(shift: f64) -> String {
    format!("shift_{shift}")
}

pub fn gen_patch_shift(config: &PatchShift) -> Result<PatchFamily> {
    let g = &config.grid;
    if g.n_lon == 0 || g.n_lat == 0 || !(g.step > 0.0) {
        return Err(Error::Grid("patch grid must have positive size and step".into()));
    }
    if g.south < -90.0 || g.north() > 90.0 {
        return Err(Error::Range {
            what: "grid latitude",
            value: if g.south < -90.0 { g.south } else { g.north() },
            range: "[-90, 90]",
        });
    }
    if !(config.sigma_deg > 0.0) || !(config.truncate_sigmas > 0.0) {
        return Err(Error::Range {
            what: "patch sigma",
            value: config.sigma_deg.min(config.truncate_sigmas),
            range: "(0, inf)",
        });
    }
    if !(config.amplitude > 0.0) || !(config.background_level >= 0.0) {
        return Err(Error::Range {
            what: "patch amplitude",
            value: config.amplitude.min(config.background_level),
            range: "(0, inf)",
        });
    }
    let radius = config.sigma_deg * config.truncate_sigmas;
    let (lon0, lat0) = config.center;
    if lat0 - radius < g.south || lat0 + radius > g.north() {
        return Err(Error::Range {
            what: "patch latitude",
            value: lat0,
            range: "grid rows",
        });
    }
    for &s in &config.shifts {
        let lon = lon0 + s;
        if !s.is_finite() || lon - radius < g.west || lon + radius > g.east() {
            return Err(Error::Range {
                what: "patch shift",
                value: s,
                range: "grid columns",
            });
        }
    }

    let centers = g.centers();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let level = config.background_level;
    let background: Vec<f64> = centers
        .iter()
        .map(|_| if level > 0.0 { rng.random_range(0.5 * level..=level) } else { 0.0 })
        .collect();
    let field = |label: String, values: &[f64]| {
        let points: Vec<(f64, f64, f64)> = centers.iter().zip(values).map(|(&(x, y), &v)| (x, y, v)).collect();
        MassField::from_lonlat(label, &points)
    };

    let mut shifted = Vec::with_capacity(config.shifts.len());
    for &s in &config.shifts {
        let values: Vec<f64> = centers
            .iter()
            .zip(&background)
            .map(|(&(x, y), &b)| {
                let (dx, dy) = (x - lon0 - s, y - lat0);
                let r2 = dx * dx + dy * dy;
                if r2 <= radius * radius {
                    b + config.amplitude * (-0.5 * r2 / (config.sigma_deg * config.sigma_deg)).exp()
                } else {
                    b
                }
            })
            .collect();
        shifted.push((s, field(shift_label(s), &values)?));
    }
    Ok(PatchFamily {
        background: field("background".into(), &background)?,
        shifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shift_reproduces_the_reference() {
        let config = PatchShift {
            shifts: vec![0.0, 0.0, 10.0],
            ..PatchShift::default()
        };
        let f = gen_patch_shift(&config).unwrap();
        assert_eq!(f.shifted[0].1.values(), f.shifted[1].1.values());
        assert_ne!(f.shifted[0].1.values(), f.shifted[2].1.values());
        assert_eq!(f.background.len(), 3600);
    }

    #[test]
    fn seed_controls_the_background() {
        let a = gen_patch_shift(&PatchShift::default()).unwrap();
        let b = gen_patch_shift(&PatchShift::default()).unwrap();
        let c = gen_patch_shift(&PatchShift {
            seed: 1,
            ..PatchShift::default()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.background.values(), c.background.values());
    }

    #[test]
    fn patch_mass_is_shift_invariant_on_whole_degrees() {
        let f = gen_patch_shift(&PatchShift::default()).unwrap();
        let base = f.background.total();
        let excess: Vec<f64> = f.shifted.iter().map(|(_, m)| m.total() - base).collect();
        for e in &excess {
            assert!((e - excess[0]).abs() < 1e-9 * excess[0]);
        }
        // a 2 degree Gaussian on 1 degree cells carries about 2 pi sigma^2
        assert!((excess[0] - 2.0 * std::f64::consts::PI * 4.0).abs() < 0.5);
    }

    #[test]
    fn off_grid_patch_is_rejected() {
        let config = PatchShift {
            shifts: vec![50.0],
            ..PatchShift::default()
        };
        assert!(matches!(gen_patch_shift(&config), Err(Error::Range { what: "patch shift", .. })));
        let config = PatchShift {
            center: (-170.0, 27.0),
            ..PatchShift::default()
        };
        assert!(matches!(gen_patch_shift(&config), Err(Error::Range { .. })));
    }

    #[test]
    fn w2_grows_while_rmse_plateaus() {
        use crate::metrics::{rmse, w2, W2Options};
        let config = PatchShift {
            grid: LonLatGrid {
                west: -180.0,
                south: -8.0,
                step: 1.0,
                n_lon: 36,
                n_lat: 16,
            },
            center: (-173.0, 0.0),
            sigma_deg: 1.0,
            shifts: vec![0.0, 2.0, 7.0, 12.0, 17.0, 22.0],
            ..PatchShift::default()
        };
        let f = gen_patch_shift(&config).unwrap();
        let reference = &f.shifted[0].1;
        let w: Vec<f64> = f.shifted.iter().map(|(_, m)| w2(reference, m, &W2Options::default()).unwrap()).collect();
        let r: Vec<f64> = f.shifted.iter().map(|(_, m)| rmse(reference, m).unwrap()).collect();
        assert_eq!(w[0], 0.0);
        assert!(w.windows(2).all(|p| p[1] > p[0]), "{w:?}");
        // supports are disjoint from 7 degrees on
        for x in &r[3..] {
            assert!((x - r[2]).abs() <= 0.01 * r[2], "{r:?}");
        }
    }
}
