//! Gridded scalar fields and their conversion to discrete probability
//! distributions.
//!
//! A [`MassField`] is an ordered list of cells with one nonnegative value
//! per cell. Cell order is file order and every downstream matrix (costs,
//! plans, RMSE alignment) indexes cells by that order. Masked cells
//! (missing or `NaN` values) are dropped at load time so that they carry
//! neither mass nor transport.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` for a field flagged as normalized.
pub const NORMALIZED_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    LonLat,
    Depth,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::LonLat => f.write_str("lonlat"),
            Geometry::Depth => f.write_str("depth"),
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lonlat" => Ok(Geometry::LonLat),
            "depth" => Ok(Geometry::Depth),
            other => Err(format!("unknown geometry `{other}` (expected lonlat or depth)")),
        }
    }
}

/// Position of a cell, either on the sphere or along a depth axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coord {
    /// Longitude in `[-180, 180)` and latitude in `[-90, 90]`, degrees.
    LonLat { lon: f64, lat: f64 },
    /// Depth below the surface in meters.
    Depth(f64),
}

impl Coord {
    pub fn lonlat(lon: f64, lat: f64) -> Result<Coord> {
        if !(-180.0..180.0).contains(&lon) {
            return Err(Error::Range {
                what: "lon",
                value: lon,
                range: "[-180, 180)",
            });
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Range {
                what: "lat",
                value: lat,
                range: "[-90, 90]",
            });
        }
        Ok(Coord::LonLat { lon, lat })
    }

    pub fn depth(depth_m: f64) -> Result<Coord> {
        if !(depth_m >= 0.0 && depth_m.is_finite()) {
            return Err(Error::Range {
                what: "depth_m",
                value: depth_m,
                range: "[0, inf)",
            });
        }
        Ok(Coord::Depth(depth_m))
    }

    pub fn geometry(&self) -> Geometry {
        match self {
            Coord::LonLat { .. } => Geometry::LonLat,
            Coord::Depth(_) => Geometry::Depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub coord: Coord,
    /// Accepted on input and carried along; transport uses masses as given.
    pub area_weight: f64,
}

impl Cell {
    pub fn new(id: usize, coord: Coord) -> Cell {
        Cell {
            id,
            coord,
            area_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassField {
    label: String,
    cells: Vec<Cell>,
    values: Vec<f64>,
    normalized: bool,
    /// Rows dropped as masked when the field was read from a file.
    #[serde(default)]
    dropped: usize,
}

impl MassField {
    /// Builds an unnormalized field, validating the cell/value invariants.
    pub fn new(label: impl Into<String>, cells: Vec<Cell>, values: Vec<f64>) -> Result<MassField> {
        let label = label.into();
        if cells.len() != values.len() {
            return Err(Error::Precondition(format!(
                "field `{label}`: {} cells but {} values",
                cells.len(),
                values.len()
            )));
        }
        if cells.is_empty() {
            return Err(Error::EmptyField(label));
        }
        let geometry = cells[0].coord.geometry();
        if cells.iter().any(|c| c.coord.geometry() != geometry) {
            return Err(Error::Geometry(format!(
                "field `{label}` mixes lon/lat and depth cells"
            )));
        }
        for c in &cells {
            // re-run the coordinate range checks for cells built by hand
            match c.coord {
                Coord::LonLat { lon, lat } => {
                    Coord::lonlat(lon, lat)?;
                }
                Coord::Depth(d) => {
                    Coord::depth(d)?;
                }
            }
            if !(c.area_weight > 0.0) {
                return Err(Error::Range {
                    what: "area_weight",
                    value: c.area_weight,
                    range: "(0, inf)",
                });
            }
        }
        if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Range {
                what: "value",
                value: v,
                range: "[0, inf)",
            });
        }
        Ok(MassField {
            label,
            cells,
            values,
            normalized: false,
            dropped: 0,
        })
    }

    /// Convenience constructor for a lon/lat field.
    pub fn from_lonlat(label: impl Into<String>, points: &[(f64, f64, f64)]) -> Result<MassField> {
        let mut cells = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len());
        for (id, &(lon, lat, v)) in points.iter().enumerate() {
            cells.push(Cell::new(id, Coord::lonlat(lon, lat)?));
            values.push(v);
        }
        MassField::new(label, cells, values)
    }

    /// Convenience constructor for a depth field from `(depth_m, value)` pairs.
    pub fn from_depths(label: impl Into<String>, points: &[(f64, f64)]) -> Result<MassField> {
        let mut cells = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len());
        for (id, &(d, v)) in points.iter().enumerate() {
            cells.push(Cell::new(id, Coord::depth(d)?));
            values.push(v);
        }
        MassField::new(label, cells, values)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> MassField {
        self.label = label.into();
        self
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn geometry(&self) -> Geometry {
        self.cells[0].coord.geometry()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Divides every value by the field total.
    pub fn normalize(&self) -> Result<MassField> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::DegenerateMass(self.label.clone()));
        }
        let mut out = self.clone();
        if self.normalized && (total - 1.0).abs() <= f64::EPSILON {
            return Ok(out);
        }
        for v in &mut out.values {
            *v /= total;
        }
        out.normalized = true;
        Ok(out)
    }

    /// Keeps only cells inside `bounds` (inclusive on both edges).
    pub fn restrict(&self, bounds: &Bounds) -> Result<MassField> {
        bounds.validate()?;
        let mut cells = Vec::new();
        let mut values = Vec::new();
        for (c, &v) in self.cells.iter().zip(&self.values) {
            if bounds.contains(&c.coord)? {
                cells.push(*c);
                values.push(v);
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyField(self.label.clone()));
        }
        Ok(MassField {
            label: self.label.clone(),
            cells,
            values,
            normalized: false,
            dropped: self.dropped,
        })
    }

    /// Cells carrying positive mass, keeping their original ids.
    pub fn support(&self) -> Result<MassField> {
        let mut cells = Vec::new();
        let mut values = Vec::new();
        for (c, &v) in self.cells.iter().zip(&self.values) {
            if v > 0.0 {
                cells.push(*c);
                values.push(v);
            }
        }
        if cells.is_empty() {
            return Err(Error::DegenerateMass(self.label.clone()));
        }
        Ok(MassField {
            label: self.label.clone(),
            cells,
            values,
            normalized: self.normalized,
            dropped: self.dropped,
        })
    }

    /// True when both fields list the same cells in the same order.
    pub fn same_cells(&self, other: &MassField) -> bool {
        self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.id == b.id && a.coord == b.coord)
    }
}

/// Inclusive selection box for [`MassField::restrict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounds {
    LonLat {
        lon_min: f64,
        lon_max: f64,
        lat_min: f64,
        lat_max: f64,
    },
    Depth {
        min_m: f64,
        max_m: f64,
    },
}

impl Bounds {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Bounds::LonLat {
                lon_min,
                lon_max,
                lat_min,
                lat_max,
            } => lon_min <= lon_max && lat_min <= lat_max,
            Bounds::Depth { min_m, max_m } => min_m <= max_m,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("empty bounding box {self:?}")))
        }
    }

    fn contains(&self, coord: &Coord) -> Result<bool> {
        match (*self, *coord) {
            (
                Bounds::LonLat {
                    lon_min,
                    lon_max,
                    lat_min,
                    lat_max,
                },
                Coord::LonLat { lon, lat },
            ) => Ok(lon >= lon_min && lon <= lon_max && lat >= lat_min && lat <= lat_max),
            (Bounds::Depth { min_m, max_m }, Coord::Depth(d)) => Ok(d >= min_m && d <= max_m),
            _ => Err(Error::Geometry(
                "bounding box and field use different geometries".into(),
            )),
        }
    }
}

fn parse_number(path: &Path, line: u64, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("column `{column}`: cannot parse `{raw}` as a number"),
    })
}

/// Reads a field CSV (`lon,lat,value` or `depth_m,value`, optional
/// `area_weight` column). Rows whose value is empty or `NaN` are dropped
/// and counted in [`MassField::dropped`].
pub fn load_field(path: impl AsRef<Path>, geometry: Geometry) -> Result<MassField> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_field(file, path, label, geometry)
}

pub(crate) fn read_field(
    reader: impl std::io::Read,
    path: &Path,
    label: String,
    geometry: Geometry,
) -> Result<MassField> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let coord_cols: Vec<(&str, usize)> = match geometry {
        Geometry::LonLat => ["lon", "lat"]
            .iter()
            .map(|n| find(n).map(|i| (*n, i)))
            .collect::<Option<_>>(),
        Geometry::Depth => find("depth_m").map(|i| vec![("depth_m", i)]),
    }
    .ok_or_else(|| {
        parse_err(
            1,
            match geometry {
                Geometry::LonLat => "expected header `lon,lat,value`".into(),
                Geometry::Depth => "expected header `depth_m,value`".into(),
            },
        )
    })?;
    let value_col = find("value").ok_or_else(|| parse_err(1, "missing `value` column".into()))?;
    let weight_col = find("area_weight");

    let mut cells = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let raw_value = get(value_col);
        let value = if raw_value.is_empty() {
            f64::NAN
        } else {
            parse_number(path, line, "value", raw_value)?
        };
        let mut nums = Vec::with_capacity(2);
        for &(name, i) in &coord_cols {
            nums.push(parse_number(path, line, name, get(i))?);
        }
        let coord = match geometry {
            Geometry::LonLat => Coord::lonlat(nums[0], nums[1]),
            Geometry::Depth => Coord::depth(nums[0]),
        }
        .map_err(|e| parse_err(line, e.to_string()))?;
        if value.is_nan() {
            dropped += 1;
            continue;
        }
        if !(value >= 0.0 && value.is_finite()) {
            return Err(parse_err(line, format!("value {value} must be finite and nonnegative")));
        }
        let area_weight = match weight_col {
            Some(i) if !get(i).is_empty() => parse_number(path, line, "area_weight", get(i))?,
            _ => 1.0,
        };
        if !(area_weight > 0.0) {
            return Err(parse_err(line, format!("area_weight {area_weight} must be positive")));
        }
        cells.push(Cell {
            id: cells.len(),
            coord,
            area_weight,
        });
        values.push(value);
    }
    if cells.is_empty() {
        return Err(Error::EmptyField(label));
    }
    let mut field = MassField::new(label, cells, values)?;
    field.dropped = dropped;
    Ok(field)
}

/// Writes a field back in the CSV layout accepted by [`load_field`], with
/// shortest round-trip formatting of every number.
pub fn write_field(field: &MassField, mut out: impl Write) -> std::io::Result<()> {
    let weighted = field.cells.iter().any(|c| c.area_weight != 1.0);
    let header = match (field.geometry(), weighted) {
        (Geometry::LonLat, false) => "lon,lat,value",
        (Geometry::LonLat, true) => "lon,lat,value,area_weight",
        (Geometry::Depth, false) => "depth_m,value",
        (Geometry::Depth, true) => "depth_m,value,area_weight",
    };
    writeln!(out, "{header}")?;
    for (c, v) in field.cells.iter().zip(&field.values) {
        match c.coord {
            Coord::LonLat { lon, lat } => write!(out, "{lon:?},{lat:?},{v:?}")?,
            Coord::Depth(d) => write!(out, "{d:?},{v:?}")?,
        }
        if weighted {
            write!(out, ",{:?}", c.area_weight)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_field(field: &MassField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut buf = std::io::BufWriter::new(file);
    write_field(field, &mut buf).map_err(io_err)?;
    buf.flush().map_err(io_err)
}
