use std::collections::HashSet;
use std::path::Path;

use omd_core::io::{round_sig, sidecar_path, write_file, write_json};
use omd_core::{Coord, MassField, Result, TransportPlan};
use serde_json::{json, Map, Value};

/// Rounds every number in `value` to the output precision.
pub fn rounded(value: Value) -> Value {
    match value {
        Value::Number(n) => match n.as_f64() {
            Some(x) if !n.is_i64() && !n.is_u64() => json!(round_sig(x)),
            _ => Value::Number(n),
        },
        Value::Array(items) => Value::Array(items.into_iter().map(rounded).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

pub fn save_json(path: &Path, value: Value) -> Result<()> {
    write_json(path, &rounded(value))
}

/// Metadata written next to every output file.
pub struct Meta<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub units: Value,
    pub options: Value,
}

impl Meta<'_> {
    pub fn write(&self, output: &Path, extra: Value) -> Result<()> {
        let mut map = Map::new();
        map.insert("tool".into(), json!("omd"));
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        map.insert("command".into(), json!(self.command));
        map.insert("seed".into(), json!(self.seed));
        map.insert("inputs".into(), json!(self.inputs));
        map.insert("units".into(), self.units.clone());
        map.insert("options".into(), self.options.clone());
        if let Value::Object(extra) = extra {
            map.extend(extra);
        }
        save_json(&sidecar_path(output), Value::Object(map))
    }
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Plan arcs with the coordinates of both ends. `major` arcs get
/// `is_major = 1`.
pub fn write_plan(path: &Path, plan: &TransportPlan, p: &MassField, q: &MassField, top_fraction: f64) -> Result<()> {
    let split = plan.top_fraction(top_fraction)?;
    let major: HashSet<(usize, usize)> = split.major.iter().map(|a| (a.source, a.target)).collect();
    let header: &[&str] = match p.cells()[0].coord {
        Coord::LonLat { .. } => &["from_lon", "from_lat", "to_lon", "to_lat", "mass", "cost_km2", "is_major"],
        Coord::Depth(_) => &["from_depth_m", "to_depth_m", "mass", "cost_m2", "is_major"],
    };
    write_file(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for arc in &plan.arcs {
            let mut row = coord_fields(&p.cells()[arc.source].coord);
            row.extend(coord_fields(&q.cells()[arc.target].coord));
            row.push(fmt(arc.mass));
            row.push(fmt(arc.cost));
            row.push(if major.contains(&(arc.source, arc.target)) { "1" } else { "0" }.into());
            w.write_record(&row)?;
        }
        w.flush()
    })
}

fn coord_fields(c: &Coord) -> Vec<String> {
    match *c {
        Coord::LonLat { lon, lat } => vec![fmt(lon), fmt(lat)],
        Coord::Depth(d) => vec![fmt(d)],
    }
}

pub fn fmt(x: f64) -> String {
    omd_core::io::fmt_num(x)
}

/// Writes through a core CSV writer taking `impl Write`.
pub fn save_with(path: &Path, write: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<()> {
    let mut inner = Ok(());
    write_file(path, |out| {
        inner = write(out);
        Ok(())
    })?;
    inner
}
