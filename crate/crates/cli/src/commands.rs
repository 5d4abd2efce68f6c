use std::collections::HashSet;
use std::path::{Path, PathBuf};

use omd_core::metrics::matrix_unit;
use omd_core::profiles::{aggregate_transfer, colocalize, compare_series, load_samples};
use omd_core::synth::shift_label;
use omd_core::{
    boundary_w2, build_pairs, classical_mds, distance_matrix, extract_boundary, fit_trend, gen_patch_shift, load_field,
    rmse, save_field, slope_ratio, BoundaryOptions, DistanceMatrix, DistanceUnit, Error, Geometry, MassField,
    MatrixMetric, MatrixOptions, Metric, PatchShift, Result, SinkhornParams, W2Options,
};
use omd_core::metrics::{rmse_raw, w2_plan};
use serde_json::{json, Value};

use crate::cli::{CompareArgs, DepthArgs, DistanceArgs, DistmatArgs, GenPatchShiftArgs, MdsArgs, ProvincesArgs, TrendArgs};
use crate::output::{display, fmt, rounded, save_json, save_with, write_plan, Meta};

fn w2_options(d: &DistanceArgs) -> Result<W2Options> {
    if let Some(c) = d.cutoff {
        if !(c > 0.0) {
            return Err(Error::Range {
                what: "cutoff",
                value: c,
                range: "(0, inf)",
            });
        }
    }
    Ok(W2Options {
        cutoff: d.cutoff,
        sinkhorn: d.sinkhorn_epsilon.map(SinkhornParams::with_epsilon),
    })
}

fn distance_options(d: &DistanceArgs) -> Value {
    json!({
        "geometry": d.geometry.to_string(),
        "metric": match d.metric { Metric::W2 => "w2", Metric::Rmse => "rmse" },
        "cutoff": d.cutoff,
        "sinkhorn_epsilon": d.sinkhorn_epsilon,
        "raw_rmse": d.raw_rmse,
    })
}

fn distance_unit(d: &DistanceArgs) -> &'static str {
    matrix_unit(MatrixMetric::new(d.metric, d.geometry))
}

fn check_inputs(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::Io {
                path: p.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            });
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn compare(args: &CompareArgs, seed: u64) -> Result<String> {
    check_inputs(&[&args.field_a, &args.field_b])?;
    let d = &args.distance;
    if args.plan_out.is_some() && d.metric == Metric::Rmse {
        return Err(Error::Precondition("--plan-out needs --metric w2".into()));
    }
    let a = load_field(&args.field_a, d.geometry)?;
    let b = load_field(&args.field_b, d.geometry)?;
    let options = w2_options(d)?;
    let value = match d.metric {
        Metric::Rmse if d.raw_rmse => rmse_raw(&a, &b)?,
        Metric::Rmse => rmse(&a, &b)?,
        Metric::W2 => {
            let plan = w2_plan(&a, &b, &options)?;
            if let Some(path) = &args.plan_out {
                write_plan(path, &plan, &a, &b, args.top_fraction)?;
                let unit = DistanceUnit::for_geometry(d.geometry).as_str();
                Meta {
                    command: "compare",
                    seed,
                    inputs: vec![display(&args.field_a), display(&args.field_b)],
                    units: json!({ "w2": unit, "cost": format!("{unit}^2"), "mass": "fraction of total" }),
                    options: json!({ "distance": distance_options(d), "top_fraction": args.top_fraction }),
                }
                .write(path, rounded(json!({ "w2": plan.w2, "objective": plan.objective, "arcs": plan.arcs.len() })))?;
            }
            plan.w2
        }
    };
    Ok(fmt(value))
}

fn load_fields(paths: &[PathBuf], geometry: Geometry) -> Result<Vec<MassField>> {
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    check_inputs(&refs)?;
    let fields: Vec<MassField> = paths.iter().map(|p| load_field(p, geometry)).collect::<Result<_>>()?;
    let mut seen = HashSet::new();
    for f in &fields {
        if !seen.insert(f.label().to_owned()) {
            return Err(Error::Label(format!("two inputs share the label `{}`", f.label())));
        }
    }
    Ok(fields)
}

pub fn distmat(args: &DistmatArgs, seed: u64) -> Result<String> {
    let d = &args.distance;
    let fields = load_fields(&args.fields, d.geometry)?;
    let options = MatrixOptions {
        w2: w2_options(d)?,
        raw_rmse: d.raw_rmse,
        skip_errors: args.skip_errors,
    };
    let matrix = distance_matrix(&fields, d.metric, &options)?;
    save_with(&args.out, |out| matrix.write_csv(out))?;
    let failures: Vec<Value> = matrix
        .failures()
        .iter()
        .map(|f| json!({ "a": f.a, "b": f.b, "kind": f.kind, "message": f.message }))
        .collect();
    Meta {
        command: "distmat",
        seed,
        inputs: args.fields.iter().map(|p| display(p)).collect(),
        units: json!({ "entries": distance_unit(d) }),
        options: json!({ "distance": distance_options(d), "skip_errors": args.skip_errors }),
    }
    .write(&args.out, json!({ "metric": matrix.metric().as_str(), "failures": failures }))?;
    Ok(format!("{} x {} matrix written to {}", matrix.len(), matrix.len(), display(&args.out)))
}

pub fn mds(args: &MdsArgs, seed: u64) -> Result<String> {
    check_inputs(&[&args.matrix])?;
    let matrix = DistanceMatrix::load(&args.matrix, args.metric)?;
    let e = classical_mds(&matrix)?;
    save_with(&args.out, |out| e.write_csv(out))?;
    Meta {
        command: "mds",
        seed,
        inputs: vec![display(&args.matrix)],
        units: json!({ "coordinates": matrix_unit(args.metric) }),
        options: json!({ "metric": args.metric.as_str() }),
    }
    .write(
        &args.out,
        rounded(json!({
            "eigenvalues": e.eigenvalues,
            "n_positive": e.n_positive,
            "top2_ratio": e.top2_ratio(),
        })),
    )?;
    Ok(format!("top two eigenvalues carry {} of the spectrum", fmt(e.top2_ratio())))
}

pub fn trend(args: &TrendArgs, seed: u64) -> Result<String> {
    check_inputs(&[&args.matrix])?;
    let fit_of = |path: &Path| -> Result<_> {
        let matrix = DistanceMatrix::load(path, args.metric)?;
        let obs = build_pairs(&matrix, args.raw_response)?;
        fit_trend(&obs).map_err(|e| e.context(display(path)))
    };
    let fit = fit_of(&args.matrix)?;
    let mut out = serde_json::to_value(&fit).expect("fit serializes");
    let mut inputs = vec![display(&args.matrix)];
    if let Some(baseline) = &args.baseline {
        check_inputs(&[baseline])?;
        let base = fit_of(baseline)?;
        out["slope_ratio"] = json!(slope_ratio(&fit, &base)?);
        out["baseline"] = serde_json::to_value(&base).expect("fit serializes");
        inputs.push(display(baseline));
    }
    save_json(&args.out, out)?;
    let unit = matrix_unit(args.metric);
    let response_unit = if args.raw_response { unit.to_owned() } else { format!("sqrt({unit})") };
    let meta = Meta {
        command: "trend",
        seed,
        inputs,
        units: json!({ "response": response_unit, "lag": "months" }),
        options: json!({ "metric": args.metric.as_str(), "raw_response": args.raw_response, "max_lag": args.max_lag }),
    };
    meta.write(&args.out, json!({}))?;
    if let Some(curve) = &args.curve_out {
        save_with(curve, |w| fit.write_curve(0..=args.max_lag, w))?;
        meta.write(curve, json!({}))?;
    }
    Ok(format!("trend slope {} per month", fmt(fit.beta1)))
}

pub fn provinces(args: &ProvincesArgs, seed: u64) -> Result<String> {
    let refs: Vec<&Path> = args.maps.iter().map(PathBuf::as_path).collect();
    check_inputs(&refs)?;
    let maps = load_fields(&args.maps, Geometry::LonLat)?;
    let options = BoundaryOptions {
        restarts: args.restarts,
        seed,
        log_transform: !args.no_log,
        whole_map: args.whole_map,
    };
    create_dir(&args.out_dir)?;
    let meta = Meta {
        command: "provinces",
        seed,
        inputs: args.maps.iter().map(|p| display(p)).collect(),
        units: json!({ "w2": "km", "coordinates": "degrees" }),
        options: serde_json::to_value(options).expect("options serialize"),
    };
    let mut boundaries = Vec::new();
    for map in &maps {
        let boundary = extract_boundary(map, &options).map_err(|e| e.context(map.label().to_owned()))?;
        let path = args.out_dir.join(format!("{}_boundary.csv", map.label()));
        save_with(&path, |out| boundary.write_csv(out))?;
        meta.write(&path, json!({ "boundary_cells": boundary.boundary.len() }))?;
        boundaries.push(boundary);
    }
    if let [a, b] = boundaries.as_slice() {
        let plan = boundary_w2(a, b, &W2Options::default())?;
        if let Some(path) = &args.plan_out {
            write_plan(path, &plan, &a.field, &b.field, args.top_fraction)?;
            meta.write(path, rounded(json!({ "w2": plan.w2, "top_fraction": args.top_fraction })))?;
        }
        return Ok(fmt(plan.w2));
    }
    if args.plan_out.is_some() {
        return Err(Error::Precondition("--plan-out needs two maps".into()));
    }
    Ok(format!("{} boundary cells", boundaries[0].boundary.len()))
}

pub fn depth(args: &DepthArgs, seed: u64) -> Result<String> {
    check_inputs(&[&args.reference, &args.dense])?;
    let reference = load_samples(&args.reference)?;
    let dense = load_samples(&args.dense)?;
    let paired = colocalize(&reference, &dense, args.day_window, args.depth_window_m)?;
    let series = compare_series(&paired.pairs, args.raw_rmse)?;
    create_dir(&args.out_dir)?;
    let meta = Meta {
        command: "depth",
        seed,
        inputs: vec![display(&args.reference), display(&args.dense)],
        units: json!({ "w2": "m", "depth": "m", "rmse": if args.raw_rmse { "value" } else { "normalized mass" } }),
        options: json!({
            "day_window": args.day_window,
            "depth_window_m": args.depth_window_m,
            "raw_rmse": args.raw_rmse,
        }),
    };

    let comparison = args.out_dir.join("comparison.csv");
    save_with(&comparison, |out| series.write_csv(out))?;
    meta.write(&comparison, json!({ "pairs": paired.pairs.len(), "dropped_reference_samples": paired.dropped }))?;

    let regression = args.out_dir.join("regression.json");
    let fits = json!({
        "w2_on_delta_dcm": series.w2_fit,
        "rmse_on_delta_dcm": series.rmse_fit,
    });
    save_json(&regression, fits)?;

    let transfer_path = args.out_dir.join("transfer.csv");
    let transfer = match aggregate_transfer(&series.plans) {
        Ok(t) => {
            save_with(&transfer_path, |out| t.write_csv(out))?;
            meta.write(&transfer_path, rounded(json!({ "argmax_from_m": t.argmax.0, "argmax_to_m": t.argmax.1 })))?;
            json!({ "written": true })
        }
        Err(Error::Grid(reason)) => json!({ "written": false, "reason": reason }),
        Err(e) => return Err(e),
    };
    meta.write(&regression, json!({ "transfer": transfer }))?;

    let r2 = |r: Option<f64>| r.map(fmt).unwrap_or_else(|| "undefined".into());
    Ok(format!(
        "{} dates; R^2 of W2 {} and of RMSE {} on the DCM shift",
        series.records.len(),
        r2(series.w2_fit.r_squared),
        r2(series.rmse_fit.r_squared)
    ))
}

pub fn gen_patch_shift_cmd(args: &GenPatchShiftArgs, seed: u64) -> Result<String> {
    let config = PatchShift {
        center: (args.center_lon, args.center_lat),
        sigma_deg: args.sigma_deg,
        background_level: args.background_level,
        shifts: args.shifts.clone(),
        seed,
        ..PatchShift::default()
    };
    let family = gen_patch_shift(&config)?;
    create_dir(&args.out_dir)?;
    let meta = Meta {
        command: "gen-patch-shift",
        seed,
        inputs: Vec::new(),
        units: json!({ "coordinates": "degrees", "shift": "degrees east" }),
        options: serde_json::to_value(&config).expect("config serializes"),
    };
    let background = args.out_dir.join("background.csv");
    save_field(&family.background, &background)?;
    meta.write(&background, json!({}))?;
    for (shift, field) in &family.shifted {
        let path = args.out_dir.join(format!("{}.csv", shift_label(*shift)));
        save_field(field, &path)?;
        meta.write(&path, json!({ "shift_deg": shift }))?;
    }
    Ok(format!("{} shifted fields written to {}", family.shifted.len(), display(&args.out_dir)))
}
