//! CSV and JSON formats for spaces, couplings, embeddings and ensembles.
//!
//! Numbers are written with Rust's shortest round-trip formatting so files
//! reload bit-exactly; [`format_sig`] gives the six-significant-digit form
//! used for console output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::embed::EmbeddingResult;
use crate::mmspace::MetricMeasureSpace;
use crate::redistrict::{ArcSummary, Ensemble};
use crate::srgw::SolverResult;
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 20;

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    if exp < -4 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, x);
        // trim trailing zeros in the mantissa
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{e}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

fn records(text: &str) -> Result<Vec<(u64, Vec<String>)>> {
    let mut out = Vec::new();
    for rec in reader(text).records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn parse_number(field: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("expected a number, found {field:?}")))
}

fn is_numeric(field: &str) -> bool {
    field.parse::<f64>().is_ok()
}

/// Parses a square distance matrix. An optional first row of labels is
/// recognized by containing a non-numeric field; when present, data rows may
/// start with their label, and a leading header cell over that column is
/// ignored.
pub fn parse_distance_csv(text: &str) -> Result<MetricMeasureSpace> {
    let rows = records(text)?;
    if rows.is_empty() {
        return Err(parse_err(1, "no rows"));
    }
    let has_header = rows[0].1.iter().any(|f| !is_numeric(f));
    let (header, body) = if has_header { (Some(&rows[0]), &rows[1..]) } else { (None, &rows[..]) };
    let n = body.len();
    if n == 0 {
        return Err(parse_err(rows[0].0, "header without data rows"));
    }
    let labels = header.map(|(_, h)| {
        if h.len() == n + 1 {
            h[1..].to_vec()
        } else {
            h.clone()
        }
    });
    if let (Some((line, _)), Some(l)) = (header, &labels) {
        if l.len() != n {
            return Err(parse_err(*line, format!("{} labels for {n} data rows", l.len())));
        }
    }
    let mut d = Array2::zeros((n, n));
    for (i, (line, fields)) in body.iter().enumerate() {
        let values = match fields.len() {
            len if len == n => fields.as_slice(),
            len if len == n + 1 && has_header => &fields[1..],
            len => return Err(parse_err(*line, format!("expected {n} values, found {len}"))),
        };
        for (j, f) in values.iter().enumerate() {
            d[[i, j]] = parse_number(f, *line)?;
        }
    }
    MetricMeasureSpace::new(d, None, labels)
}

pub fn read_distance_csv(path: &Path) -> Result<MetricMeasureSpace> {
    parse_distance_csv(&read_text(path)?)
}

/// Header `id,<labels>` then one labeled row per point.
pub fn write_distance_csv(path: &Path, space: &MetricMeasureSpace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let n = space.len();
    let mut header = vec!["id".to_string()];
    header.extend((0..n).map(|i| space.label(i)));
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..n {
        let mut row = vec![space.label(i)];
        row.extend(space.distances().row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One weight per row; a non-numeric first row is taken as a header, and in
/// two-column files the last column holds the weight.
pub fn parse_weights(text: &str, n: usize) -> Result<Vec<f64>> {
    let rows = records(text)?;
    let skip = usize::from(rows.first().is_some_and(|(_, f)| f.iter().any(|x| !is_numeric(x))));
    let w = rows[skip..]
        .iter()
        .map(|(line, f)| parse_number(f.last().map_or("", String::as_str), *line))
        .collect::<Result<Vec<f64>>>()?;
    crate::mmspace::check_weights(&w, n)?;
    Ok(w)
}

pub fn read_weights(path: &Path, n: usize) -> Result<Vec<f64>> {
    parse_weights(&read_text(path)?, n)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line: 0, message: format!("{other:?}") },
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// `path` with its extension replaced.
pub fn sibling(path: &Path, extension: &str) -> PathBuf {
    path.with_extension(extension)
}

/// `path` with `suffix` appended to the stem and a new extension.
pub fn suffixed(path: &Path, suffix: &str, extension: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}.{extension}"))
}

#[derive(Serialize)]
struct CouplingSidecar<'a> {
    distortion: f64,
    unrounded_distortion: f64,
    iterations: usize,
    monge_map: &'a Option<Vec<usize>>,
    objective_trace: &'a [f64],
    source_labels: Vec<String>,
}

/// The plan as a matrix CSV (rows are source points) and a JSON sidecar
/// with the distortion, map and trace.
pub fn write_coupling(csv_path: &Path, json_path: &Path, x: &MetricMeasureSpace, result: &SolverResult) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path).map_err(csv_error)?;
    let plan = result.coupling.plan();
    let mut header = vec!["id".to_string()];
    header.extend((0..plan.ncols()).map(|j| format!("y{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for (i, row) in plan.rows().into_iter().enumerate() {
        let mut rec = vec![x.label(i)];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    write_json(
        json_path,
        &CouplingSidecar {
            distortion: result.distortion,
            unrounded_distortion: result.unrounded_distortion,
            iterations: result.iterations,
            monge_map: &result.monge_map,
            objective_trace: &result.objective_trace,
            source_labels: (0..x.len()).map(|i| x.label(i)).collect(),
        },
    )
}

/// `id, coord_0.., [circular_coordinate], scale`.
pub fn write_embedding_csv(path: &Path, space: &MetricMeasureSpace, result: &EmbeddingResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let dim = result.manifold.chart_dim();
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|k| format!("coord_{k}")));
    if result.circular_coords.is_some() {
        header.push("circular_coordinate".into());
    }
    header.push("scale".into());
    w.write_record(&header).map_err(csv_error)?;
    for (i, p) in result.points.iter().enumerate() {
        let mut rec = vec![space.label(i)];
        rec.extend(p.chart().iter().map(|v| v.to_string()));
        if let Some(c) = &result.circular_coords {
            rec.push(c[i].to_string());
        }
        rec.push(result.scale.to_string());
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// An embedding CSV read back: ids, chart coordinates, optional circular
/// coordinates and the scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub coords: Vec<Vec<f64>>,
    pub circular: Option<Vec<f64>>,
    pub scale: Option<f64>,
}

pub fn parse_embedding_csv(text: &str) -> Result<EmbeddingTable> {
    let rows = records(text)?;
    let Some((hline, header)) = rows.first() else {
        return Err(parse_err(1, "empty embedding file"));
    };
    let coord_cols: Vec<usize> = (0..header.len()).filter(|&c| header[c].starts_with("coord_")).collect();
    if coord_cols.is_empty() {
        return Err(parse_err(*hline, "no coord_ columns"));
    }
    let circ_col = header.iter().position(|h| h == "circular_coordinate");
    let scale_col = header.iter().position(|h| h == "scale");
    let mut table = EmbeddingTable {
        ids: Vec::new(),
        coords: Vec::new(),
        circular: circ_col.map(|_| Vec::new()),
        scale: None,
    };
    for (line, f) in &rows[1..] {
        if f.len() != header.len() {
            return Err(parse_err(*line, format!("expected {} fields, found {}", header.len(), f.len())));
        }
        table.ids.push(f[0].clone());
        table.coords.push(coord_cols.iter().map(|&c| parse_number(&f[c], *line)).collect::<Result<_>>()?);
        if let (Some(c), Some(v)) = (circ_col, table.circular.as_mut()) {
            v.push(parse_number(&f[c], *line)?);
        }
        if let Some(c) = scale_col {
            table.scale = Some(parse_number(&f[c], *line)?);
        }
    }
    Ok(table)
}

pub fn read_embedding_csv(path: &Path) -> Result<EmbeddingTable> {
    parse_embedding_csv(&read_text(path)?)
}

pub fn write_metadata<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

/// Counts of coordinates in `HISTOGRAM_BINS` equal bins over `[0, 1)`.
pub fn histogram(coords: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &c in coords {
        let b = ((c * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    counts
}

/// `bin_start, bin_end, count`.
pub fn write_histogram_csv(path: &Path, coords: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["bin_start", "bin_end", "count"]).map_err(csv_error)?;
    for (b, count) in histogram(coords).into_iter().enumerate() {
        let lo = b as f64 / HISTOGRAM_BINS as f64;
        let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
        w.write_record([lo.to_string(), hi.to_string(), count.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Header of unit ids (optionally preceded by a plan-id column name), then
/// one row per plan: the plan id followed by a label per unit.
pub fn parse_plans_csv(text: &str) -> Result<Ensemble> {
    let rows = records(text)?;
    let Some((hline, header)) = rows.first() else {
        return Err(parse_err(1, "empty plans file"));
    };
    if rows.len() < 2 {
        return Err(parse_err(*hline, "no plans after the header"));
    }
    let width = rows[1].1.len();
    let unit_ids: Vec<String> = if header.len() == width {
        header[1..].to_vec()
    } else if header.len() + 1 == width {
        header.clone()
    } else {
        return Err(parse_err(
            *hline,
            format!("header has {} fields but plan rows have {width}", header.len()),
        ));
    };
    let mut plans = Vec::new();
    let mut plan_ids = Vec::new();
    for (line, f) in &rows[1..] {
        if f.len() != width {
            return Err(parse_err(*line, format!("expected {width} fields, found {}", f.len())));
        }
        plan_ids.push(f[0].clone());
        let labels = f[1..]
            .iter()
            .map(|x| match x.as_str() {
                "1" => Ok(1u8),
                "2" => Ok(2u8),
                other => Err(parse_err(*line, format!("district label must be 1 or 2, found {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        plans.push(labels);
    }
    Ensemble::new(plans, unit_ids, plan_ids)
}

pub fn read_plans_csv(path: &Path) -> Result<Ensemble> {
    parse_plans_csv(&read_text(path)?)
}

pub fn write_plans_csv(path: &Path, e: &Ensemble) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header = vec!["plan_id".to_string()];
    header.extend(e.unit_ids().iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (id, plan) in e.plan_ids().iter().zip(e.plans()) {
        let mut rec = vec![id.clone()];
        rec.extend(plan.iter().map(u8::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ArcManifestEntry {
    arc_index: usize,
    start: f64,
    end: f64,
    plans: Vec<String>,
    file: String,
}

/// One `unit_id,fraction` CSV per arc, named `<prefix>_arc<k>.csv` in `dir`
/// (fractions left blank for an empty arc), and `<prefix>_arcs.json`
/// listing every arc with its plans. Returns the written paths, manifest
/// last.
pub fn write_arc_summaries(dir: &Path, prefix: &str, e: &Ensemble, arcs: &[ArcSummary]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut manifest = Vec::new();
    let n_arcs = arcs.len() as f64;
    for arc in arcs {
        let name = format!("{prefix}_arc{}.csv", arc.arc_index);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        w.write_record(["unit_id", "fraction"]).map_err(csv_error)?;
        for (u, id) in e.unit_ids().iter().enumerate() {
            let value = arc.fractions.as_ref().map_or_else(String::new, |f| f[u].to_string());
            w.write_record([id.clone(), value]).map_err(csv_error)?;
        }
        w.flush()?;
        written.push(path);
        manifest.push(ArcManifestEntry {
            arc_index: arc.arc_index,
            start: arc.arc_index as f64 / n_arcs,
            end: (arc.arc_index + 1) as f64 / n_arcs,
            plans: arc.plan_indices.iter().map(|&p| e.plan_ids()[p].clone()).collect(),
            file: name,
        });
    }
    let path = dir.join(format!("{prefix}_arcs.json"));
    write_json(&path, &manifest)?;
    written.push(path);
    Ok(written)
}
