//! CSV persistence.
//!
//! Scene files: `domain,scene_id,instance_id,label,f0..f{d-1}`, one row per
//! instance, rows of a scene contiguous with instance ids counting from 0.
//! Target rows always carry label `-1`; their labels live in a separate
//! `scene_id,instance_id,label` file. Floats are written in shortest
//! round-trip form so a load reproduces the saved values bit for bit.

use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::{HiddenLabels, SourceScene, TargetScene};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

const SOURCE_DOMAIN: &str = "source";
const TARGET_DOMAIN: &str = "target";

fn scene_header(d_in: usize) -> Vec<String> {
    let mut h: Vec<String> = ["domain", "scene_id", "instance_id", "label"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..d_in).map(|i| format!("f{i}")));
    h
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::parse(
            path,
            line,
            format!("expected {expected_len} columns, found {len}"),
        ),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(WriterBuilder::new().has_headers(false).from_writer(file))
}

fn write_scene_rows(
    w: &mut csv::Writer<File>,
    path: &Path,
    domain: &str,
    scene_id: u64,
    features: &Matrix,
    labels: impl Fn(usize) -> String,
) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::Data(format!("scene {scene_id} has no instances")));
    }
    for (i, row) in features.iter_rows().enumerate() {
        let mut rec = vec![
            domain.to_string(),
            scene_id.to_string(),
            i.to_string(),
            labels(i),
        ];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    Ok(())
}

pub fn save_source(path: impl AsRef<Path>, scenes: &[SourceScene]) -> Result<()> {
    let path = path.as_ref();
    let d_in = scenes.first().map_or(0, |s| s.features.cols());
    let mut w = writer(path)?;
    w.write_record(scene_header(d_in))
        .map_err(|e| csv_err(path, e))?;
    for s in scenes {
        if s.labels.len() != s.features.rows() {
            return Err(Error::Data(format!(
                "scene {} has {} labels for {} instances",
                s.scene_id,
                s.labels.len(),
                s.features.rows()
            )));
        }
        write_scene_rows(&mut w, path, SOURCE_DOMAIN, s.scene_id, &s.features, |i| {
            s.labels[i].to_string()
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_target(path: impl AsRef<Path>, scenes: &[TargetScene]) -> Result<()> {
    let path = path.as_ref();
    let d_in = scenes.first().map_or(0, |s| s.features.cols());
    let mut w = writer(path)?;
    w.write_record(scene_header(d_in))
        .map_err(|e| csv_err(path, e))?;
    for s in scenes {
        write_scene_rows(&mut w, path, TARGET_DOMAIN, s.scene_id, &s.features, |_| {
            "-1".to_string()
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_hidden_labels(path: impl AsRef<Path>, hidden: &HiddenLabels) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["scene_id", "instance_id", "label"])
        .map_err(|e| csv_err(path, e))?;
    for (scene_id, labels) in hidden.iter() {
        for (i, l) in labels.iter().enumerate() {
            w.write_record([scene_id.to_string(), i.to_string(), l.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One parsed scene-file row.
struct Row {
    line: u64,
    scene_id: u64,
    instance_id: usize,
    label: i64,
    features: Vec<f64>,
}

fn field<T: std::str::FromStr>(
    rec: &StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name} `{raw}`")))
}

fn read_scene_rows(path: &Path, domain: &str) -> Result<Vec<Row>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = scene_header(header.len().saturating_sub(4));
    if header.len() < 5 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(
            path,
            1,
            "header must be domain,scene_id,instance_id,label,f0..f{d-1} with at least one feature",
        ));
    }
    let d_in = header.len() - 4;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if &rec[0] != domain {
            return Err(Error::parse(
                path,
                line,
                format!("domain `{}` where `{domain}` expected", &rec[0]),
            ));
        }
        let features = (0..d_in)
            .map(|d| {
                let v: f64 = field(&rec, 4 + d, "feature", path, line)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(path, line, "non-finite feature"))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(Row {
            line,
            scene_id: field(&rec, 1, "scene_id", path, line)?,
            instance_id: field(&rec, 2, "instance_id", path, line)?,
            label: field(&rec, 3, "label", path, line)?,
            features,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "no instance rows"));
    }
    Ok(rows)
}

/// Groups contiguous rows into scenes, enforcing instance ids `0..K`.
fn group(path: &Path, rows: Vec<Row>) -> Result<Vec<(u64, Vec<Row>)>> {
    let mut scenes: Vec<(u64, Vec<Row>)> = Vec::new();
    for row in rows {
        let starts_new = scenes.last().is_none_or(|(id, _)| *id != row.scene_id);
        if starts_new {
            if scenes.iter().any(|(id, _)| *id == row.scene_id) {
                return Err(Error::parse(
                    path,
                    row.line,
                    format!("rows of scene {} are not contiguous", row.scene_id),
                ));
            }
            scenes.push((row.scene_id, Vec::new()));
        }
        let (_, bucket) = scenes.last_mut().expect("just pushed");
        if row.instance_id != bucket.len() {
            return Err(Error::parse(
                path,
                row.line,
                format!(
                    "instance_id {} where {} expected",
                    row.instance_id,
                    bucket.len()
                ),
            ));
        }
        bucket.push(row);
    }
    Ok(scenes)
}

fn to_matrix(rows: &[Row]) -> Result<Matrix> {
    let data: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();
    Matrix::from_rows(&data)
}

pub fn load_source(path: impl AsRef<Path>) -> Result<Vec<SourceScene>> {
    let path = path.as_ref();
    let rows = read_scene_rows(path, SOURCE_DOMAIN)?;
    group(path, rows)?
        .into_iter()
        .map(|(scene_id, rows)| {
            let labels = rows
                .iter()
                .map(|r| {
                    usize::try_from(r.label).map_err(|_| {
                        Error::parse(
                            path,
                            r.line,
                            format!("source label {} is negative", r.label),
                        )
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            Ok(SourceScene {
                scene_id,
                features: to_matrix(&rows)?,
                labels,
            })
        })
        .collect()
}

pub fn load_target(path: impl AsRef<Path>) -> Result<Vec<TargetScene>> {
    let path = path.as_ref();
    let rows = read_scene_rows(path, TARGET_DOMAIN)?;
    if let Some(r) = rows.iter().find(|r| r.label != -1) {
        return Err(Error::parse(
            path,
            r.line,
            "target rows must carry label -1; labels belong in the hidden-label file",
        ));
    }
    group(path, rows)?
        .into_iter()
        .map(|(scene_id, rows)| {
            Ok(TargetScene {
                scene_id,
                features: to_matrix(&rows)?,
            })
        })
        .collect()
}

pub fn load_hidden_labels(path: impl AsRef<Path>) -> Result<HiddenLabels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(["scene_id", "instance_id", "label"]) {
        return Err(Error::parse(
            path,
            1,
            "header must be scene_id,instance_id,label",
        ));
    }
    let mut hidden = HiddenLabels::new();
    let mut current: Option<(u64, Vec<usize>)> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let scene_id: u64 = field(&rec, 0, "scene_id", path, line)?;
        let instance_id: usize = field(&rec, 1, "instance_id", path, line)?;
        let label: usize = field(&rec, 2, "label", path, line)?;
        if current.as_ref().is_none_or(|(id, _)| *id != scene_id) {
            if let Some((id, labels)) = current.take() {
                hidden.insert(id, labels);
            }
            if hidden.get(scene_id).is_some() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("rows of scene {scene_id} are not contiguous"),
                ));
            }
            current = Some((scene_id, Vec::new()));
        }
        let (_, labels) = current.as_mut().expect("set above");
        if instance_id != labels.len() {
            return Err(Error::parse(
                path,
                line,
                format!("instance_id {instance_id} where {} expected", labels.len()),
            ));
        }
        labels.push(label);
    }
    if let Some((id, labels)) = current {
        hidden.insert(id, labels);
    }
    Ok(hidden)
}
