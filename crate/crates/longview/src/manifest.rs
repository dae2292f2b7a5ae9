//! Cohort directories: a tab-separated `manifest.tsv` plus one raster per
//! exam view.
//!
//! Manifest fields: patient_id, exam_id, date (YYYY-MM-DD), view,
//! raster_path, benign_left, malignant_left, benign_right, malignant_right,
//! biopsied, with flags written `0`/`1`. Lines starting with `#` are ignored.
//! Raster paths are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use longview_core::cohort::{Cohort, Date, Exam, Labels, SplitRule, View};
use longview_core::image::Image;

use crate::error::{self, Error, Result};
use crate::raster::{read_raster, write_raster};

pub const MANIFEST_FILE: &str = "manifest.tsv";
const HEADER: &str = "# patient_id\texam_id\tdate\tview\traster_path\tbenign_left\tmalignant_left\tbenign_right\tmalignant_right\tbiopsied";

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub line: usize,
    pub patient_id: String,
    pub exam_id: String,
    pub date: Date,
    pub view: View,
    pub raster_path: String,
    pub labels: Labels,
    pub biopsied: bool,
}

fn flag(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn bit(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 10 {
            return Err(Error::line(path, line, format!("expected 10 tab-separated fields, found {}", f.len())));
        }
        let bad = |what: &str, v: &str| Error::line(path, line, format!("invalid {what} {v:?}"));
        if f[0].is_empty() {
            return Err(bad("patient_id", f[0]));
        }
        if f[1].is_empty() {
            return Err(bad("exam_id", f[1]));
        }
        let date: Date = f[2].parse().map_err(|_| bad("date", f[2]))?;
        let view: View = f[3].parse().map_err(|_| bad("view", f[3]))?;
        if f[4].is_empty() {
            return Err(bad("raster_path", f[4]));
        }
        let flags = f[5..10].iter().map(|s| flag(s).ok_or_else(|| bad("flag", s))).collect::<Result<Vec<_>>>()?;
        out.push(ManifestRecord {
            line,
            patient_id: f[0].to_string(),
            exam_id: f[1].to_string(),
            date,
            view,
            raster_path: f[4].to_string(),
            labels: Labels { benign_left: flags[0], malignant_left: flags[1], benign_right: flags[2], malignant_right: flags[3] },
            biopsied: flags[4],
        });
    }
    Ok(out)
}

pub fn render_manifest(records: &[ManifestRecord]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in records {
        let l = &r.labels;
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.patient_id,
            r.exam_id,
            r.date,
            r.view,
            r.raster_path,
            bit(l.benign_left),
            bit(l.malignant_left),
            bit(l.benign_right),
            bit(l.malignant_right),
            bit(r.biopsied)
        ));
    }
    s
}

fn raster_name(exam_id: &str, view: View) -> String {
    format!("rasters/{exam_id}_{view}.lvim")
}

/// Write `cohort` under `dir`; returns the manifest path.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    let mut records = Vec::new();
    for exam in cohort.exams() {
        for v in View::ALL {
            let rel = raster_name(&exam.exam_id, v);
            write_raster(&dir.join(&rel), exam.image(v))?;
            records.push(ManifestRecord {
                line: records.len() + 2,
                patient_id: exam.patient_id.clone(),
                exam_id: exam.exam_id.clone(),
                date: exam.date,
                view: v,
                raster_path: rel,
                labels: exam.labels,
                biopsied: exam.biopsied,
            });
        }
    }
    let path = dir.join(MANIFEST_FILE);
    error::write(&path, render_manifest(&records).as_bytes())?;
    Ok(path)
}

/// Accepts either a manifest file or a directory containing `manifest.tsv`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_cohort(path: &Path, rule: &SplitRule) -> Result<Cohort> {
    let path = manifest_path(path);
    let text = String::from_utf8(error::read(&path)?).map_err(|_| Error::format(&path, "manifest is not UTF-8"))?;
    let records = parse_manifest(&text, &path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();

    struct Pending<'a> {
        first: &'a ManifestRecord,
        images: [Option<Image>; 4],
    }
    let mut exams: BTreeMap<&str, Pending> = BTreeMap::new();
    let mut dates: BTreeMap<(&str, Date), &str> = BTreeMap::new();
    for r in &records {
        let p = exams.entry(&r.exam_id).or_insert_with(|| Pending { first: r, images: Default::default() });
        let f = p.first;
        if f.patient_id != r.patient_id || f.date != r.date || f.labels != r.labels || f.biopsied != r.biopsied {
            return Err(Error::line(&path, r.line, format!("exam {} disagrees with its line {}", r.exam_id, f.line)));
        }
        if let Some(other) = dates.insert((&r.patient_id, r.date), &r.exam_id) {
            if other != r.exam_id {
                return Err(Error::line(
                    &path,
                    r.line,
                    format!("patient {} has exams {other} and {} on {}", r.patient_id, r.exam_id, r.date),
                ));
            }
        }
        let slot = &mut p.images[r.view.index()];
        if slot.is_some() {
            return Err(Error::line(&path, r.line, format!("exam {} lists {} twice", r.exam_id, r.view)));
        }
        *slot = Some(read_raster(&base.join(&r.raster_path))?);
    }
    let mut out = Vec::with_capacity(exams.len());
    for (id, p) in exams {
        let missing: Vec<&str> = View::ALL.iter().filter(|v| p.images[v.index()].is_none()).map(|v| v.as_str()).collect();
        if !missing.is_empty() {
            return Err(Error::line(&path, p.first.line, format!("exam {id} is missing {}", missing.join(", "))));
        }
        let f = p.first;
        out.push(Exam {
            patient_id: f.patient_id.clone(),
            exam_id: f.exam_id.clone(),
            date: f.date,
            images: p.images.map(|i| i.expect("checked")),
            labels: f.labels,
            biopsied: f.biopsied,
        });
    }
    Ok(Cohort::from_exams(out, rule)?)
}
