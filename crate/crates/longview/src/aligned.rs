//! Aligned-pair directories written by the `align` command: one warped
//! prior raster per pair and view plus `alignment.tsv`.
//!
//! Report columns: pair_id, view, estimator_id, iou, then the transform
//! (a11, a12, a21, a22, tx, ty), the degenerate flag and the raster path.

use std::collections::BTreeMap;
use std::path::Path;

use longview_core::align::{AffineTransform, AlignmentResult, Estimator};
use longview_core::cohort::{Exam, ExamPair, View};
use longview_core::image::Image;

use crate::error::{self, Error, Result};
use crate::raster::{read_raster, write_raster};

pub const ALIGNMENT_REPORT: &str = "alignment.tsv";
const COLUMNS: [&str; 12] =
    ["pair_id", "view", "estimator_id", "iou", "a11", "a12", "a21", "a22", "tx", "ty", "degenerate", "raster_path"];

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentRow {
    pub pair_id: String,
    pub view: View,
    pub result: AlignmentResult,
    pub raster_path: String,
}

fn raster_name(pair: &ExamPair, view: View) -> String {
    format!("aligned/{}__{}_{view}.lvim", pair.prior().exam_id, pair.current().exam_id)
}

pub fn alignment_rows(pairs: &[ExamPair]) -> Result<Vec<AlignmentRow>> {
    let mut rows = Vec::with_capacity(4 * pairs.len());
    for pair in pairs {
        let results = pair.alignment().ok_or_else(|| Error::Usage(format!("pair {} is not aligned", pair.id())))?;
        for v in View::ALL {
            rows.push(AlignmentRow { pair_id: pair.id(), view: v, result: results[v.index()], raster_path: raster_name(pair, v) });
        }
    }
    Ok(rows)
}

pub fn render_alignment_report(rows: &[AlignmentRow]) -> String {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in rows {
        let t = r.result.transform;
        let f = |x: f64| x.to_string();
        w.write_record([
            r.pair_id.clone(),
            r.view.to_string(),
            r.result.estimator_id.to_string(),
            f(r.result.iou),
            f(t.a11),
            f(t.a12),
            f(t.a21),
            f(t.a22),
            f(t.tx),
            f(t.ty),
            (r.result.degenerate as u8).to_string(),
            r.raster_path.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 ids")
}

pub fn parse_alignment_report(text: &str, path: &Path) -> Result<Vec<AlignmentRow>> {
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::line(path, 1, "unexpected alignment report header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::line(path, line, e.to_string()))?;
        if rec.len() != COLUMNS.len() {
            return Err(Error::line(path, line, format!("expected {} fields, found {}", COLUMNS.len(), rec.len())));
        }
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| Error::line(path, line, format!("invalid {} {:?}", COLUMNS[k], &rec[k])));
        let view: View = rec[1].parse().map_err(|_| Error::line(path, line, format!("invalid view {:?}", &rec[1])))?;
        let estimator_id: Estimator = rec[2].parse().map_err(|_| Error::line(path, line, format!("invalid estimator {:?}", &rec[2])))?;
        let transform = AffineTransform { a11: num(4)?, a12: num(5)?, a21: num(6)?, a22: num(7)?, tx: num(8)?, ty: num(9)? };
        let degenerate = match &rec[10] {
            "0" => false,
            "1" => true,
            v => return Err(Error::line(path, line, format!("invalid degenerate flag {v:?}"))),
        };
        rows.push(AlignmentRow {
            pair_id: rec[0].to_string(),
            view,
            result: AlignmentResult { transform, iou: num(3)?, estimator_id, degenerate },
            raster_path: rec[11].to_string(),
        });
    }
    Ok(rows)
}

/// Write warped priors and the alignment report of `pairs` under `dir`.
pub fn save_aligned(pairs: &[ExamPair], dir: &Path) -> Result<()> {
    let rows = alignment_rows(pairs)?;
    for (pair, chunk) in pairs.iter().zip(rows.chunks_exact(4)) {
        for r in chunk {
            write_raster(&dir.join(&r.raster_path), pair.prior().image(r.view))?;
        }
    }
    error::write(&dir.join(ALIGNMENT_REPORT), render_alignment_report(&rows).as_bytes())
}

/// Rebuild aligned versions of `pairs` from a directory written by [`save_aligned`].
pub fn load_aligned(pairs: &[ExamPair], dir: &Path) -> Result<Vec<ExamPair>> {
    let path = dir.join(ALIGNMENT_REPORT);
    let text = String::from_utf8(error::read(&path)?).map_err(|_| Error::format(&path, "report is not UTF-8"))?;
    let rows = parse_alignment_report(&text, &path)?;
    let index: BTreeMap<(&str, View), &AlignmentRow> = rows.iter().map(|r| ((r.pair_id.as_str(), r.view), r)).collect();
    pairs
        .iter()
        .map(|pair| {
            let id = pair.id();
            let mut images: [Image; 4] = Default::default();
            let mut results = [None; 4];
            for v in View::ALL {
                let row = index
                    .get(&(id.as_str(), v))
                    .ok_or_else(|| Error::format(&path, format!("no alignment for pair {id} view {v}")))?;
                images[v.index()] = read_raster(&dir.join(&row.raster_path))?;
                results[v.index()] = Some(row.result);
            }
            let exam = Exam { images, ..Exam::clone(pair.prior()) };
            Ok(pair.with_aligned_prior(exam, results.map(|r| r.expect("filled")))?)
        })
        .collect()
}
