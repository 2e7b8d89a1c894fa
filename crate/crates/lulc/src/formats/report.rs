//! Machine-readable reports (JSON, CSV) and advisory text tables.

use std::fmt::Write as _;
use std::path::Path;

use lulc_core::eval::{AgreementMatrix, AreaRow, AreaTable, ConfusionMatrix, MetricsReport, Summary};
use lulc_core::model::TrainLog;
use lulc_core::ClassScheme;
use serde::Serialize;

use crate::{Error, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn csv_done(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SummaryJson {
    mean: f64,
    std: f64,
}

impl From<Summary> for SummaryJson {
    fn from(s: Summary) -> Self {
        SummaryJson { mean: s.mean, std: s.std }
    }
}

#[derive(Serialize)]
struct ClassJson<'a> {
    class: u8,
    name: &'a str,
    support: u64,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    iou: Option<f64>,
}

#[derive(Serialize)]
struct MacroJson {
    accuracy: SummaryJson,
    precision: SummaryJson,
    recall: SummaryJson,
    f1: SummaryJson,
    iou: SummaryJson,
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    set: &'a str,
    scheme: &'a str,
    labeled_pixels: u64,
    #[serde(rename = "macro")]
    macro_: MacroJson,
    absent: &'a [String],
    per_class: Vec<ClassJson<'a>>,
}

pub fn metrics_json(r: &MetricsReport) -> serde_json::Value {
    let doc = MetricsJson {
        set: r.set.as_str(),
        scheme: &r.scheme,
        labeled_pixels: r.total,
        macro_: MacroJson {
            accuracy: r.accuracy.into(),
            precision: r.precision.into(),
            recall: r.recall.into(),
            f1: r.f1.into(),
            iou: r.iou.into(),
        },
        absent: &r.absent,
        per_class: r
            .per_class
            .iter()
            .map(|m| ClassJson {
                class: m.class,
                name: &m.name,
                support: m.support(),
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
                tn: m.tn,
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                iou: m.iou,
            })
            .collect(),
    };
    serde_json::to_value(doc).expect("metrics serialize")
}

pub fn write_metrics_csv(path: &Path, r: &MetricsReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record([
        "class", "name", "support", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1", "iou",
    ])
    .map_err(err)?;
    for m in &r.per_class {
        w.write_record([
            m.class.to_string(),
            m.name.clone(),
            m.support().to_string(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
            m.tn.to_string(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.iou.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    for (label, pick) in [("macro_mean", 0), ("macro_std", 1)] {
        let v = |s: Summary| if pick == 0 { s.mean } else { s.std }.to_string();
        w.write_record([
            String::new(),
            label.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            v(r.accuracy),
            v(r.precision),
            v(r.recall),
            v(r.f1),
            v(r.iou),
        ])
        .map_err(err)?;
    }
    csv_done(path, w)
}

pub fn write_confusion_csv(path: &Path, cm: &ConfusionMatrix, scheme: &ClassScheme) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    let mut header = vec!["truth\\pred".to_string(), "Unpredicted".to_string()];
    header.extend(scheme.names()[1..].iter().cloned());
    w.write_record(&header).map_err(err)?;
    for t in 1..=cm.classes as u8 {
        let mut row = vec![scheme.name_of(t).unwrap_or("?").to_string()];
        row.extend((0..=cm.classes as u8).map(|p| cm.get(t, p).to_string()));
        w.write_record(&row).map_err(err)?;
    }
    csv_done(path, w)
}

pub fn metrics_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set: {}  scheme: {}  labeled pixels: {}", r.set.as_str(), r.scheme, r.total);
    let _ = writeln!(
        s,
        "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "class", "support", "accuracy", "precision", "recall", "f1", "iou"
    );
    for m in r.present() {
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            m.name,
            m.support(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.iou.unwrap_or(0.0)
        );
    }
    let pm = |x: Summary| format!("{:.2}±{:.2}", x.mean, x.std);
    let _ = writeln!(
        s,
        "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "macro",
        "",
        pm(r.accuracy),
        pm(r.precision),
        pm(r.recall),
        pm(r.f1),
        pm(r.iou)
    );
    if !r.absent.is_empty() {
        let _ = writeln!(s, "absent from truth: {}", r.absent.join(", "));
    }
    s
}

#[derive(Serialize)]
struct AgreementJson<'a> {
    maps: &'a [String],
    /// Row-major; null where two maps share no valid pixel.
    matrix: Vec<Vec<Option<f64>>>,
}

pub fn agreement_json(m: &AgreementMatrix) -> serde_json::Value {
    let n = m.len();
    let doc = AgreementJson {
        maps: &m.ids,
        matrix: (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect(),
    };
    serde_json::to_value(doc).expect("agreement serializes")
}

pub fn write_agreement_csv(path: &Path, m: &AgreementMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    let mut header = vec![String::new()];
    header.extend(m.ids.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for i in 0..m.len() {
        let mut row = vec![m.ids[i].clone()];
        row.extend((0..m.len()).map(|j| m.get(i, j).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row).map_err(err)?;
    }
    csv_done(path, w)
}

pub fn agreement_text(m: &AgreementMatrix) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<12}", "");
    for id in &m.ids {
        let _ = write!(s, " {id:>10}");
    }
    s.push('\n');
    for i in 0..m.len() {
        let _ = write!(s, "{:<12}", m.ids[i]);
        for j in 0..m.len() {
            match m.get(i, j) {
                Some(v) => {
                    let _ = write!(s, " {v:>10.3}");
                }
                None => {
                    let _ = write!(s, " {:>10}", "n/a");
                }
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct AreaRowJson<'a> {
    class: u8,
    name: &'a str,
    pixels: u64,
    area_m2: f64,
    area_km2: f64,
    percent: f64,
}

impl<'a> From<&'a AreaRow> for AreaRowJson<'a> {
    fn from(r: &'a AreaRow) -> Self {
        AreaRowJson {
            class: r.class,
            name: &r.name,
            pixels: r.pixels,
            area_m2: r.area_m2,
            area_km2: r.area_km2,
            percent: r.percent,
        }
    }
}

#[derive(Serialize)]
struct AreaJson<'a> {
    map: &'a str,
    scheme: &'a str,
    grid_area_m2: f64,
    classes: Vec<AreaRowJson<'a>>,
    all: AreaRowJson<'a>,
    unlabeled: AreaRowJson<'a>,
}

pub fn area_json(map: &str, t: &AreaTable) -> serde_json::Value {
    let doc = AreaJson {
        map,
        scheme: &t.scheme,
        grid_area_m2: t.grid_area_m2,
        classes: t.rows.iter().map(AreaRowJson::from).collect(),
        all: (&t.all).into(),
        unlabeled: (&t.unlabeled).into(),
    };
    serde_json::to_value(doc).expect("area table serializes")
}

/// Long-format table: one row per (map, class), plus `All` per map.
pub fn write_areas_csv(path: &Path, tables: &[(String, AreaTable)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(["map", "class", "name", "pixels", "area_km2", "percent"]).map_err(err)?;
    for (id, t) in tables {
        for r in t.rows.iter().chain(std::iter::once(&t.all)) {
            w.write_record([
                id.clone(),
                r.class.to_string(),
                r.name.clone(),
                r.pixels.to_string(),
                r.area_km2.to_string(),
                r.percent.to_string(),
            ])
            .map_err(err)?;
        }
    }
    csv_done(path, w)
}

pub fn areas_text(tables: &[(String, AreaTable)]) -> String {
    let mut s = String::new();
    for (id, t) in tables {
        let _ = writeln!(s, "{id} ({})", t.scheme);
        for r in t.rows.iter().chain(std::iter::once(&t.all)) {
            let _ = writeln!(s, "  {:<24} {:>12.4} km² {:>7.2}%", r.name, r.area_km2, r.percent);
        }
    }
    s
}

pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::format(path, e);
    w.write_record(["epoch", "mean_loss", "labeled_pixel_count"]).map_err(err)?;
    for e in &log.epochs {
        w.write_record([e.epoch.to_string(), e.mean_loss.to_string(), e.labeled_pixels.to_string()])
            .map_err(err)?;
    }
    csv_done(path, w)
}
