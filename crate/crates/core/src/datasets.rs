//! Decision-record ingestion, normalization and stratified splits.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

pub const DEFAULT_PANEL_SIZE: u32 = 7;

/// One expert-decided case.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub id: String,
    pub features: Vec<f64>,
    pub label: u8,
    /// Experts agreeing with the majority label.
    pub agreement: Option<u32>,
}

/// Smallest agreement count a majority can have on a panel of `k`.
pub fn min_agreement(k: u32) -> u32 {
    k.div_ceil(2)
}

pub fn check_agreement(a: u32, k: u32) -> Result<()> {
    if a < min_agreement(k) || a > k {
        return Err(Error::Data(format!(
            "agreement {a} outside [{}, {k}] for a panel of {k}",
            min_agreement(k)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Tabular,
    ImageDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Statistics from every loaded record.
    #[default]
    FullSet,
    /// Leave raw values; fit a [`Standardizer`] on the training split later.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    None,
    PerFeature { means: Vec<f64>, stds: Vec<f64> },
    Pixel { scale: f64, mean: f64, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: SourceKind,
    pub panel_size: u32,
    pub input_shape: Vec<usize>,
    pub feature_names: Vec<String>,
    pub dropped_features: Vec<String>,
    pub normalization: Normalization,
    pub record_count: usize,
    /// `[label 0, label 1]`.
    pub class_counts: [usize; 2],
    pub warnings: Vec<String>,
}

fn class_counts(records: &[DecisionRecord]) -> [usize; 2] {
    let pos = records.iter().filter(|r| r.label == 1).count();
    [records.len() - pos, pos]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularSchema {
    pub id_column: Option<String>,
    /// `None` selects every column other than id, label and agreement.
    pub feature_columns: Option<Vec<String>>,
    pub label_column: String,
    pub agreement_column: Option<String>,
    pub panel_size: u32,
    pub normalize: NormalizeMode,
}

impl Default for TabularSchema {
    fn default() -> Self {
        TabularSchema {
            id_column: Some("id".into()),
            feature_columns: None,
            label_column: "label".into(),
            agreement_column: Some("agreement".into()),
            panel_size: DEFAULT_PANEL_SIZE,
            normalize: NormalizeMode::FullSet,
        }
    }
}

/// Per-feature standardization `(x - mean) / std` with population statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(records: &[DecisionRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Data("cannot fit normalization on zero records".into()))?;
        let d = first.features.len();
        let n = records.len() as f64;
        let mut means = vec![0.0; d];
        for r in records {
            for (m, v) in means.iter_mut().zip(&r.features) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for r in records {
            for ((s, v), m) in vars.iter_mut().zip(&r.features).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { means, stds })
    }

    /// Features whose spread is below `1e-12`.
    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.stds.len())
            .filter(|&i| self.stds[i] < 1e-12)
            .collect()
    }

    /// Standardizes in place; constant features are only centered.
    pub fn apply(&self, records: &mut [DecisionRecord]) {
        for r in records {
            for ((v, m), s) in r.features.iter_mut().zip(&self.means).zip(&self.stds) {
                *v -= m;
                if *s >= 1e-12 {
                    *v /= s;
                }
            }
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(name.to_string()))
}

fn parse_label(cell: &str, row: usize) -> Result<u8> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Data(format!(
            "row {row}: label `{other}` is not 0 or 1"
        ))),
    }
}

fn parse_agreement(cell: &str, row: usize, k: u32) -> Result<Option<u32>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let a: u32 = cell
        .parse()
        .map_err(|_| Error::Data(format!("row {row}: agreement `{cell}` is not an integer")))?;
    check_agreement(a, k).map_err(|e| Error::Data(format!("row {row}: {e}")))?;
    Ok(Some(a))
}

/// Loads a headered CSV of decision records. Row numbers in errors count data
/// rows from 1.
pub fn load_tabular(
    path: &Path,
    schema: &TabularSchema,
) -> Result<(Vec<DecisionRecord>, DatasetManifest)> {
    if schema.panel_size == 0 {
        return Err(Error::Config("panel_size must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let id_col = schema
        .id_column
        .as_deref()
        .map(|c| column(&headers, c))
        .transpose()?;
    let label_col = column(&headers, &schema.label_column)?;
    // An absent agreement column leaves `agreement` unset; analyses that need
    // it report the missing column themselves.
    let agreement_col = schema
        .agreement_column
        .as_deref()
        .and_then(|c| headers.iter().position(|h| h == c));
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_col && *i != label_col && Some(*i) != agreement_col)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let feature_cols = feature_names
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let n = i + 1;
        let row = row.map_err(|e| Error::Data(format!("row {n}: {e}")))?;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let features = feature_cols
            .iter()
            .zip(&feature_names)
            .map(|(&c, name)| {
                let text = cell(c).trim();
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Data(format!(
                        "row {n}: column `{name}` value `{text}` is not a finite number"
                    ))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(DecisionRecord {
            id: id_col
                .map(|c| cell(c).to_string())
                .unwrap_or_else(|| i.to_string()),
            features,
            label: parse_label(cell(label_col), n)?,
            agreement: match agreement_col {
                Some(c) => parse_agreement(cell(c), n, schema.panel_size)?,
                None => None,
            },
        });
    }

    let mut manifest = DatasetManifest {
        source: SourceKind::Tabular,
        panel_size: schema.panel_size,
        input_shape: vec![feature_names.len()],
        feature_names,
        dropped_features: Vec::new(),
        normalization: Normalization::None,
        record_count: records.len(),
        class_counts: class_counts(&records),
        warnings: Vec::new(),
    };
    if schema.normalize == NormalizeMode::FullSet && !records.is_empty() {
        let mut st = Standardizer::fit(&records)?;
        let constant = st.constant_features();
        if !constant.is_empty() {
            for &c in constant.iter().rev() {
                let name = manifest.feature_names.remove(c);
                manifest
                    .warnings
                    .push(format!("dropped constant feature `{name}`"));
                manifest.dropped_features.insert(0, name);
                st.means.remove(c);
                st.stds.remove(c);
                for r in &mut records {
                    r.features.remove(c);
                }
            }
            manifest.input_shape = vec![manifest.feature_names.len()];
        }
        st.apply(&mut records);
        manifest.normalization = Normalization::PerFeature {
            means: st.means,
            stds: st.stds,
        };
    }
    Ok((records, manifest))
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Data(e.to_string())
    }
}

/// Writes records as `id,label,agreement,<features...>` with shortest
/// round-trip float formatting.
pub fn write_records_csv<W: Write>(
    records: &[DecisionRecord],
    feature_names: &[String],
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "label".into(), "agreement".into()];
    header.extend(feature_names.iter().cloned());
    out.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.label.to_string(),
            r.agreement.map(|a| a.to_string()).unwrap_or_default(),
        ];
        row.extend(r.features.iter().map(|v| v.to_string()));
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Nearest-neighbour resample of a row-major `width x height` image to
/// `side x side`, sampling source pixel `floor((2i + 1) * n / (2 * side))`
/// along each axis.
pub fn resize_nearest(pixels: &[f64], width: usize, height: usize, side: usize) -> Vec<f64> {
    if width == side && height == side {
        return pixels.to_vec();
    }
    let pick = |i: usize, n: usize| ((2 * i + 1) * n / (2 * side)).min(n - 1);
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        let sy = pick(y, height);
        for x in 0..side {
            out.push(pixels[sy * width + pick(x, width)]);
        }
    }
    out
}

/// Loads grayscale PNG/PGM images listed in a `filename,label[,agreement]`
/// CSV. Records come back in ascending filename order with features of
/// shape `[side, side, 1]`.
pub fn load_images(
    dir: &Path,
    labels: &Path,
    side: usize,
    panel_size: u32,
) -> Result<(Vec<DecisionRecord>, DatasetManifest)> {
    if side < 8 {
        return Err(Error::Config(format!(
            "image side {side} must be at least 8"
        )));
    }
    let mut reader = csv::Reader::from_path(labels).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let file_col = column(&headers, "filename")?;
    let label_col = column(&headers, "label")?;
    let agreement_col = headers.iter().position(|h| h == "agreement");

    let mut entries = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let n = i + 1;
        let row = row.map_err(|e| Error::Data(format!("row {n}: {e}")))?;
        let name = row.get(file_col).unwrap_or("").to_string();
        let label = parse_label(row.get(label_col).unwrap_or(""), n)?;
        let agreement = match agreement_col {
            Some(c) => parse_agreement(row.get(c).unwrap_or(""), n, panel_size)?,
            None => None,
        };
        entries.push((name, label, agreement));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let mut records = Vec::with_capacity(entries.len());
    for (name, label, agreement) in entries {
        let img = image::open(dir.join(&name))
            .map_err(|e| Error::Data(format!("{name}: {e}")))?
            .to_luma32f();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels: Vec<f64> = img.into_raw().into_iter().map(f64::from).collect();
        records.push(DecisionRecord {
            id: name,
            features: resize_nearest(&pixels, w, h, side),
            label,
            agreement,
        });
    }

    let count = (records.len() * side * side) as f64;
    let (mut mean, mut std) = (0.0, 0.0);
    if count > 0.0 {
        // Shifted by the first pixel so a uniform set centers to exact zeros.
        let shift = records[0].features[0];
        mean = shift
            + records
                .iter()
                .flat_map(|r| &r.features)
                .map(|v| v - shift)
                .sum::<f64>()
                / count;
        std = (records
            .iter()
            .flat_map(|r| &r.features)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / count)
            .sqrt();
        for v in records.iter_mut().flat_map(|r| r.features.iter_mut()) {
            *v -= mean;
            if std >= 1e-12 {
                *v /= std;
            }
        }
    }
    let manifest = DatasetManifest {
        source: SourceKind::ImageDir,
        panel_size,
        input_shape: vec![side, side, 1],
        feature_names: Vec::new(),
        dropped_features: Vec::new(),
        normalization: Normalization::Pixel {
            scale: 1.0,
            mean,
            std,
        },
        record_count: records.len(),
        class_counts: class_counts(&records),
        warnings: Vec::new(),
    };
    Ok((records, manifest))
}

/// Seeded, label-stratified split. Each class sends `round(test_fraction * n)`
/// records to the test side, clamped so both sides keep at least one.
/// Both halves preserve the input order.
pub fn split(
    records: &[DecisionRecord],
    test_fraction: f64,
    seed: u64,
    index: u32,
) -> Result<(Vec<DecisionRecord>, Vec<DecisionRecord>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut rng = stream(seed, Domain::Split, index);
    let mut test_idx = BTreeSet::new();
    for label in [0u8, 1] {
        let mut members: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].label == label)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::Split(format!(
                "class {label} has a single record and cannot appear on both sides"
            )));
        }
        members.shuffle(&mut rng);
        let k =
            ((test_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        test_idx.extend(members[..k].iter().copied());
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in records.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn rec(id: usize, label: u8) -> DecisionRecord {
        DecisionRecord {
            id: id.to_string(),
            features: vec![id as f64],
            label,
            agreement: None,
        }
    }

    #[test]
    fn two_point_standardization() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "id,x,label\na,0,0\nb,2,1\n");
        let schema = TabularSchema {
            agreement_column: None,
            ..Default::default()
        };
        let (records, manifest) = load_tabular(&p, &schema).unwrap();
        assert_eq!(records[0].features, vec![-1.0]);
        assert_eq!(records[1].features, vec![1.0]);
        assert_eq!(manifest.class_counts, [1, 1]);
        assert_eq!(manifest.feature_names, vec!["x".to_string()]);
    }

    #[test]
    fn bad_label_is_row_indexed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "id,x,label\na,0,0\nb,2,2\n");
        let schema = TabularSchema {
            agreement_column: None,
            ..Default::default()
        };
        match load_tabular(&p, &schema) {
            Err(Error::Data(m)) => assert!(m.contains("row 2"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "id,x,label\na,zz,0\n");
        let schema = TabularSchema {
            agreement_column: None,
            ..Default::default()
        };
        assert!(matches!(load_tabular(&p, &schema), Err(Error::Data(m)) if m.contains("row 1")));
        let schema = TabularSchema {
            label_column: "y".into(),
            ..Default::default()
        };
        assert!(matches!(load_tabular(&p, &schema), Err(Error::Schema(c)) if c == "y"));
        let ok = write(
            dir.path(),
            "ok.csv",
            "id,x,label
a,0,0
b,1,1
",
        );
        let (records, _) = load_tabular(&ok, &TabularSchema::default()).unwrap();
        assert!(records.iter().all(|r| r.agreement.is_none()));
    }

    #[test]
    fn agreement_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "id,x,label,agreement\na,0,0,3\n");
        assert!(matches!(
            load_tabular(&p, &TabularSchema::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn constant_feature_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "d.csv",
            "id,x,c,label,agreement\na,0,5,0,7\nb,2,5,1,4\n",
        );
        let (records, manifest) = load_tabular(&p, &TabularSchema::default()).unwrap();
        assert_eq!(manifest.dropped_features, vec!["c".to_string()]);
        assert_eq!(manifest.input_shape, vec![1]);
        assert_eq!(records[1].features, vec![1.0]);
        assert_eq!(records[1].agreement, Some(4));
    }

    #[test]
    fn round_trip_is_bit_equal() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<DecisionRecord> = (0..20)
            .map(|i| DecisionRecord {
                id: format!("r{i}"),
                features: vec![
                    (i as f64).sin() * 1e-3,
                    1.0 / (i as f64 + 3.0),
                    -(i as f64).sqrt(),
                ],
                label: (i % 2) as u8,
                agreement: Some(4 + (i % 4) as u32),
            })
            .collect();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = dir.path().join("r.csv");
        write_records_csv(&records, &names, fs::File::create(&p).unwrap()).unwrap();
        let schema = TabularSchema {
            normalize: NormalizeMode::None,
            ..Default::default()
        };
        let (back, _) = load_tabular(&p, &schema).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn split_counts_and_determinism() {
        let records: Vec<DecisionRecord> = (0..10).map(|i| rec(i, (i % 2) as u8)).collect();
        let (train, test) = split(&records, 0.2, 4, 0).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(test.iter().filter(|r| r.label == 1).count(), 1);
        let (train2, test2) = split(&records, 0.2, 4, 0).unwrap();
        assert_eq!((train, test), (train2, test2));
    }

    #[test]
    fn split_rejects_singleton_class() {
        let mut records: Vec<DecisionRecord> = (0..5).map(|i| rec(i, 0)).collect();
        records.push(rec(5, 1));
        assert!(matches!(split(&records, 0.2, 1, 0), Err(Error::Split(_))));
    }

    #[test]
    fn resize_identity_and_nearest() {
        let px: Vec<f64> = (0..16).map(f64::from).collect();
        assert_eq!(resize_nearest(&px, 4, 4, 4), px);
        // 2x2 checkerboard upscaled to 4x4
        let board = [
            1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0,
        ];
        let oracle = |side: usize| -> Vec<f64> {
            let mut v = Vec::new();
            for y in 0..side {
                for x in 0..side {
                    let sy = (((y as f64 + 0.5) * 4.0 / side as f64).floor() as usize).min(3);
                    let sx = (((x as f64 + 0.5) * 4.0 / side as f64).floor() as usize).min(3);
                    v.push(board[sy * 4 + sx]);
                }
            }
            v
        };
        assert_eq!(resize_nearest(&board, 4, 4, 1), oracle(1));
        assert_eq!(resize_nearest(&board, 4, 4, 1), vec![1.0]);
        assert_eq!(resize_nearest(&board, 4, 4, 2), oracle(2));
        assert_eq!(resize_nearest(&board, 4, 4, 3), oracle(3));
    }

    fn save_gray(dir: &Path, name: &str, side: u32, f: impl Fn(u32, u32) -> u8) {
        image::GrayImage::from_fn(side, side, |x, y| image::Luma([f(x, y)]))
            .save(dir.join(name))
            .unwrap();
    }

    #[test]
    fn uniform_gray_images_center_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        save_gray(dir.path(), "b.png", 10, |_, _| 128);
        save_gray(dir.path(), "a.png", 10, |_, _| 128);
        let labels = write(
            dir.path(),
            "labels.csv",
            "filename,label,agreement\nb.png,1,7\na.png,0,5\n",
        );
        let (records, manifest) = load_images(dir.path(), &labels, 8, 7).unwrap();
        assert_eq!(records[0].id, "a.png");
        assert_eq!(records[1].agreement, Some(7));
        assert!(records.iter().flat_map(|r| &r.features).all(|&v| v == 0.0));
        assert_eq!(manifest.input_shape, vec![8, 8, 1]);
        assert_eq!(manifest.class_counts, [1, 1]);
    }

    #[test]
    fn same_side_images_are_only_normalized() {
        let dir = tempfile::tempdir().unwrap();
        save_gray(dir.path(), "g.png", 8, |x, y| (x * 30 + y) as u8);
        let labels = write(dir.path(), "labels.csv", "filename,label\ng.png,1\n");
        let (records, _) = load_images(dir.path(), &labels, 8, 7).unwrap();
        let raw: Vec<f64> = (0..64u32)
            .map(|i| f64::from(f32::from(((i % 8) * 30 + i / 8) as u8) / 255.0))
            .collect();
        let mean = raw.iter().sum::<f64>() / 64.0;
        let std = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0).sqrt();
        for (got, r) in records[0].features.iter().zip(&raw) {
            assert!((got - (r - mean) / std).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_image_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let labels = write(dir.path(), "labels.csv", "filename,label\nghost.png,1\n");
        match load_images(dir.path(), &labels, 8, 7) {
            Err(Error::Data(m)) => assert!(m.contains("ghost.png"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_images(dir.path(), &labels, 4, 7),
            Err(Error::Config(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn split_is_disjoint_and_exhaustive(seed in 0u64..100, frac_idx in 0usize..3, n in 10usize..60) {
            let frac = [0.1, 0.2, 0.3][frac_idx];
            let records: Vec<DecisionRecord> = (0..n).map(|i| rec(i, u8::from(i % 3 == 0))).collect();
            let (train, test) = split(&records, frac, seed, 0).unwrap();
            let mut ids: Vec<&str> = train.iter().chain(&test).map(|r| r.id.as_str()).collect();
            proptest::prop_assert_eq!(ids.len(), n);
            ids.sort_unstable();
            ids.dedup();
            proptest::prop_assert_eq!(ids.len(), n);
            for label in [0, 1] {
                proptest::prop_assert!(train.iter().any(|r| r.label == label));
                proptest::prop_assert!(test.iter().any(|r| r.label == label));
            }
        }

        #[test]
        fn standardized_features_have_unit_moments(
            rows in proptest::collection::vec((-1e3f64..1e3, -5f64..5.0), 3..40)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut body = String::from("id,a,b,label\n");
            for (i, (a, b)) in rows.iter().enumerate() {
                body.push_str(&format!("r{i},{a},{b},{}\n", i % 2));
            }
            let p = write(dir.path(), "d.csv", &body);
            let schema = TabularSchema { agreement_column: None, ..Default::default() };
            let (records, manifest) = load_tabular(&p, &schema).unwrap();
            let n = records.len() as f64;
            for j in 0..manifest.feature_names.len() {
                let mean = records.iter().map(|r| r.features[j]).sum::<f64>() / n;
                let std = (records.iter().map(|r| (r.features[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
                proptest::prop_assert!(mean.abs() < 1e-9);
                proptest::prop_assert!((std - 1.0).abs() < 1e-9);
            }
        }
    }
}
