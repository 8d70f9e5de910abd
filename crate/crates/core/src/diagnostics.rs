//! Performance measures for a set of elicited distributions.
//!
//! Labels follow `p = P(y = 1)`: a credible interval lying wholly below 0.5
//! is a correct call for `y = 0`, wholly above for `y = 1`, and an interval
//! that contains 0.5 (boundary included) is correct for either label.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::datasets::{check_agreement, DEFAULT_PANEL_SIZE};
use crate::elicitation::{
    bin_index, credible_interval, distribution_entropy, point_entropy, ElicitedDistribution,
    ProbabilitySample, DEFAULT_CI_LEVEL, DEFAULT_ENTROPY_BINS,
};
use crate::error::{Error, Result};

/// Bins of the histogram whose most populated bin gives the sample mode.
pub const MODE_BINS: usize = 20;
/// Width of the entropy histogram bins.
pub const ENTROPY_HIST_WIDTH: f64 = 0.05;
pub const DEFAULT_CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedRecord {
    pub id: String,
    pub label: u8,
    pub sample: ProbabilitySample,
    pub dist: ElicitedDistribution,
    pub agreement: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Median,
    Mode,
}

/// Midpoint of the most populated of [`MODE_BINS`] equal-width bins; ties
/// resolve to the lower bin.
pub fn sample_mode(sample: &ProbabilitySample) -> f64 {
    let mut counts = [0usize; MODE_BINS];
    for &v in &sample.values {
        counts[bin_index(v, MODE_BINS)] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    (best as f64 + 0.5) / MODE_BINS as f64
}

pub fn statistic(sample: &ProbabilitySample, stat: Statistic) -> f64 {
    match stat {
        Statistic::Mean => sample.mean(),
        Statistic::Median => sample.median(),
        Statistic::Mode => sample_mode(sample),
    }
}

/// Label 1 when the statistic is at least 0.5.
pub fn point_prediction(e: &EvaluatedRecord, stat: Statistic) -> u8 {
    u8::from(statistic(&e.sample, stat) >= 0.5)
}

/// Label from the side of 0.5 holding more sample mass. Values equal to 0.5
/// count half to each side; an exact tie gives 0.
pub fn auc_prediction(e: &EvaluatedRecord) -> u8 {
    let (mut above, mut below) = (0.0, 0.0);
    for &v in &e.sample.values {
        if v > 0.5 {
            above += 1.0;
        } else if v < 0.5 {
            below += 1.0;
        } else {
            above += 0.5;
            below += 0.5;
        }
    }
    u8::from(above > below)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CiOutcome {
    pub correct: bool,
    /// The interval contains 0.5.
    pub centered: bool,
}

pub fn ci_rule(ci: (f64, f64), label: u8) -> CiOutcome {
    let (lo, hi) = ci;
    if lo <= 0.5 && 0.5 <= hi {
        CiOutcome {
            correct: true,
            centered: true,
        }
    } else if hi < 0.5 {
        CiOutcome {
            correct: label == 0,
            centered: false,
        }
    } else {
        CiOutcome {
            correct: label == 1,
            centered: false,
        }
    }
}

pub fn ci_correct(e: &EvaluatedRecord) -> CiOutcome {
    ci_rule(e.dist.ci95, e.label)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tp: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> f64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    /// `tp / (tp + fn)`, or 0 with no positives.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `tn / (tn + fp)`, or 0 with no negatives.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Confusion counts using the mean-statistic label.
pub fn confusion(records: &[EvaluatedRecord]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for r in records {
        match (point_prediction(r, Statistic::Mean), r.label) {
            (0, 0) => m.tn += 1.0,
            (1, 0) => m.fp += 1.0,
            (0, _) => m.fn_ += 1.0,
            _ => m.tp += 1.0,
        }
    }
    m
}

/// `2 spec sens / (spec + sens)`, zero when both rates are zero.
pub fn f_score(m: &ConfusionMatrix) -> f64 {
    let (spec, sens) = (m.specificity(), m.sensitivity());
    if spec + sens == 0.0 {
        0.0
    } else {
        2.0 * spec * sens / (spec + sens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    /// `None` for an empty bin.
    pub mean_predicted: Option<f64>,
    /// Fraction of `y = 1`; `None` for an empty bin.
    pub frequency: Option<f64>,
    pub count: f64,
}

/// Reliability table over the records' mean sampled probabilities.
pub fn calibration(records: &[EvaluatedRecord], bins: usize) -> Result<Vec<CalibrationBin>> {
    if bins < 1 {
        return Err(Error::Domain("calibration needs at least one bin".into()));
    }
    let mut sums = vec![(0.0, 0.0, 0usize); bins];
    for r in records {
        let p = r.sample.mean();
        let s = &mut sums[bin_index(p, bins)];
        s.0 += p;
        s.1 += f64::from(r.label);
        s.2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (p, y, n))| CalibrationBin {
            bin_lo: i as f64 / bins as f64,
            bin_hi: (i + 1) as f64 / bins as f64,
            mean_predicted: (n > 0).then(|| p / n as f64),
            frequency: (n > 0).then(|| y / n as f64),
            count: n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyHistograms {
    pub all: Vec<HistogramBin>,
    pub correct: Vec<HistogramBin>,
    pub incorrect: Vec<HistogramBin>,
}

fn entropy_hist_bins() -> usize {
    (1.0 / ENTROPY_HIST_WIDTH).round() as usize
}

fn empty_histogram() -> Vec<HistogramBin> {
    let n = entropy_hist_bins();
    (0..n)
        .map(|i| HistogramBin {
            bin_lo: i as f64 / n as f64,
            bin_hi: (i + 1) as f64 / n as f64,
            count: 0.0,
        })
        .collect()
}

/// Distribution-entropy histograms for all records and split by the CI rule.
pub fn entropy_histograms(
    records: &[EvaluatedRecord],
    entropy_bins: usize,
) -> Result<EntropyHistograms> {
    let mut out = EntropyHistograms {
        all: empty_histogram(),
        correct: empty_histogram(),
        incorrect: empty_histogram(),
    };
    let n = entropy_hist_bins();
    for r in records {
        let b = bin_index(distribution_entropy(&r.sample, entropy_bins)?, n);
        out.all[b].count += 1.0;
        if ci_correct(r).correct {
            out.correct[b].count += 1.0;
        } else {
            out.incorrect[b].count += 1.0;
        }
    }
    Ok(out)
}

pub fn agreement_level_name(opposing: u32) -> String {
    match opposing {
        0 => "Full Agreement".into(),
        1 => "One Opposing".into(),
        2 => "Two Opposing".into(),
        3 => "Three Opposing".into(),
        n => format!("{n} Opposing"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub level: String,
    pub opposing: u32,
    pub count: f64,
    pub mean_entropy: f64,
    pub mean_point_entropy: f64,
    #[serde(serialize_with = "round2")]
    pub pct_centered: f64,
}

/// Groups records by the number of opposing experts `K - agreement`, in
/// ascending order; only levels that occur are listed.
pub fn agreement_analysis(
    records: &[EvaluatedRecord],
    panel_size: u32,
    entropy_bins: usize,
) -> Result<Vec<AgreementRow>> {
    let mut groups: BTreeMap<u32, (f64, f64, f64, f64)> = BTreeMap::new();
    for r in records {
        let a = r
            .agreement
            .ok_or_else(|| Error::Schema("agreement".into()))?;
        check_agreement(a, panel_size).map_err(|e| Error::Data(format!("record {}: {e}", r.id)))?;
        let g = groups.entry(panel_size - a).or_default();
        g.0 += 1.0;
        g.1 += distribution_entropy(&r.sample, entropy_bins)?;
        g.2 += point_entropy(r.sample.mean().clamp(0.0, 1.0))?;
        if ci_correct(r).centered {
            g.3 += 1.0;
        }
    }
    Ok(groups
        .into_iter()
        .map(|(opposing, (n, h, ph, c))| AgreementRow {
            level: agreement_level_name(opposing),
            opposing,
            count: n,
            mean_entropy: h / n,
            mean_point_entropy: ph / n,
            pct_centered: 100.0 * c / n,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticOptions {
    pub calibration_bins: usize,
    pub entropy_bins: usize,
    pub ci_level: f64,
    pub panel_size: u32,
    pub agreement: bool,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions {
            calibration_bins: DEFAULT_CALIBRATION_BINS,
            entropy_bins: DEFAULT_ENTROPY_BINS,
            ci_level: DEFAULT_CI_LEVEL,
            panel_size: DEFAULT_PANEL_SIZE,
            agreement: false,
        }
    }
}

fn round2<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((v * 100.0).round() / 100.0)
}

/// Every measure for one dataset. Percentages are kept at full precision and
/// rounded to two decimals only when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_records: f64,
    pub ci_level: f64,
    pub entropy_bins: usize,
    #[serde(serialize_with = "round2")]
    pub mean_accuracy: f64,
    #[serde(serialize_with = "round2")]
    pub mode_accuracy: f64,
    #[serde(serialize_with = "round2")]
    pub median_accuracy: f64,
    #[serde(serialize_with = "round2")]
    pub auc_accuracy: f64,
    #[serde(serialize_with = "round2")]
    pub ci95_accuracy: f64,
    #[serde(serialize_with = "round2")]
    pub pct_ci_correct_containing_half: f64,
    #[serde(serialize_with = "round2")]
    pub pct_ci_correct_either_side: f64,
    pub f_score: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub confusion: ConfusionMatrix,
    pub calibration: Vec<CalibrationBin>,
    pub entropy_histograms: EntropyHistograms,
    pub agreement: Option<Vec<AgreementRow>>,
    pub warnings: Vec<String>,
}

fn pct(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

/// Recomputes each record's interval when `ci_level` differs from the fitted 95%.
fn with_level(records: &[EvaluatedRecord], level: f64) -> Result<Vec<EvaluatedRecord>> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if level != DEFAULT_CI_LEVEL {
                r.dist.ci95 = credible_interval(&r.sample, level)?;
            }
            Ok(r)
        })
        .collect()
}

pub fn summarize(
    records: &[EvaluatedRecord],
    opts: &DiagnosticOptions,
) -> Result<DiagnosticsReport> {
    if records.is_empty() {
        return Err(Error::Data("cannot summarize zero records".into()));
    }
    let mut records = with_level(records, opts.ci_level)?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let n = records.len();
    let accuracy = |f: &dyn Fn(&EvaluatedRecord) -> u8| {
        pct(records.iter().filter(|r| f(r) == r.label).count(), n)
    };

    let outcomes: Vec<CiOutcome> = records.iter().map(ci_correct).collect();
    let ci_hits = outcomes.iter().filter(|o| o.correct).count();
    let centered_hits = outcomes.iter().filter(|o| o.correct && o.centered).count();
    let m = confusion(&records);

    let mut warnings = Vec::new();
    if m.tp + m.fn_ == 0.0 {
        warnings.push("no positive records: sensitivity set to 0".to_string());
    }
    if m.tn + m.fp == 0.0 {
        warnings.push("no negative records: specificity set to 0".to_string());
    }
    if ci_hits == 0 {
        warnings.push("no CI-correct predictions: centered/sided percentages set to 0".to_string());
    }
    warnings.sort();

    Ok(DiagnosticsReport {
        n_records: n as f64,
        ci_level: opts.ci_level,
        entropy_bins: opts.entropy_bins,
        mean_accuracy: accuracy(&|r| point_prediction(r, Statistic::Mean)),
        mode_accuracy: accuracy(&|r| point_prediction(r, Statistic::Mode)),
        median_accuracy: accuracy(&|r| point_prediction(r, Statistic::Median)),
        auc_accuracy: accuracy(&auc_prediction),
        ci95_accuracy: pct(ci_hits, n),
        pct_ci_correct_containing_half: pct(centered_hits, ci_hits),
        pct_ci_correct_either_side: pct(ci_hits - centered_hits, ci_hits),
        f_score: f_score(&m),
        sensitivity: m.sensitivity(),
        specificity: m.specificity(),
        confusion: m,
        calibration: calibration(&records, opts.calibration_bins)?,
        entropy_histograms: entropy_histograms(&records, opts.entropy_bins)?,
        agreement: if opts.agreement {
            Some(agreement_analysis(
                &records,
                opts.panel_size,
                opts.entropy_bins,
            )?)
        } else {
            None
        },
        warnings,
    })
}

fn mean_of(reports: &[DiagnosticsReport], f: impl Fn(&DiagnosticsReport) -> f64) -> f64 {
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

fn average_histogram(
    reports: &[DiagnosticsReport],
    pick: impl Fn(&EntropyHistograms) -> &Vec<HistogramBin>,
) -> Vec<HistogramBin> {
    let mut out = pick(&reports[0].entropy_histograms).clone();
    for (i, bin) in out.iter_mut().enumerate() {
        bin.count = mean_of(reports, |r| pick(&r.entropy_histograms)[i].count);
    }
    out
}

impl DiagnosticsReport {
    /// Averages reports from repeated train/test splits. Scalar measures and
    /// counts are arithmetic means; per-bin and per-level means are weighted
    /// by their counts.
    pub fn average(reports: &[DiagnosticsReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Data("no reports to average".into()))?;
        if reports.iter().any(|r| {
            r.calibration.len() != first.calibration.len()
                || r.ci_level != first.ci_level
                || r.entropy_bins != first.entropy_bins
                || r.agreement.is_some() != first.agreement.is_some()
        }) {
            return Err(Error::Config(
                "reports were produced with different options".into(),
            ));
        }
        let k = reports.len() as f64;
        let calibration = (0..first.calibration.len())
            .map(|i| {
                let bins: Vec<&CalibrationBin> =
                    reports.iter().map(|r| &r.calibration[i]).collect();
                let total: f64 = bins.iter().map(|b| b.count).sum();
                let weighted = |f: fn(&CalibrationBin) -> Option<f64>| {
                    (total > 0.0).then(|| {
                        bins.iter()
                            .map(|b| f(b).unwrap_or(0.0) * b.count)
                            .sum::<f64>()
                            / total
                    })
                };
                CalibrationBin {
                    bin_lo: first.calibration[i].bin_lo,
                    bin_hi: first.calibration[i].bin_hi,
                    mean_predicted: weighted(|b| b.mean_predicted),
                    frequency: weighted(|b| b.frequency),
                    count: total / k,
                }
            })
            .collect();
        let agreement = first.agreement.as_ref().map(|_| {
            let mut levels: BTreeMap<u32, Vec<&AgreementRow>> = BTreeMap::new();
            for r in reports {
                for row in r.agreement.as_ref().expect("checked above") {
                    levels.entry(row.opposing).or_default().push(row);
                }
            }
            levels
                .into_iter()
                .map(|(opposing, rows)| {
                    let total: f64 = rows.iter().map(|r| r.count).sum();
                    let weighted = |f: fn(&AgreementRow) -> f64| {
                        rows.iter().map(|r| f(r) * r.count).sum::<f64>() / total
                    };
                    AgreementRow {
                        level: agreement_level_name(opposing),
                        opposing,
                        count: total / k,
                        mean_entropy: weighted(|r| r.mean_entropy),
                        mean_point_entropy: weighted(|r| r.mean_point_entropy),
                        pct_centered: weighted(|r| r.pct_centered),
                    }
                })
                .collect()
        });
        let mut warnings: Vec<String> = reports
            .iter()
            .flat_map(|r| r.warnings.iter().cloned())
            .collect();
        warnings.sort();
        warnings.dedup();
        Ok(DiagnosticsReport {
            n_records: mean_of(reports, |r| r.n_records),
            ci_level: first.ci_level,
            entropy_bins: first.entropy_bins,
            mean_accuracy: mean_of(reports, |r| r.mean_accuracy),
            mode_accuracy: mean_of(reports, |r| r.mode_accuracy),
            median_accuracy: mean_of(reports, |r| r.median_accuracy),
            auc_accuracy: mean_of(reports, |r| r.auc_accuracy),
            ci95_accuracy: mean_of(reports, |r| r.ci95_accuracy),
            pct_ci_correct_containing_half: mean_of(reports, |r| r.pct_ci_correct_containing_half),
            pct_ci_correct_either_side: mean_of(reports, |r| r.pct_ci_correct_either_side),
            f_score: mean_of(reports, |r| r.f_score),
            sensitivity: mean_of(reports, |r| r.sensitivity),
            specificity: mean_of(reports, |r| r.specificity),
            confusion: ConfusionMatrix {
                tn: mean_of(reports, |r| r.confusion.tn),
                fp: mean_of(reports, |r| r.confusion.fp),
                fn_: mean_of(reports, |r| r.confusion.fn_),
                tp: mean_of(reports, |r| r.confusion.tp),
            },
            calibration,
            entropy_histograms: EntropyHistograms {
                all: average_histogram(reports, |h| &h.all),
                correct: average_histogram(reports, |h| &h.correct),
                incorrect: average_histogram(reports, |h| &h.incorrect),
            },
            agreement,
            warnings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn summary_csv(&self) -> String {
        let r2 = |v: f64| (v * 100.0).round() / 100.0;
        let rows: [(&str, f64); 16] = [
            ("n_records", self.n_records),
            ("mean_accuracy", r2(self.mean_accuracy)),
            ("mode_accuracy", r2(self.mode_accuracy)),
            ("median_accuracy", r2(self.median_accuracy)),
            ("auc_accuracy", r2(self.auc_accuracy)),
            ("ci95_accuracy", r2(self.ci95_accuracy)),
            (
                "pct_ci_correct_containing_half",
                r2(self.pct_ci_correct_containing_half),
            ),
            (
                "pct_ci_correct_either_side",
                r2(self.pct_ci_correct_either_side),
            ),
            ("f_score", self.f_score),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("tn", self.confusion.tn),
            ("fp", self.confusion.fp),
            ("fn", self.confusion.fn_),
            ("tp", self.confusion.tp),
            ("ci_level", self.ci_level),
        ];
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn calibration_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
        let mut out = String::from("bin_lo,bin_hi,mean_predicted,frequency,count\n");
        for b in &self.calibration {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.bin_lo,
                b.bin_hi,
                opt(b.mean_predicted),
                opt(b.frequency),
                b.count
            ));
        }
        out
    }

    pub fn agreement_csv(&self) -> Option<String> {
        self.agreement.as_ref().map(|rows| {
            let mut out =
                String::from("level,opposing,count,mean_entropy,mean_point_entropy,pct_centered\n");
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.level,
                    r.opposing,
                    r.count,
                    r.mean_entropy,
                    r.mean_point_entropy,
                    (r.pct_centered * 100.0).round() / 100.0
                ));
            }
            out
        })
    }

    /// Writes `summary.csv`, `calibration.csv`, `entropy_{all,correct,incorrect}.csv`
    /// and, when present, `agreement.csv`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("calibration.csv"), self.calibration_csv())?;
        for (name, hist) in [
            ("entropy_all.csv", &self.entropy_histograms.all),
            ("entropy_correct.csv", &self.entropy_histograms.correct),
            ("entropy_incorrect.csv", &self.entropy_histograms.incorrect),
        ] {
            fs::write(dir.join(name), histogram_csv(hist))?;
        }
        if let Some(csv) = self.agreement_csv() {
            fs::write(dir.join("agreement.csv"), csv)?;
        }
        Ok(())
    }
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for b in bins {
        out.push_str(&format!("{},{},{}\n", b.bin_lo, b.bin_hi, b.count));
    }
    out
}

/// Pretty JSON with object keys in sorted order.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}
