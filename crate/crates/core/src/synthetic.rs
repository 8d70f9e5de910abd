//! Synthetic decision records with a known ground truth.
//!
//! Each record gets standard-normal features and a true probability
//! `p_true = f(features)`. A panel of `K` simulated experts then votes: expert
//! `e` carries a persistent offset drawn once from `N(0, expert_noise)` and
//! votes 1 with probability `clamp(p_true + offset_e, 0, 1)`. The label is the
//! majority vote and the agreement count is the size of the majority.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::datasets::{min_agreement, DecisionRecord};
use crate::diagnostics::EvaluatedRecord;
use crate::elicitation::{
    discretize, distribution_entropy, kl_divergence, DiscreteDistribution, DEFAULT_ENTROPY_BINS,
};
use crate::error::{Error, Result};
use crate::net::sigmoid;
use crate::rng::{stream, Domain};

/// Concentration of the reference Beta placed around each `p_true`.
pub const REFERENCE_CONCENTRATION: f64 = 50.0;
pub const DEFAULT_VALIDATION_BINS: usize = 20;
/// Mass mixed into every reference bin so the KL support condition holds.
const REFERENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthFn {
    /// `sigmoid(bias + weights · x)`.
    Logistic {
        weights: Vec<f64>,
        bias: f64,
    },
    /// Step function of the first feature: `levels[floor(Φ(x0) * len)]`, so
    /// each level covers an equal share of records.
    Piecewise {
        levels: Vec<f64>,
    },
    Constant {
        p: f64,
    },
}

impl TruthFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TruthFn::Logistic { weights, bias } => {
                sigmoid(bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            }
            TruthFn::Piecewise { levels } => {
                let u = 0.5 * erfc(-x[0] / std::f64::consts::SQRT_2);
                levels[((u * levels.len() as f64) as usize).min(levels.len() - 1)]
            }
            TruthFn::Constant { p } => *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    #[serde(default = "default_panel_size")]
    pub panel_size: u32,
    #[serde(default)]
    pub expert_noise: f64,
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub n_features: usize,
    pub truth: TruthFn,
}

fn default_panel_size() -> u32 {
    7
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.panel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "panel size {} must be odd",
                self.panel_size
            )));
        }
        if self.n < 1 {
            return Err(Error::Config("record count n must be at least 1".into()));
        }
        if !(self.expert_noise >= 0.0 && self.expert_noise.is_finite()) {
            return Err(Error::Config(format!(
                "expert_noise {} must be nonnegative",
                self.expert_noise
            )));
        }
        match &self.truth {
            TruthFn::Logistic { weights, .. } if weights.len() != self.n_features => {
                return Err(Error::Config(format!(
                    "logistic truth has {} weights for {} features",
                    weights.len(),
                    self.n_features
                )))
            }
            TruthFn::Piecewise { levels } if levels.is_empty() || self.n_features == 0 => {
                return Err(Error::Config(
                    "piecewise truth needs levels and at least one feature".into(),
                ))
            }
            TruthFn::Piecewise { levels } if levels.iter().any(|p| !(0.0..=1.0).contains(p)) => {
                return Err(Error::Config(
                    "piecewise levels must be probabilities".into(),
                ))
            }
            TruthFn::Constant { p } if !(0.0..=1.0).contains(p) => {
                return Err(Error::Config(format!("constant p {p} outside [0, 1]")))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.n_features).map(|i| format!("x{i}")).collect()
    }
}

/// True probabilities, aligned with the generated records.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<String>,
    pub p_true: Vec<f64>,
}

impl GroundTruth {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,p_true\n");
        for (id, p) in self.ids.iter().zip(&self.p_true) {
            out.push_str(&format!("{id},{p}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let (mut ids, mut p_true) = (Vec::new(), Vec::new());
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::Data(format!("truth row {}: {e}", i + 1)))?;
            ids.push(row.get(0).unwrap_or("").to_string());
            let p: f64 = row
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Data(format!("truth row {}: bad p_true", i + 1)))?;
            p_true.push(p);
        }
        Ok(GroundTruth { ids, p_true })
    }
}

/// Persistent per-expert offsets for a panel.
pub fn expert_offsets(cfg: &PanelConfig) -> Vec<f64> {
    let mut rng = stream(cfg.seed, Domain::Synth, 0);
    if cfg.expert_noise == 0.0 {
        return vec![0.0; cfg.panel_size as usize];
    }
    let normal = Normal::new(0.0, cfg.expert_noise).expect("validated noise");
    (0..cfg.panel_size)
        .map(|_| normal.sample(&mut rng))
        .collect()
}

/// Votes of one panel on a case with probability `p_true`; returns the
/// number of votes for label 1.
fn panel_votes<R: Rng + ?Sized>(p_true: f64, offsets: &[f64], rng: &mut R) -> u32 {
    offsets
        .iter()
        .map(|off| {
            let p = (p_true + off).clamp(0.0, 1.0);
            u32::from(rng.random::<f64>() < p)
        })
        .sum()
}

/// Generates `cfg.n` records. Record `i` draws from its own sub-stream, so
/// the output does not depend on generation order.
pub fn generate(cfg: &PanelConfig) -> Result<(Vec<DecisionRecord>, GroundTruth)> {
    cfg.validate()?;
    let offsets = expert_offsets(cfg);
    let k = cfg.panel_size;
    let mut records = Vec::with_capacity(cfg.n);
    let mut truth = GroundTruth {
        ids: Vec::with_capacity(cfg.n),
        p_true: Vec::with_capacity(cfg.n),
    };
    for i in 0..cfg.n {
        let index = u32::try_from(i + 1).map_err(|_| Error::Config("too many records".into()))?;
        let mut rng = stream(cfg.seed, Domain::Synth, index);
        let features: Vec<f64> = (0..cfg.n_features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let p = cfg.truth.eval(&features);
        let ones = panel_votes(p, &offsets, &mut rng);
        let label = u8::from(2 * ones > k);
        let agreement = ones.max(k - ones);
        debug_assert!(agreement >= min_agreement(k));
        let id = format!("s{i:06}");
        truth.ids.push(id.clone());
        truth.p_true.push(p);
        records.push(DecisionRecord {
            id,
            features,
            label,
            agreement: Some(agreement),
        });
    }
    Ok((records, truth))
}

/// Reference distribution `Beta(c p, c (1 - p))` around a true probability,
/// discretized and floored so every bin has mass.
pub fn reference_distribution(p_true: f64, bins: usize) -> Result<DiscreteDistribution> {
    let p = p_true.clamp(1e-3, 1.0 - 1e-3);
    let base = DiscreteDistribution::from_beta(
        p * REFERENCE_CONCENTRATION,
        (1.0 - p) * REFERENCE_CONCENTRATION,
        bins,
    )?;
    let norm = 1.0 + bins as f64 * REFERENCE_FLOOR;
    Ok(DiscreteDistribution {
        probs: base
            .probs
            .iter()
            .map(|q| (q + REFERENCE_FLOOR) / norm)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_record_kl: Vec<f64>,
    pub mean_kl: f64,
    /// Fraction of records whose 95% interval contains `p_true`.
    pub coverage: f64,
    /// Mean distribution entropy of the full-agreement group minus that of
    /// the most-opposed group; `None` when either group is empty.
    pub entropy_trend: Option<f64>,
}

/// Scores elicited distributions against the ground truth.
pub fn oracle_validate(
    records: &[EvaluatedRecord],
    truth: &GroundTruth,
    bins: usize,
    panel_size: u32,
) -> Result<ValidationReport> {
    if records.len() != truth.p_true.len() {
        return Err(Error::Data(format!(
            "{} elicited records but {} truth values",
            records.len(),
            truth.p_true.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::Data("nothing to validate".into()));
    }
    let mut per_record_kl = Vec::with_capacity(records.len());
    let mut covered = 0usize;
    for (r, &p) in records.iter().zip(&truth.p_true) {
        let q = discretize(&r.dist, &r.sample, bins)?;
        per_record_kl.push(kl_divergence(&q, &reference_distribution(p, bins)?)?);
        if r.dist.ci95.0 <= p && p <= r.dist.ci95.1 {
            covered += 1;
        }
    }
    let n = records.len() as f64;

    let most_opposed = panel_size - min_agreement(panel_size);
    let group_mean = |opposing: u32| -> Result<Option<f64>> {
        let members: Vec<&EvaluatedRecord> = records
            .iter()
            .filter(|r| r.agreement.map(|a| panel_size.saturating_sub(a)) == Some(opposing))
            .collect();
        if members.is_empty() {
            return Ok(None);
        }
        let total = members
            .iter()
            .map(|r| distribution_entropy(&r.sample, DEFAULT_ENTROPY_BINS))
            .sum::<Result<f64>>()?;
        Ok(Some(total / members.len() as f64))
    };
    let entropy_trend = match (group_mean(0)?, group_mean(most_opposed)?) {
        (Some(full), Some(opposed)) => Some(full - opposed),
        _ => None,
    };

    Ok(ValidationReport {
        mean_kl: per_record_kl.iter().sum::<f64>() / n,
        per_record_kl,
        coverage: covered as f64 / n,
        entropy_trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elicitation::{fit_beta_mom, ProbabilitySample};
    use rand_distr::Beta;

    fn cfg(truth: TruthFn, noise: f64, n: usize) -> PanelConfig {
        PanelConfig {
            panel_size: 7,
            expert_noise: noise,
            seed: 3,
            n,
            n_features: 2,
            truth,
        }
    }

    #[test]
    fn certain_truth_gives_unanimity() {
        let (records, truth) = generate(&cfg(TruthFn::Constant { p: 1.0 }, 0.0, 50)).unwrap();
        assert!(records
            .iter()
            .all(|r| r.label == 1 && r.agreement == Some(7)));
        assert!(truth.p_true.iter().all(|&p| p == 1.0));
        let (records, _) = generate(&cfg(TruthFn::Constant { p: 0.0 }, 0.0, 50)).unwrap();
        assert!(records
            .iter()
            .all(|r| r.label == 0 && r.agreement == Some(7)));
    }

    #[test]
    fn unanimity_frequency_at_half() {
        let n = 100_000;
        let (records, _) = generate(&cfg(TruthFn::Constant { p: 0.5 }, 0.0, n)).unwrap();
        let full = records.iter().filter(|r| r.agreement == Some(7)).count() as f64 / n as f64;
        let p = 2.0 * 0.5f64.powi(7);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (full - p).abs() <= 4.0 * sigma,
            "observed {full}, expected {p}"
        );
    }

    #[test]
    fn deterministic_and_consistent() {
        let c = cfg(
            TruthFn::Logistic {
                weights: vec![1.5, -0.7],
                bias: 0.1,
            },
            0.1,
            300,
        );
        let (a, ta) = generate(&c).unwrap();
        let (b, tb) = generate(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        for r in &a {
            let agreement = r.agreement.unwrap();
            assert!((4..=7).contains(&agreement));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(TruthFn::Constant { p: 0.3 }, 0.0, 10);
        c.panel_size = 6;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        let c = cfg(
            TruthFn::Logistic {
                weights: vec![1.0],
                bias: 0.0,
            },
            0.0,
            10,
        );
        assert!(c.validate().is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let (_, truth) = generate(&cfg(
            TruthFn::Piecewise {
                levels: vec![0.1, 0.5, 0.9],
            },
            0.0,
            20,
        ))
        .unwrap();
        assert_eq!(GroundTruth::from_csv(&truth.to_csv()).unwrap(), truth);
    }

    #[test]
    fn exact_reference_has_zero_kl() {
        let p_true = [0.2, 0.5, 0.77];
        let records: Vec<EvaluatedRecord> = p_true
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let sample = ProbabilitySample::new(vec![p - 0.01, p + 0.01]).unwrap();
                let mut dist = fit_beta_mom(&sample).unwrap();
                dist.alpha = p * REFERENCE_CONCENTRATION;
                dist.beta = (1.0 - p) * REFERENCE_CONCENTRATION;
                EvaluatedRecord {
                    id: i.to_string(),
                    label: 1,
                    sample,
                    dist,
                    agreement: Some(7),
                }
            })
            .collect();
        let truth = GroundTruth {
            ids: vec!["0".into(), "1".into(), "2".into()],
            p_true: p_true.to_vec(),
        };
        let v = oracle_validate(&records, &truth, 20, 7).unwrap();
        assert!(v.mean_kl <= 1e-9, "mean KL {}", v.mean_kl);
        assert_eq!(v.coverage, 1.0);
        assert!(oracle_validate(&records[..2], &truth, 20, 7).is_err());
    }

    /// A known-correct elicitor: after observing `m` Bernoulli(p) votes, it
    /// samples the conjugate posterior `Beta(1 + k, 1 + m - k)`.
    #[test]
    fn calibrated_elicitor_coverage() {
        let p = 0.3;
        let m = 40;
        let n = 10_000;
        let mut rng = stream(99, Domain::Synth, 0);
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let k = (0..m).filter(|_| rng.random::<f64>() < p).count() as f64;
            let post = Beta::new(1.0 + k, 1.0 + m as f64 - k).unwrap();
            let values: Vec<f64> = (0..100).map(|_| post.sample(&mut rng)).collect();
            let sample = ProbabilitySample::new(values).unwrap();
            let dist = fit_beta_mom(&sample).unwrap();
            records.push(EvaluatedRecord {
                id: i.to_string(),
                label: 0,
                sample,
                dist,
                agreement: None,
            });
        }
        let truth = GroundTruth {
            ids: (0..n).map(|i| i.to_string()).collect(),
            p_true: vec![p; n],
        };
        let v = oracle_validate(&records, &truth, 20, 7).unwrap();
        assert!(
            (0.90..=0.99).contains(&v.coverage),
            "coverage {}",
            v.coverage
        );
        assert!(v.entropy_trend.is_none());
    }
}
