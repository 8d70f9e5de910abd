//! From a trained network to an elicited Beta distribution.
//!
//! [`mc_sample`] runs repeated dropout-active forward passes to collect a
//! sample of probabilities; [`fit_beta_mom`] turns that sample into a
//! `Beta(alpha, beta)` by matching the first two moments. The remaining
//! functions are the distributional quantities the diagnostics are built on.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::net::{forward, Mode, NetworkParams, NetworkSpec};
use crate::rng::{stream, stream_id, Domain};

pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_ENTROPY_BINS: usize = 10;
/// Concentration `alpha + beta` of the surrogate for zero-variance samples.
pub const MAX_CONCENTRATION: f64 = 1e6;
/// Concentration of the surrogate for samples wider than any Beta allows.
pub const MIN_CONCENTRATION: f64 = 1e-6;
const MIN_VARIANCE: f64 = 1e-12;

/// Probabilities from `T` Monte-Carlo dropout passes over one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySample {
    pub values: Vec<f64>,
    pub seed: u64,
    /// Stream id the passes were drawn from.
    pub stream: u64,
}

impl ProbabilitySample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let s = ProbabilitySample {
            values,
            seed: 0,
            stream: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::Domain(format!(
                "a probability sample needs at least 2 values, got {}",
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("sample value {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased (n - 1) variance.
    pub fn variance(&self) -> f64 {
        // Shifted by the first value so identical samples give exactly zero.
        let shift = self.values[0];
        let n = self.values.len() as f64;
        let m = self.values.iter().map(|v| v - shift).sum::<f64>() / n;
        self.values
            .iter()
            .map(|v| (v - shift - m).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    }

    pub fn median(&self) -> f64 {
        quantile_sorted(&self.sorted(), 0.5)
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// One value per line.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|v| format!("{v}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitedDistribution {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "mean")]
    pub sample_mean: f64,
    #[serde(rename = "var")]
    pub sample_var: f64,
    pub ci95: (f64, f64),
    pub degenerate: bool,
    #[serde(rename = "T")]
    pub samples: usize,
    pub seed: u64,
}

impl ElicitedDistribution {
    pub fn beta_mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Probability of the positive class from a head's output vector.
pub fn positive_probability(output: &[f64]) -> f64 {
    if output.len() == 1 {
        output[0]
    } else {
        output[1]
    }
}

/// `samples` McSample-mode forward passes of `input`, drawn from the stream
/// `(seed, Mc, index)`.
pub fn mc_sample(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &[f64],
    samples: usize,
    seed: u64,
    index: u32,
) -> Result<ProbabilitySample> {
    if samples < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 Monte-Carlo passes, got {samples}"
        )));
    }
    let mut rng = stream(seed, Domain::Mc, index);
    let values = (0..samples)
        .map(|_| {
            forward(spec, params, input, Mode::McSample, Some(&mut rng))
                .map(|p| positive_probability(&p))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProbabilitySample {
        values,
        seed,
        stream: stream_id(Domain::Mc, index),
    })
}

/// Method-of-moments Beta fit: with sample mean `m` and unbiased variance `v`,
/// `c = m(1-m)/v - 1`, `alpha = m c`, `beta = (1-m) c`.
///
/// Samples with (near) zero variance or variance at or above `m(1-m)` get a
/// flagged surrogate with mean `m` and concentration [`MAX_CONCENTRATION`] or
/// [`MIN_CONCENTRATION`] respectively.
pub fn fit_beta_mom(sample: &ProbabilitySample) -> Result<ElicitedDistribution> {
    sample.validate()?;
    let m = sample.mean();
    let v = sample.variance();
    let ci95 = credible_interval(sample, DEFAULT_CI_LEVEL)?;
    let (alpha, beta, degenerate) = moments_to_beta(m, v);
    Ok(ElicitedDistribution {
        alpha,
        beta,
        sample_mean: m,
        sample_var: v,
        ci95,
        degenerate,
        samples: sample.len(),
        seed: sample.seed,
    })
}

/// `(alpha, beta, degenerate)` for mean `m` and variance `v`.
pub fn moments_to_beta(m: f64, v: f64) -> (f64, f64, bool) {
    let bound = m * (1.0 - m);
    if m > 0.0 && m < 1.0 && v > MIN_VARIANCE && v < bound {
        let c = bound / v - 1.0;
        return (m * c, (1.0 - m) * c, false);
    }
    let concentration = if v <= MIN_VARIANCE {
        MAX_CONCENTRATION
    } else {
        MIN_CONCENTRATION
    };
    let mc = m.clamp(1e-9, 1.0 - 1e-9);
    (mc * concentration, (1.0 - mc) * concentration, true)
}

fn check_params(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::Domain(format!(
            "Beta({alpha}, {beta}) needs positive finite parameters"
        )));
    }
    Ok(())
}

fn check_unit(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{x} outside [0, 1]")));
    }
    Ok(())
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn beta_pdf(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    check_unit(x)?;
    let edge = |shape: f64, other: f64| -> f64 {
        if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            (-ln_beta_fn(1.0, other)).exp()
        } else {
            0.0
        }
    };
    if x == 0.0 {
        return Ok(edge(alpha, beta));
    }
    if x == 1.0 {
        return Ok(edge(beta, alpha));
    }
    Ok(((alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta_fn(alpha, beta)).exp())
}

/// Regularized incomplete beta `I_x(alpha, beta)`.
pub fn beta_cdf(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    check_unit(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = alpha * x.ln() + beta * (-x).ln_1p() - ln_beta_fn(alpha, beta);
    let value = if x < (alpha + 1.0) / (alpha + beta + 2.0) {
        (ln_front.exp() * beta_continued_fraction(alpha, beta, x)) / alpha
    } else {
        1.0 - (ln_front.exp() * beta_continued_fraction(beta, alpha, 1.0 - x)) / beta
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    // Convergence takes O(sqrt(max(a, b))) terms.
    let max_iter = 200 + 20 * (a.max(b).sqrt() as usize);
    for m in 1..=max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Inverse of [`beta_cdf`] by bisection.
pub fn beta_quantile(alpha: f64, beta: f64, p: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    check_unit(p)?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_cdf(alpha, beta, mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equal-tailed interval from the fitted Beta's quantiles. Exposed for
/// comparison only; the diagnostics use the sample interval.
pub fn beta_credible_interval(alpha: f64, beta: f64, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let tail = (1.0 - level) / 2.0;
    Ok((
        beta_quantile(alpha, beta, tail)?,
        beta_quantile(alpha, beta, 1.0 - tail)?,
    ))
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "credible level {level} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Linear interpolation between order statistics at position `(n-1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Empirical percentile interval at `(1-level)/2` and `1-(1-level)/2`.
pub fn credible_interval(sample: &ProbabilitySample, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let sorted = sample.sorted();
    let tail = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&sorted, tail),
        quantile_sorted(&sorted, 1.0 - tail),
    ))
}

/// Index of the equal-width bin on `[0, 1]` holding `x`; 1.0 lands in the last bin.
pub fn bin_index(x: f64, bins: usize) -> usize {
    ((x * bins as f64).floor() as usize).min(bins - 1)
}

pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        counts[bin_index(v, bins)] += 1;
    }
    counts
}

/// Shannon entropy of the sample's `bins`-bin histogram, divided by `ln bins`.
pub fn distribution_entropy(sample: &ProbabilitySample, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Domain(format!(
            "entropy needs at least 2 bins, got {bins}"
        )));
    }
    let counts: Vec<usize> = histogram(&sample.values, bins)
        .into_iter()
        .filter(|&c| c > 0)
        .collect();
    // Equal occupied counts give exactly ln(occupied bins).
    let h = if counts.iter().all(|&c| c == counts[0]) {
        (counts.len() as f64).ln()
    } else {
        let n = sample.values.len() as f64;
        n.ln()
            - counts
                .iter()
                .map(|&c| c as f64 * (c as f64).ln())
                .sum::<f64>()
                / n
    };
    Ok((h / (bins as f64).ln()).clamp(0.0, 1.0))
}

/// Binary entropy in bits of the probability `q`.
pub fn point_entropy(q: f64) -> Result<f64> {
    check_unit(q)?;
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok((term(q) + term(1.0 - q)).clamp(0.0, 1.0))
}

/// Probability masses over `bins` equal-width bins of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain(
                "bin probabilities must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "bin probabilities sum to {sum}, not 1"
            )));
        }
        Ok(DiscreteDistribution { probs })
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    /// Bin masses `cdf(right) - cdf(left)`.
    pub fn from_beta(alpha: f64, beta: f64, bins: usize) -> Result<Self> {
        check_bins(bins)?;
        let edges = (0..=bins)
            .map(|i| beta_cdf(alpha, beta, i as f64 / bins as f64))
            .collect::<Result<Vec<f64>>>()?;
        Ok(DiscreteDistribution {
            probs: edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect(),
        })
    }

    /// Bin frequencies of the sample.
    pub fn from_sample(sample: &ProbabilitySample, bins: usize) -> Result<Self> {
        check_bins(bins)?;
        let n = sample.values.len() as f64;
        Ok(DiscreteDistribution {
            probs: histogram(&sample.values, bins)
                .into_iter()
                .map(|c| c as f64 / n)
                .collect(),
        })
    }
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::Domain(format!("need at least 2 bins, got {bins}")));
    }
    Ok(())
}

/// Discretizes an elicited distribution through its Beta cdf, falling back to
/// the sample frequencies when the fit is degenerate.
pub fn discretize(
    dist: &ElicitedDistribution,
    sample: &ProbabilitySample,
    bins: usize,
) -> Result<DiscreteDistribution> {
    if dist.degenerate {
        DiscreteDistribution::from_sample(sample, bins)
    } else {
        DiscreteDistribution::from_beta(dist.alpha, dist.beta, bins)
    }
}

/// `sum Q ln(Q / P)` over the bins where `Q > 0`, in nats.
pub fn kl_divergence(q: &DiscreteDistribution, p: &DiscreteDistribution) -> Result<f64> {
    if q.bins() != p.bins() {
        return Err(Error::Shape(format!(
            "KL over {} vs {} bins",
            q.bins(),
            p.bins()
        )));
    }
    let mut total = 0.0;
    for (i, (&qi, &pi)) in q.probs.iter().zip(&p.probs).enumerate() {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Err(Error::Support(format!(
                    "bin {i}: Q has mass {qi} where P has none"
                )));
            }
            total += qi * (qi / pi).ln();
        }
    }
    Ok(total.max(0.0))
}
