//! Glue between the trained network and the diagnostics.

use crate::datasets::DecisionRecord;
use crate::diagnostics::EvaluatedRecord;
use crate::elicitation::{fit_beta_mom, mc_sample};
use crate::error::{Error, Result};
use crate::net::{NetworkParams, NetworkSpec};

/// Samples and fits every record. Record `i` uses Monte-Carlo stream `i`, so
/// results depend only on `(params, records order, seed)`.
pub fn elicit_records(
    spec: &NetworkSpec,
    params: &NetworkParams,
    records: &[DecisionRecord],
    samples: usize,
    seed: u64,
) -> Result<Vec<EvaluatedRecord>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let index = u32::try_from(i).map_err(|_| Error::Config("too many records".into()))?;
            let sample = mc_sample(spec, params, &r.features, samples, seed, index)?;
            let dist = fit_beta_mom(&sample)?;
            Ok(EvaluatedRecord {
                id: r.id.clone(),
                label: r.label,
                sample,
                dist,
                agreement: r.agreement,
            })
        })
        .collect()
}
