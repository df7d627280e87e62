use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::GnnModel;
use super::ps::{predict_precoders, ps_dataset, UserCount};
use crate::baselines::{wmmse_ps_solve, ChannelModel, CMat, PsInstance};
use crate::error::{contract, Result};

/// WMMSE iteration budget for the reference SE.
pub const REFERENCE_ITERS: usize = 500;
pub const REFERENCE_TOL: f64 = 1e-8;

/// Sum SE reached by WMMSE on each instance.
pub fn wmmse_reference(test: &[PsInstance]) -> Vec<f64> {
    test.par_iter()
        .map(|inst| {
            let s = wmmse_ps_solve(inst, REFERENCE_ITERS, REFERENCE_TOL);
            inst.sum_se(&s.w)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioReport {
    pub mean: f64,
    /// 95% percentile-bootstrap interval of the mean.
    pub ci_low: f64,
    pub ci_high: f64,
    pub ratios: Vec<f64>,
    /// Samples skipped because the reference SE was zero.
    pub excluded: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Mean of `values` with a percentile-bootstrap 95% interval.
pub fn bootstrap_mean(values: &[f64], seed: u64) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    (mean, at(0.025), at(0.975))
}

/// Ratios of the SE of `precoders` to `reference`, per instance.
pub fn se_ratios(test: &[PsInstance], precoders: &[CMat], reference: &[f64], seed: u64) -> Result<RatioReport> {
    if test.len() != precoders.len() || test.len() != reference.len() {
        return Err(contract("test set, precoders and reference differ in length"));
    }
    let mut ratios = Vec::with_capacity(test.len());
    let mut excluded = 0;
    for ((inst, w), &r) in test.iter().zip(precoders).zip(reference) {
        if r > 0.0 {
            ratios.push(inst.sum_se(w) / r);
        } else {
            excluded += 1;
        }
    }
    let (mean, ci_low, ci_high) = bootstrap_mean(&ratios, seed);
    Ok(RatioReport {
        mean,
        ci_low,
        ci_high,
        ratios,
        excluded,
    })
}

/// Model precoders for every instance, batched by size and returned in input order.
pub fn model_precoders(model: &GnnModel, test: &[PsInstance]) -> Result<Vec<CMat>> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, t) in test.iter().enumerate() {
        groups.entry(t.h.shape()).or_default().push(i);
    }
    let mut out: Vec<Option<CMat>> = vec![None; test.len()];
    for idx in groups.values() {
        for part in idx.chunks(64) {
            let batch: Vec<&PsInstance> = part.iter().map(|&i| &test[i]).collect();
            for (&i, w) in part.iter().zip(predict_precoders(model, &batch)?) {
                out[i] = Some(w);
            }
        }
    }
    Ok(out.into_iter().map(|w| w.unwrap()).collect())
}

/// SE ratio of `model` against the WMMSE `reference` on `test`.
pub fn eval_se_ratio(model: &GnnModel, test: &[PsInstance], reference: &[f64], seed: u64) -> Result<RatioReport> {
    let w = model_precoders(model, test)?;
    se_ratios(test, &w, reference, seed)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub users: usize,
    pub mean_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub excluded: usize,
}

/// Test-set settings for size generalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationSetup {
    pub antennas: usize,
    pub samples_per_size: usize,
    pub p_max: f64,
    pub sigma2: f64,
    pub channel: ChannelModel,
    pub seed: u64,
}

/// Mean SE ratio at each user count, without retraining.
pub fn eval_size_generalization(
    model: &GnnModel,
    test_users: &[usize],
    setup: &GeneralizationSetup,
) -> Result<Vec<GeneralizationRow>> {
    test_users
        .iter()
        .map(|&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ ((k as u64) << 32));
            let test = ps_dataset(
                setup.samples_per_size,
                &UserCount::Fixed { users: k },
                setup.antennas,
                setup.p_max,
                setup.sigma2,
                &setup.channel,
                &mut rng,
            )?;
            let reference = wmmse_reference(&test);
            let r = eval_se_ratio(model, &test, &reference, setup.seed)?;
            Ok(GeneralizationRow {
                users: k,
                mean_ratio: r.mean,
                ci_low: r.ci_low,
                ci_high: r.ci_high,
                excluded: r.excluded,
            })
        })
        .collect()
}
