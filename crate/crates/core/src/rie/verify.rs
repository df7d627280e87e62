use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pb::encode_pb;
use super::pc::encode_pc;
use super::pm::encode_pm;
use super::ps::encode_ps;
use super::{RiePb, RiePc, RiePm, RiePs, RieStep};
use crate::baselines::gd_pb::PbStepParams;
use crate::baselines::*;
use crate::error::{contract, Result};

/// Instance generation and solver options for the equivalence check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivalenceConfig {
    /// Largest sizes; trial `t` uses `1 + t % users` users when `vary_users`.
    pub sizes: Sizes,
    pub vary_users: bool,
    pub constants: Constants,
    pub seed: u64,
    pub pb_form: PbUpdateForm,
    pub pb_step: f64,
    pub pb_penalty: f64,
    pub pm_first_sum: PmFirstSumChannel,
    /// Largest PM channel spectral norm after normalization.
    pub pm_spectral_norm: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            sizes: Sizes {
                users: 4,
                bs_antennas: 8,
                ue_antennas: 2,
                streams: 2,
            },
            vary_users: true,
            constants: Constants {
                sigma2: 0.1,
                ..Constants::default()
            },
            seed: 0,
            pb_form: PbUpdateForm::Descent,
            pb_step: 1e-2,
            pb_penalty: 1.0,
            pm_first_sum: PmFirstSumChannel::Own,
            pm_spectral_norm: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialTrace {
    pub seed: u64,
    pub users: usize,
    /// Worst elementwise deviation after each iteration.
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub variant: Variant,
    pub pass: bool,
    pub worst_error: f64,
    pub tol: f64,
    pub trials: Vec<TrialTrace>,
}

fn nan_as_inf(x: Option<f64>) -> f64 {
    match x {
        Some(v) if !v.is_nan() => v,
        _ => f64::INFINITY,
    }
}

fn trial(variant: Variant, cfg: &EquivalenceConfig, t: usize, iters: usize) -> Result<TrialTrace> {
    let seed = cfg.seed.wrapping_add(t as u64);
    let users = if cfg.vary_users {
        1 + t % cfg.sizes.users
    } else {
        cfg.sizes.users
    };
    let sizes = Sizes { users, ..cfg.sizes };
    let inst = generate_channels(variant, sizes, &ChannelModel::Rayleigh, cfg.constants, seed)?;
    let mut errors = Vec::with_capacity(iters);
    match inst {
        ProblemInstance::Pb(inst) => {
            let params = PbStepParams {
                n0: inst.n0,
                s0: inst.s0,
                p_max: inst.p_max,
                step: cfg.pb_step,
                penalty: cfg.pb_penalty,
                b_floor: GdConfig::default().b_floor,
                form: cfg.pb_form,
            };
            let rie = RiePb::new(params)?;
            let mut raw = PbState::initial(&inst);
            let mut d = encode_pb(&inst, &raw);
            for _ in 0..iters {
                raw = gd_pb_step(&inst, &raw, &params);
                d = rie.step(&d)?;
                errors.push(nan_as_inf(encode_pb(&inst, &raw).max_abs_diff(&d)));
            }
        }
        ProblemInstance::Ps(inst) => {
            let rie = RiePs::new(inst.p_max, inst.sigma2)?;
            let mut raw = PsState::initial(&inst);
            let mut d = encode_ps(&inst, &raw);
            for _ in 0..iters {
                raw = wmmse_ps_step(&inst, &raw);
                d = rie.step(&d)?;
                errors.push(nan_as_inf(encode_ps(&inst, &raw).max_abs_diff(&d)));
            }
        }
        ProblemInstance::Pm(mut inst) => {
            pm_normalize_channels(&mut inst, cfg.pm_spectral_norm);
            let rie = RiePm::new(users, inst.streams, inst.ue_antennas(), cfg.pm_first_sum)?;
            let mut raw = PmState::initial(&inst);
            let mut d = encode_pm(&inst, &raw);
            for _ in 0..iters {
                raw = wmmse_pm_step(&inst, &raw, cfg.pm_first_sum)?;
                d = rie.step(&d)?;
                errors.push(nan_as_inf(encode_pm(&inst, &raw).max_abs_diff(&d)));
            }
        }
        ProblemInstance::Pc(inst) => {
            let rie = RiePc::new(inst.p_max, inst.sigma2)?;
            let mut raw = PcState::initial(&inst.gain, inst.p_max, inst.sigma2);
            let mut d = encode_pc(&inst.gain, &raw);
            for _ in 0..iters {
                raw = wmmse_pc_step(&inst, &raw);
                d = rie.step(&d)?;
                errors.push(nan_as_inf(encode_pc(&inst.gain, &raw).max_abs_diff(&d)));
            }
        }
    }
    Ok(TrialTrace { seed, users, errors })
}

/// Runs the raw solver step and its re-expressed form side by side from
/// identical states on fresh random instances.
pub fn verify_rie_equivalence(
    variant: Variant,
    trials: usize,
    iters: usize,
    tol: f64,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    if trials == 0 {
        return Err(contract("at least one trial is required"));
    }
    let traces: Vec<TrialTrace> = (0..trials)
        .into_par_iter()
        .map(|t| trial(variant, cfg, t, iters))
        .collect::<Result<_>>()?;
    let worst = traces
        .iter()
        .flat_map(|t| t.errors.iter().copied())
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        variant,
        pass: worst <= tol,
        worst_error: worst,
        tol,
        trials: traces,
    })
}
