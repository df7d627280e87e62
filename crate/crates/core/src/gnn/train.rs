use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::GnnModel;
use super::ps::{ps_batch_loss, ps_dataset, UserCount};
use crate::baselines::{ChannelModel, PsInstance, Variant};
use crate::error::{contract, Error, Result};
use crate::tensor::{Tape, Tensor};

fn default_variant() -> Variant {
    Variant::Ps
}

/// Unsupervised training settings. The seed has no default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    #[serde(default = "TrainConfig::default_samples")]
    pub train_samples: usize,
    #[serde(default = "TrainConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default = "TrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_lr")]
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch.
    #[serde(default = "TrainConfig::default_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub users: UserCount,
    #[serde(default = "TrainConfig::default_antennas")]
    pub antennas: usize,
    #[serde(default = "TrainConfig::default_p_max")]
    pub p_max: f64,
    #[serde(default = "TrainConfig::default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "TrainConfig::default_channel")]
    pub channel: ChannelModel,
}

impl TrainConfig {
    fn default_samples() -> usize {
        1000
    }
    fn default_batch() -> usize {
        32
    }
    fn default_epochs() -> usize {
        40
    }
    fn default_lr() -> f64 {
        1e-3
    }
    fn default_decay() -> f64 {
        1.0
    }
    fn default_antennas() -> usize {
        8
    }
    fn default_p_max() -> f64 {
        1.0
    }
    fn default_sigma2() -> f64 {
        0.1
    }
    fn default_channel() -> ChannelModel {
        ChannelModel::Rayleigh
    }

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            train_samples: Self::default_samples(),
            batch_size: Self::default_batch(),
            epochs: Self::default_epochs(),
            learning_rate: Self::default_lr(),
            lr_decay: Self::default_decay(),
            variant: Variant::Ps,
            users: UserCount::default(),
            antennas: Self::default_antennas(),
            p_max: Self::default_p_max(),
            sigma2: Self::default_sigma2(),
            channel: Self::default_channel(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant != Variant::Ps {
            return Err(contract(format!(
                "training is implemented for PS precoding, not {}",
                self.variant.tag()
            )));
        }
        if self.train_samples == 0 || self.batch_size == 0 || self.epochs == 0 || self.antennas == 0 {
            return Err(contract("sample count, batch size, epochs and antennas must be positive"));
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lr_decay", self.lr_decay),
            ("p_max", self.p_max),
            ("sigma2", self.sigma2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(contract(format!("{name} must be positive and finite")));
            }
        }
        self.users.validate()
    }

    /// The training set implied by this configuration.
    pub fn dataset(&self) -> Result<Vec<PsInstance>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7472_6169_6e00);
        ps_dataset(
            self.train_samples,
            &self.users,
            self.antennas,
            self.p_max,
            self.sigma2,
            &self.channel,
            &mut rng,
        )
    }
}

/// First-order adaptive-moment optimizer.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(params: &[Tensor]) -> Self {
        let z: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: z.clone(),
            v: z,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (x, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                *x -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss (negative sum SE per sample) in each epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
}

const CHUNK: usize = 16;

/// Splits a batch into same-size chunks: grouped by user count, then cut
/// into pieces of at most [`CHUNK`] samples, in a fixed order.
fn chunks<'a>(items: impl IntoIterator<Item = &'a PsInstance>) -> Vec<Vec<&'a PsInstance>> {
    let mut groups: BTreeMap<(usize, usize), Vec<&PsInstance>> = BTreeMap::new();
    for inst in items {
        groups.entry(inst.h.shape()).or_default().push(inst);
    }
    groups
        .into_values()
        .flat_map(|g| g.chunks(CHUNK).map(|c| c.to_vec()).collect::<Vec<_>>())
        .collect()
}

/// Summed loss and parameter gradients over `batch`. Chunks are evaluated in
/// parallel and reduced in a fixed order, so results do not depend on the
/// number of workers.
pub fn batch_gradients(model: &GnnModel, batch: &[&PsInstance]) -> Result<(f64, Vec<Tensor>)> {
    gradients_of(model, &chunks(batch.iter().copied()))
}

fn gradients_of(model: &GnnModel, parts: &[Vec<&PsInstance>]) -> Result<(f64, Vec<Tensor>)> {
    let results: Vec<Result<(f64, Vec<Tensor>)>> = parts
        .par_iter()
        .map(|chunk| {
            let tape = Tape::new();
            let params = model.param_vars(&tape);
            let loss = ps_batch_loss(model, &params, chunk)?;
            let value = loss.value().item()?;
            let grads = tape.backward(loss)?;
            Ok((value, grads.params().cloned().collect()))
        })
        .collect();
    let mut total = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for r in results {
        let (l, g) = r?;
        total += l;
        acc = Some(match acc {
            None => g,
            Some(mut a) => {
                for (x, y) in a.iter_mut().zip(&g) {
                    for (p, q) in x.data_mut().iter_mut().zip(y.data()) {
                        *p += q;
                    }
                }
                a
            }
        });
    }
    Ok((total, acc.unwrap_or_default()))
}

fn param_norm(model: &GnnModel) -> f64 {
    model
        .params()
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Minimizes the mean negative sum SE over `data` with Adam.
pub fn train_unsupervised(model: &mut GnnModel, data: &[PsInstance], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(contract("training set is empty"));
    }
    if data.iter().any(|d| d.antennas() != data[0].antennas()) {
        return Err(contract("training instances must share the antenna count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7368_7566);
    let mut values: Vec<Tensor> = model.params().iter().map(|(_, t)| t.clone()).collect();
    let mut opt = Adam::new(&values);
    let mut lr = cfg.learning_rate;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |what: String| Error::Diverged {
                epoch,
                detail: format!(
                    "batch {bi}: {what}, previous epoch loss {:?}, parameter norm {:.6e}",
                    curve.last(),
                    param_norm(model)
                ),
            };
            let (loss, mut grads) = match gradients_of(model, &chunks(idx.iter().map(|&i| &data[i]))) {
                Ok(r) => r,
                Err(e @ Error::Domain { .. }) => return Err(diverged(e.to_string())),
                Err(e) => return Err(e),
            };
            let scale = 1.0 / idx.len() as f64;
            let finite = loss.is_finite() && grads.iter().all(|g| g.all_finite());
            if !finite {
                return Err(diverged(format!("loss {loss}")));
            }
            for g in &mut grads {
                for x in g.data_mut() {
                    *x *= scale;
                }
            }
            opt.step(&mut values, &grads, lr);
            model.set_param_tensors(values.clone())?;
            epoch_loss += loss;
            steps += 1;
        }
        curve.push(epoch_loss / data.len() as f64);
        lr *= cfg.lr_decay;
    }
    Ok(TrainReport {
        loss_curve: curve,
        steps,
    })
}
