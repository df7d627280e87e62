//! Experiment configuration: TOML sections of `key = value` pairs.
//!
//! Powers may be given in watts (`p_max`, `sigma2`, `n0`) or in dBm
//! (`p_max_dbm`, ...); they are converted to watts on parse and only the
//! linear values appear in the resolved config.

use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use pe_align::baselines::{dbm_to_watt, ChannelModel, Constants, Sizes, Variant};
use pe_align::gnn::{AttentionPlacement, GnnConfig, UserCount};
use pe_align::pe::PoolOp;
use pe_align::rie::EquivalenceConfig;
use serde::{Deserialize, Serialize};

/// Reports a bad value as `[section] key: problem`.
#[derive(Debug)]
pub struct ConfigError {
    pub section: String,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: [{}] {}: {}", self.section, self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(section: &str, key: &str, message: impl Into<String>) -> anyhow::Error {
    ConfigError {
        section: section.into(),
        key: key.into(),
        message: message.into(),
    }
    .into()
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: RawOutput,
    #[serde(default)]
    pub sizes: RawSizes,
    #[serde(default)]
    pub constants: RawConstants,
    #[serde(default)]
    pub channel: RawChannel,
    #[serde(default)]
    pub solve: RawSolve,
    #[serde(default)]
    pub verify_rie: RawVerify,
    #[serde(default)]
    pub check_equivariance: RawEquivariance,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub train: RawTrain,
    #[serde(default)]
    pub eval_generalization: RawGeneralization,
    #[serde(default)]
    pub count_flops: RawFlops,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub formats: Vec<String>,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec!["csv".into()],
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSizes {
    pub users: usize,
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub streams: usize,
}

impl Default for RawSizes {
    fn default() -> Self {
        let s = EquivalenceConfig::default().sizes;
        Self {
            users: s.users,
            bs_antennas: s.bs_antennas,
            ue_antennas: s.ue_antennas,
            streams: s.streams,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConstants {
    pub p_max: Option<f64>,
    pub p_max_dbm: Option<f64>,
    pub sigma2: Option<f64>,
    pub sigma2_dbm: Option<f64>,
    pub n0: Option<f64>,
    pub n0_dbm: Option<f64>,
    pub s0: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawChannel {
    pub kind: String,
    pub factor: f64,
    pub distances: Vec<f64>,
}

impl Default for RawChannel {
    fn default() -> Self {
        Self {
            kind: "rayleigh".into(),
            factor: 10.0,
            distances: vec![100.0],
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSolve {
    pub variant: String,
    pub instances: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for RawSolve {
    fn default() -> Self {
        Self {
            variant: "ps".into(),
            instances: 10,
            max_iters: 500,
            tol: 1e-8,
            step: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawVerify {
    pub variants: Vec<String>,
    pub trials: usize,
    pub iterations: usize,
    pub tol: f64,
    pub vary_users: bool,
}

impl Default for RawVerify {
    fn default() -> Self {
        Self {
            variants: vec!["pb".into(), "ps".into(), "pm".into(), "pc".into()],
            trials: 100,
            iterations: 20,
            tol: 1e-9,
            vary_users: true,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawEquivariance {
    pub targets: Vec<String>,
    pub trials: usize,
    pub tol: f64,
}

impl Default for RawEquivariance {
    fn default() -> Self {
        Self {
            targets: crate::suite::POSITIVE_TARGETS.iter().map(|s| s.to_string()).collect(),
            trials: 50,
            tol: 1e-9,
        }
    }
}

/// `attention = "procedure" | "none" | "all"` or a list of set names.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Attention {
    Mode(String),
    Sets(Vec<String>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawModel {
    pub hidden: usize,
    pub layers: usize,
    pub attention_dim: usize,
    pub pooling: String,
    pub attention: Attention,
}

impl Default for RawModel {
    fn default() -> Self {
        let g = GnnConfig::default();
        Self {
            hidden: g.hidden,
            layers: g.layers,
            attention_dim: g.attention_dim,
            pooling: "mean".into(),
            attention: Attention::Mode("procedure".into()),
        }
    }
}

/// `users = 3` or `users = "mixture"`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Users {
    Fixed(usize),
    Named(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawTrain {
    pub samples: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub users: Users,
    pub antennas: usize,
}

impl Default for RawTrain {
    fn default() -> Self {
        Self {
            samples: 1000,
            batch_size: 32,
            epochs: 40,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            users: Users::Fixed(3),
            antennas: 8,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawGeneralization {
    pub checkpoint: Option<PathBuf>,
    pub test_users: Vec<usize>,
    pub samples_per_size: usize,
    pub antennas: usize,
}

impl Default for RawGeneralization {
    fn default() -> Self {
        Self {
            checkpoint: None,
            test_users: (1..=8).collect(),
            samples_per_size: 200,
            antennas: 8,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawFlops {
    pub users: usize,
    pub antennas: usize,
    pub sweep_users: Vec<usize>,
    pub sweep_antennas: Vec<usize>,
}

impl Default for RawFlops {
    fn default() -> Self {
        Self {
            users: 4,
            antennas: 8,
            sweep_users: vec![2, 4, 8, 16, 32],
            sweep_antennas: vec![4, 8, 16, 32, 64],
        }
    }
}

/// Parses TOML text; unknown keys and type errors name their location.
pub fn parse(text: &str) -> Result<RawConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| anyhow!("invalid config: {e}"))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let (section, key) = match path.rsplit_once('.') {
            Some((s, k)) => (s.to_string(), k.to_string()),
            None if path == "." => ("root".into(), String::new()),
            None => ("root".into(), path.clone()),
        };
        let inner = e.into_inner();
        let message = inner.message().trim().to_string();
        let key = if key.is_empty() || key == "?" {
            unknown_key(&message).unwrap_or(key)
        } else {
            key
        };
        bad(&section, &key, message)
    })
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest.split('`').next()?.to_string())
}

pub fn parse_variant(s: &str) -> Result<Variant> {
    Variant::parse(s).map_err(|e| anyhow!("{e}"))
}

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

/// Fully resolved configuration, in linear units. This is what gets echoed
/// into every output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub output: ResolvedOutput,
    pub sizes: Sizes,
    pub constants: Constants,
    pub channel: ChannelModel,
    pub solve: ResolvedSolve,
    pub verify_rie: ResolvedVerify,
    pub check_equivariance: ResolvedEquivariance,
    pub model: GnnConfig,
    pub train: ResolvedTrain,
    pub eval_generalization: ResolvedGeneralization,
    pub count_flops: ResolvedFlops,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedOutput {
    #[serde(skip)]
    pub dir: Option<PathBuf>,
    pub csv: bool,
    pub plotdata: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedSolve {
    pub variant: Variant,
    pub instances: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedVerify {
    pub variants: Vec<Variant>,
    pub trials: usize,
    pub iterations: usize,
    pub tol: f64,
    pub vary_users: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedEquivariance {
    pub targets: Vec<String>,
    pub trials: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedTrain {
    pub samples: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub users: UserCount,
    pub antennas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedGeneralization {
    pub checkpoint: Option<PathBuf>,
    pub test_users: Vec<usize>,
    pub samples_per_size: usize,
    pub antennas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedFlops {
    pub users: usize,
    pub antennas: usize,
    pub sweep_users: Vec<usize>,
    pub sweep_antennas: Vec<usize>,
}

fn power(section: &str, key: &str, watts: Option<f64>, dbm: Option<f64>, default: f64) -> Result<f64> {
    let v = match (watts, dbm) {
        (Some(_), Some(_)) => return Err(bad(section, key, format!("give either `{key}` or `{key}_dbm`, not both"))),
        (Some(w), None) => w,
        (None, Some(d)) => dbm_to_watt(d),
        (None, None) => default,
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad(section, key, format!("must be positive and finite, got {v}")));
    }
    Ok(v)
}

fn positive(section: &str, key: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(bad(section, key, "must be at least 1"));
    }
    Ok(v)
}

fn positive_f(section: &str, key: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad(section, key, format!("must be positive and finite, got {v}")));
    }
    Ok(v)
}

fn sizes_list(section: &str, key: &str, v: &[usize]) -> Result<Vec<usize>> {
    if v.is_empty() || v.contains(&0) {
        return Err(bad(section, key, "must be a nonempty list of positive sizes"));
    }
    Ok(v.to_vec())
}

impl RawConfig {
    pub fn resolve(&self, o: &Overrides) -> Result<Resolved> {
        let seed = o.seed.or(self.seed).ok_or_else(|| {
            bad("root", "seed", "missing; every run must be seeded (set `seed` or pass --seed)")
        })?;

        let mut csv = false;
        let mut plotdata = false;
        for f in &self.output.formats {
            match f.as_str() {
                "csv" => csv = true,
                "plotdata" => plotdata = true,
                other => return Err(bad("output", "formats", format!("unknown format '{other}'"))),
            }
        }
        if !csv && !plotdata {
            return Err(bad("output", "formats", "needs at least one of \"csv\", \"plotdata\""));
        }

        let s = &self.sizes;
        let sizes = Sizes {
            users: positive("sizes", "users", s.users)?,
            bs_antennas: positive("sizes", "bs_antennas", s.bs_antennas)?,
            ue_antennas: positive("sizes", "ue_antennas", s.ue_antennas)?,
            streams: positive("sizes", "streams", s.streams)?,
        };

        let c = &self.constants;
        let d = EquivalenceConfig::default().constants;
        let constants = Constants {
            p_max: power("constants", "p_max", c.p_max, c.p_max_dbm, d.p_max)?,
            sigma2: power("constants", "sigma2", c.sigma2, c.sigma2_dbm, d.sigma2)?,
            n0: power("constants", "n0", c.n0, c.n0_dbm, d.n0)?,
            s0: match c.s0 {
                Some(v) if !(v >= 0.0 && v.is_finite()) => {
                    return Err(bad("constants", "s0", format!("must be nonnegative, got {v}")))
                }
                Some(v) => v,
                None => d.s0,
            },
        };

        let ch = &self.channel;
        let channel = match ch.kind.as_str() {
            "rayleigh" => ChannelModel::Rayleigh,
            "rician" => {
                if !(ch.factor >= 0.0 && ch.factor.is_finite()) {
                    return Err(bad("channel", "factor", "must be nonnegative"));
                }
                if ch.distances.is_empty() || ch.distances.iter().any(|&d| !(d > 0.0)) {
                    return Err(bad("channel", "distances", "must be a nonempty list of positive distances"));
                }
                ChannelModel::Rician {
                    factor: ch.factor,
                    distances: ch.distances.clone(),
                }
            }
            other => return Err(bad("channel", "kind", format!("unknown channel '{other}', expected rayleigh or rician"))),
        };

        let sv = &self.solve;
        let solve = ResolvedSolve {
            variant: parse_variant(&sv.variant).map_err(|e| bad("solve", "variant", e.to_string()))?,
            instances: positive("solve", "instances", o.trials.unwrap_or(sv.instances))?,
            max_iters: positive("solve", "max_iters", sv.max_iters)?,
            tol: positive_f("solve", "tol", sv.tol)?,
            step: positive_f("solve", "step", sv.step)?,
        };

        let v = &self.verify_rie;
        let variants = v
            .variants
            .iter()
            .map(|s| parse_variant(s).map_err(|e| bad("verify_rie", "variants", e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if variants.is_empty() {
            return Err(bad("verify_rie", "variants", "must name at least one variant"));
        }
        let verify_rie = ResolvedVerify {
            variants,
            trials: positive("verify_rie", "trials", o.trials.unwrap_or(v.trials))?,
            iterations: positive("verify_rie", "iterations", v.iterations)?,
            tol: positive_f("verify_rie", "tol", v.tol)?,
            vary_users: v.vary_users,
        };

        let e = &self.check_equivariance;
        if e.targets.is_empty() {
            return Err(bad("check_equivariance", "targets", "must name at least one target"));
        }
        for t in &e.targets {
            if !crate::suite::is_target(t) {
                return Err(bad("check_equivariance", "targets", format!("unknown target '{t}'")));
            }
        }
        let check_equivariance = ResolvedEquivariance {
            targets: e.targets.clone(),
            trials: positive("check_equivariance", "trials", o.trials.unwrap_or(e.trials))?,
            tol: positive_f("check_equivariance", "tol", e.tol)?,
        };

        let m = &self.model;
        let placement = match &m.attention {
            Attention::Mode(s) => match s.as_str() {
                "procedure" => AttentionPlacement::Procedure,
                "none" => AttentionPlacement::None,
                "all" => AttentionPlacement::All,
                other => {
                    return Err(bad("model", "attention", format!(
                        "unknown mode '{other}', expected procedure, none, all or a list of set names"
                    )))
                }
            },
            Attention::Sets(v) => AttentionPlacement::Sets(v.clone()),
        };
        let pooling = match m.pooling.as_str() {
            "sum" => PoolOp::Sum,
            "mean" => PoolOp::Mean,
            other => return Err(bad("model", "pooling", format!("unknown pooling '{other}'"))),
        };
        let model = GnnConfig {
            hidden: positive("model", "hidden", m.hidden)?,
            layers: positive("model", "layers", m.layers)?,
            attention_dim: positive("model", "attention_dim", m.attention_dim)?,
            pooling,
            placement,
        };

        let t = &self.train;
        let users = match &t.users {
            Users::Fixed(k) => UserCount::Fixed {
                users: positive("train", "users", *k)?,
            },
            Users::Named(s) if s == "mixture" => UserCount::training_mixture(),
            Users::Named(s) => return Err(bad("train", "users", format!("expected a count or \"mixture\", got '{s}'"))),
        };
        if !(t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
            return Err(bad("train", "lr_decay", "must lie in (0, 1]"));
        }
        let train = ResolvedTrain {
            samples: positive("train", "samples", t.samples)?,
            batch_size: positive("train", "batch_size", t.batch_size)?,
            epochs: positive("train", "epochs", t.epochs)?,
            learning_rate: positive_f("train", "learning_rate", t.learning_rate)?,
            lr_decay: t.lr_decay,
            users,
            antennas: positive("train", "antennas", t.antennas)?,
        };

        let g = &self.eval_generalization;
        let eval_generalization = ResolvedGeneralization {
            checkpoint: g.checkpoint.clone(),
            test_users: sizes_list("eval_generalization", "test_users", &g.test_users)?,
            samples_per_size: positive("eval_generalization", "samples_per_size", g.samples_per_size)?,
            antennas: positive("eval_generalization", "antennas", g.antennas)?,
        };

        let f = &self.count_flops;
        let count_flops = ResolvedFlops {
            users: positive("count_flops", "users", f.users)?,
            antennas: positive("count_flops", "antennas", f.antennas)?,
            sweep_users: sizes_list("count_flops", "sweep_users", &f.sweep_users)?,
            sweep_antennas: sizes_list("count_flops", "sweep_antennas", &f.sweep_antennas)?,
        };

        Ok(Resolved {
            seed,
            output: ResolvedOutput {
                dir: self.output.dir.clone(),
                csv,
                plotdata,
            },
            sizes,
            constants,
            channel,
            solve,
            verify_rie,
            check_equivariance,
            model,
            train,
            eval_generalization,
            count_flops,
        })
    }
}

impl Resolved {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| anyhow!("serializing the resolved config: {e}"))
    }
}

/// Reads and resolves a config file; `None` uses the defaults.
pub fn load(path: Option<&std::path::Path>, o: &Overrides) -> Result<Resolved> {
    let raw = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow!("reading {}: {e}", p.display()))?;
            parse(&text)?
        }
        None => RawConfig::default(),
    };
    if let Some(0) = o.trials {
        bail!("--trials must be at least 1");
    }
    let mut r = raw.resolve(o)?;
    // Paths inside a config file are relative to that file.
    let base = path.and_then(|p| p.parent()).filter(|p| !p.as_os_str().is_empty());
    if let Some(base) = base {
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut().filter(|q| q.is_relative()) {
                *q = base.join(&*q);
            }
        };
        rebase(&mut r.output.dir);
        rebase(&mut r.eval_generalization.checkpoint);
    }
    Ok(r)
}
