//! Problem instances, objectives and the instance file format.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::channel::{cn01, draw_channel, seeded, ChannelModel, CMat};
use crate::error::{contract, Error, Result};

/// Bandwidth and power allocation: minimize total bandwidth subject to a
/// per-user rate floor and a total power budget.
#[derive(Clone, Debug, PartialEq)]
pub struct PbInstance {
    pub g: Vec<f64>,
    pub n0: f64,
    pub s0: f64,
    pub p_max: f64,
}

/// Multi-user MISO precoding; `h` is `antennas x users`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsInstance {
    pub h: CMat,
    pub p_max: f64,
    pub sigma2: f64,
}

/// Multi-user MIMO precoding with `streams` data streams per user; `h[k]`
/// is `user antennas x BS antennas`.
#[derive(Clone, Debug, PartialEq)]
pub struct PmInstance {
    pub h: Vec<CMat>,
    pub streams: usize,
    pub p_max: f64,
    pub sigma2: f64,
}

/// Interference-channel power control. `gain[(r, t)]` is the magnitude of
/// the channel from transmitter `t` to receiver `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcInstance {
    pub gain: DMatrix<f64>,
    /// Unit-norm beams `W` and channels `H` with `gain[(k, j)] = |w_j^H h_k|`.
    pub beams: Option<(CMat, CMat)>,
    pub p_max: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemInstance {
    Pb(PbInstance),
    Ps(PsInstance),
    Pm(PmInstance),
    Pc(PcInstance),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "PB")]
    Pb,
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "PC")]
    Pc,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Pb => "PB",
            Variant::Ps => "PS",
            Variant::Pm => "PM",
            Variant::Pc => "PC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PB" => Ok(Variant::Pb),
            "PS" => Ok(Variant::Ps),
            "PM" => Ok(Variant::Pm),
            "PC" => Ok(Variant::Pc),
            _ => Err(Error::Format(format!("unknown variant '{s}'"))),
        }
    }
}

impl ProblemInstance {
    pub fn variant(&self) -> Variant {
        match self {
            ProblemInstance::Pb(_) => Variant::Pb,
            ProblemInstance::Ps(_) => Variant::Ps,
            ProblemInstance::Pm(_) => Variant::Pm,
            ProblemInstance::Pc(_) => Variant::Pc,
        }
    }
}

/// Set sizes for instance generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub users: usize,
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub streams: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Self {
            users: 2,
            bs_antennas: 4,
            ue_antennas: 1,
            streams: 1,
        }
    }
}

/// Physical constants in linear units (watts, W/Hz, bit/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub p_max: f64,
    pub sigma2: f64,
    pub n0: f64,
    pub s0: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            p_max: 1.0,
            sigma2: 1.0,
            n0: 1.0,
            s0: 1.0,
        }
    }
}

/// Draws a random instance. PB gains are squared channel magnitudes; PC
/// gains come from random unit-norm beams applied to random channels, which
/// requires `bs_antennas >= users`.
pub fn generate_channels(
    variant: Variant,
    sizes: Sizes,
    model: &ChannelModel,
    constants: Constants,
    seed: u64,
) -> Result<ProblemInstance> {
    if sizes.users == 0 || sizes.bs_antennas == 0 || sizes.ue_antennas == 0 || sizes.streams == 0 {
        return Err(contract("all sizes must be positive"));
    }
    validate_constants(&constants)?;
    let mut rng = seeded(seed);
    let k = sizes.users;
    Ok(match variant {
        Variant::Pb => {
            let h = draw_channel(1, k, model, &mut rng);
            ProblemInstance::Pb(PbInstance {
                g: h.iter().map(|c| c.norm_sqr()).collect(),
                n0: constants.n0,
                s0: constants.s0,
                p_max: constants.p_max,
            })
        }
        Variant::Ps => ProblemInstance::Ps(PsInstance {
            h: draw_channel(sizes.bs_antennas, k, model, &mut rng),
            p_max: constants.p_max,
            sigma2: constants.sigma2,
        }),
        Variant::Pm => {
            let h = (0..k)
                .map(|_| draw_channel(sizes.bs_antennas, sizes.ue_antennas, model, &mut rng).adjoint())
                .collect();
            ProblemInstance::Pm(PmInstance {
                h,
                streams: sizes.streams,
                p_max: constants.p_max,
                sigma2: constants.sigma2,
            })
        }
        Variant::Pc => {
            if sizes.bs_antennas < k {
                return Err(contract("PC decomposition needs at least as many antennas as users"));
            }
            let h = draw_channel(sizes.bs_antennas, k, model, &mut rng);
            let mut w = CMat::from_fn(sizes.bs_antennas, k, |_, _| cn01(&mut rng));
            for mut c in w.column_iter_mut() {
                let n = c.norm();
                c /= Complex64::from(n);
            }
            ProblemInstance::Pc(PcInstance::from_beams(w, h, constants.p_max, constants.sigma2)?)
        }
    })
}

fn validate_constants(c: &Constants) -> Result<()> {
    for (name, v) in [("p_max", c.p_max), ("sigma2", c.sigma2), ("n0", c.n0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(contract(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(c.s0 >= 0.0 && c.s0.is_finite()) {
        return Err(contract("s0 must be nonnegative"));
    }
    Ok(())
}

impl PbInstance {
    pub fn users(&self) -> usize {
        self.g.len()
    }

    /// `B log2(1 + p g / (N0 B))`, with rate 0 at zero bandwidth.
    pub fn rate(&self, k: usize, p: f64, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        b * (1.0 + p * self.g[k] / (self.n0 * b)).log2()
    }

    pub fn total_bandwidth(&self, b: &[f64]) -> f64 {
        b.iter().sum()
    }
}

impl PsInstance {
    pub fn users(&self) -> usize {
        self.h.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    /// Sum spectral efficiency of precoder `w` (`antennas x users`).
    pub fn sum_se(&self, w: &CMat) -> f64 {
        let g = self.h.adjoint() * w;
        (0..self.users())
            .map(|k| {
                let sig = g[(k, k)].norm_sqr();
                let tot: f64 = (0..self.users()).map(|i| g[(k, i)].norm_sqr()).sum();
                (1.0 + sig / (tot - sig + self.sigma2)).log2()
            })
            .sum()
    }
}

impl PmInstance {
    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn bs_antennas(&self) -> usize {
        self.h[0].ncols()
    }

    pub fn ue_antennas(&self) -> usize {
        self.h[0].nrows()
    }

    /// Log-det sum spectral efficiency; `w[k]` is `BS antennas x streams`.
    pub fn sum_se(&self, w: &[CMat]) -> Result<f64> {
        let nu = self.ue_antennas();
        let mut total = 0.0;
        for (k, hk) in self.h.iter().enumerate() {
            let mut noise = CMat::identity(nu, nu) * Complex64::from(self.sigma2);
            for (j, wj) in w.iter().enumerate() {
                if j != k {
                    let a = hk * wj;
                    noise += &a * a.adjoint();
                }
            }
            let s = hk * &w[k];
            let signal = &noise + &s * s.adjoint();
            total += (log_det_hpd(&signal)? - log_det_hpd(&noise)?) / std::f64::consts::LN_2;
        }
        Ok(total)
    }
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn log_det_hpd(a: &CMat) -> Result<f64> {
    let c = a.clone().cholesky().ok_or_else(|| Error::Domain {
        op: "log_det",
        detail: "matrix is not positive definite".into(),
    })?;
    Ok(c.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum())
}

impl PcInstance {
    pub fn from_beams(w: CMat, h: CMat, p_max: f64, sigma2: f64) -> Result<Self> {
        if w.shape() != h.shape() {
            return Err(contract("beam and channel matrices must have equal shapes"));
        }
        let k = h.ncols();
        let gain = DMatrix::from_fn(k, k, |r, t| w.column(t).dotc(&h.column(r)).norm());
        Ok(Self {
            gain,
            beams: Some((w, h)),
            p_max,
            sigma2,
        })
    }

    pub fn users(&self) -> usize {
        self.gain.nrows()
    }

    pub fn sum_rate(&self, p: &[f64]) -> f64 {
        let k = self.users();
        (0..k)
            .map(|r| {
                let sig = self.gain[(r, r)].powi(2) * p[r];
                let interf: f64 = (0..k)
                    .filter(|&t| t != r)
                    .map(|t| self.gain[(r, t)].powi(2) * p[t])
                    .sum();
                (1.0 + sig / (interf + self.sigma2)).log2()
            })
            .sum()
    }
}

/// Decision variables for [`evaluate_objective`].
#[derive(Clone, Debug)]
pub enum Variables {
    Pb { p: Vec<f64>, b: Vec<f64> },
    Ps(CMat),
    Pm(Vec<CMat>),
    Pc(Vec<f64>),
}

/// Total bandwidth for PB, sum spectral efficiency otherwise.
pub fn evaluate_objective(inst: &ProblemInstance, vars: &Variables) -> Result<f64> {
    match (inst, vars) {
        (ProblemInstance::Pb(i), Variables::Pb { p, b }) if p.len() == i.users() && b.len() == i.users() => {
            Ok(i.total_bandwidth(b))
        }
        (ProblemInstance::Ps(i), Variables::Ps(w)) if w.shape() == i.h.shape() => Ok(i.sum_se(w)),
        (ProblemInstance::Pm(i), Variables::Pm(w))
            if w.len() == i.users()
                && w.iter().all(|x| x.shape() == (i.bs_antennas(), i.streams)) =>
        {
            i.sum_se(w)
        }
        (ProblemInstance::Pc(i), Variables::Pc(p)) if p.len() == i.users() => Ok(i.sum_rate(p)),
        _ => Err(contract("variables do not match the instance variant or sizes")),
    }
}

const FORMAT: &str = "pe-align-instance";
pub const INSTANCE_VERSION: u64 = 1;

fn enc_real(shape: &[usize], data: impl IntoIterator<Item = f64>) -> Value {
    let bytes: Vec<u8> = data.into_iter().flat_map(f64::to_le_bytes).collect();
    json!({"dtype": "f64", "shape": shape, "data": B64.encode(bytes)})
}

fn enc_cmat(m: &CMat) -> Value {
    let (r, c) = m.shape();
    let vals = (0..r).flat_map(|i| (0..c).flat_map(move |j| [m[(i, j)].re, m[(i, j)].im]));
    let bytes: Vec<u8> = vals.flat_map(f64::to_le_bytes).collect();
    json!({"dtype": "c128", "shape": [r, c], "data": B64.encode(bytes)})
}

fn dec_array(v: &Value, dtype: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let bad = |m: &str| Error::Format(format!("array: {m}"));
    if v.get("dtype").and_then(Value::as_str) != Some(dtype) {
        return Err(bad(&format!("expected dtype {dtype}")));
    }
    let shape: Vec<usize> = v
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing shape"))?
        .iter()
        .map(|d| d.as_u64().map(|x| x as usize).ok_or_else(|| bad("bad dimension")))
        .collect::<Result<_>>()?;
    let bytes = B64
        .decode(v.get("data").and_then(Value::as_str).ok_or_else(|| bad("missing data"))?)
        .map_err(|e| bad(&e.to_string()))?;
    let per = if dtype == "c128" { 2 } else { 1 };
    let n: usize = shape.iter().product::<usize>() * per;
    if bytes.len() != n * 8 {
        return Err(bad("payload length does not match shape"));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

fn dec_cmat(v: &Value) -> Result<CMat> {
    let (shape, d) = dec_array(v, "c128")?;
    if shape.len() != 2 {
        return Err(Error::Format("complex matrix must be rank 2".into()));
    }
    Ok(CMat::from_fn(shape[0], shape[1], |i, j| {
        let o = 2 * (i * shape[1] + j);
        Complex64::new(d[o], d[o + 1])
    }))
}

fn num(m: &Map<String, Value>, key: &str) -> Result<f64> {
    m.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Format(format!("missing constant '{key}'")))
}

impl ProblemInstance {
    /// Self-describing JSON with base64 little-endian payloads.
    pub fn to_json(&self) -> Value {
        let (constants, arrays) = match self {
            ProblemInstance::Pb(i) => (
                json!({"n0": i.n0, "s0": i.s0, "p_max": i.p_max}),
                json!({"g": enc_real(&[i.g.len()], i.g.iter().copied())}),
            ),
            ProblemInstance::Ps(i) => (
                json!({"p_max": i.p_max, "sigma2": i.sigma2}),
                json!({"h": enc_cmat(&i.h)}),
            ),
            ProblemInstance::Pm(i) => (
                json!({"p_max": i.p_max, "sigma2": i.sigma2, "streams": i.streams}),
                json!({"h": i.h.iter().map(enc_cmat).collect::<Vec<_>>()}),
            ),
            ProblemInstance::Pc(i) => {
                let k = i.users();
                let mut a = json!({"gain": enc_real(&[k, k], (0..k).flat_map(|r| (0..k).map(move |t| i.gain[(r, t)])))});
                if let Some((w, h)) = &i.beams {
                    a["w"] = enc_cmat(w);
                    a["h"] = enc_cmat(h);
                }
                (json!({"p_max": i.p_max, "sigma2": i.sigma2}), a)
            }
        };
        json!({
            "format": FORMAT,
            "version": INSTANCE_VERSION,
            "variant": self.variant().tag(),
            "constants": constants,
            "arrays": arrays,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        if v.get("format").and_then(Value::as_str) != Some(FORMAT) {
            return Err(Error::Format("not an instance file".into()));
        }
        let version = v.get("version").and_then(Value::as_u64).unwrap_or(0);
        if version != INSTANCE_VERSION {
            return Err(Error::Format(format!("unsupported instance version {version}")));
        }
        let variant = Variant::parse(v.get("variant").and_then(Value::as_str).unwrap_or(""))?;
        let c = v
            .get("constants")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Format("missing constants".into()))?;
        let a = v
            .get("arrays")
            .ok_or_else(|| Error::Format("missing arrays".into()))?;
        let field = |k: &str| a.get(k).ok_or_else(|| Error::Format(format!("missing array '{k}'")));
        Ok(match variant {
            Variant::Pb => ProblemInstance::Pb(PbInstance {
                g: dec_array(field("g")?, "f64")?.1,
                n0: num(c, "n0")?,
                s0: num(c, "s0")?,
                p_max: num(c, "p_max")?,
            }),
            Variant::Ps => ProblemInstance::Ps(PsInstance {
                h: dec_cmat(field("h")?)?,
                p_max: num(c, "p_max")?,
                sigma2: num(c, "sigma2")?,
            }),
            Variant::Pm => ProblemInstance::Pm(PmInstance {
                h: field("h")?
                    .as_array()
                    .ok_or_else(|| Error::Format("PM channels must be a list".into()))?
                    .iter()
                    .map(dec_cmat)
                    .collect::<Result<_>>()?,
                streams: num(c, "streams")? as usize,
                p_max: num(c, "p_max")?,
                sigma2: num(c, "sigma2")?,
            }),
            Variant::Pc => {
                let (shape, g) = dec_array(field("gain")?, "f64")?;
                if shape.len() != 2 || shape[0] != shape[1] {
                    return Err(Error::Format("gain must be square".into()));
                }
                let beams = match (a.get("w"), a.get("h")) {
                    (Some(w), Some(h)) => Some((dec_cmat(w)?, dec_cmat(h)?)),
                    _ => None,
                };
                ProblemInstance::Pc(PcInstance {
                    gain: DMatrix::from_row_slice(shape[0], shape[1], &g),
                    beams,
                    p_max: num(c, "p_max")?,
                    sigma2: num(c, "sigma2")?,
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_mrt_se() {
        let inst = PsInstance {
            h: CMat::from_column_slice(3, 1, &[Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.1), Complex64::new(0.0, 2.0)]),
            p_max: 2.0,
            sigma2: 0.3,
        };
        let hn = inst.h.norm();
        let w = &inst.h * Complex64::from(inst.p_max.sqrt() / hn);
        let expect = (1.0 + inst.p_max * hn * hn / inst.sigma2).log2();
        assert!((inst.sum_se(&w) - expect).abs() < 1e-12);
    }

    #[test]
    fn pc_zero_power_zero_rate() {
        let inst = generate_channels(Variant::Pc, Sizes { users: 3, bs_antennas: 4, ..Sizes::default() }, &ChannelModel::Rayleigh, Constants::default(), 1).unwrap();
        let ProblemInstance::Pc(i) = inst else { unreachable!() };
        assert_eq!(i.sum_rate(&[0.0; 3]), 0.0);
    }

    #[test]
    fn json_roundtrip_all_variants() {
        for v in [Variant::Pb, Variant::Ps, Variant::Pm, Variant::Pc] {
            let sizes = Sizes { users: 2, bs_antennas: 3, ue_antennas: 2, streams: 2 };
            let inst = generate_channels(v, sizes, &ChannelModel::Rayleigh, Constants::default(), 5).unwrap();
            let text = serde_json::to_string(&inst.to_json()).unwrap();
            let back = ProblemInstance::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back, inst);
        }
    }
}
