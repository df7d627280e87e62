use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{check_input, SetFunction, SetTensor, Structure, TemplateKind};
use crate::error::{contract, Result};
use crate::tensor::Tensor;

type VecFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
type SetFn = dyn Fn(&SetTensor) -> Result<SetTensor> + Send + Sync;

/// A fixed map on one feature vector (depth 0).
#[derive(Clone)]
pub struct Pointwise {
    name: String,
    in_width: usize,
    out_width: usize,
    f: Arc<VecFn>,
}

impl Pointwise {
    pub fn new(
        name: &str,
        in_width: usize,
        out_width: usize,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            in_width,
            out_width,
            f: Arc::new(f),
        }
    }

    pub fn identity(width: usize) -> Self {
        Self::new("identity", width, width, |x| Ok(x.to_vec()))
    }

    /// Selects feature slots in the given order.
    pub fn select(in_width: usize, slots: &[usize]) -> Self {
        let slots = slots.to_vec();
        Self::new("select", in_width, slots.len(), move |x| {
            Ok(slots.iter().map(|&s| x[s]).collect())
        })
    }
}

impl fmt::Debug for Pointwise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pointwise({}: {} -> {})", self.name, self.in_width, self.out_width)
    }
}

impl SetFunction for Pointwise {
    fn depth(&self) -> usize {
        0
    }

    fn in_width(&self) -> Option<usize> {
        Some(self.in_width)
    }

    fn out_width(&self) -> Option<usize> {
        Some(self.out_width)
    }

    fn apply(&self, x: &SetTensor) -> Result<SetTensor> {
        check_input(self, x)?;
        let y = (self.f)(x.value.data())?;
        if y.len() != self.out_width {
            return Err(contract(format!(
                "pointwise '{}' produced {} values, declared {}",
                self.name,
                y.len(),
                self.out_width
            )));
        }
        SetTensor::new(Tensor::from_vec(y), Vec::new())
    }

    fn structure(&self) -> Structure {
        Structure::Leaf {
            name: self.name.clone(),
        }
    }
}

/// Fully connected network on one feature vector, rectifier between layers
/// and a linear output.
#[derive(Clone, Debug)]
pub struct Fnn {
    name: String,
    layers: Vec<(Tensor, Tensor)>,
}

impl Fnn {
    /// Uniform initialization scaled by fan-in; `widths` lists every layer
    /// width including input and output.
    pub fn random<R: Rng + ?Sized>(name: &str, widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(contract(format!("invalid FNN widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let a = (1.0 / w[0] as f64).sqrt();
                (
                    Tensor::uniform(&[w[1], w[0]], -a, a, rng),
                    Tensor::uniform(&[w[1]], -a, a, rng),
                )
            })
            .collect();
        Ok(Self {
            name: name.into(),
            layers,
        })
    }

    pub fn from_layers(name: &str, layers: Vec<(Tensor, Tensor)>) -> Result<Self> {
        for (i, (w, b)) in layers.iter().enumerate() {
            if w.ndim() != 2 || b.shape() != [w.shape()[0]] {
                return Err(contract(format!("layer {i}: weight {:?}, bias {:?}", w.shape(), b.shape())));
            }
            if i > 0 && layers[i - 1].0.shape()[0] != w.shape()[1] {
                return Err(contract(format!("layer {i} input width mismatch")));
            }
        }
        if layers.is_empty() {
            return Err(contract("FNN without layers"));
        }
        Ok(Self {
            name: name.into(),
            layers,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, (w, b)) in self.layers.iter().enumerate() {
            let (o, i) = (w.shape()[0], w.shape()[1]);
            let mut out = b.data().to_vec();
            for r in 0..o {
                let row = &w.data()[r * i..(r + 1) * i];
                out[r] += row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            if li < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            h = out;
        }
        h
    }
}

impl SetFunction for Fnn {
    fn depth(&self) -> usize {
        0
    }

    fn in_width(&self) -> Option<usize> {
        Some(self.layers[0].0.shape()[1])
    }

    fn out_width(&self) -> Option<usize> {
        Some(self.layers.last().unwrap().0.shape()[0])
    }

    fn apply(&self, x: &SetTensor) -> Result<SetTensor> {
        check_input(self, x)?;
        SetTensor::new(Tensor::from_vec(self.forward(x.value.data())), Vec::new())
    }

    fn structure(&self) -> Structure {
        Structure::Leaf {
            name: self.name.clone(),
        }
    }

    fn params(&self) -> Vec<(String, Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [
                    (format!("{}.{i}.weight", self.name), w.clone()),
                    (format!("{}.{i}.bias", self.name), b.clone()),
                ]
            })
            .collect()
    }
}

/// A hand-written function over `depth` set axes that stands in for a
/// composition of templates of the declared kinds. Its equivariance is
/// checked, never assumed.
#[derive(Clone)]
pub struct Opaque {
    name: String,
    kinds: Vec<TemplateKind>,
    in_width: Option<usize>,
    out_width: Option<usize>,
    f: Arc<SetFn>,
}

impl Opaque {
    pub fn new(
        name: &str,
        kinds: Vec<TemplateKind>,
        in_width: Option<usize>,
        out_width: Option<usize>,
        f: impl Fn(&SetTensor) -> Result<SetTensor> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kinds,
            in_width,
            out_width,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for Opaque {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Opaque({}: {:?})", self.name, self.kinds)
    }
}

impl SetFunction for Opaque {
    fn depth(&self) -> usize {
        self.kinds.len()
    }

    fn in_width(&self) -> Option<usize> {
        self.in_width
    }

    fn out_width(&self) -> Option<usize> {
        self.out_width
    }

    fn apply(&self, x: &SetTensor) -> Result<SetTensor> {
        check_input(self, x)?;
        let y = (self.f)(x)?;
        if y.depth() != x.depth() || y.value.shape()[..x.depth()] != x.value.shape()[..x.depth()] {
            return Err(contract(format!(
                "opaque '{}' changed the set axes: {:?} -> {:?}",
                self.name,
                x.value.shape(),
                y.value.shape()
            )));
        }
        Ok(y)
    }

    fn structure(&self) -> Structure {
        Structure::Opaque {
            name: self.name.clone(),
            kinds: self.kinds.clone(),
        }
    }
}
