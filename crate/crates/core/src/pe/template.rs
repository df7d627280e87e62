use std::sync::Arc;

use super::{check_input, SetAxis, SetFunction, SetTensor, Structure};
use crate::error::{contract, Result};
use crate::tensor::kernels;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum TemplateKind {
    #[serde(rename = "APE_I")]
    ApeI,
    #[serde(rename = "APE_II")]
    ApeII,
    #[serde(rename = "NPE_I")]
    NpeI,
    #[serde(rename = "NPE_II")]
    NpeII,
}

impl TemplateKind {
    pub fn has_attention(self) -> bool {
        matches!(self, TemplateKind::ApeII | TemplateKind::NpeII)
    }

    pub fn is_nested(self) -> bool {
        matches!(self, TemplateKind::NpeI | TemplateKind::NpeII)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProcessorKind {
    /// Reads only the neighbor `x_j`.
    Ordinary,
    /// Reads the pair `(x_k, x_j)`, presented as their feature concatenation.
    Attention,
}

#[derive(Clone, Debug)]
pub struct Processor {
    pub kind: ProcessorKind,
    pub func: Arc<dyn SetFunction>,
}

impl Processor {
    pub fn ordinary(func: impl SetFunction + 'static) -> Self {
        Self {
            kind: ProcessorKind::Ordinary,
            func: Arc::new(func),
        }
    }

    pub fn attention(func: impl SetFunction + 'static) -> Self {
        Self {
            kind: ProcessorKind::Attention,
            func: Arc::new(func),
        }
    }

    fn input_width(&self, x_width: usize) -> usize {
        match self.kind {
            ProcessorKind::Ordinary => x_width,
            ProcessorKind::Attention => 2 * x_width,
        }
    }

    fn eval(&self, xk: &SetTensor, xj: &SetTensor) -> Result<SetTensor> {
        match self.kind {
            ProcessorKind::Ordinary => self.func.apply(xj),
            ProcessorKind::Attention => self.func.apply(&SetTensor::concat_features(&[xk, xj])?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum PoolOp {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pooling {
    pub op: PoolOp,
    /// Pool over every element rather than only `j != k`. Only for APE kinds.
    pub include_self: bool,
}

/// One of the four one-set PE templates acting on the leading set axis.
///
/// APE kinds hold one processor `q`; the output is
/// `y_k = f(x_k ++ pool_{j != k} q(.))`. NPE kinds hold `[q1, q2, q3]` and
/// compute `y_mk = f(x_mk ++ pool_{j != k} q1(.) ++ pool_{i != m} q2(pool_j q3(.)))`,
/// where `m` indexes subsets and `k` elements within a subset. `++` is
/// feature concatenation and an empty pool contributes zeros.
#[derive(Clone, Debug)]
pub struct OneSetTemplate {
    kind: TemplateKind,
    combiner: Arc<dyn SetFunction>,
    processors: Vec<Processor>,
    pooling: Pooling,
}

impl OneSetTemplate {
    pub fn new(
        kind: TemplateKind,
        combiner: Arc<dyn SetFunction>,
        processors: Vec<Processor>,
        pooling: Pooling,
    ) -> Result<Self> {
        let expected = if kind.is_nested() { 3 } else { 1 };
        if processors.len() != expected {
            return Err(contract(format!(
                "{kind:?} needs {expected} processor(s), got {}",
                processors.len()
            )));
        }
        let ok_kinds = match kind {
            TemplateKind::ApeI => processors[0].kind == ProcessorKind::Ordinary,
            TemplateKind::ApeII => processors[0].kind == ProcessorKind::Attention,
            TemplateKind::NpeI => processors.iter().all(|p| p.kind == ProcessorKind::Ordinary),
            TemplateKind::NpeII => {
                processors[0].kind == ProcessorKind::Attention
                    && processors[1].kind == ProcessorKind::Ordinary
                    && processors[2].kind == ProcessorKind::Attention
            }
        };
        if !ok_kinds {
            return Err(contract(format!("processor kinds do not match {kind:?}")));
        }
        if kind.is_nested() && pooling.include_self {
            return Err(contract("self-inclusive pooling is only defined for APE templates"));
        }
        let depth = combiner.depth();
        if processors.iter().any(|p| p.func.depth() != depth) {
            return Err(contract("combiner and processors must share one depth"));
        }
        let t = Self {
            kind,
            combiner,
            processors,
            pooling,
        };
        t.check_widths()?;
        Ok(t)
    }

    pub fn ape_i(f: impl SetFunction + 'static, q: impl SetFunction + 'static) -> Result<Self> {
        Self::new(
            TemplateKind::ApeI,
            Arc::new(f),
            vec![Processor::ordinary(q)],
            Pooling::default(),
        )
    }

    pub fn ape_ii(f: impl SetFunction + 'static, q: impl SetFunction + 'static) -> Result<Self> {
        Self::new(
            TemplateKind::ApeII,
            Arc::new(f),
            vec![Processor::attention(q)],
            Pooling::default(),
        )
    }

    pub fn npe_i(
        f: impl SetFunction + 'static,
        q1: impl SetFunction + 'static,
        q2: impl SetFunction + 'static,
        q3: impl SetFunction + 'static,
    ) -> Result<Self> {
        Self::new(
            TemplateKind::NpeI,
            Arc::new(f),
            vec![
                Processor::ordinary(q1),
                Processor::ordinary(q2),
                Processor::ordinary(q3),
            ],
            Pooling::default(),
        )
    }

    pub fn npe_ii(
        f: impl SetFunction + 'static,
        q1: impl SetFunction + 'static,
        q2: impl SetFunction + 'static,
        q3: impl SetFunction + 'static,
    ) -> Result<Self> {
        Self::new(
            TemplateKind::NpeII,
            Arc::new(f),
            vec![
                Processor::attention(q1),
                Processor::ordinary(q2),
                Processor::attention(q3),
            ],
            Pooling::default(),
        )
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Result<Self> {
        if self.kind.is_nested() && pooling.include_self {
            return Err(contract("self-inclusive pooling is only defined for APE templates"));
        }
        self.pooling = pooling;
        Ok(self)
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    fn x_width(&self) -> Option<usize> {
        let p = &self.processors[0];
        p.func.in_width().map(|w| match p.kind {
            ProcessorKind::Ordinary => w,
            ProcessorKind::Attention => w / 2,
        })
    }

    fn check_widths(&self) -> Result<()> {
        let Some(x) = self.x_width() else { return Ok(()) };
        let mut pooled = 0;
        let mut known = true;
        let slots: &[usize] = if self.kind.is_nested() { &[0, 1] } else { &[0] };
        if self.kind.is_nested() {
            let (q2, q3) = (&self.processors[1], &self.processors[2]);
            if let (Some(i), Some(o)) = (q2.func.in_width(), q3.func.out_width()) {
                if i != o {
                    return Err(contract(format!("q2 reads width {i} but q3 writes {o}")));
                }
            }
            if let Some(w) = q3.func.in_width() {
                if w != q3.input_width(x) {
                    return Err(contract("q3 input width does not match the set features"));
                }
            }
        }
        for &s in slots {
            let p = &self.processors[s];
            if s == 0 {
                if let Some(w) = p.func.in_width() {
                    if w != p.input_width(x) {
                        return Err(contract("processor input width does not match features"));
                    }
                }
            }
            match p.func.out_width() {
                Some(w) => pooled += w,
                None => known = false,
            }
        }
        if let (true, Some(w)) = (known, self.combiner.in_width()) {
            if w != x + pooled {
                return Err(contract(format!(
                    "combiner reads width {w}, template provides {}",
                    x + pooled
                )));
            }
        }
        Ok(())
    }

    fn finish(&self, mut acc: Option<SetTensor>, count: usize, zero_from: impl FnOnce() -> Result<SetTensor>) -> Result<SetTensor> {
        match acc.take() {
            None => {
                let z = zero_from()?;
                let w = z.width();
                Ok(z.zeros_like_width(w))
            }
            Some(mut s) => {
                if self.pooling.op == PoolOp::Mean && count > 1 {
                    s.value = kernels::scale(&s.value, 1.0 / count as f64);
                }
                Ok(s)
            }
        }
    }

    fn apply_ape(&self, x: &SetTensor) -> Result<SetTensor> {
        let n = x.set_len();
        let elems: Vec<SetTensor> = (0..n).map(|i| x.element(i)).collect();
        let q = &self.processors[0];
        let ordinary: Option<Vec<SetTensor>> = match q.kind {
            ProcessorKind::Ordinary => Some(elems.iter().map(|e| q.func.apply(e)).collect::<Result<_>>()?),
            ProcessorKind::Attention => None,
        };
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc: Option<SetTensor> = None;
            let mut count = 0;
            for j in 0..n {
                if j == k && !self.pooling.include_self {
                    continue;
                }
                let v = match &ordinary {
                    Some(o) => o[j].clone(),
                    None => q.eval(&elems[k], &elems[j])?,
                };
                add_into(&mut acc, v)?;
                count += 1;
            }
            let pool = self.finish(acc, count, || q.eval(&elems[k], &elems[k]))?;
            out.push(self.combiner.apply(&SetTensor::concat_features(&[&elems[k], &pool])?)?);
        }
        SetTensor::stack(&out, x.axes[0])
    }

    fn apply_npe(&self, x: &SetTensor) -> Result<SetTensor> {
        let SetAxis::Nested {
            subsets,
            subset_size,
        } = x.axes[0]
        else {
            return Err(contract(format!(
                "{:?} template applied to an axis without subset structure",
                self.kind
            )));
        };
        let (q1, q2, q3) = (&self.processors[0], &self.processors[1], &self.processors[2]);
        let elems: Vec<SetTensor> = (0..subsets * subset_size).map(|i| x.element(i)).collect();
        let at = |m: usize, k: usize| &elems[m * subset_size + k];
        // Ordinary q3 pooled per subset does not depend on the query element.
        let ordinary_inner: Option<Vec<SetTensor>> = if q3.kind == ProcessorKind::Ordinary {
            let mut v = Vec::with_capacity(subsets);
            for i in 0..subsets {
                let mut acc = None;
                for j in 0..subset_size {
                    add_into(&mut acc, q3.func.apply(at(i, j))?)?;
                }
                let s = self.finish(acc, subset_size, || unreachable!())?;
                v.push(q2.func.apply(&s)?);
            }
            Some(v)
        } else {
            None
        };
        let mut out = Vec::with_capacity(elems.len());
        for m in 0..subsets {
            for k in 0..subset_size {
                let xk = at(m, k);
                let mut acc1 = None;
                for j in 0..subset_size {
                    if j != k {
                        add_into(&mut acc1, q1.eval(xk, at(m, j))?)?;
                    }
                }
                let pool1 = self.finish(acc1, subset_size - 1, || q1.eval(xk, xk))?;
                let mut acc2 = None;
                for i in 0..subsets {
                    if i == m {
                        continue;
                    }
                    let v = match &ordinary_inner {
                        Some(o) => o[i].clone(),
                        None => {
                            let mut acc = None;
                            for j in 0..subset_size {
                                add_into(&mut acc, q3.eval(xk, at(i, j))?)?;
                            }
                            let s = self.finish(acc, subset_size, || unreachable!())?;
                            q2.func.apply(&s)?
                        }
                    };
                    add_into(&mut acc2, v)?;
                }
                let pool2 = self.finish(acc2, subsets - 1, || {
                    let mut acc = None;
                    for j in 0..subset_size {
                        add_into(&mut acc, q3.eval(xk, at(m, j))?)?;
                    }
                    q2.func.apply(&acc.unwrap())
                })?;
                out.push(
                    self.combiner
                        .apply(&SetTensor::concat_features(&[xk, &pool1, &pool2])?)?,
                );
            }
        }
        SetTensor::stack(&out, x.axes[0])
    }
}

fn add_into(acc: &mut Option<SetTensor>, v: SetTensor) -> Result<()> {
    match acc {
        None => *acc = Some(v),
        Some(a) => a.value = kernels::add(&a.value, &v.value)?,
    }
    Ok(())
}

impl SetFunction for OneSetTemplate {
    fn depth(&self) -> usize {
        self.combiner.depth() + 1
    }

    fn in_width(&self) -> Option<usize> {
        self.x_width()
    }

    fn out_width(&self) -> Option<usize> {
        self.combiner.out_width()
    }

    fn apply(&self, x: &SetTensor) -> Result<SetTensor> {
        check_input(self, x)?;
        if self.kind.is_nested() {
            self.apply_npe(x)
        } else {
            self.apply_ape(x)
        }
    }

    fn structure(&self) -> Structure {
        Structure::Template {
            kind: self.kind,
            combiner: Box::new(self.combiner.structure()),
            processors: self
                .processors
                .iter()
                .map(|p| (p.kind, p.func.structure()))
                .collect(),
        }
    }

    fn params(&self) -> Vec<(String, crate::tensor::Tensor)> {
        let mut out: Vec<_> = self
            .combiner
            .params()
            .into_iter()
            .map(|(n, t)| (format!("f.{n}"), t))
            .collect();
        for (i, p) in self.processors.iter().enumerate() {
            out.extend(p.func.params().into_iter().map(|(n, t)| (format!("q{}.{n}", i + 1), t)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pe::{Pointwise, SetTensor};
    use crate::tensor::Tensor;

    fn col(v: &[f64]) -> SetTensor {
        SetTensor::normal(Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn ape_i_linear_sum() {
        let f = Pointwise::new("x+s", 2, 1, |v| Ok(vec![v[0] + v[1]]));
        let t = OneSetTemplate::ape_i(f, Pointwise::identity(1)).unwrap();
        let y = t.apply(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.value.data(), &[6.0, 6.0, 6.0]);
    }

    #[test]
    fn ape_ii_pairwise_product() {
        let f = Pointwise::new("s", 2, 1, |v| Ok(vec![v[1]]));
        let q = Pointwise::new("a*b", 2, 1, |v| Ok(vec![v[0] * v[1]]));
        let t = OneSetTemplate::ape_ii(f, q).unwrap();
        let y = t.apply(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.value.data(), &[5.0, 8.0, 9.0]);
    }

    #[test]
    fn single_element_pool_is_empty() {
        let f = Pointwise::new("x+s", 2, 1, |v| Ok(vec![v[0] + 10.0 * v[1]]));
        let t = OneSetTemplate::ape_i(f, Pointwise::identity(1)).unwrap();
        assert_eq!(t.apply(&col(&[4.0])).unwrap().value.data(), &[4.0]);
    }

    #[test]
    fn mean_pooling_divides_by_neighbors() {
        let f = Pointwise::new("s", 2, 1, |v| Ok(vec![v[1]]));
        let t = OneSetTemplate::ape_i(f, Pointwise::identity(1))
            .unwrap()
            .with_pooling(Pooling {
                op: PoolOp::Mean,
                include_self: false,
            })
            .unwrap();
        let y = t.apply(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.value.data(), &[2.5, 2.0, 1.5]);
    }

    #[test]
    fn npe_requires_subset_metadata() {
        let f = Pointwise::new("sum", 3, 1, |v| Ok(vec![v.iter().sum()]));
        let id = || Pointwise::identity(1);
        let t = OneSetTemplate::npe_i(f, id(), id(), id()).unwrap();
        assert!(t.apply(&col(&[1.0, 2.0, 3.0, 4.0])).is_err());
    }

    #[test]
    fn width_mismatch_rejected() {
        let f = Pointwise::new("bad", 3, 1, |v| Ok(vec![v[0]]));
        assert!(OneSetTemplate::ape_i(f, Pointwise::identity(1)).is_err());
    }
}
