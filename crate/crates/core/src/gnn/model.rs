use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::descriptor::{plan_gnn, AttentionPlacement, DescriptorKind, GnnPlan, SetDescriptor};
use super::layers::{linear, pool_others};
use crate::error::{contract, Result};
use crate::pe::{ParamSet, PoolOp, ProcessorKind, SetAxis, SetFunction, SetTensor, Structure, TemplateKind};
use crate::tensor::{Tape, Tensor, Var};

/// Size-independent hyperparameters of a GNN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnConfig {
    pub hidden: usize,
    pub layers: usize,
    /// Width of the query and key projections.
    pub attention_dim: usize,
    pub pooling: PoolOp,
    pub placement: AttentionPlacement,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 3,
            attention_dim: 16,
            pooling: PoolOp::Mean,
            placement: AttentionPlacement::Procedure,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.attention_dim == 0 {
            return Err(contract("hidden, layers and attention_dim must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Proc {
    node: Box<Node>,
    /// Query and key projections of an attention processor.
    attn: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
enum Node {
    Linear { w: usize, b: usize },
    Ape { f: Box<Node>, q: Proc },
    Npe { f: Box<Node>, q1: Proc, q2: Box<Node>, q3: Proc },
}

/// Multiply-add counts split into the pairwise attention products and
/// everything else.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCount {
    pub pairwise: u64,
    pub other: u64,
}

impl MacCount {
    pub fn total(&self) -> u64 {
        self.pairwise + self.other
    }

    fn add(&mut self, o: MacCount) {
        self.pairwise += o.pairwise;
        self.other += o.other;
    }
}

/// A recursive permutation-equivariant GNN built from set descriptors.
///
/// Inputs are `[batch, sets..., in_width]` with sets in descriptor order.
/// An embedding maps features to the hidden width, each layer applies the
/// recursive update followed by a rectifier (and the joint output function
/// when sets are joint), and a linear head produces `out_width` features.
#[derive(Clone, Debug)]
pub struct GnnModel {
    descriptors: Vec<SetDescriptor>,
    plan: GnnPlan,
    config: GnnConfig,
    in_width: usize,
    out_width: usize,
    params: Vec<(String, Tensor)>,
    embed: (usize, usize),
    layers: Vec<Node>,
    head: (usize, usize),
}

struct Builder<'a> {
    plan: &'a GnnPlan,
    cfg: &'a GnnConfig,
    params: Vec<(String, Tensor)>,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn tensor(&mut self, name: String, shape: &[usize], fan_in: usize) -> usize {
        let a = (1.0 / fan_in as f64).sqrt();
        self.params.push((name, Tensor::uniform(shape, -a, a, &mut self.rng)));
        self.params.len() - 1
    }

    fn linear(&mut self, prefix: &str, i: usize, o: usize) -> (usize, usize) {
        let w = self.tensor(format!("{prefix}.weight"), &[i, o], i);
        let b = self.tensor(format!("{prefix}.bias"), &[o], i);
        (w, b)
    }

    fn processor(&mut self, level: usize, prefix: &str, attention: bool, i: usize) -> Proc {
        let h = self.cfg.hidden;
        let node = Box::new(self.node(level + 1, prefix, i, h));
        let attn = attention.then(|| {
            let dh = self.cfg.attention_dim;
            (
                self.tensor(format!("{prefix}.query"), &[i, dh], i),
                self.tensor(format!("{prefix}.key"), &[i, dh], i),
            )
        });
        Proc { node, attn }
    }

    fn node(&mut self, level: usize, prefix: &str, i: usize, o: usize) -> Node {
        if level == self.plan.recursions.len() {
            let (w, b) = self.linear(prefix, i, o);
            return Node::Linear { w, b };
        }
        let h = self.cfg.hidden;
        let attention = self.plan.recursions[level].processor == ProcessorKind::Attention;
        if self.plan.recursions[level].tiers == 1 {
            let q = self.processor(level, &format!("{prefix}.q"), attention, i);
            let f = Box::new(self.node(level + 1, &format!("{prefix}.f"), i + h, o));
            Node::Ape { f, q }
        } else {
            let q1 = self.processor(level, &format!("{prefix}.q1"), attention, i);
            let q2 = Box::new(self.node(level + 1, &format!("{prefix}.q2"), h, h));
            let q3 = self.processor(level, &format!("{prefix}.q3"), attention, i);
            let f = Box::new(self.node(level + 1, &format!("{prefix}.f"), i + 2 * h, o));
            Node::Npe { f, q1, q2, q3 }
        }
    }
}

/// Builds a GNN whose recursions, template kinds, processor kinds and
/// output function follow the descriptors.
pub fn build_gnn_from_problem(
    descriptors: &[SetDescriptor],
    in_width: usize,
    out_width: usize,
    config: &GnnConfig,
    seed: u64,
) -> Result<GnnModel> {
    config.validate()?;
    if in_width == 0 || out_width == 0 {
        return Err(contract("feature widths must be positive"));
    }
    let plan = plan_gnn(descriptors, &config.placement)?;
    if let Some(r) = plan.recursions.iter().find(|r| r.tiers > 2) {
        return Err(contract(format!(
            "set '{}' is three-tier nested; only one- and two-tier sets are executable",
            r.name
        )));
    }
    let mut b = Builder {
        plan: &plan,
        cfg: config,
        params: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let h = config.hidden;
    let embed = b.linear("embed", in_width, h);
    let layers = (0..config.layers)
        .map(|l| b.node(0, &format!("layer{l}"), h, h))
        .collect();
    let head = b.linear("head", h, out_width);
    let params = b.params;
    Ok(GnnModel {
        descriptors: descriptors.to_vec(),
        plan,
        config: config.clone(),
        in_width,
        out_width,
        params,
        embed,
        layers,
        head,
    })
}

struct Ctx<'a, 't> {
    params: &'a [Var<'t>],
    /// Set axes in recursion order.
    axes: Vec<SetAxis>,
    pooling: PoolOp,
    dh: usize,
}

fn shape_with(batch: &[usize], rest: &[usize], width: usize) -> Vec<usize> {
    let mut s = batch.to_vec();
    s.extend_from_slice(rest);
    s.push(width);
    s
}

impl<'t> Ctx<'_, 't> {
    fn p(&self, i: usize) -> Var<'t> {
        self.params[i]
    }

    /// Scaled attention logits `[groups, n, n]` from `x: [groups, n, ..., width]`,
    /// averaged over the `r` deeper positions.
    fn attention_logits(&self, x: Var<'t>, proj: (usize, usize), groups: usize, n: usize, r: usize) -> Result<Var<'t>> {
        let (wq, wk) = proj;
        let d = self.dh;
        let q = linear(x, self.p(wq), None)?.reshape(&[groups, n, r * d])?;
        let k = linear(x, self.p(wk), None)?.reshape(&[groups, n, r * d])?;
        Ok(q.bmm(k.transpose_last2()?)?.scale(1.0 / (r as f64 * (d as f64).sqrt())))
    }

    fn attention_weights(&self, x: Var<'t>, proj: (usize, usize), groups: usize, n: usize, r: usize) -> Result<Var<'t>> {
        self.attention_logits(x, proj, groups, n, r)?.softmax_axis(2)
    }

    /// Applies `node` at recursion `level` to `x: [B, N_level, ..., width]`.
    fn eval(&self, node: &Node, level: usize, x: Var<'t>) -> Result<Var<'t>> {
        match node {
            Node::Linear { w, b } => linear(x, self.p(*w), Some(self.p(*b))),
            Node::Ape { f, q } => {
                let s = x.shape();
                let (bt, n, fw) = (s[0], s[1], *s.last().unwrap());
                let rest = &s[2..s.len() - 1];
                let r: usize = rest.iter().product();
                let flat = x.reshape(&shape_with(&[bt * n], rest, fw))?;
                let v = self.eval(&q.node, level + 1, flat)?;
                let h = *v.shape().last().unwrap();
                let v3 = v.reshape(&[bt, n, r * h])?;
                let pooled = match q.attn {
                    None => pool_others(v3, 1, self.pooling)?,
                    Some(proj) => self.attention_weights(x, proj, bt, n, r)?.bmm(v3)?,
                };
                let pooled = pooled.reshape(&shape_with(&[bt, n], rest, h))?;
                let cat = Var::concat(&[x, pooled], s.len() - 1)?;
                let y = self.eval(f, level + 1, cat.reshape(&shape_with(&[bt * n], rest, fw + h))?)?;
                let o = *y.shape().last().unwrap();
                y.reshape(&shape_with(&[bt, n], rest, o))
            }
            Node::Npe { f, q1, q2, q3 } => {
                let s = x.shape();
                let (bt, n, fw) = (s[0], s[1], *s.last().unwrap());
                let (m, g) = match self.axes[level] {
                    SetAxis::Nested {
                        subsets,
                        subset_size,
                    } => (subsets, subset_size),
                    SetAxis::Normal => (1, n),
                };
                let rest = &s[2..s.len() - 1];
                let r: usize = rest.iter().product();
                let flat = x.reshape(&shape_with(&[bt * n], rest, fw))?;

                let v1 = self.eval(&q1.node, level + 1, flat)?;
                let h = *v1.shape().last().unwrap();
                let v1 = v1.reshape(&[bt * m, g, r * h])?;
                let p1 = match q1.attn {
                    None => pool_others(v1, 1, self.pooling)?,
                    Some(proj) => {
                        let xs = x.reshape(&shape_with(&[bt * m, g], rest, fw))?;
                        self.attention_weights(xs, proj, bt * m, g, r)?.bmm(v1)?
                    }
                };
                let p1 = p1.reshape(&shape_with(&[bt, n], rest, h))?;

                let v3 = self.eval(&q3.node, level + 1, flat)?;
                let p2 = match q3.attn {
                    None => {
                        let mut s3 = v3.reshape(&[bt, m, g, r * h])?.sum_axis(2)?;
                        if self.pooling == PoolOp::Mean {
                            s3 = s3.scale(1.0 / g as f64);
                        }
                        let u2 = self.eval(q2, level + 1, s3.reshape(&shape_with(&[bt * m], rest, h))?)?;
                        let u2 = u2.reshape(&[bt, m, r * h])?;
                        pool_others(u2, 1, self.pooling)?.expand_axis(2, g)?
                    }
                    Some(proj) => {
                        // Attention of element (m, k) over each other subset i.
                        let a = self.attention_logits(x, proj, bt, n, r)?;
                        let a = a.reshape(&[bt, n, m, g])?.softmax_axis(3)?;
                        let a = a.permute_axes(&[0, 2, 1, 3])?.reshape(&[bt * m, n, g])?;
                        let agg = a.bmm(v3.reshape(&[bt * m, g, r * h])?)?;
                        let agg = agg.reshape(&[bt, m, n, r * h])?.permute_axes(&[0, 2, 1, 3])?;
                        let u2 = self.eval(q2, level + 1, agg.reshape(&shape_with(&[bt * n * m], rest, h))?)?;
                        let mut mask = vec![1.0; n * m];
                        for e in 0..n {
                            mask[e * m + e / g] = 0.0;
                        }
                        let mask = Tensor::new(vec![n, m], mask)?;
                        let mask = x.tape().constant(broadcast(&mask, bt, r * h));
                        let mut p = u2.reshape(&[bt, n, m, r * h])?.mul(mask)?.sum_axis(2)?;
                        if self.pooling == PoolOp::Mean && m > 1 {
                            p = p.scale(1.0 / (m - 1) as f64);
                        }
                        p
                    }
                };
                let p2 = p2.reshape(&shape_with(&[bt, n], rest, h))?;
                let cat = Var::concat(&[x, p1, p2], s.len() - 1)?;
                let y = self.eval(f, level + 1, cat.reshape(&shape_with(&[bt * n], rest, fw + 2 * h))?)?;
                let o = *y.shape().last().unwrap();
                y.reshape(&shape_with(&[bt, n], rest, o))
            }
        }
    }
}

/// Repeats `t: [n, m]` to `[batch, n, m, inner]`.
fn broadcast(t: &Tensor, batch: usize, inner: usize) -> Tensor {
    let mut data = Vec::with_capacity(batch * t.len() * inner);
    for _ in 0..batch {
        for &v in t.data() {
            data.extend(std::iter::repeat_n(v, inner));
        }
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(t.shape());
    shape.push(inner);
    Tensor::from_parts(shape, data)
}

impl GnnModel {
    pub fn plan(&self) -> &GnnPlan {
        &self.plan
    }

    pub fn descriptors(&self) -> &[SetDescriptor] {
        &self.descriptors
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn param_set(&self) -> ParamSet {
        ParamSet {
            entries: self.params.clone(),
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Replaces every parameter; names and shapes must match exactly.
    pub fn set_params(&mut self, p: &ParamSet) -> Result<()> {
        if p.entries.len() != self.params.len() {
            return Err(contract(format!(
                "{} parameters supplied for a model with {}",
                p.entries.len(),
                self.params.len()
            )));
        }
        for ((n, t), (pn, pt)) in self.params.iter().zip(&p.entries) {
            if n != pn || t.shape() != pt.shape() {
                return Err(contract(format!(
                    "parameter '{pn}' {:?} does not match '{n}' {:?}",
                    pt.shape(),
                    t.shape()
                )));
            }
        }
        for (dst, (_, src)) in self.params.iter_mut().zip(&p.entries) {
            dst.1 = src.clone();
        }
        Ok(())
    }

    pub fn set_param_tensors(&mut self, values: Vec<Tensor>) -> Result<()> {
        let entries = self
            .params
            .iter()
            .zip(values)
            .map(|((n, _), t)| (n.clone(), t))
            .collect();
        self.set_params(&ParamSet { entries })
    }

    /// Records every parameter on `tape` as trainable, in storage order.
    pub fn param_vars<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|(_, t)| tape.param(t.clone())).collect()
    }

    fn check_axes(&self, shape: &[usize], axes: &[SetAxis]) -> Result<()> {
        let s = self.descriptors.len();
        if shape.len() != s + 2 || axes.len() != s {
            return Err(contract(format!(
                "model over {s} sets received shape {shape:?} with {} axes",
                axes.len()
            )));
        }
        if shape[s + 1] != self.in_width {
            return Err(contract(format!(
                "model expects {} input features, got {}",
                self.in_width,
                shape[s + 1]
            )));
        }
        for (i, (d, a)) in self.descriptors.iter().zip(axes).enumerate() {
            let ok = match (d.kind, a) {
                (DescriptorKind::Normal, SetAxis::Normal) => true,
                (DescriptorKind::Nested { .. }, SetAxis::Nested { subsets, subset_size }) => {
                    subsets * subset_size == shape[i + 1]
                }
                _ => false,
            };
            if !ok || shape[i + 1] == 0 {
                return Err(contract(format!("axis {i} does not match set '{}'", d.name)));
            }
        }
        for g in &self.plan.joint_groups {
            let outer: Vec<usize> = g
                .iter()
                .map(|&i| match axes[i] {
                    SetAxis::Normal => shape[i + 1],
                    SetAxis::Nested { subsets, .. } => subsets,
                })
                .collect();
            if outer.windows(2).any(|w| w[0] != w[1]) {
                return Err(contract("jointly permuted sets have different sizes"));
            }
        }
        Ok(())
    }

    /// Mask over `[batch, sets in recursion order..., hidden]`.
    fn joint_mask(&self, shape: &[usize], axes: &[SetAxis]) -> Tensor {
        let order = self.plan.order();
        let pos: Vec<usize> = (0..order.len())
            .map(|d| order.iter().position(|&o| o == d).unwrap() + 1)
            .collect();
        let outer = |d: usize, i: usize| match axes[d] {
            SetAxis::Normal => i,
            SetAxis::Nested { subset_size, .. } => i / subset_size,
        };
        let nd = shape.len();
        let mut idx = vec![0usize; nd];
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            let same = self.plan.joint_groups.iter().all(|g| {
                let first = outer(g[0], idx[pos[g[0]]]);
                g.iter().all(|&d| outer(d, idx[pos[d]]) == first)
            });
            data.push(if same { 1.0 } else { 0.0 });
            for a in (0..nd).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Tensor::from_parts(shape.to_vec(), data)
    }

    /// Forward pass on `tape`. `x` is `[batch, sets..., in_width]` with sets
    /// in descriptor order and `axes` their structure.
    pub fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>, axes: &[SetAxis]) -> Result<Var<'t>> {
        if params.len() != self.params.len() {
            return Err(contract("parameter handles do not match the model"));
        }
        let shape = x.shape();
        self.check_axes(&shape, axes)?;
        let s = self.descriptors.len();
        let order = self.plan.order();
        let mut perm = vec![0];
        perm.extend(order.iter().map(|&o| o + 1));
        perm.push(s + 1);
        let mut inv = vec![0; s + 2];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let ctx = Ctx {
            params,
            axes: order.iter().map(|&o| axes[o]).collect(),
            pooling: self.config.pooling,
            dh: self.config.attention_dim,
        };
        let mut h = linear(x.permute_axes(&perm)?, params[self.embed.0], Some(params[self.embed.1]))?;
        let mask = if self.plan.output_function {
            let m = self.joint_mask(&h.shape(), axes);
            Some((x.tape().constant(m.clone()), x.tape().constant(m.map(|v| 1.0 - v))))
        } else {
            None
        };
        for node in &self.layers {
            let mut y = ctx.eval(node, 0, h)?.relu();
            if let Some((m, keep)) = mask {
                y = y.mul(m)?.add(h.mul(keep)?)?;
            }
            h = y;
        }
        let out = linear(h, params[self.head.0], Some(params[self.head.1]))?;
        out.permute_axes(&inv)
    }

    /// Forward pass without gradients.
    pub fn predict(&self, x: &Tensor, axes: &[SetAxis]) -> Result<Tensor> {
        let tape = Tape::new();
        let params: Vec<Var<'_>> = self.params.iter().map(|(_, t)| tape.constant(t.clone())).collect();
        let y = self.forward(&params, tape.constant(x.clone()), axes)?;
        let v = y.value();
        Ok((*v).clone())
    }

    fn leaf_width(&self, node: &Node) -> usize {
        match node {
            Node::Linear { w, .. } => self.params[*w].1.shape()[1],
            _ => unreachable!(),
        }
    }

    fn count_node(&self, node: &Node, level: usize, axes: &[SetAxis], batch: u64, sizes: &[usize], width: usize) -> (MacCount, usize) {
        let rest = |from: usize| sizes[from..].iter().map(|&s| s as u64).product::<u64>();
        let d = self.config.attention_dim as u64;
        match node {
            Node::Linear { .. } => {
                let o = self.leaf_width(node);
                let other = batch * rest(level) * width as u64 * o as u64;
                (MacCount { pairwise: 0, other }, o)
            }
            Node::Ape { f, q } => {
                let n = sizes[level] as u64;
                let r = rest(level + 1);
                let mut c = MacCount::default();
                let (cq, h) = self.count_node(&q.node, level + 1, axes, batch * n, sizes, width);
                c.add(cq);
                if q.attn.is_some() {
                    c.other += 2 * batch * n * r * width as u64 * d;
                    c.pairwise += batch * n * n * r * (d + h as u64);
                }
                let (cf, o) = self.count_node(f, level + 1, axes, batch * n, sizes, width + h);
                c.add(cf);
                (c, o)
            }
            Node::Npe { f, q1, q2, q3 } => {
                let n = sizes[level] as u64;
                let (m, g) = match axes[level] {
                    SetAxis::Nested {
                        subsets,
                        subset_size,
                    } => (subsets as u64, subset_size as u64),
                    SetAxis::Normal => (1, n),
                };
                let r = rest(level + 1);
                let mut c = MacCount::default();
                let (c1, h) = self.count_node(&q1.node, level + 1, axes, batch * n, sizes, width);
                c.add(c1);
                if q1.attn.is_some() {
                    c.other += 2 * batch * n * r * width as u64 * d;
                    c.pairwise += batch * m * g * g * r * (d + h as u64);
                }
                let (c3, _) = self.count_node(&q3.node, level + 1, axes, batch * n, sizes, width);
                c.add(c3);
                let q2_batch = if q3.attn.is_some() {
                    c.other += 2 * batch * n * r * width as u64 * d;
                    c.pairwise += batch * n * n * r * (d + h as u64);
                    batch * n * m
                } else {
                    batch * m
                };
                let (c2, _) = self.count_node(q2, level + 1, axes, q2_batch, sizes, h);
                c.add(c2);
                let (cf, o) = self.count_node(f, level + 1, axes, batch * n, sizes, width + 2 * h);
                c.add(cf);
                (c, o)
            }
        }
    }

    /// Analytic multiply-add count of one forward pass on a single sample
    /// with the given set sizes and structure (descriptor order).
    pub fn count_macs(&self, axes: &[SetAxis], sizes: &[usize]) -> Result<MacCount> {
        let mut shape = vec![1];
        shape.extend_from_slice(sizes);
        shape.push(self.in_width);
        self.check_axes(&shape, axes)?;
        let order = self.plan.order();
        let rs: Vec<usize> = order.iter().map(|&o| sizes[o]).collect();
        let ra: Vec<SetAxis> = order.iter().map(|&o| axes[o]).collect();
        let elems: u64 = sizes.iter().map(|&s| s as u64).product();
        let h = self.config.hidden as u64;
        let mut c = MacCount {
            pairwise: 0,
            other: elems * (self.in_width as u64 * h + h * self.out_width as u64),
        };
        for node in &self.layers {
            let (cl, _) = self.count_node(node, 0, &ra, 1, &rs, self.config.hidden);
            c.add(cl);
        }
        Ok(c)
    }

    fn node_structure(&self, node: &Node, level: usize) -> Structure {
        match node {
            Node::Linear { w, .. } => Structure::Leaf {
                name: self.params[*w].0.trim_end_matches(".weight").to_string(),
            },
            Node::Ape { f, q } => Structure::Template {
                kind: self.plan.recursions[level].template,
                combiner: Box::new(self.node_structure(f, level + 1)),
                processors: vec![self.proc_structure(q, level)],
            },
            Node::Npe { f, q1, q2, q3 } => Structure::Template {
                kind: self.plan.recursions[level].template,
                combiner: Box::new(self.node_structure(f, level + 1)),
                processors: vec![
                    self.proc_structure(q1, level),
                    (ProcessorKind::Ordinary, self.node_structure(q2, level + 1)),
                    self.proc_structure(q3, level),
                ],
            },
        }
    }

    fn proc_structure(&self, p: &Proc, level: usize) -> (ProcessorKind, Structure) {
        let kind = if p.attn.is_some() {
            ProcessorKind::Attention
        } else {
            ProcessorKind::Ordinary
        };
        (kind, self.node_structure(&p.node, level + 1))
    }

    /// Composition of one layer's update.
    pub fn layer_structure(&self) -> Structure {
        self.node_structure(&self.layers[0], 0)
    }

    /// Template kind of each recursion, outermost first.
    pub fn template_kinds(&self) -> Vec<TemplateKind> {
        self.plan.recursions.iter().map(|r| r.template).collect()
    }
}

impl SetFunction for GnnModel {
    fn depth(&self) -> usize {
        self.descriptors.len()
    }

    fn in_width(&self) -> Option<usize> {
        Some(self.in_width)
    }

    fn out_width(&self) -> Option<usize> {
        Some(self.out_width)
    }

    fn apply(&self, x: &SetTensor) -> Result<SetTensor> {
        let mut shape = vec![1];
        shape.extend_from_slice(x.value.shape());
        let y = self.predict(&x.value.reshape(&shape)?, &x.axes)?;
        let out = y.reshape(&y.shape()[1..])?;
        SetTensor::new(out, x.axes.clone())
    }

    fn structure(&self) -> Structure {
        self.layer_structure()
    }

    fn params(&self) -> Vec<(String, Tensor)> {
        self.params.clone()
    }
}
