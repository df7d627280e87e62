//! Arbitrary and nested permutations, permutation schemes over tensor axes,
//! and a randomized equivariance checker.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, shape_err, Result};
use crate::tensor::Tensor;

/// A bijection on `0..K`; `map[i]` is the destination of source element `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(contract("a permutation needs at least one element"));
        }
        let mut seen = vec![false; n];
        for &d in &map {
            if d >= n || std::mem::replace(&mut seen[d], true) {
                return Err(contract(format!("{map:?} is not a bijection on 0..{n}")));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &d)| i == d)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &d) in self.map.iter().enumerate() {
            inv[d] = i;
        }
        Self { map: inv }
    }

    /// The permutation that applies `self` first and then `next`.
    pub fn then(&self, next: &Permutation) -> Result<Self> {
        if self.len() != next.len() {
            return Err(contract("composing permutations of different sizes"));
        }
        Ok(Self {
            map: self.map.iter().map(|&d| next.map[d]).collect(),
        })
    }

    /// Moves the slice at source index `i` of `axis` to index `map[i]`.
    pub fn apply_axis(&self, x: &Tensor, axis: usize) -> Result<Tensor> {
        if axis >= x.ndim() || x.shape()[axis] != self.len() {
            return Err(shape_err(
                "permute",
                format!(
                    "permutation of {} elements on axis {axis} of {:?}",
                    self.len(),
                    x.shape()
                ),
            ));
        }
        let shape = x.shape();
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = x.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for (i, &d) in self.map.iter().enumerate() {
                let s = (o * n + i) * inner;
                let t = (o * n + d) * inner;
                out[t..t + inner].copy_from_slice(&src[s..s + inner]);
            }
        }
        Tensor::new(shape.to_vec(), out)
    }

    /// Applies the permutation to a slice of items.
    pub fn apply_slice<T: Clone>(&self, items: &[T]) -> Vec<T> {
        assert_eq!(items.len(), self.len());
        let mut out = items.to_vec();
        for (i, &d) in self.map.iter().enumerate() {
            out[d] = items[i].clone();
        }
        out
    }
}

/// Uniformly random permutation of `k` elements, fixed by `seed`.
pub fn build_permutation(k: usize, seed: u64) -> Result<Permutation> {
    if k == 0 {
        return Err(contract("permutation size must be at least 1"));
    }
    Ok(Permutation::random(k, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Permutes `M` subsets of `K` elements each and, independently, the
/// elements inside every subset. Flat index `m*K + k` holds element `k` of
/// subset `m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestedPermutation {
    pub outer: Permutation,
    pub inner: Vec<Permutation>,
}

impl NestedPermutation {
    pub fn new(outer: Permutation, inner: Vec<Permutation>) -> Result<Self> {
        if inner.len() != outer.len() {
            return Err(contract(format!(
                "{} inner permutations for {} subsets",
                inner.len(),
                outer.len()
            )));
        }
        let k = inner[0].len();
        if inner.iter().any(|p| p.len() != k) {
            return Err(contract("nested permutation subsets must have equal sizes"));
        }
        Ok(Self { outer, inner })
    }

    pub fn random<R: Rng + ?Sized>(subsets: usize, subset_size: usize, rng: &mut R) -> Self {
        let outer = Permutation::random(subsets, rng);
        let inner = (0..subsets)
            .map(|_| Permutation::random(subset_size, rng))
            .collect();
        Self { outer, inner }
    }

    pub fn subsets(&self) -> usize {
        self.outer.len()
    }

    pub fn subset_size(&self) -> usize {
        self.inner[0].len()
    }

    /// The equivalent permutation of the flattened `M*K` index.
    pub fn flatten(&self) -> Permutation {
        let k = self.subset_size();
        let mut map = Vec::with_capacity(self.subsets() * k);
        for (m, inner) in self.inner.iter().enumerate() {
            for &d in inner.as_slice() {
                map.push(self.outer.as_slice()[m] * k + d);
            }
        }
        Permutation { map }
    }

    pub fn inverse(&self) -> Self {
        let outer_inv = self.outer.inverse();
        // Subset now at position d came from subset outer_inv[d].
        let inner = (0..self.subsets())
            .map(|d| self.inner[outer_inv.as_slice()[d]].inverse())
            .collect();
        Self {
            outer: outer_inv,
            inner,
        }
    }
}

/// Nested permutation with equal subset sizes, fixed by `seed`.
pub fn build_nested_permutation(subset_sizes: &[usize], seed: u64) -> Result<NestedPermutation> {
    let first = *subset_sizes
        .first()
        .ok_or_else(|| contract("nested permutation needs at least one subset"))?;
    if first == 0 || subset_sizes.iter().any(|&s| s != first) {
        return Err(contract(format!(
            "subset sizes must be equal and positive, got {subset_sizes:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(NestedPermutation::random(subset_sizes.len(), first, &mut rng))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SetKind {
    Normal(usize),
    Nested { subsets: usize, subset_size: usize },
}

impl SetKind {
    pub fn len(&self) -> usize {
        match *self {
            SetKind::Normal(n) => n,
            SetKind::Nested {
                subsets,
                subset_size,
            } => subsets * subset_size,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetSpec {
    pub name: String,
    pub kind: SetKind,
}

impl SetSpec {
    pub fn normal(name: &str, n: usize) -> Self {
        Self {
            name: name.into(),
            kind: SetKind::Normal(n),
        }
    }

    pub fn nested(name: &str, subsets: usize, subset_size: usize) -> Self {
        Self {
            name: name.into(),
            kind: SetKind::Nested {
                subsets,
                subset_size,
            },
        }
    }
}

/// Role of one tensor axis in a scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisSpec {
    /// Never permuted (feature or representation axis).
    Fixed(usize),
    /// Permuted by the set with this index. Several axes naming the same
    /// set share one permutation (joint-PE).
    Set(usize),
}

/// Sets, how they map onto tensor axes, and which nested sets share their
/// subset-level permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationScheme {
    sets: Vec<SetSpec>,
    axes: Vec<AxisSpec>,
    shared_outer: Vec<Vec<usize>>,
}

/// One random draw of every set's permutation in a scheme.
#[derive(Clone, Debug)]
pub enum SetPermutation {
    Normal(Permutation),
    Nested(NestedPermutation),
}

impl SetPermutation {
    pub fn flatten(&self) -> Permutation {
        match self {
            SetPermutation::Normal(p) => p.clone(),
            SetPermutation::Nested(n) => n.flatten(),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            SetPermutation::Normal(p) => SetPermutation::Normal(p.inverse()),
            SetPermutation::Nested(n) => SetPermutation::Nested(n.inverse()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeDraw {
    pub perms: Vec<SetPermutation>,
}

impl SchemeDraw {
    pub fn inverse(&self) -> Self {
        Self {
            perms: self.perms.iter().map(SetPermutation::inverse).collect(),
        }
    }
}

impl PermutationScheme {
    pub fn new(sets: Vec<SetSpec>, axes: Vec<AxisSpec>) -> Result<Self> {
        Self::with_shared_outer(sets, axes, Vec::new())
    }

    /// Like [`PermutationScheme::new`], additionally tying the subset-level
    /// permutation of each listed group of nested sets together.
    pub fn with_shared_outer(
        sets: Vec<SetSpec>,
        axes: Vec<AxisSpec>,
        shared_outer: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if axes.is_empty() {
            return Err(contract("scheme has no axes"));
        }
        for s in &sets {
            if s.kind.is_empty() {
                return Err(contract(format!("set '{}' is empty", s.name)));
            }
        }
        for a in &axes {
            match *a {
                AxisSpec::Fixed(0) => return Err(contract("fixed axis of length 0")),
                AxisSpec::Set(i) if i >= sets.len() => {
                    return Err(contract(format!("axis refers to unknown set {i}")))
                }
                _ => {}
            }
        }
        let mut grouped = vec![false; sets.len()];
        for g in &shared_outer {
            let mut count = None;
            for &i in g {
                let Some(SetKind::Nested { subsets, .. }) = sets.get(i).map(|s| &s.kind) else {
                    return Err(contract(format!("shared-outer group names non-nested set {i}")));
                };
                if std::mem::replace(&mut grouped[i], true) {
                    return Err(contract(format!("set {i} appears in two shared-outer groups")));
                }
                if *count.get_or_insert(*subsets) != *subsets {
                    return Err(contract("shared-outer sets differ in subset count"));
                }
            }
        }
        Ok(Self {
            sets,
            axes,
            shared_outer,
        })
    }

    pub fn sets(&self) -> &[SetSpec] {
        &self.sets
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| match *a {
                AxisSpec::Fixed(n) => n,
                AxisSpec::Set(i) => self.sets[i].kind.len(),
            })
            .collect()
    }

    /// Same sets and sharing rules, possibly over a different axis layout.
    pub fn compatible_with(&self, other: &PermutationScheme) -> bool {
        self.sets == other.sets && self.shared_outer == other.shared_outer
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SchemeDraw {
        let mut perms: Vec<SetPermutation> = self
            .sets
            .iter()
            .map(|s| match s.kind {
                SetKind::Normal(n) => SetPermutation::Normal(Permutation::random(n, rng)),
                SetKind::Nested {
                    subsets,
                    subset_size,
                } => SetPermutation::Nested(NestedPermutation::random(subsets, subset_size, rng)),
            })
            .collect();
        for g in &self.shared_outer {
            let Some(&lead) = g.first() else { continue };
            let SetPermutation::Nested(n) = &perms[lead] else { unreachable!() };
            let outer = n.outer.clone();
            for &i in &g[1..] {
                if let SetPermutation::Nested(n) = &mut perms[i] {
                    n.outer = outer.clone();
                }
            }
        }
        SchemeDraw { perms }
    }

    pub fn identity_draw(&self) -> SchemeDraw {
        SchemeDraw {
            perms: self
                .sets
                .iter()
                .map(|s| match s.kind {
                    SetKind::Normal(n) => SetPermutation::Normal(Permutation::identity(n)),
                    SetKind::Nested {
                        subsets,
                        subset_size,
                    } => SetPermutation::Nested(NestedPermutation {
                        outer: Permutation::identity(subsets),
                        inner: vec![Permutation::identity(subset_size); subsets],
                    }),
                })
                .collect(),
        }
    }

    /// Permutes every set axis of `x` according to `draw`.
    pub fn apply(&self, draw: &SchemeDraw, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.shape().as_slice() {
            return Err(contract(format!(
                "tensor shape {:?} does not match scheme shape {:?}",
                x.shape(),
                self.shape()
            )));
        }
        let flat: Vec<Permutation> = draw.perms.iter().map(SetPermutation::flatten).collect();
        let mut out = x.clone();
        for (axis, a) in self.axes.iter().enumerate() {
            if let AxisSpec::Set(i) = *a {
                out = flat[i].apply_axis(&out, axis)?;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct EquivarianceReport {
    pub pass: bool,
    pub max_abs_error: f64,
    pub trials: usize,
}

/// Draws random inputs uniform in `[-1, 1]` and random permutations, and
/// compares `permute(f(x))` with `f(permute(x))`.
pub fn check_equivariance<F>(
    f: F,
    input: &PermutationScheme,
    output: &PermutationScheme,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<EquivarianceReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let shape = input.shape();
    check_equivariance_with(f, input, output, trials, tol, seed, |rng| {
        Tensor::uniform(&shape, -1.0, 1.0, rng)
    })
}

/// [`check_equivariance`] with a caller-supplied input generator, for
/// functions whose domain is restricted.
pub fn check_equivariance_with<F, G>(
    f: F,
    input: &PermutationScheme,
    output: &PermutationScheme,
    trials: usize,
    tol: f64,
    seed: u64,
    mut generate: G,
) -> Result<EquivarianceReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
    G: FnMut(&mut ChaCha8Rng) -> Tensor,
{
    if trials == 0 {
        return Err(contract("at least one trial is required"));
    }
    if !input.compatible_with(output) {
        return Err(contract("input and output schemes declare different sets"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let x = generate(&mut rng);
        let draw = input.draw(&mut rng);
        let y = f(&x)?;
        if y.shape() != output.shape().as_slice() {
            return Err(contract(format!(
                "function output {:?} does not match output scheme {:?}",
                y.shape(),
                output.shape()
            )));
        }
        let lhs = output.apply(&draw, &y)?;
        let rhs = f(&input.apply(&draw, &x)?)?;
        let err = lhs
            .max_abs_diff(&rhs)
            .ok_or_else(|| contract("function output shape depends on permutation"))?;
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    Ok(EquivarianceReport {
        pass: worst <= tol,
        max_abs_error: worst,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_is_identity() {
        assert!(build_permutation(1, 7).unwrap().is_identity());
        assert!(build_permutation(0, 7).is_err());
    }

    #[test]
    fn two_elements_some_seed_swaps() {
        let swapped = (0..32).any(|s| build_permutation(2, s).unwrap().as_slice() == [1, 0]);
        assert!(swapped);
    }

    #[test]
    fn composition_with_inverse_is_identity() {
        let p = build_permutation(5, 11).unwrap();
        assert!(p.then(&p.inverse()).unwrap().is_identity());
        assert!(p.inverse().then(&p).unwrap().is_identity());
    }

    #[test]
    fn outer_swap_moves_whole_subsets() {
        let n = NestedPermutation::new(
            Permutation::new(vec![1, 0]).unwrap(),
            vec![Permutation::identity(3); 2],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![11.0, 21.0, 31.0, 12.0, 22.0, 32.0]);
        let y = n.flatten().apply_axis(&x, 0).unwrap();
        assert_eq!(y.data(), &[12.0, 22.0, 32.0, 11.0, 21.0, 31.0]);
    }

    #[test]
    fn single_subset_reduces_to_plain_permutation() {
        let n = build_nested_permutation(&[4], 3).unwrap();
        assert_eq!(n.flatten(), n.inner[0]);
    }

    #[test]
    fn unequal_subsets_rejected() {
        assert!(build_nested_permutation(&[2, 3], 0).is_err());
        assert!(build_nested_permutation(&[], 0).is_err());
    }

    #[test]
    fn nested_inverse_undoes_flatten() {
        let n = build_nested_permutation(&[4, 4, 4], 5).unwrap();
        assert!(n.flatten().then(&n.inverse().flatten()).unwrap().is_identity());
    }

    #[test]
    fn identity_function_passes() {
        let s = PermutationScheme::new(
            vec![SetSpec::normal("ue", 4), SetSpec::normal("an", 3)],
            vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Fixed(2)],
        )
        .unwrap();
        let r = check_equivariance(|x| Ok(x.clone()), &s, &s, 10, 1e-12, 1).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_abs_error, 0.0);
    }

    #[test]
    fn shared_axes_use_one_permutation() {
        let s = PermutationScheme::new(
            vec![SetSpec::normal("k", 5)],
            vec![AxisSpec::Set(0), AxisSpec::Set(0)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = s.draw(&mut rng);
        let x = Tensor::eye(5);
        assert_eq!(s.apply(&d, &x).unwrap(), x);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let s = PermutationScheme::new(vec![SetSpec::normal("k", 3)], vec![AxisSpec::Set(0)]).unwrap();
        let r = check_equivariance(|_| Ok(Tensor::zeros(&[4])), &s, &s, 1, 1e-9, 0);
        assert!(r.is_err());
    }
}
