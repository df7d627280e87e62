use pe_align::permutation::*;
use pe_align::{Error, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn one_element_permutation_is_identity() {
    for seed in 0..5 {
        assert!(build_permutation(1, seed).unwrap().is_identity());
    }
    assert!(matches!(build_permutation(0, 0), Err(Error::Contract(_))));
}

#[test]
fn two_elements_swap_for_some_seed() {
    let swap = (0..64).find(|&s| build_permutation(2, s).unwrap().as_slice() == [1, 0]);
    assert!(swap.is_some());
    let s = swap.unwrap();
    assert_eq!(build_permutation(2, s).unwrap(), build_permutation(2, s).unwrap());
}

#[test]
fn composing_with_the_inverse_is_identity() {
    let p = build_permutation(5, 9).unwrap();
    assert!(p.then(&p.inverse()).unwrap().is_identity());
    assert!(p.inverse().then(&p).unwrap().is_identity());
}

#[test]
fn non_bijections_are_rejected() {
    assert!(Permutation::new(vec![0, 0, 1]).is_err());
    assert!(Permutation::new(vec![0, 3]).is_err());
}

#[test]
fn single_subset_is_a_plain_permutation() {
    let n = build_nested_permutation(&[4], 3).unwrap();
    assert_eq!(n.subsets(), 1);
    assert_eq!(n.flatten(), n.inner[0]);
}

#[test]
fn outer_swap_moves_whole_subsets() {
    let n = NestedPermutation::new(
        Permutation::new(vec![1, 0]).unwrap(),
        vec![Permutation::identity(3); 2],
    )
    .unwrap();
    let x: Vec<&str> = vec!["x11", "x21", "x31", "x12", "x22", "x32"];
    assert_eq!(n.flatten().apply_slice(&x), vec!["x12", "x22", "x32", "x11", "x21", "x31"]);
}

#[test]
fn unequal_subsets_are_rejected() {
    assert!(build_nested_permutation(&[2, 3], 0).is_err());
    assert!(build_nested_permutation(&[], 0).is_err());
    assert!(NestedPermutation::new(
        Permutation::identity(2),
        vec![Permutation::identity(2), Permutation::identity(3)]
    )
    .is_err());
}

/// Permutation matrix `P` with `(P x)[map[i]] = x[i]`.
fn matrix(p: &Permutation) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut m = vec![vec![0.0; n]; n];
    for (i, &d) in p.as_slice().iter().enumerate() {
        m[d][i] = 1.0;
    }
    m
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

/// Outer permutation of subsets tensored with the identity, times the
/// block diagonal of inner permutations.
fn omega(n: &NestedPermutation) -> Vec<Vec<f64>> {
    let (m, k) = (n.subsets(), n.subset_size());
    let outer = matrix(&n.outer);
    let mut kron = vec![vec![0.0; m * k]; m * k];
    let mut diag = vec![vec![0.0; m * k]; m * k];
    for a in 0..m {
        for b in 0..m {
            for i in 0..k {
                kron[a * k + i][b * k + i] = outer[a][b];
            }
        }
        let inner = matrix(&n.inner[a]);
        for i in 0..k {
            for j in 0..k {
                diag[a * k + i][a * k + j] = inner[i][j];
            }
        }
    }
    matmul(&kron, &diag)
}

#[test]
fn nested_application_matches_the_explicit_matrix() {
    let n = build_nested_permutation(&[4, 4, 4], 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::uniform(&[12], -1.0, 1.0, &mut rng);
    let col: Vec<Vec<f64>> = x.data().iter().map(|&v| vec![v]).collect();
    let want = matmul(&omega(&n), &col);
    let got = n.flatten().apply_axis(&x, 0).unwrap();
    for i in 0..12 {
        assert!((got.data()[i] - want[i][0]).abs() < 1e-15);
    }
}

fn sort_axis0(x: &Tensor) -> Tensor {
    let mut v = x.data().to_vec();
    v.sort_by(f64::total_cmp);
    Tensor::new(x.shape().to_vec(), v).unwrap()
}

#[test]
fn identity_passes_with_zero_error() {
    let s = PermutationScheme::new(
        vec![SetSpec::normal("a", 4), SetSpec::nested("b", 2, 3)],
        vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Fixed(2)],
    )
    .unwrap();
    let rep = check_equivariance(|x| Ok(x.clone()), &s, &s, 20, 0.0, 0).unwrap();
    assert!(rep.pass);
    assert_eq!(rep.max_abs_error, 0.0);
}

#[test]
fn sorting_fails_the_check() {
    for k in [2, 5] {
        let s = PermutationScheme::new(vec![SetSpec::normal("k", k)], vec![AxisSpec::Set(0)]).unwrap();
        let rep = check_equivariance(|x| Ok(sort_axis0(x)), &s, &s, 50, 1e-9, 4).unwrap();
        assert!(!rep.pass, "k={k}");
    }
}

#[test]
fn independent_permutations_break_a_joint_map() {
    // Transposition is joint-PE but not 2D-PE.
    let transpose = |x: &Tensor| x.permute_axes(&[1, 0]);
    let joint = PermutationScheme::new(vec![SetSpec::normal("k", 4)], vec![AxisSpec::Set(0), AxisSpec::Set(0)]).unwrap();
    assert!(check_equivariance(transpose, &joint, &joint, 50, 1e-12, 1).unwrap().pass);
    let two = PermutationScheme::new(
        vec![SetSpec::normal("r", 4), SetSpec::normal("c", 4)],
        vec![AxisSpec::Set(0), AxisSpec::Set(1)],
    )
    .unwrap();
    assert!(!check_equivariance(transpose, &two, &two, 50, 1e-12, 1).unwrap().pass);
}

#[test]
fn shared_outer_groups_move_subsets_together() {
    let s = PermutationScheme::with_shared_outer(
        vec![SetSpec::nested("a", 3, 2), SetSpec::nested("b", 3, 4)],
        vec![AxisSpec::Set(0), AxisSpec::Set(1)],
        vec![vec![0, 1]],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let d = s.draw(&mut rng);
        let (SetPermutation::Nested(a), SetPermutation::Nested(b)) = (&d.perms[0], &d.perms[1]) else {
            panic!()
        };
        assert_eq!(a.outer, b.outer);
    }
    assert!(PermutationScheme::with_shared_outer(
        vec![SetSpec::nested("a", 3, 2), SetSpec::nested("b", 2, 2)],
        vec![AxisSpec::Set(0), AxisSpec::Set(1)],
        vec![vec![0, 1]]
    )
    .is_err());
}

#[test]
fn checker_rejects_mismatched_shapes() {
    let s = PermutationScheme::new(vec![SetSpec::normal("k", 3)], vec![AxisSpec::Set(0)]).unwrap();
    let o = PermutationScheme::new(vec![SetSpec::normal("k", 3)], vec![AxisSpec::Set(0), AxisSpec::Fixed(2)]).unwrap();
    let err = check_equivariance(|x| Ok(x.clone()), &s, &o, 3, 1e-9, 0).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
    assert!(check_equivariance(|x| Ok(x.clone()), &s, &s, 0, 1e-9, 0).is_err());
}

fn scheme_strategy() -> impl Strategy<Value = (PermutationScheme, u64)> {
    (1usize..5, 1usize..4, 1usize..4, any::<bool>(), any::<u64>()).prop_map(|(n, m, k, joint, seed)| {
        let sets = vec![SetSpec::normal("a", n), SetSpec::nested("b", m, k)];
        let axes = if joint {
            vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Set(0), AxisSpec::Fixed(2)]
        } else {
            vec![AxisSpec::Set(1), AxisSpec::Set(0), AxisSpec::Fixed(3)]
        };
        (PermutationScheme::new(sets, axes).unwrap(), seed)
    })
}

proptest! {
    #[test]
    fn inverse_draw_undoes_application((scheme, seed) in scheme_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(&scheme.shape(), -1.0, 1.0, &mut rng);
        let d = scheme.draw(&mut rng);
        let back = scheme.apply(&d.inverse(), &scheme.apply(&d, &x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn nested_matches_matrix_for_any_sizes(m in 1usize..4, k in 1usize..5, seed in any::<u64>()) {
        let n = build_nested_permutation(&vec![k; m], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(&[m * k], -1.0, 1.0, &mut rng);
        let col: Vec<Vec<f64>> = x.data().iter().map(|&v| vec![v]).collect();
        let want = matmul(&omega(&n), &col);
        let got = n.flatten().apply_axis(&x, 0).unwrap();
        for i in 0..m * k {
            prop_assert!((got.data()[i] - want[i][0]).abs() < 1e-15);
        }
        prop_assert_eq!(n.inverse().flatten(), n.flatten().inverse());
    }

    #[test]
    fn built_permutations_are_bijections(k in 1usize..40, seed in any::<u64>()) {
        let p = build_permutation(k, seed).unwrap();
        let mut s = p.as_slice().to_vec();
        s.sort();
        prop_assert_eq!(s, (0..k).collect::<Vec<_>>());
        prop_assert_eq!(p.clone(), build_permutation(k, seed).unwrap());
    }
}
