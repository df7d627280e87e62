use pe_align::tensor::{grad_check, kernels};
use pe_align::{Error, Result, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

#[test]
fn elementwise_add() {
    let y = kernels::add(&t(&[2], &[1.0, 2.0]), &t(&[2], &[3.0, 4.0])).unwrap();
    assert_eq!(y.data(), &[4.0, 6.0]);
}

#[test]
fn identity_matmul_returns_the_operand() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = rand_t(&[2, 5], &mut rng);
    assert_eq!(kernels::matmul(&Tensor::eye(2), &x).unwrap(), x);
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let y = kernels::softmax_axis(&Tensor::zeros(&[3]), 0).unwrap();
    for v in y.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn mismatched_shapes_are_a_shape_error() {
    let err = kernels::add(&Tensor::zeros(&[2]), &Tensor::zeros(&[3])).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
    assert!(kernels::matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).is_err());
}

#[test]
fn log_and_reciprocal_domain_errors() {
    assert!(matches!(kernels::log(&t(&[2], &[1.0, 0.0])), Err(Error::Domain { .. })));
    assert!(matches!(kernels::log(&t(&[1], &[-2.0])), Err(Error::Domain { .. })));
    assert!(matches!(kernels::reciprocal(&t(&[1], &[0.0])), Err(Error::Domain { .. })));
    let tape = Tape::new();
    assert!(tape.param(t(&[1], &[-1.0])).log().is_err());
}

#[test]
fn tensor_construction_checks_length() {
    assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    assert!(Tensor::new(vec![0, 2], vec![]).is_err());
}

#[test]
fn sum_gradient_is_all_ones() {
    let tape = Tape::new();
    let x = tape.param(t(&[3], &[0.3, -1.0, 2.0]));
    let loss = x.sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn square_gradient_doubles() {
    let tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    let loss = x.mul(x).unwrap().sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn backward_twice_without_rerecording_fails() {
    let tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    let loss = x.sum().unwrap();
    tape.backward(loss).unwrap();
    assert!(tape.backward(loss).is_err());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    assert!(matches!(tape.backward(x.scale(2.0)), Err(Error::Contract(_))));
}

#[test]
fn every_parameter_gets_a_gradient_of_its_shape() {
    let tape = Tape::new();
    let a = tape.param(Tensor::zeros(&[2, 3]));
    let b = tape.param(Tensor::zeros(&[4]));
    let loss = a.sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(a).unwrap().shape(), &[2, 3]);
    assert_eq!(g.get(b).unwrap(), &Tensor::zeros(&[4]));
}

#[test]
fn grad_check_of_a_sum_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rep = grad_check(|_, p| p[0].sum(), &[rand_t(&[5], &mut rng)], 1e-6, 1e-9);
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn grad_check_of_squared_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rep = grad_check(|_, p| p[0].square()?.sum(), &[rand_t(&[8], &mut rng)], 1e-6, 1e-6);
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn grad_check_of_two_layer_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_t(&[4, 3], &mut rng);
    let params = [
        rand_t(&[3, 5], &mut rng),
        rand_t(&[5], &mut rng),
        rand_t(&[5, 1], &mut rng),
    ];
    let rep = grad_check(
        |tape, p| {
            let h = tape.constant(x.clone()).matmul(p[0])?.add_bias(p[1])?.relu();
            h.matmul(p[2])?.square()?.sum()
        },
        &params,
        1e-6,
        1e-5,
    );
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn grad_check_reports_a_wrong_gradient() {
    // clip at an interior boundary has a kink; a step straddling it disagrees.
    let rep = grad_check(|_, p| p[0].clip(0.0, 1.0).sum(), &[t(&[1], &[1.0])], 1e-3, 1e-6);
    assert!(!rep.pass);
}

#[test]
fn clip_subgradient_is_one_inside_and_zero_outside() {
    let tape = Tape::new();
    let x = tape.param(t(&[4], &[-0.5, 0.0, 0.5, 2.0]));
    let loss = x.clip(0.0, 1.0).sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
}

type Prim = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

fn weighted<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.constant(rand_t(&y.shape(), &mut rng));
    y.mul(w)?.sum()
}

fn primitives() -> Vec<(&'static str, Vec<Vec<usize>>, bool, Prim)> {
    vec![
        ("add", vec![vec![2, 3], vec![2, 3]], false, |t, p| weighted(t, p[0].add(p[1])?, 1)),
        ("sub", vec![vec![2, 3], vec![2, 3]], false, |t, p| weighted(t, p[0].sub(p[1])?, 2)),
        ("mul", vec![vec![2, 3], vec![2, 3]], false, |t, p| weighted(t, p[0].mul(p[1])?, 3)),
        ("matmul", vec![vec![2, 3], vec![3, 4]], false, |t, p| weighted(t, p[0].matmul(p[1])?, 4)),
        ("bmm", vec![vec![2, 2, 3], vec![2, 3, 2]], false, |t, p| weighted(t, p[0].bmm(p[1])?, 5)),
        ("sum_axis", vec![vec![3, 4]], false, |t, p| weighted(t, p[0].sum_axis(1)?, 6)),
        ("concat", vec![vec![2, 3], vec![2, 1]], false, |t, p| {
            weighted(t, Var::concat(&[p[0], p[1]], 1)?, 7)
        }),
        ("relu", vec![vec![3, 3]], false, |t, p| weighted(t, p[0].relu(), 8)),
        ("exp", vec![vec![3]], false, |t, p| weighted(t, p[0].exp()?, 9)),
        ("log", vec![vec![3]], true, |t, p| weighted(t, p[0].log()?, 10)),
        ("reciprocal", vec![vec![3]], true, |t, p| weighted(t, p[0].reciprocal()?, 11)),
        ("clip", vec![vec![4]], false, |t, p| weighted(t, p[0].clip(-0.5, 0.5), 12)),
        ("softmax_axis", vec![vec![2, 4]], false, |t, p| weighted(t, p[0].softmax_axis(1)?, 13)),
        ("norm_axis", vec![vec![3, 2]], false, |t, p| weighted(t, p[0].norm_axis(0)?, 14)),
        ("div", vec![vec![3], vec![3]], true, |t, p| weighted(t, p[0].div(p[1])?, 15)),
        ("permute_axes", vec![vec![2, 3, 2]], false, |t, p| {
            weighted(t, p[0].permute_axes(&[2, 0, 1])?, 16)
        }),
        ("expand_axis", vec![vec![2, 1]], false, |t, p| weighted(t, p[0].expand_axis(1, 3)?, 17)),
        ("slice_axis", vec![vec![4, 2]], false, |t, p| weighted(t, p[0].slice_axis(0, 1, 2)?, 18)),
        ("add_bias", vec![vec![3, 2], vec![2]], false, |t, p| weighted(t, p[0].add_bias(p[1])?, 19)),
        ("transpose", vec![vec![2, 3, 4]], false, |t, p| weighted(t, p[0].transpose_last2()?, 20)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn primitive_gradients_match_central_differences(seed in any::<u64>()) {
        for (name, shapes, positive, f) in primitives() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params: Vec<Tensor> = shapes
                .iter()
                .map(|s| {
                    let x = rand_t(s, &mut rng);
                    if positive { x.map(|v| v + 1.5) } else { x }
                })
                .collect();
            let rep = grad_check(f, &params, 1e-6, 1e-5);
            prop_assert!(rep.pass, "{name}: {rep:?}");
        }
    }

    #[test]
    fn kernels_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_t(&[5, 7], &mut rng);
        let b = rand_t(&[7, 3], &mut rng);
        let y1 = kernels::softmax_axis(&kernels::matmul(&a, &b).unwrap(), 1).unwrap();
        let y2 = kernels::softmax_axis(&kernels::matmul(&a, &b).unwrap(), 1).unwrap();
        prop_assert_eq!(y1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        y2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn sum_over_a_permuted_axis_is_unchanged(seed in any::<u64>(), axis in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[4, 3, 5], &mut rng);
        let p = pe_align::permutation::build_permutation(x.shape()[axis], seed).unwrap();
        let xp = p.apply_axis(&x, axis).unwrap();
        let d = kernels::sum_axis(&x, axis).unwrap()
            .max_abs_diff(&kernels::sum_axis(&xp, axis).unwrap()).unwrap();
        prop_assert!(d < 1e-14);
    }

    #[test]
    fn public_ops_stay_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[3, 4], &mut rng).map(|v| 50.0 * v);
        prop_assert!(kernels::softmax_axis(&x, 1).unwrap().all_finite());
        prop_assert!(kernels::exp(&x).unwrap().all_finite());
        prop_assert!(kernels::norm_axis(&x, 0).unwrap().all_finite());
    }
}
