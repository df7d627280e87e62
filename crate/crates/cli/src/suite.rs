//! Named equivariance checks: templates, solver steps, built models and two
//! negative controls that must fail.

use std::sync::Arc;

use pe_align::baselines::gd_pb::PbStepParams;
use pe_align::baselines::{
    generate_channels, wmmse_pm_step, ChannelModel, Constants, GdConfig, PbState, PcState, PmFirstSumChannel,
    PmState, ProblemInstance, PsState, Sizes, Variant, pm_normalize_channels,
};
use pe_align::gnn::layers::attention_weights;
use pe_align::gnn::{build_gnn_from_problem, pc_descriptors, ps_descriptors, AttentionPlacement, GnnConfig, SetDescriptor};
use pe_align::pe::{
    Fnn, OneSetTemplate, Pooling, Processor, ProcessorKind, RecursionStack, SetAxis, SetFunction, SetTensor,
    TemplateKind,
};
use pe_align::permutation::{check_equivariance, check_equivariance_with, AxisSpec, EquivarianceReport, PermutationScheme, SetSpec};
use pe_align::rie::pb::encode_pb;
use pe_align::rie::pc::encode_pc;
use pe_align::rie::pm::encode_pm;
use pe_align::rie::ps::encode_ps;
use pe_align::rie::{Layout, RepresentationState, RiePb, RiePc, RiePm, RiePs, RieStep};
use pe_align::{Result, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POSITIVE_TARGETS: &[&str] = &[
    "ape_i",
    "ape_ii",
    "npe_i",
    "npe_ii",
    "stack_2d",
    "stack_joint",
    "rie_pb",
    "rie_ps",
    "rie_pm",
    "rie_pc",
    "gnn_ps",
    "gnn_ps_none",
    "gnn_ps_an",
    "gnn_ps_all",
    "gnn_pc",
    "gnn_nested",
];

pub const NEGATIVE_TARGETS: &[&str] = &["sort", "wrong_pairing"];

pub fn is_target(name: &str) -> bool {
    POSITIVE_TARGETS.contains(&name) || NEGATIVE_TARGETS.contains(&name)
}

/// Whether a target is expected to pass its check.
pub fn expected_pass(name: &str) -> bool {
    !NEGATIVE_TARGETS.contains(&name)
}

const POOL: usize = 3;
const HIDDEN: usize = 5;
const IN: usize = 2;
const OUT: usize = 3;

fn leaf(name: &str, i: usize, o: usize, rng: &mut ChaCha8Rng) -> Arc<dyn SetFunction> {
    Arc::new(Fnn::random(name, &[i, HIDDEN, o], rng).expect("positive widths"))
}

fn part(rest: &[TemplateKind], name: &str, i: usize, o: usize, rng: &mut ChaCha8Rng) -> Result<Arc<dyn SetFunction>> {
    Ok(if rest.is_empty() {
        leaf(name, i, o, rng)
    } else {
        Arc::new(template(rest, i, o, rng)?)
    })
}

/// Random template over `kinds.len()` set axes, outermost first.
fn template(kinds: &[TemplateKind], i: usize, o: usize, rng: &mut ChaCha8Rng) -> Result<OneSetTemplate> {
    let (kind, rest) = (kinds[0], &kinds[1..]);
    let attn = kind.has_attention();
    let qin = if attn { 2 * i } else { i };
    let pk = |a: bool| if a { ProcessorKind::Attention } else { ProcessorKind::Ordinary };
    if kind.is_nested() {
        let procs = vec![
            Processor { kind: pk(attn), func: part(rest, "q1", qin, POOL, rng)? },
            Processor { kind: pk(false), func: part(rest, "q2", POOL, POOL, rng)? },
            Processor { kind: pk(attn), func: part(rest, "q3", qin, POOL, rng)? },
        ];
        let f = part(rest, "f", i + 2 * POOL, o, rng)?;
        OneSetTemplate::new(kind, f, procs, Pooling::default())
    } else {
        let procs = vec![Processor { kind: pk(attn), func: part(rest, "q", qin, POOL, rng)? }];
        let f = part(rest, "f", i + POOL, o, rng)?;
        OneSetTemplate::new(kind, f, procs, Pooling::default())
    }
}

fn sets_for(kinds: &[TemplateKind]) -> (Vec<SetSpec>, Vec<SetAxis>) {
    kinds
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let name = format!("s{i}");
            if k.is_nested() {
                (SetSpec::nested(&name, 2, 3), SetAxis::Nested { subsets: 2, subset_size: 3 })
            } else {
                (SetSpec::normal(&name, 4), SetAxis::Normal)
            }
        })
        .unzip()
}

fn schemes(sets: Vec<SetSpec>, axes: Vec<AxisSpec>, shared: Vec<Vec<usize>>, out: usize) -> Result<(PermutationScheme, PermutationScheme)> {
    let mut out_axes = axes.clone();
    *out_axes.last_mut().expect("feature axis") = AxisSpec::Fixed(out);
    Ok((
        PermutationScheme::with_shared_outer(sets.clone(), axes, shared.clone())?,
        PermutationScheme::with_shared_outer(sets, out_axes, shared)?,
    ))
}

fn set_function(f: &dyn SetFunction, sets: Vec<SetSpec>, axes: Vec<AxisSpec>, shared: Vec<Vec<usize>>, set_axes: Vec<SetAxis>, trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    let (input, output) = schemes(sets, axes, shared, f.out_width().expect("fixed output width"))?;
    check_equivariance(
        |x| Ok(f.apply(&SetTensor::new(x.clone(), set_axes.clone())?)?.value),
        &input,
        &output,
        trials,
        tol,
        seed,
    )
}

fn check_template(kinds: &[TemplateKind], trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = template(kinds, IN, OUT, &mut rng)?;
    let (sets, set_axes) = sets_for(kinds);
    let mut axes: Vec<AxisSpec> = (0..kinds.len()).map(AxisSpec::Set).collect();
    axes.push(AxisSpec::Fixed(IN));
    set_function(&t, sets, axes, vec![], set_axes, trials, tol, seed)
}

fn check_stack(joint: bool, trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Arc::new(template(&[TemplateKind::ApeI, TemplateKind::ApeII], IN, IN, &mut rng)?);
    let stack = RecursionStack::new(vec![1, 0], t)?;
    let (sets, axes) = if joint {
        (vec![SetSpec::normal("k", 4)], vec![AxisSpec::Set(0), AxisSpec::Set(0), AxisSpec::Fixed(IN)])
    } else {
        (
            vec![SetSpec::normal("a", 4), SetSpec::normal("b", 3)],
            vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Fixed(IN)],
        )
    };
    let stack = if joint { stack.with_output_function(0, 1)? } else { stack };
    let scheme = PermutationScheme::new(sets, axes)?;
    check_equivariance(
        |x| Ok(stack.apply(&SetTensor::normal(x.clone())?)?.value),
        &scheme,
        &scheme,
        trials,
        tol,
        seed,
    )
}

fn instance(variant: Variant, sizes: Sizes, seed: u64) -> Result<ProblemInstance> {
    let c = Constants { sigma2: 0.1, ..Constants::default() };
    generate_channels(variant, sizes, &ChannelModel::Rayleigh, c, seed)
}

fn sizes(users: usize, bs_antennas: usize, ue_antennas: usize, streams: usize) -> Sizes {
    Sizes { users, bs_antennas, ue_antennas, streams }
}

fn as_state(x: &Tensor, layout: Layout) -> Result<RepresentationState> {
    let axes = match layout {
        Layout::Pm { users, streams, ue_antennas } => vec![
            SetAxis::Nested { subsets: users, subset_size: streams },
            SetAxis::Nested { subsets: users, subset_size: ue_antennas },
            SetAxis::Normal,
        ],
        _ => vec![SetAxis::Normal; x.ndim() - 1],
    };
    Ok(RepresentationState { d: SetTensor::new(x.clone(), axes)?, layout })
}

fn check_rie(variant: Variant, trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    // Instance generation only fails on invalid sizes, which are fixed here.
    let gen = |v: Variant, s: Sizes, rng: &mut ChaCha8Rng| instance(v, s, rng.random()).expect("valid sizes");
    match variant {
        Variant::Pb => {
            let k = 4;
            let ProblemInstance::Pb(base) = instance(Variant::Pb, sizes(k, 1, 1, 1), seed)? else { unreachable!() };
            let rie = RiePb::new(PbStepParams::new(&base, &GdConfig::default()))?;
            let s = PermutationScheme::new(vec![SetSpec::normal("UE", k)], vec![AxisSpec::Set(0), AxisSpec::Fixed(5)])?;
            check_equivariance_with(
                |x| Ok(rie.step(&as_state(x, Layout::Pb)?)?.d.value),
                &s,
                &s,
                trials,
                tol,
                seed,
                |rng| {
                    let ProblemInstance::Pb(t) = gen(Variant::Pb, sizes(k, 1, 1, 1), rng) else { unreachable!() };
                    encode_pb(&t, &PbState::initial(&t)).d.value
                },
            )
        }
        Variant::Ps => {
            let (k, nb) = (3, 4);
            let rie = RiePs::new(1.0, 0.1)?;
            let s = PermutationScheme::new(
                vec![SetSpec::normal("UE", k), SetSpec::normal("AN", nb)],
                vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Fixed(7)],
            )?;
            check_equivariance_with(
                |x| Ok(rie.step(&as_state(x, Layout::Ps)?)?.d.value),
                &s,
                &s,
                trials,
                tol,
                seed,
                |rng| {
                    let ProblemInstance::Ps(t) = gen(Variant::Ps, sizes(k, nb, 1, 1), rng) else { unreachable!() };
                    encode_ps(&t, &PsState::initial(&t)).d.value
                },
            )
        }
        Variant::Pm => {
            let (k, nb, nu, m) = (2, 3, 2, 2);
            let layout = Layout::Pm { users: k, streams: m, ue_antennas: nu };
            let rie = RiePm::new(k, m, nu, PmFirstSumChannel::Own)?;
            let s = PermutationScheme::with_shared_outer(
                vec![SetSpec::nested("DS", k, m), SetSpec::nested("AN_UE", k, nu), SetSpec::normal("AN_BS", nb)],
                vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Set(2), AxisSpec::Fixed(6)],
                vec![vec![0, 1]],
            )?;
            check_equivariance_with(
                |x| Ok(rie.step(&as_state(x, layout)?)?.d.value),
                &s,
                &s,
                trials,
                tol,
                seed,
                |rng| {
                    let ProblemInstance::Pm(mut t) = gen(Variant::Pm, sizes(k, nb, nu, m), rng) else { unreachable!() };
                    pm_normalize_channels(&mut t, 0.5);
                    // One raw step moves the state off its structured start.
                    let s = wmmse_pm_step(&t, &PmState::initial(&t), PmFirstSumChannel::Own).expect("finite step");
                    encode_pm(&t, &s).d.value
                },
            )
        }
        Variant::Pc => {
            let k = 4;
            let rie = RiePc::new(1.0, 0.1)?;
            let s = PermutationScheme::new(
                vec![SetSpec::normal("UE", k)],
                vec![AxisSpec::Set(0), AxisSpec::Set(0), AxisSpec::Fixed(6)],
            )?;
            check_equivariance_with(
                |x| Ok(rie.step(&as_state(x, Layout::Pc)?)?.d.value),
                &s,
                &s,
                trials,
                tol,
                seed,
                |rng| {
                    let ProblemInstance::Pc(t) = gen(Variant::Pc, sizes(k, k + 1, 1, 1), rng) else { unreachable!() };
                    encode_pc(&t.gain, &PcState::initial(&t.gain, t.p_max, t.sigma2)).d.value
                },
            )
        }
    }
}

fn small(placement: AttentionPlacement) -> GnnConfig {
    GnnConfig { hidden: 8, layers: 2, attention_dim: 4, placement, ..Default::default() }
}

fn check_gnn(name: &str, trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    let ps = |p: AttentionPlacement| -> Result<EquivarianceReport> {
        let m = build_gnn_from_problem(&ps_descriptors(), 2, 2, &small(p), seed)?;
        set_function(
            &m,
            vec![SetSpec::normal("UE", 3), SetSpec::normal("AN", 4)],
            vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Fixed(2)],
            vec![],
            vec![SetAxis::Normal; 2],
            trials,
            tol,
            seed,
        )
    };
    match name {
        "gnn_ps" => ps(AttentionPlacement::Procedure),
        "gnn_ps_none" => ps(AttentionPlacement::None),
        "gnn_ps_an" => ps(AttentionPlacement::Sets(vec!["AN".into()])),
        "gnn_ps_all" => ps(AttentionPlacement::All),
        "gnn_pc" => {
            let m = build_gnn_from_problem(&pc_descriptors(), 3, 1, &small(AttentionPlacement::Procedure), seed)?;
            set_function(
                &m,
                vec![SetSpec::normal("K", 4)],
                vec![AxisSpec::Set(0), AxisSpec::Set(0), AxisSpec::Fixed(3)],
                vec![],
                vec![SetAxis::Normal; 2],
                trials,
                tol,
                seed,
            )
        }
        _ => {
            let d = vec![
                SetDescriptor::nested("UE", 2, 2).interference(false).joint(0),
                SetDescriptor::nested("AN_BS", 2, 2).joint(0),
                SetDescriptor::normal("RE"),
            ];
            let m = build_gnn_from_problem(&d, 2, 2, &small(AttentionPlacement::Procedure), seed)?;
            let nested = SetAxis::Nested { subsets: 2, subset_size: 2 };
            set_function(
                &m,
                vec![SetSpec::nested("UE", 2, 2), SetSpec::nested("AN_BS", 2, 2), SetSpec::normal("RE", 3)],
                vec![AxisSpec::Set(0), AxisSpec::Set(1), AxisSpec::Set(2), AxisSpec::Fixed(2)],
                vec![vec![0, 1]],
                vec![nested, nested, SetAxis::Normal],
                trials,
                tol,
                seed,
            )
        }
    }
}

fn sort_rows(x: &Tensor) -> Result<Tensor> {
    let mut v = x.data().to_vec();
    v.sort_by(f64::total_cmp);
    Tensor::new(x.shape().to_vec(), v)
}

/// Self-attention whose key for token `j` is computed from token `j + 1`.
fn rolled_key_attention(x: &Tensor, uq: &Tensor, uk: &Tensor, uv: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let d = tape.constant(x.clone());
    let k = x.shape()[0];
    let rolled = pe_align::Var::concat(&[d.slice_axis(0, 1, k - 1)?, d.slice_axis(0, 0, 1)?], 0)?;
    let q = d.matmul(tape.constant(uq.clone()))?.reshape(&[1, k, uq.shape()[1]])?;
    let key = rolled.matmul(tape.constant(uk.clone()))?.reshape(&[1, k, uk.shape()[1]])?;
    let val = d.matmul(tape.constant(uv.clone()))?.reshape(&[1, k, uv.shape()[1]])?;
    let a = attention_weights(q, key, 1.0)?;
    let y = a.bmm(val)?.reshape(&[k, uv.shape()[1]])?;
    let out = (*y.value()).clone();
    Ok(out)
}

fn check_negative(name: &str, trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    if name == "sort" {
        let s = PermutationScheme::new(vec![SetSpec::normal("k", 5)], vec![AxisSpec::Set(0)])?;
        return check_equivariance(sort_rows, &s, &s, trials, tol, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f, dh) = (3, 4);
    let uq = Tensor::uniform(&[f, dh], -1.0, 1.0, &mut rng);
    let uk = Tensor::uniform(&[f, dh], -1.0, 1.0, &mut rng);
    let uv = Tensor::uniform(&[f, f], -1.0, 1.0, &mut rng);
    let s = PermutationScheme::new(vec![SetSpec::normal("UE", 5)], vec![AxisSpec::Set(0), AxisSpec::Fixed(f)])?;
    check_equivariance(|x| rolled_key_attention(x, &uq, &uk, &uv), &s, &s, trials, tol, seed)
}

/// Runs one named check.
pub fn run_target(name: &str, trials: usize, tol: f64, seed: u64) -> Result<EquivarianceReport> {
    use TemplateKind::*;
    match name {
        "ape_i" => check_template(&[ApeI], trials, tol, seed),
        "ape_ii" => check_template(&[ApeII], trials, tol, seed),
        "npe_i" => check_template(&[NpeI], trials, tol, seed),
        "npe_ii" => check_template(&[NpeII], trials, tol, seed),
        "stack_2d" => check_stack(false, trials, tol, seed),
        "stack_joint" => check_stack(true, trials, tol, seed),
        "rie_pb" => check_rie(Variant::Pb, trials, tol, seed),
        "rie_ps" => check_rie(Variant::Ps, trials, tol, seed),
        "rie_pm" => check_rie(Variant::Pm, trials, tol, seed),
        "rie_pc" => check_rie(Variant::Pc, trials, tol, seed),
        n if n.starts_with("gnn_") && is_target(n) => check_gnn(n, trials, tol, seed),
        n if NEGATIVE_TARGETS.contains(&n) => check_negative(n, trials, tol, seed),
        other => Err(pe_align::Error::Contract(format!("unknown equivariance target '{other}'"))),
    }
}
