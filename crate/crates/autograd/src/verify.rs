//! Randomised finite-difference sweep over every tape primitive, plus a
//! negative control with a deliberately wrong backward pass.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::params::{ParamId, ParamStore};
use crate::tape::{BatchNormConfig, CustomOp, Segments, Tape, Var};
use crate::tensor::Tensor;

type Builder = Box<dyn Fn(&mut Tape<f64>, &ParamStore<f64>, &[ParamId]) -> Result<Var>>;

struct Case {
    store: ParamStore<f64>,
    ids: Vec<ParamId>,
    build: Builder,
}

/// Worst result of one primitive over all configurations.
#[derive(Debug, Clone)]
pub struct PrimitiveOutcome {
    pub name: &'static str,
    pub configs: u64,
    pub max_rel_error: f64,
    /// Seeds whose check failed, with the report.
    pub failures: Vec<(u64, String)>,
}

impl PrimitiveOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Names of the primitive groups covered by [`primitive_suite`].
pub fn primitive_names() -> Vec<&'static str> {
    makers().into_iter().map(|(n, _)| n).collect()
}

fn makers() -> Vec<(&'static str, fn(&mut StdRng) -> Case)> {
    vec![
        ("dense", dense),
        ("conv2d", conv2d),
        ("batch_norm", batch_norm_training_and_eval),
        ("dropout", dropout_with_fixed_mask),
        ("relu/leaky/sigmoid/softplus", activations),
        ("exp/log/scale/mul/add", elementwise_exp_log_scale_mul_add),
        ("flatten", flatten_and_reshape),
        ("bilinear", bilinear),
        ("softmax/cross_entropy", softmax_and_cross_entropy),
        ("segment softmax/lse", segment_softmax_and_logsumexp),
        ("simplex weighted sum", segment_weighted_sums),
        ("broadcast/sum/mean", broadcast_sum_mean),
    ]
}

/// Check every primitive on `configs` random shapes and values each.
pub fn primitive_suite(configs: u64) -> Result<Vec<PrimitiveOutcome>> {
    makers().into_iter().map(|(name, make)| run(name, make, configs)).collect()
}

/// Check a single primitive group by name.
pub fn check_primitive(name: &str, configs: u64) -> Result<Option<PrimitiveOutcome>> {
    makers().into_iter().find(|(n, _)| *n == name).map(|(n, make)| run(n, make, configs)).transpose()
}

fn run(name: &'static str, make: fn(&mut StdRng) -> Case, configs: u64) -> Result<PrimitiveOutcome> {
    let mut out = PrimitiveOutcome { name, configs, max_rel_error: 0.0, failures: Vec::new() };
    for seed in 0..configs {
        let mut rng = StdRng::seed_from_u64(seed);
        let Case { mut store, ids, build } = make(&mut rng);
        let report = grad_check(&mut store, GradCheckConfig { seed, ..GradCheckConfig::default() }, |s| {
            let mut tape = Tape::new();
            let y = build(&mut tape, s, &ids)?;
            let l = project(&mut tape, y, seed)?;
            Ok((tape, l))
        })?;
        if !report.passed {
            out.failures.push((seed, report.to_string()));
        }
        out.max_rel_error = out.max_rel_error.max(report.max_rel_error);
    }
    Ok(out)
}

fn rand_tensor(rng: &mut StdRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so kinked primitives are differentiable there.
fn away_from_zero(rng: &mut StdRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn case(tensors: Vec<(&str, Tensor<f64>)>, build: Builder) -> Case {
    let mut store = ParamStore::new();
    let ids = tensors.into_iter().map(|(n, t)| store.add(n, t).unwrap()).collect();
    Case { store, ids, build }
}

/// Scalarise through a fixed random projection so every output entry matters.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e37_79b9);
    let shape = tape.value(y).shape().to_vec();
    let r = tape.input(rand_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn dims(rng: &mut StdRng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn dense(rng: &mut StdRng) -> Case {
    let (n, i, o) = (dims(rng, 1, 4), dims(rng, 1, 5), dims(rng, 1, 5));
    case(
        vec![
            ("x", rand_tensor(rng, &[n, i], -1.0, 1.0)),
            ("w", rand_tensor(rng, &[o, i], -1.0, 1.0)),
            ("b", rand_tensor(rng, &[o], -1.0, 1.0)),
        ],
        Box::new(|t, s, id| {
            let (x, w, b) = (t.param(s, id[0]), t.param(s, id[1]), t.param(s, id[2]));
            t.dense(x, w, Some(b))
        }),
    )
}

fn conv2d(rng: &mut StdRng) -> Case {
    let (n, c, o) = (dims(rng, 1, 2), dims(rng, 1, 3), dims(rng, 1, 3));
    let (h, w) = (dims(rng, 3, 5), dims(rng, 3, 5));
    let k = if rng.random_bool(0.5) { 3 } else { 1 };
    let pad = if k == 3 { dims(rng, 0, 1) } else { 0 };
    case(
        vec![
            ("x", rand_tensor(rng, &[n, c, h, w], -1.0, 1.0)),
            ("w", rand_tensor(rng, &[o, c, k, k], -1.0, 1.0)),
            ("b", rand_tensor(rng, &[o], -1.0, 1.0)),
        ],
        Box::new(move |t, s, id| {
            let (x, w, b) = (t.param(s, id[0]), t.param(s, id[1]), t.param(s, id[2]));
            t.conv2d(x, w, Some(b), pad)
        }),
    )
}

fn batch_norm_training_and_eval(rng: &mut StdRng) -> Case {
    let (n, f) = (dims(rng, 2, 5), dims(rng, 1, 4));
    let training = rng.random_bool(0.5);
    let mut running = Tensor::zeros(vec![2, f]);
    for j in 0..f {
        running.data_mut()[j] = rng.random_range(-1.0..1.0);
        running.data_mut()[f + j] = rng.random_range(0.5..2.0);
    }
    case(
        vec![
            ("x", rand_tensor(rng, &[n, f], -2.0, 2.0)),
            ("gamma", rand_tensor(rng, &[f], 0.5, 1.5)),
            ("beta", rand_tensor(rng, &[f], -1.0, 1.0)),
        ],
        Box::new(move |t, s, id| {
            let (x, g, b) = (t.param(s, id[0]), t.param(s, id[1]), t.param(s, id[2]));
            let mut r = running.clone();
            t.batch_norm(x, g, b, &mut r, training, BatchNormConfig::default())
        }),
    )
}

fn dropout_with_fixed_mask(rng: &mut StdRng) -> Case {
    let (n, f) = (dims(rng, 1, 4), dims(rng, 1, 6));
    let mask_seed: u64 = rng.random();
    case(
        vec![("x", rand_tensor(rng, &[n, f], -1.0, 1.0))],
        Box::new(move |t, s, id| {
            let x = t.param(s, id[0]);
            let mut mrng = StdRng::seed_from_u64(mask_seed);
            t.dropout(x, 0.5, true, &mut mrng)
        }),
    )
}

fn activations(rng: &mut StdRng) -> Case {
    let (n, f) = (dims(rng, 1, 4), dims(rng, 1, 6));
    let which = dims(rng, 0, 3);
    case(
        vec![("x", away_from_zero(rng, &[n, f]))],
        Box::new(move |t, s, id| {
            let x = t.param(s, id[0]);
            Ok(match which {
                0 => t.relu(x),
                1 => t.leaky_relu(x, 0.01),
                2 => t.sigmoid(x),
                _ => t.softplus(x),
            })
        }),
    )
}

fn elementwise_exp_log_scale_mul_add(rng: &mut StdRng) -> Case {
    let (n, f) = (dims(rng, 1, 4), dims(rng, 1, 6));
    let factor = rng.random_range(-3.0..3.0);
    case(
        vec![
            ("a", rand_tensor(rng, &[n, f], 0.2, 2.0)),
            ("b", rand_tensor(rng, &[n, f], -1.0, 1.0)),
            ("c", rand_tensor(rng, &[f], -1.0, 1.0)),
        ],
        Box::new(move |t, s, id| {
            let (a, b, c) = (t.param(s, id[0]), t.param(s, id[1]), t.param(s, id[2]));
            let la = t.log(a);
            let eb = t.exp(b);
            let sb = t.scale(eb, factor);
            let m = t.mul(la, sb)?;
            t.add(m, c)
        }),
    )
}

fn flatten_and_reshape(rng: &mut StdRng) -> Case {
    let (n, c, h) = (dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 3));
    case(
        vec![("x", rand_tensor(rng, &[n, c, h, 2], -1.0, 1.0))],
        Box::new(|t, s, id| {
            let x = t.param(s, id[0]);
            t.flatten(x)
        }),
    )
}

fn bilinear(rng: &mut StdRng) -> Case {
    let (n, a, b, o) = (dims(rng, 1, 3), dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 1, 3));
    case(
        vec![
            ("x1", rand_tensor(rng, &[n, a], -1.0, 1.0)),
            ("x2", rand_tensor(rng, &[n, b], -1.0, 1.0)),
            ("w", rand_tensor(rng, &[o, a, b], -1.0, 1.0)),
            ("bias", rand_tensor(rng, &[o], -1.0, 1.0)),
        ],
        Box::new(|t, s, id| {
            let v: Vec<Var> = id.iter().map(|&i| t.param(s, i)).collect();
            t.bilinear(v[0], v[1], v[2], Some(v[3]))
        }),
    )
}

fn softmax_and_cross_entropy(rng: &mut StdRng) -> Case {
    let (n, k) = (dims(rng, 1, 4), dims(rng, 2, 6));
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let use_ce = rng.random_bool(0.5);
    case(
        vec![("x", rand_tensor(rng, &[n, k], -3.0, 3.0))],
        Box::new(move |t, s, id| {
            let x = t.param(s, id[0]);
            if use_ce {
                t.softmax_cross_entropy(x, &targets)
            } else {
                t.softmax(x)
            }
        }),
    )
}

fn random_segments(rng: &mut StdRng) -> Arc<Segments> {
    let lens: Vec<usize> = (0..dims(rng, 1, 4)).map(|_| dims(rng, 1, 4)).collect();
    Arc::new(Segments::from_lengths(&lens))
}

fn segment_softmax_and_logsumexp(rng: &mut StdRng) -> Case {
    let seg = random_segments(rng);
    let n = dims(rng, 1, 3);
    let r = rng.random_range(0.5..14.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    case(
        vec![
            ("x", rand_tensor(rng, &[n, seg.width()], 0.0, 1.0)),
            ("logits", rand_tensor(rng, &[seg.width()], -1.0, 1.0)),
        ],
        Box::new(move |t, s, id| {
            let (x, l) = (t.param(s, id[0]), t.param(s, id[1]));
            let w = t.segment_softmax(l, seg.clone())?;
            let rx = t.scale(x, r);
            let lse = t.segment_logsumexp(rx, Some(w), seg.clone())?;
            Ok(t.scale(lse, 1.0 / r))
        }),
    )
}

fn segment_weighted_sums(rng: &mut StdRng) -> Case {
    let seg = random_segments(rng);
    let n = dims(rng, 1, 3);
    case(
        vec![
            ("x", rand_tensor(rng, &[n, seg.width()], -1.0, 1.0)),
            ("logits", rand_tensor(rng, &[seg.width()], -1.0, 1.0)),
        ],
        Box::new(move |t, s, id| {
            let (x, l) = (t.param(s, id[0]), t.param(s, id[1]));
            t.simplex_weighted_sum(x, l, seg.clone())
        }),
    )
}

fn broadcast_sum_mean(rng: &mut StdRng) -> Case {
    let (n, k) = (dims(rng, 1, 4), dims(rng, 1, 5));
    case(
        vec![("v", rand_tensor(rng, &[k], -1.0, 1.0))],
        Box::new(move |t, s, id| {
            let v = t.param(s, id[0]);
            let b = t.broadcast_rows(v, n);
            let e = t.exp(b);
            let m = t.mean(e);
            let su = t.sum(e);
            t.mul(m, su)
        }),
    )
}


/// Multiplies by 3 but reports a gradient of 3.3.
struct CorruptedTriple;

impl CustomOp<f64> for CorruptedTriple {
    fn name(&self) -> &str {
        "corrupted_triple"
    }

    fn forward(&self, inputs: &[&Tensor<f64>]) -> Result<Tensor<f64>> {
        Ok(inputs[0].map(|v| 3.0 * v))
    }

    fn backward(&self, _inputs: &[&Tensor<f64>], _out: &Tensor<f64>, g: &Tensor<f64>) -> Vec<Option<Tensor<f64>>> {
        vec![Some(g.map(|v| 3.3 * v))]
    }
}

/// Negative control: a custom op whose backward is 10% off. A working checker
/// must reject it.
pub fn corrupted_backward_check() -> Result<GradCheckReport> {
    let mut rng = StdRng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let id = store.add("x", rand_tensor(&mut rng, &[3, 4], -1.0, 1.0)).unwrap();
    let report = grad_check(&mut store, GradCheckConfig::default(), |s| {
        let mut t = Tape::new();
        let x = t.param(s, id);
        let y = t.custom(&[x], Box::new(CorruptedTriple))?;
        let l = project(&mut t, y, 1)?;
        Ok((t, l))
    })
    ?;
    Ok(report)
}
