//! Central finite-difference checks of the hand-written backward passes.

use crate::data::PointCloudVideo;
use crate::model::{prepare_clip, BandTokens, FaAttention, FmMlp, HeadConfig, ModelConfig, Point4dConv, StsMixer};
use crate::nn::{
    gelu_backward, gelu_forward, softmax_backward_in_place, softmax_in_place, AttentionConfig, Grads, LayerNorm, Linear, Mlp,
    MultiHeadAttention, Parameters, Tensor3, TransformerBlock,
};
use crate::numerics::{Matrix, Rng};
use crate::train::cross_entropy;
use crate::{Error, Result};

/// Central-difference step used throughout.
pub const FD_EPS: f64 = 1e-5;

/// Gradients whose norm is below this are compared in absolute terms (e.g. the key bias
/// of attention, whose true gradient is exactly zero).
pub const NORM_FLOOR: f64 = 1e-3;

/// Relative error `‖a − n‖ / max(‖a‖, ‖n‖, NORM_FLOOR)` between analytic and numeric
/// gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    diff / norm(analytic).max(norm(numeric)).max(NORM_FLOOR)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Worst relative errors for a layer's input gradient and each parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct LayerReport {
    pub input: f64,
    pub params: Vec<(String, f64)>,
}

impl LayerReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|(_, e)| *e).fold(self.input, f64::max)
    }
}

/// Checks `backward` against central differences of the scalar probe
/// `L(x, θ) = Σ r ⊙ forward(x, θ)` with a fixed random `r`, over every input entry and
/// every parameter entry.
pub fn check_layer<F, B>(params: &mut Parameters, x: &Tensor3, rng: &mut Rng, forward: F, backward: B, eps: f64) -> LayerReport
where
    F: Fn(&Parameters, &Tensor3) -> Tensor3,
    B: Fn(&Parameters, &Tensor3, &Tensor3, &mut Grads) -> Tensor3,
{
    let y = forward(params, x);
    let probe: Vec<f64> = (0..y.data().len()).map(|_| rng.normal()).collect();
    let dy = Tensor3::from_vec(y.batch(), y.tokens(), y.channels(), probe.clone()).expect("probe shape");
    let loss = |p: &Parameters, x: &Tensor3| -> f64 {
        forward(p, x).data().iter().zip(&probe).map(|(a, b)| a * b).sum()
    };

    let mut grads = Grads::zeros_like(params);
    let dx = backward(params, x, &dy, &mut grads);

    let mut numeric_dx = vec![0.0; x.data().len()];
    let mut xp = x.clone();
    for i in 0..numeric_dx.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + eps;
        let lp = loss(params, &xp);
        xp.data_mut()[i] = orig - eps;
        let lm = loss(params, &xp);
        xp.data_mut()[i] = orig;
        numeric_dx[i] = (lp - lm) / (2.0 * eps);
    }
    let mut report = LayerReport {
        input: relative_error(dx.data(), &numeric_dx),
        params: Vec::new(),
    };

    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let n = params.value(id).len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = params.value(id)[i];
            params.value_mut(id)[i] = orig + eps;
            let lp = loss(params, x);
            params.value_mut(id)[i] = orig - eps;
            let lm = loss(params, x);
            params.value_mut(id)[i] = orig;
            *slot = (lp - lm) / (2.0 * eps);
        }
        let name = params.param(id).name.clone();
        report.params.push((name, relative_error(grads.get(id), &numeric)));
    }
    report
}

/// Tolerance for every individual operation at 64-bit storage.
pub const OP_TOLERANCE: f64 = 1e-6;
/// Tolerance for the end-to-end check on sampled parameters.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Parameter entries sampled by the end-to-end check.
pub const END_TO_END_SAMPLES: usize = 20;

/// Every operation the suite covers, in report order.
pub const SUITE_OPS: [&str; 12] = [
    "linear",
    "layer_norm",
    "softmax",
    "gelu",
    "mha",
    "mlp",
    "transformer_block",
    "fa_attention",
    "fm_mlp",
    "point4d_conv",
    "cross_entropy",
    "end_to_end",
];

/// Outcome of one operation's check.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn random_tensor(rng: &mut Rng, b: usize, t: usize, c: usize) -> Tensor3 {
    Tensor3::from_vec(b, t, c, (0..b * t * c).map(|_| rng.normal()).collect()).expect("shape")
}

/// Scales the analytic upstream gradient of the corrupted op so its check must fail.
fn tamper(dy: &Tensor3, on: bool) -> Tensor3 {
    let mut d = dy.clone();
    if on {
        d.data_mut().iter_mut().for_each(|v| *v *= 1.5);
    }
    d
}

/// Runs the full finite-difference suite on small seeded shapes. `corrupt` names an
/// op whose analytic gradient is deliberately scaled, to exercise the failure path.
pub fn run_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<OpCheck>> {
    if let Some(name) = corrupt {
        if !SUITE_OPS.contains(&name) {
            return Err(Error::Parameter(format!("unknown operation {name:?}")));
        }
    }
    let mut out = Vec::with_capacity(SUITE_OPS.len());
    for (i, &op) in SUITE_OPS.iter().enumerate() {
        let mut rng = Rng::derive(seed, i as u64);
        let bad = corrupt == Some(op);
        let error = if op == "end_to_end" {
            end_to_end(&mut rng, bad)?
        } else {
            layer_check(op, &mut rng, bad)?.worst()
        };
        let tolerance = if op == "end_to_end" { END_TO_END_TOLERANCE } else { OP_TOLERANCE };
        out.push(OpCheck { op, error, tolerance });
    }
    Ok(out)
}

fn layer_check(op: &str, rng: &mut Rng, bad: bool) -> Result<LayerReport> {
    let mut p = Parameters::new();
    let report = match op {
        "linear" => {
            let l = Linear::new(&mut p, rng, "linear", 5, 3)?;
            let x = random_tensor(rng, 2, 3, 5);
            check_layer(
                &mut p,
                &x,
                rng,
                |p, x| l.forward(p, x).expect("shape"),
                |p, x, dy, g| l.backward(p, x, &tamper(dy, bad), g),
                FD_EPS,
            )
        }
        "layer_norm" => {
            let n = LayerNorm::new(&mut p, "norm", 6)?;
            for v in p.value_mut(p.find("norm.gamma").expect("gamma")) {
                *v = rng.uniform_range(0.5, 1.5);
            }
            for v in p.value_mut(p.find("norm.beta").expect("beta")) {
                *v = rng.normal();
            }
            let x = random_tensor(rng, 1, 4, 6);
            check_layer(
                &mut p,
                &x,
                rng,
                |p, x| n.forward(p, x).expect("shape").0,
                |p, x, dy, g| {
                    let (_, c) = n.forward(p, x).expect("shape");
                    n.backward(p, &c, &tamper(dy, bad), g)
                },
                FD_EPS,
            )
        }
        "softmax" => {
            let x = random_tensor(rng, 1, 3, 5);
            let soft = |x: &Tensor3| {
                let mut y = x.clone();
                for r in 0..y.rows() {
                    softmax_in_place(y.row_mut(r));
                }
                y
            };
            check_layer(
                &mut p,
                &x,
                rng,
                |_, x| soft(x),
                |_, x, dy, _| {
                    let y = soft(x);
                    let mut dx = tamper(dy, bad);
                    for r in 0..dx.rows() {
                        softmax_backward_in_place(y.row(r), dx.row_mut(r));
                    }
                    dx
                },
                FD_EPS,
            )
        }
        "gelu" => {
            let x = random_tensor(rng, 1, 4, 5);
            check_layer(
                &mut p,
                &x,
                rng,
                |_, x| gelu_forward(x),
                |_, x, dy, _| gelu_backward(x, &tamper(dy, bad)),
                FD_EPS,
            )
        }
        "mha" => {
            let cfg = AttentionConfig { d: 4, h: 2, d_m: 8 };
            let a = MultiHeadAttention::new(&mut p, rng, "mha", &cfg)?;
            let x = random_tensor(rng, 1, 3, 4);
            check_layer(
                &mut p,
                &x,
                rng,
                |p, x| a.forward(p, x).expect("shape").0,
                |p, x, dy, g| {
                    let (_, c) = a.forward(p, x).expect("shape");
                    a.backward(p, &c, &tamper(dy, bad), g)
                },
                FD_EPS,
            )
        }
        "mlp" => {
            let m = Mlp::new(&mut p, rng, "mlp", 4, 8, 3)?;
            let x = random_tensor(rng, 1, 3, 4);
            check_layer(
                &mut p,
                &x,
                rng,
                |p, x| m.forward(p, x).expect("shape").0,
                |p, x, dy, g| {
                    let (_, c) = m.forward(p, x).expect("shape");
                    m.backward(p, &c, &tamper(dy, bad), g)
                },
                FD_EPS,
            )
        }
        "transformer_block" => {
            let cfg = AttentionConfig { d: 8, h: 4, d_m: 16 };
            let blk = TransformerBlock::new(&mut p, rng, "block", &cfg)?;
            let x = random_tensor(rng, 1, 4, 8);
            check_layer(
                &mut p,
                &x,
                rng,
                |p, x| blk.forward(p, x).expect("shape").0,
                |p, x, dy, g| {
                    let (_, c) = blk.forward(p, x).expect("shape");
                    blk.backward(p, &c, &tamper(dy, bad), g)
                },
                FD_EPS,
            )
        }
        "fa_attention" | "fm_mlp" => {
            let cfg = ModelConfig {
                channels: 8,
                heads: 2,
                anchors: 4,
                k: 2,
                f_low: 1,
                f_high: 3,
                ..ModelConfig::default()
            };
            let fa = FaAttention::new(&mut p, rng, "fa", &cfg)?;
            let fm = FmMlp::new(&mut p, rng, "fm", &cfg)?;
            let is_fa = op == "fa_attention";
            // T′ = 2 frames of N′ = 4 anchors, three bands of C = 8
            let x = random_tensor(rng, 1, 8, 24);
            check_layer(
                &mut p,
                &x,
                rng,
                |p, x| {
                    let b = BandTokens::split(x).expect("3C");
                    if is_fa { fa.forward(p, &b).expect("shape").0 } else { fm.forward(p, &b).expect("shape").0 }.concat()
                },
                |p, x, dy, g| {
                    let b = BandTokens::split(x).expect("3C");
                    let dyb = BandTokens::split(&tamper(dy, bad)).expect("3C");
                    if is_fa {
                        let (_, c) = fa.forward(p, &b).expect("shape");
                        fa.backward(p, &c, &dyb, g).concat()
                    } else {
                        let (_, c) = fm.forward(p, &b).expect("shape");
                        fm.backward(p, &c, &dyb, g).concat()
                    }
                },
                FD_EPS,
            )
        }
        "point4d_conv" => {
            let cfg = toy_config();
            let clip = prepare_clip(&toy_video(rng, 4, 32), &cfg, 1)?;
            let conv = Point4dConv::new(&mut p, rng, "encoder", 8)?;
            let offsets = clip.group_offsets.clone();
            check_layer(
                &mut p,
                &clip.displacements,
                rng,
                |p, x| conv.forward(p, x, &offsets).expect("shape").0,
                |p, x, dy, g| {
                    let (_, c) = conv.forward(p, x, &offsets).expect("shape");
                    conv.backward(p, &c, &tamper(dy, bad), g)
                },
                FD_EPS,
            )
        }
        "cross_entropy" => {
            let targets: Vec<usize> = (0..3).map(|_| rng.below(4)).collect();
            let x = random_tensor(rng, 1, 3, 4);
            let as_matrix = |x: &Tensor3| Matrix::from_vec(3, 4, x.data().to_vec()).expect("shape");
            check_layer(
                &mut p,
                &x,
                rng,
                |_, x| {
                    let (l, _) = cross_entropy(&as_matrix(x), &targets).expect("targets");
                    Tensor3::from_vec(1, 1, 1, vec![l]).expect("scalar")
                },
                |_, x, dy, _| {
                    let (_, g) = cross_entropy(&as_matrix(x), &targets).expect("targets");
                    let s = tamper(dy, bad).data()[0];
                    Tensor3::from_vec(1, 3, 4, g.data().iter().map(|v| v * s).collect()).expect("shape")
                },
                FD_EPS,
            )
        }
        other => return Err(Error::Parameter(format!("unknown operation {other:?}"))),
    };
    Ok(report)
}

/// T′ = 2 frames (stride 2 over T = 4), N′ = 8 anchors, C = 16.
fn toy_config() -> ModelConfig {
    ModelConfig {
        channels: 16,
        heads: 4,
        anchors: 8,
        k: 4,
        f_low: 2,
        f_high: 5,
        blocks: 2,
        head: HeadConfig::Classification { num_classes: 3 },
        ..ModelConfig::default()
    }
}

fn toy_video(rng: &mut Rng, frames: usize, points: usize) -> PointCloudVideo {
    let coords = (0..frames * points * 3).map(|_| rng.uniform_range(-0.5, 0.5) as f32).collect();
    PointCloudVideo::new(frames, points, coords, None, Some(1)).expect("valid video")
}

/// Cross-entropy of the toy network on one clip, differentiated w.r.t. randomly
/// sampled parameter entries.
fn end_to_end(rng: &mut Rng, bad: bool) -> Result<f64> {
    let cfg = toy_config();
    let clip = prepare_clip(&toy_video(rng, 4, 32), &cfg, 1)?;
    let (model, mut params) = StsMixer::new(&cfg, rng.next_u64())?;
    let target = [1usize];
    let loss = |p: &Parameters| -> Result<f64> {
        let (logits, _) = model.forward(p, &clip)?;
        Ok(cross_entropy(&Matrix::from_vec(1, 3, logits.into_vec())?, &target)?.0)
    };

    let (logits, cache) = model.forward(&params, &clip)?;
    let (_, dlogits) = cross_entropy(&Matrix::from_vec(1, 3, logits.data().to_vec())?, &target)?;
    let dlogits = tamper(&Tensor3::from_vec(1, 1, 3, dlogits.data().to_vec())?, bad);
    let mut grads = Grads::zeros_like(&params);
    model.backward(&params, &clip, &cache, &dlogits, &mut grads);

    let ids: Vec<_> = params.ids().collect();
    let total = params.num_scalars();
    let mut analytic = Vec::with_capacity(END_TO_END_SAMPLES);
    let mut numeric = Vec::with_capacity(END_TO_END_SAMPLES);
    for _ in 0..END_TO_END_SAMPLES {
        let mut flat = rng.below(total);
        let mut id = ids[0];
        for &candidate in &ids {
            let n = params.value(candidate).len();
            if flat < n {
                id = candidate;
                break;
            }
            flat -= n;
        }
        let orig = params.value(id)[flat];
        params.value_mut(id)[flat] = orig + FD_EPS;
        let lp = loss(&params)?;
        params.value_mut(id)[flat] = orig - FD_EPS;
        let lm = loss(&params)?;
        params.value_mut(id)[flat] = orig;
        analytic.push(grads.get(id)[flat]);
        numeric.push((lp - lm) / (2.0 * FD_EPS));
    }
    Ok(relative_error(&analytic, &numeric))
}
