//! Finite-difference gradient oracle (enabled with the `testing` feature).
//!
//! Every check scalarizes an op's output with fixed random weights,
//! `L = Σ wᵢ·yᵢ`, perturbs each input/parameter entry by `±h` and compares
//! the central difference against the analytic backward pass. All checks
//! run in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{build_cae, CaeConfig, CaeModel, ConfigMode};
use crate::numerics::{
    add, broadcast_mul, broadcast_mul_backward, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    global_avg_pool, global_avg_pool_backward, mse_loss, relu, relu_backward, sigmoid, sigmoid_backward,
    tconv2d_backward, tconv2d_forward, ConvParams, DenseParams, Shape, TConvParams, Tensor,
};

/// Step for central differences in f64.
pub const FD_STEP: f64 = 1e-6;

/// Smaller step for the full model: with thousands of ReLU pre-activations a
/// `1e-6` perturbation occasionally pushes one across zero.
pub const FULL_MODEL_FD_STEP: f64 = 1e-7;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`; 0 when both are zero.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central-difference gradient of `loss` w.r.t. the slice returned by `view`.
pub fn fd_gradient<S>(
    state: &mut S,
    view: impl Fn(&mut S) -> &mut [f64],
    loss: impl Fn(&S) -> f64,
    h: f64,
) -> Vec<f64> {
    let len = view(state).len();
    let mut grad = Vec::with_capacity(len);
    for i in 0..len {
        let orig = view(state)[i];
        view(state)[i] = orig + h;
        let plus = loss(state);
        view(state)[i] = orig - h;
        let minus = loss(state);
        view(state)[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Shape, scale: f64) -> Tensor<f64> {
    Tensor::from_vec(shape, rand_vec(rng, shape.numel(), scale)).expect("valid shape")
}

/// Weighted sum used to scalarize an output tensor.
fn weighted(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.dot(w).expect("matching shapes")
}

/// Worst relative error of one primitive over a set of random instances.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: &'static str,
    pub instances: usize,
    pub worst_rel_err: f64,
}

struct Worst(f64);

impl Worst {
    fn see(&mut self, analytic: &[f64], numeric: &[f64]) {
        self.0 = self.0.max(rel_err(analytic, numeric));
    }
}

pub fn check_conv2d(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let k = [1, 3][rng.random_range(0..2)];
        let stride = rng.random_range(1..=2);
        let padding = rng.random_range(0..=1);
        let shape = Shape::new(
            rng.random_range(1..=2),
            rng.random_range(1..=4),
            rng.random_range(k.max(3)..=8),
            rng.random_range(k.max(3)..=8),
        );
        let cout = rng.random_range(1..=4);
        let x = rand_tensor(&mut rng, shape, 1.0);
        let p = ConvParams::new(
            rand_tensor(&mut rng, Shape::new(cout, shape.c, k, k), 0.5),
            rand_vec(&mut rng, cout, 0.5),
            stride,
            padding,
        )
        .expect("valid params");
        let out_shape = conv2d_forward(&x, &p).expect("forward").shape();
        let w = rand_tensor(&mut rng, out_shape, 1.0);
        let (gx, gp) = conv2d_backward(&x, &p, &w).expect("backward");

        let mut st = (x, p);
        let f = |s: &(Tensor<f64>, ConvParams<f64>)| weighted(&conv2d_forward(&s.0, &s.1).unwrap(), &w);
        worst.see(gx.data(), &fd_gradient(&mut st, |s| s.0.data_mut(), f, FD_STEP));
        worst.see(gp.weight.data(), &fd_gradient(&mut st, |s| s.1.weight.data_mut(), f, FD_STEP));
        worst.see(&gp.bias, &fd_gradient(&mut st, |s| &mut s.1.bias, f, FD_STEP));
    }
    GradCheck { name: "conv2d", instances, worst_rel_err: worst.0 }
}

pub fn check_tconv2d(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let k = [1, 3][rng.random_range(0..2)];
        let stride = rng.random_range(1..=2);
        let padding = rng.random_range(0..=k / 2);
        let output_padding = rng.random_range(0..stride);
        let shape = Shape::new(
            rng.random_range(1..=2),
            rng.random_range(1..=4),
            rng.random_range(2..=6),
            rng.random_range(2..=6),
        );
        let cout = rng.random_range(1..=4);
        let x = rand_tensor(&mut rng, shape, 1.0);
        let p = TConvParams::new(
            rand_tensor(&mut rng, Shape::new(shape.c, cout, k, k), 0.5),
            rand_vec(&mut rng, cout, 0.5),
            stride,
            padding,
            output_padding,
        )
        .expect("valid params");
        let out_shape = tconv2d_forward(&x, &p).expect("forward").shape();
        let w = rand_tensor(&mut rng, out_shape, 1.0);
        let (gx, gp) = tconv2d_backward(&x, &p, &w).expect("backward");

        let mut st = (x, p);
        let f = |s: &(Tensor<f64>, TConvParams<f64>)| weighted(&tconv2d_forward(&s.0, &s.1).unwrap(), &w);
        worst.see(gx.data(), &fd_gradient(&mut st, |s| s.0.data_mut(), f, FD_STEP));
        worst.see(gp.weight.data(), &fd_gradient(&mut st, |s| s.1.weight.data_mut(), f, FD_STEP));
        worst.see(&gp.bias, &fd_gradient(&mut st, |s| &mut s.1.bias, f, FD_STEP));
    }
    GradCheck { name: "tconv2d", instances, worst_rel_err: worst.0 }
}

pub fn check_dense(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for i in 0..instances {
        // The first instance is the 8 -> 5 layer; the rest are random.
        let (n, din, dout) = if i == 0 {
            (1, 8, 5)
        } else {
            (rng.random_range(1..=3), rng.random_range(1..=8), rng.random_range(1..=8))
        };
        let x = rand_tensor(&mut rng, Shape::vector(n, din), 1.0);
        let p = DenseParams::new(rand_vec(&mut rng, din * dout, 0.5), rand_vec(&mut rng, dout, 0.5), din, dout)
            .expect("valid params");
        let w = rand_tensor(&mut rng, Shape::vector(n, dout), 1.0);
        let (gx, gp) = dense_backward(&x, &p, &w).expect("backward");

        let mut st = (x, p);
        let f = |s: &(Tensor<f64>, DenseParams<f64>)| weighted(&dense_forward(&s.0, &s.1).unwrap(), &w);
        worst.see(gx.data(), &fd_gradient(&mut st, |s| s.0.data_mut(), f, FD_STEP));
        worst.see(&gp.weight, &fd_gradient(&mut st, |s| &mut s.1.weight, f, FD_STEP));
        worst.see(&gp.bias, &fd_gradient(&mut st, |s| &mut s.1.bias, f, FD_STEP));
    }
    GradCheck { name: "dense", instances, worst_rel_err: worst.0 }
}

fn small_shape(rng: &mut ChaCha8Rng) -> Shape {
    Shape::new(rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=8), rng.random_range(1..=8))
}

pub fn check_global_avg_pool(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let shape = small_shape(&mut rng);
        let mut x = rand_tensor(&mut rng, shape, 1.0);
        let w = rand_tensor(&mut rng, Shape::vector(shape.n, shape.c), 1.0);
        let gx = global_avg_pool_backward(shape, &w).expect("backward");
        let num = fd_gradient(&mut x, |x| x.data_mut(), |x| weighted(&global_avg_pool(x), &w), FD_STEP);
        worst.see(gx.data(), &num);
    }
    GradCheck { name: "global_avg_pool", instances, worst_rel_err: worst.0 }
}

/// Values bounded away from ReLU's kink so `±h` never crosses it.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    let data = (0..shape.numel())
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("valid shape")
}

pub fn check_relu(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let shape = small_shape(&mut rng);
        let mut x = away_from_zero(&mut rng, shape);
        let w = rand_tensor(&mut rng, shape, 1.0);
        let g = relu_backward(&relu(&x), &w).expect("backward");
        let num = fd_gradient(&mut x, |x| x.data_mut(), |x| weighted(&relu(x), &w), FD_STEP);
        worst.see(g.data(), &num);
    }
    GradCheck { name: "relu", instances, worst_rel_err: worst.0 }
}

pub fn check_sigmoid(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let shape = small_shape(&mut rng);
        let mut x = rand_tensor(&mut rng, shape, 4.0);
        let w = rand_tensor(&mut rng, shape, 1.0);
        let g = sigmoid_backward(&sigmoid(&x), &w).expect("backward");
        let num = fd_gradient(&mut x, |x| x.data_mut(), |x| weighted(&sigmoid(x), &w), FD_STEP);
        worst.see(g.data(), &num);
    }
    GradCheck { name: "sigmoid", instances, worst_rel_err: worst.0 }
}

/// `add` is checked through its (identity) Jacobian on both operands.
pub fn check_add(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let shape = small_shape(&mut rng);
        let a = rand_tensor(&mut rng, shape, 1.0);
        let b = rand_tensor(&mut rng, shape, 1.0);
        let w = rand_tensor(&mut rng, shape, 1.0);
        let mut st = (a, b);
        let f = |s: &(Tensor<f64>, Tensor<f64>)| weighted(&add(&s.0, &s.1).unwrap(), &w);
        worst.see(w.data(), &fd_gradient(&mut st, |s| s.0.data_mut(), f, FD_STEP));
        worst.see(w.data(), &fd_gradient(&mut st, |s| s.1.data_mut(), f, FD_STEP));
    }
    GradCheck { name: "add", instances, worst_rel_err: worst.0 }
}

pub fn check_broadcast_mul(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let shape = small_shape(&mut rng);
        let f0 = rand_tensor(&mut rng, shape, 1.0);
        let m0 = rand_tensor(&mut rng, Shape { c: 1, ..shape }, 1.0);
        let w = rand_tensor(&mut rng, shape, 1.0);
        let (gf, gm) = broadcast_mul_backward(&f0, &m0, &w).expect("backward");
        let mut st = (f0, m0);
        let f = |s: &(Tensor<f64>, Tensor<f64>)| weighted(&broadcast_mul(&s.0, &s.1).unwrap(), &w);
        worst.see(gf.data(), &fd_gradient(&mut st, |s| s.0.data_mut(), f, FD_STEP));
        worst.see(gm.data(), &fd_gradient(&mut st, |s| s.1.data_mut(), f, FD_STEP));
    }
    GradCheck { name: "broadcast_mul", instances, worst_rel_err: worst.0 }
}

pub fn check_mse(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for _ in 0..instances {
        let shape = small_shape(&mut rng);
        let mut pred = rand_tensor(&mut rng, shape, 1.0);
        let target = rand_tensor(&mut rng, shape, 1.0);
        let (_, g) = mse_loss(&pred, &target).expect("loss");
        let num = fd_gradient(&mut pred, |p| p.data_mut(), |p| mse_loss(p, &target).unwrap().0, FD_STEP);
        worst.see(g.data(), &num);
    }
    GradCheck { name: "mse_loss", instances, worst_rel_err: worst.0 }
}

/// The tiny architecture used for the end-to-end gradient check.
pub fn tiny_config() -> CaeConfig {
    CaeConfig {
        mode: ConfigMode::Experimental,
        input_size: (32, 32),
        encoder_channels: vec![2, 2, 2, 2, 2],
        bottleneck_channels: vec![2, 2, 1, 2],
        decoder_channels: vec![2, 2, 2, 2, 3],
        embedding_dim: 4,
        ..CaeConfig::default()
    }
}

/// Replaces the zero initial biases with random values so that no
/// pre-activation sits exactly on a ReLU kink.
fn randomize_biases(model: &mut CaeModel<f64>, rng: &mut ChaCha8Rng) {
    for (name, values) in model.params.tensors_mut() {
        if name.ends_with(".bias") {
            values.iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    }
}

/// MSE reconstruction loss of the full auto-encoder against every parameter.
pub fn check_full_cae(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst(0.0);
    for i in 0..instances {
        let mut model: CaeModel<f64> = build_cae(tiny_config(), seed.wrapping_add(i as u64)).expect("tiny config");
        randomize_biases(&mut model, &mut rng);
        let n = rng.random_range(1..=2);
        let x =
            Tensor::from_vec(model.input_shape(n), (0..n * 3 * 32 * 32).map(|_| rng.random_range(0.0..1.0)).collect())
                .expect("valid shape");
        let loss = |m: &CaeModel<f64>| {
            let (y, _) = m.forward_reconstruct(&x).unwrap();
            mse_loss(&y, &x).unwrap().0
        };
        let (y, cache) = model.forward_reconstruct(&x).expect("forward");
        let (_, g) = mse_loss(&y, &x).expect("loss");
        let grads = model.backward(&cache, &g).expect("backward");
        let tensors = grads.tensors();
        let analytic: Vec<f64> = tensors.iter().flat_map(|(_, t)| t.iter().copied()).collect();

        // Compared over the whole parameter vector: some attention-branch
        // tensors have gradient norms near the round-off floor of the differences.
        let mut m = model;
        let mut numeric = Vec::with_capacity(analytic.len());
        for t in 0..tensors.len() {
            numeric.extend(fd_gradient(&mut m, |m| m.params.tensors_mut().swap_remove(t).1, loss, FULL_MODEL_FD_STEP));
        }
        worst.see(&analytic, &numeric);
    }
    GradCheck { name: "full_cae", instances, worst_rel_err: worst.0 }
}

/// Every primitive plus the full model, `instances` random cases each.
pub fn gradient_suite(instances: usize, seed: u64) -> Vec<GradCheck> {
    vec![
        check_conv2d(instances, seed),
        check_tconv2d(instances, seed + 1),
        check_dense(instances, seed + 2),
        check_global_avg_pool(instances, seed + 3),
        check_relu(instances, seed + 4),
        check_sigmoid(instances, seed + 5),
        check_add(instances, seed + 6),
        check_broadcast_mul(instances, seed + 7),
        check_mse(instances, seed + 8),
        check_full_cae(instances, seed + 9),
    ]
}
