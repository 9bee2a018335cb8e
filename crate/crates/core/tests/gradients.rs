use ucbmir_core::numerics::{
    adam_step, conv2d_forward, tconv2d_forward, AdamConfig, AdamState, ConvParams, ParamSlot, Shape, TConvParams,
    Tensor,
};
use ucbmir_core::testing::{self, GradCheck};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 20;
const TOLERANCE: f64 = 1e-5;

fn assert_check(c: GradCheck) {
    assert_eq!(c.instances, INSTANCES);
    assert!(
        c.worst_rel_err <= TOLERANCE,
        "{}: worst relative error {:.3e} over {} instances",
        c.name,
        c.worst_rel_err,
        c.instances
    );
}

#[test]
fn conv2d_matches_finite_differences() {
    assert_check(testing::check_conv2d(INSTANCES, 100));
}

#[test]
fn tconv2d_matches_finite_differences() {
    assert_check(testing::check_tconv2d(INSTANCES, 200));
}

#[test]
fn dense_matches_finite_differences() {
    assert_check(testing::check_dense(INSTANCES, 300));
}

#[test]
fn pooling_and_pointwise_match_finite_differences() {
    assert_check(testing::check_global_avg_pool(INSTANCES, 400));
    assert_check(testing::check_relu(INSTANCES, 500));
    assert_check(testing::check_sigmoid(INSTANCES, 600));
    assert_check(testing::check_add(INSTANCES, 700));
    assert_check(testing::check_broadcast_mul(INSTANCES, 800));
    assert_check(testing::check_mse(INSTANCES, 900));
}

#[test]
fn full_tiny_cae_matches_finite_differences() {
    assert_check(testing::check_full_cae(INSTANCES, 1000));
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f32> {
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn conv_adjoint_identity_in_f32() {
    // <conv(x), y> = <x, conv^T(y)> with zero bias; conv^T is the transposed
    // conv sharing the same weight buffer.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let (cin, cout) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let h = 2 * rng.random_range(2..=8);
        let x = random_tensor(&mut rng, Shape::new(2, cin, h, h));
        let w = random_tensor(&mut rng, Shape::new(cout, cin, 3, 3));
        let conv = ConvParams::new(w.clone(), vec![0.0; cout], 2, 1).unwrap();
        let tconv = TConvParams::new(w, vec![0.0; cin], 2, 1, 1).unwrap();
        let y = random_tensor(&mut rng, conv.output_shape(x.shape()).unwrap());
        let lhs = conv2d_forward(&x, &conv).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&tconv2d_forward(&y, &tconv).unwrap()).unwrap();
        assert!(rel(lhs, rhs) <= 1e-4, "{lhs} vs {rhs}");
    }
}

#[test]
fn tconv_adjoint_identity_in_f32() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..20 {
        let (cin, cout) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let h = rng.random_range(1..=8);
        let x = random_tensor(&mut rng, Shape::new(1, cin, h, h));
        let w = random_tensor(&mut rng, Shape::new(cin, cout, 3, 3));
        let tconv = TConvParams::new(w.clone(), vec![0.0; cout], 2, 1, 1).unwrap();
        let conv = ConvParams::new(w, vec![0.0; cin], 2, 1).unwrap();
        let out = tconv2d_forward(&x, &tconv).unwrap();
        assert_eq!(out.shape().h, 2 * h);
        let y = random_tensor(&mut rng, out.shape());
        let lhs = out.dot(&y).unwrap();
        let rhs = x.dot(&conv2d_forward(&y, &conv).unwrap()).unwrap();
        assert!(rel(lhs, rhs) <= 1e-4, "{lhs} vs {rhs}");
    }
}

proptest! {
    #[test]
    fn encoder_decoder_shape_algebra(k in 1usize..=16) {
        let h = 32 * k;
        let mut extent = h;
        for _ in 0..5 {
            extent = ucbmir_core::numerics::conv_output_extent(extent, 3, 2, 1).unwrap();
        }
        prop_assert_eq!(extent, k);
        for _ in 0..5 {
            extent = ucbmir_core::numerics::tconv_output_extent(extent, 3, 2, 1, 1).unwrap();
        }
        prop_assert_eq!(extent, h);
    }

    #[test]
    fn adam_zero_gradient_is_identity_for_any_step(t in 0u64..10_000, values in prop::collection::vec(-10.0f32..10.0, 1..16)) {
        let mut state = AdamState::<f32>::new(AdamConfig::default(), &[values.len()]);
        state.step = t;
        let mut p = values.clone();
        let g = vec![0.0f32; values.len()];
        let mut slots = [ParamSlot { name: "w", value: &mut p, grad: &g }];
        adam_step(&mut slots, &mut state).unwrap();
        prop_assert_eq!(p, values);
        prop_assert_eq!(state.step, t + 1);
    }
}
