use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn named(items: Vec<Tensor>) -> Vec<(String, Tensor)> {
    items
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("input{i}"), t))
        .collect()
}

fn assert_grads_ok(report: &GradCheckReport) {
    for t in &report.tensors {
        assert!(t.passed, "{} failed with error {:e}", t.name, t.max_error);
    }
}

/// `sum(op(x) * r)` with a fixed random weighting, so gradients are not
/// all identical.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var, crate::Error> {
    let shape = g.value(y).shape().to_vec();
    let r = g.constant(Tensor::uniform(&shape, -1.0, 1.0, &mut rng(seed)));
    let p = g.mul(y, r)?;
    g.sum(p)
}

#[test]
fn conv_all_ones_center_is_nine() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let y = g.conv2d(x, w, 1).unwrap();
    let v = g.value(y);
    assert_eq!(v.shape(), &[1, 1, 3, 3]);
    assert_eq!(v.data()[4], 9.0);
    // corners see a 2x2 window of ones
    assert_eq!(v.data()[0], 4.0);
}

#[test]
fn conv_identity_kernel_reproduces_input() {
    let mut g = Graph::new();
    let input = Tensor::uniform(&[2, 3, 5, 4], -1.0, 1.0, &mut rng(1));
    let mut kernel = Tensor::zeros(&[3, 3, 3, 3]);
    for c in 0..3 {
        kernel.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    }
    let x = g.constant(input.clone());
    let w = g.constant(kernel);
    let y = g.conv2d(x, w, 1).unwrap();
    assert_eq!(g.value(y), &input);
}

#[test]
fn conv_stride_two_output_is_ceil_half() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 1, 7, 6]));
    let w = g.constant(Tensor::zeros(&[2, 1, 3, 3]));
    let y = g.conv2d(x, w, 2).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 2, 4, 3]);
}

#[test]
fn conv_rejects_mismatched_channels() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 5, 5]));
    let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(matches!(g.conv2d(x, w, 1), Err(crate::Error::Dimension { .. })));
    let skewed = g.constant(Tensor::zeros(&[1, 2, 3, 5]));
    assert!(g.conv2d(x, skewed, 1).is_err());
}

#[test]
fn conv_weight_and_input_gradients_match_differences() {
    let inputs = named(vec![
        Tensor::uniform(&[2, 2, 5, 5], -1.0, 1.0, &mut rng(2)),
        Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng(3)),
    ]);
    for stride in [1, 2] {
        let report = check_gradients(
            &inputs,
            |g, v| {
                let y = g.conv2d(v[0], v[1], stride)?;
                g.sum(y)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_grads_ok(&report);
        let report = check_gradients(
            &inputs,
            |g, v| {
                let y = g.conv2d(v[0], v[1], stride)?;
                weighted_sum(g, y, 9)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_grads_ok(&report);
    }
}

fn residual_inputs(seed: u64, channels: usize) -> Vec<(String, Tensor)> {
    let mut r = rng(seed);
    named(vec![
        Tensor::uniform(&[2, channels, 4, 4], -1.0, 1.0, &mut r),
        Tensor::uniform(&[channels, channels, 3, 3], -0.5, 0.5, &mut r),
        Tensor::uniform(&[channels], 0.1, 0.4, &mut r),
        Tensor::uniform(&[channels, channels, 3, 3], -0.5, 0.5, &mut r),
        Tensor::uniform(&[channels], 0.1, 0.4, &mut r),
    ])
}

#[test]
fn residual_unit_with_zero_kernels_is_identity() {
    let mut g = Graph::new();
    let input = Tensor::uniform(&[2, 3, 4, 4], -1.0, 1.0, &mut rng(4));
    let x = g.param(input.clone());
    let zero = || Tensor::zeros(&[3, 3, 3, 3]);
    let (wa, wb, wc, wd) = (g.param(zero()), g.param(zero()), g.param(zero()), g.param(zero()));
    let s = g.param(Tensor::full(&[3], 0.25));
    let a = Activation::Prelu(s);
    let y = residual_unit(&mut g, x, (wa, a), (wb, a)).unwrap();
    assert_eq!(g.value(y), &input);
    let y2 = residual_unit(&mut g, y, (wc, a), (wd, Activation::Relu)).unwrap();
    assert_eq!(g.value(y2), &input);
}

#[test]
fn residual_unit_gradients_match_differences() {
    let inputs = residual_inputs(5, 2);
    let report = check_gradients(
        &inputs,
        |g, v| {
            let y = residual_unit(
                g,
                v[0],
                (v[1], Activation::Prelu(v[2])),
                (v[3], Activation::Prelu(v[4])),
            )?;
            weighted_sum(g, y, 6)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert_grads_ok(&report);
}

#[test]
fn residual_unit_rejects_channel_change() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let w = g.constant(Tensor::zeros(&[3, 2, 3, 3]));
    let r = residual_unit(&mut g, x, (w, Activation::Relu), (w, Activation::Relu));
    assert!(matches!(r, Err(crate::Error::Dimension { .. })));
}

#[test]
fn fully_connected_identity_and_bias() {
    let mut g = Graph::new();
    let input = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng(7));
    let x = g.constant(input.clone());
    let eye = g.constant(Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 }));
    let zb = g.constant(Tensor::zeros(&[4]));
    let y = g.linear(x, eye, zb).unwrap();
    assert_eq!(g.value(y), &input);

    let zw = g.constant(Tensor::zeros(&[4, 2]));
    let b = g.constant(Tensor::new(vec![2], vec![0.5, -1.5]).unwrap());
    let y = g.linear(x, zw, b).unwrap();
    for row in g.value(y).data().chunks(2) {
        assert_eq!(row, &[0.5, -1.5]);
    }
}

#[test]
fn fully_connected_gradients_match_differences() {
    let mut r = rng(8);
    let inputs = named(vec![
        Tensor::uniform(&[4, 7], -1.0, 1.0, &mut r),
        Tensor::uniform(&[7, 3], -1.0, 1.0, &mut r),
        Tensor::uniform(&[3], -1.0, 1.0, &mut r),
    ]);
    let report = check_gradients(
        &inputs,
        |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            weighted_sum(g, y, 10)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert_grads_ok(&report);
}

#[test]
fn fully_connected_rejects_inner_mismatch() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 3]));
    let w = g.constant(Tensor::zeros(&[4, 2]));
    let b = g.constant(Tensor::zeros(&[2]));
    assert!(g.linear(x, w, b).is_err());
}

#[test]
fn activation_fixed_points() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::zeros(&[1, 2]));
    let s = g.sigmoid(z).unwrap();
    let t = g.tanh(z).unwrap();
    let sm = g.softmax(z).unwrap();
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    assert_eq!(g.value(t).data(), &[0.0, 0.0]);
    assert_eq!(g.value(sm).data(), &[0.5, 0.5]);
}

#[test]
fn activation_gradients_match_differences() {
    // values kept away from the relu kink so differences are smooth
    let base = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng(11));
    let shifted = Tensor::from_fn(&[3, 4], |i| {
        let v = base.data()[i];
        if v.abs() < 0.05 {
            v + 0.1
        } else {
            v
        }
    });
    type Unary = fn(&mut Graph, Var) -> Result<Var, crate::Error>;
    let ops: [(&str, Unary); 5] = [
        ("relu", |g, x| g.relu(x)),
        ("sigmoid", |g, x| g.sigmoid(x)),
        ("tanh", |g, x| g.tanh(x)),
        ("softmax", |g, x| g.softmax(x)),
        ("log_softmax", |g, x| g.log_softmax(x)),
    ];
    for (name, op) in ops {
        let report = check_gradients(
            &named(vec![shifted.clone()]),
            |g, v| {
                let y = op(g, v[0])?;
                weighted_sum(g, y, 12)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{name}: {:e}", report.max_error());
    }
    let slope = Tensor::new(vec![3], vec![0.25, 0.1, -0.3]).unwrap();
    let x4 = shifted.clone().reshape(&[1, 3, 2, 2]).unwrap();
    let report = check_gradients(
        &named(vec![x4, slope]),
        |g, v| {
            let y = g.prelu(v[0], v[1])?;
            weighted_sum(g, y, 13)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert_grads_ok(&report);
}

#[test]
fn average_pool_examples() {
    let mut g = Graph::new();
    let c = g.param(Tensor::full(&[2, 3, 4, 5], 1.75));
    let y = g.avg_pool(c).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 3]);
    assert!(g.value(y).data().iter().all(|v| *v == 1.75));

    let x = g.param(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.avg_pool(x).unwrap();
    assert_eq!(g.value(y).data(), &[2.5]);

    let x = g.param(Tensor::uniform(&[2, 2, 3, 4], -1.0, 1.0, &mut rng(14)));
    let y = g.avg_pool(x).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|v| (*v - 1.0 / 12.0).abs() < 1e-15));
}

#[test]
fn backward_of_sum_is_ones() {
    let mut g = Graph::new();
    let x = g.param(Tensor::uniform(&[3, 2], -1.0, 1.0, &mut rng(15)));
    let s = g.sum(x).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
}

#[test]
fn backward_of_sum_of_squares_is_twice_input() {
    let mut g = Graph::new();
    let t = Tensor::uniform(&[5], -1.0, 1.0, &mut rng(16));
    let x = g.param(t.clone());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    for (gr, v) in g.grad(x).unwrap().iter().zip(t.data()) {
        assert!((gr - 2.0 * v).abs() < 1e-15);
    }
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.param(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x), Err(crate::Error::Contract(_))));
}

#[test]
fn unused_leaf_gets_exact_zero_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::full(&[3], 2.0));
    let unused = g.param(Tensor::full(&[2], 5.0));
    let s = g.sum(x).unwrap();
    // nodes after the loss must not contribute either
    let _later = g.scale(unused, 3.0).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(unused).unwrap(), &[0.0, 0.0]);
}

#[test]
fn detach_and_constants_block_gradients() {
    let mut g = Graph::new();
    let x = g.param(Tensor::full(&[2], 1.5));
    let d = g.detach(x);
    let y = g.mul(d, x).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.5, 1.5]);
    assert!(g.grad(d).is_none());
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[1], f64::MAX));
    assert!(matches!(g.scale(x, 10.0), Err(crate::Error::NonFinite(_))));
}

#[test]
fn group_ops_reduce_consecutive_rows() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![4, 2], vec![1.0, 5.0, 3.0, 2.0, -1.0, 0.0, -3.0, 4.0]).unwrap());
    let m = g.group_mean(x, 2).unwrap();
    assert_eq!(g.value(m).data(), &[2.0, 3.5, -2.0, 2.0]);
    let mx = g.group_max(x, 2).unwrap();
    assert_eq!(g.value(mx).data(), &[3.0, 5.0, -1.0, 4.0]);
    let s = g.sum(mx).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    assert!(g.group_mean(x, 3).is_err());
}

#[test]
fn slice_and_group_gradients_match_differences() {
    let inputs = named(vec![Tensor::uniform(&[6, 3], -1.0, 1.0, &mut rng(17))]);
    let report = check_gradients(
        &inputs,
        |g, v| {
            let a = g.slice_rows(v[0], 2, 6)?;
            let m = g.group_mean(a, 2)?;
            let b = g.slice_rows(v[0], 0, 4)?;
            let mx = g.group_max(b, 4)?;
            let sm = weighted_sum(g, m, 18)?;
            let sx = weighted_sum(g, mx, 19)?;
            g.add(sm, sx)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert_grads_ok(&report);
}

#[test]
fn smooth_l1_gradient_is_clamped_outside_margin() {
    let inputs = named(vec![Tensor::new(vec![4], vec![-0.3, -0.01, 0.02, 0.2]).unwrap()]);
    let report = check_gradients(
        &inputs,
        |g, v| {
            let y = g.smooth_l1(v[0], 0.05, SmoothL1Variant::Continuous)?;
            g.sum(y)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert_grads_ok(&report);
    let mut g = Graph::new();
    let x = g.param(inputs[0].1.clone());
    let y = g.smooth_l1(x, 0.05, SmoothL1Variant::Continuous).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    let gr = g.grad(x).unwrap();
    assert_eq!(gr[0], -1.0);
    assert_eq!(gr[3], 1.0);
    assert!(g.smooth_l1(x, 0.0, SmoothL1Variant::Continuous).is_err());
}

#[test]
fn faults_are_caught_by_the_checker() {
    let inputs = named(vec![
        Tensor::uniform(&[1, 1, 4, 4], -1.0, 1.0, &mut rng(20)),
        Tensor::uniform(&[2, 1, 3, 3], -1.0, 1.0, &mut rng(21)),
    ]);
    let f = |g: &mut Graph, v: &[Var]| {
        let y = g.conv2d(v[0], v[1], 1)?;
        let t = g.tanh(y)?;
        g.sum(t)
    };
    let clean = check_gradients(&inputs, f, &GradCheckOptions::default()).unwrap();
    assert!(clean.passed());
    for fault in [BackwardFault::TanhDerivative, BackwardFault::ConvWeightGrad] {
        let opts = GradCheckOptions {
            fault: Some(fault),
            ..GradCheckOptions::default()
        };
        let report = check_gradients(&inputs, f, &opts).unwrap();
        assert!(!report.passed(), "{fault:?} went unnoticed");
    }
}

#[test]
fn forward_is_bit_stable() {
    let run = || {
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform(&[2, 2, 6, 6], -1.0, 1.0, &mut rng(22)));
        let w = g.constant(Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng(23)));
        let y = g.conv2d(x, w, 2).unwrap();
        let t = g.tanh(y).unwrap();
        g.value(t).data().to_vec()
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(values in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 4], values).unwrap());
        let y = g.softmax(x).unwrap();
        for row in g.value(y).data().chunks(4) {
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_residual_branch_is_identity(values in prop::collection::vec(-1.0f64..1.0, 32)) {
        let mut g = Graph::new();
        let input = Tensor::new(vec![2, 1, 4, 4], values).unwrap();
        let x = g.constant(input.clone());
        let w = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
        let y = residual_unit(&mut g, x, (w, Activation::Relu), (w, Activation::Relu)).unwrap();
        prop_assert_eq!(g.value(y), &input);
    }
}
