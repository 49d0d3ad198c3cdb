//! Finite-difference check of every parameter of assembled networks.

use stockcast::layers::Mode;
use stockcast::tensor::{RngState, Shape, Tensor};
use stockcast::training::mse_loss;
use stockcast::zoo::{build_cnn_lstm, build_lstm_baseline, flatten_grads, CnnLstmConfig, LstmBaselineConfig, Network};

const DROPOUT_SEED: u64 = 77;

fn loss(net: &Network, x: &Tensor, t: &Tensor) -> f64 {
    let (y, _) = net.forward(x, Mode::Train, &mut RngState::new(DROPOUT_SEED)).unwrap();
    mse_loss(&y, t).unwrap().0
}

fn check(mut net: Network, batch: usize) {
    let mut dims = vec![batch];
    dims.extend_from_slice(net.input_dims());
    let mut rng = RngState::new(5);
    // Generic point: zero-initialized biases can sit exactly on a relu kink.
    for p in net.params_mut() {
        let shape = p.shape().clone();
        *p = Tensor::random_uniform(&shape, -0.5, 0.5, &mut rng).unwrap();
    }
    let x = Tensor::random_uniform(&Shape::new(dims).unwrap(), 0.0, 1.0, &mut rng).unwrap();
    let t = Tensor::random_uniform(&Shape::new(vec![batch]).unwrap(), 0.0, 1.0, &mut rng).unwrap();

    let (y, caches) = net.forward(&x, Mode::Train, &mut RngState::new(DROPOUT_SEED)).unwrap();
    let (_, g) = mse_loss(&y, &t).unwrap();
    let (_, grads) = net.backward(&g, &caches).unwrap();
    let grads = flatten_grads(grads);
    let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(grads.len(), names.len());

    let h = 1e-5;
    let mut checked = 0;
    for (j, name) in names.iter().enumerate() {
        for i in 0..grads[j].numel() {
            let orig = net.params_mut()[j].data()[i];
            net.params_mut()[j].data_mut()[i] = orig + h;
            let lp = loss(&net, &x, &t);
            net.params_mut()[j].data_mut()[i] = orig - h;
            let lm = loss(&net, &x, &t);
            net.params_mut()[j].data_mut()[i] = orig;
            let num = (lp - lm) / (2.0 * h);
            let a = grads[j].data()[i];
            // Below 1e-7 the difference quotient is dominated by rounding
            // (about 1e-11 absolute at this step), so the floor keeps the
            // comparison meaningful there.
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-7);
            assert!(rel < 1e-4, "{name}[{i}]: analytic {a} numeric {num} rel {rel}");
            checked += 1;
        }
    }
    assert_eq!(checked, net.param_count());
}

#[test]
fn cnn_lstm_toy_pointwise_kernel() {
    // Window 8 split 2 x 4 only survives two pools with a pointwise kernel.
    let cfg = CnnLstmConfig {
        window: 8,
        outer_steps: 2,
        conv_channels: [2, 3, 2],
        kernel_size: 1,
        lstm_units: 3,
        ..Default::default()
    };
    check(build_cnn_lstm(&cfg, &mut RngState::new(11)).unwrap(), 3);
}

#[test]
fn cnn_lstm_toy_default_kernel() {
    let cfg = CnnLstmConfig {
        window: 36,
        outer_steps: 2,
        conv_channels: [2, 3, 2],
        lstm_units: 3,
        ..Default::default()
    };
    check(build_cnn_lstm(&cfg, &mut RngState::new(12)).unwrap(), 3);
}

#[test]
fn lstm_baseline_toy() {
    let cfg = LstmBaselineConfig {
        window: 8,
        units: 3,
        dropout: 0.5,
    };
    check(build_lstm_baseline(&cfg, &mut RngState::new(13)).unwrap(), 3);
}

#[test]
fn window_eight_rejects_default_kernel() {
    let cfg = CnnLstmConfig {
        window: 8,
        outer_steps: 2,
        conv_channels: [2, 3, 2],
        lstm_units: 3,
        ..Default::default()
    };
    assert!(build_cnn_lstm(&cfg, &mut RngState::new(0)).is_err());
}
