mod common;

use cachegym::nn::{Activation, BatchTape, Mlp, Tape};
use common::{max_relative_error, numeric_input_grad, numeric_param_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_case(rng: &mut ChaCha8Rng, act: Activation) -> (Mlp, Vec<f64>, Vec<f64>) {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=7));
    }
    let mut net = Mlp::new(&sizes, act, rng.random()).unwrap();
    // Random biases too: zero biases behind a dead layer sit exactly on a kink.
    let params: Vec<f64> = (0..net.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.set_flat(&params).unwrap();
    let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
    (net, input, weights)
}

#[test]
fn backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for act in [Activation::Identity, Activation::Logistic, Activation::Relu] {
        for case in 0..30 {
            let (net, input, weights) = random_case(&mut rng, act);
            let mut tape = Tape::default();
            net.forward_tape(&input, &mut tape).unwrap();
            let mut grads = net.gradients();
            let dx = net.backward(&tape, &weights, &mut grads).unwrap();
            let h = 1e-6;
            let param_err = max_relative_error(&grads.flatten(), &numeric_param_grad(&net, &input, &weights, h), 1e-6);
            let input_err = max_relative_error(&dx, &numeric_input_grad(&net, &input, &weights, h), 1e-6);
            assert!(param_err < 1e-4, "{act:?} case {case}: parameter error {param_err:e}");
            assert!(input_err < 1e-4, "{act:?} case {case}: input error {input_err:e}");
        }
    }
}

#[test]
fn backward_variants_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (net, input, weights) = random_case(&mut rng, Activation::Logistic);
    let mut tape = Tape::default();
    net.forward_tape(&input, &mut tape).unwrap();
    let mut full = net.gradients();
    let dx = net.backward(&tape, &weights, &mut full).unwrap();
    let mut params = net.gradients();
    net.backward_params(&tape, &weights, &mut params).unwrap();
    assert_eq!(full, params);
    assert_eq!(dx, net.input_gradient(&tape, &weights).unwrap());
}

#[test]
fn gradients_accumulate_across_samples() {
    let net = Mlp::new(&[3, 4, 2], Activation::Identity, 8).unwrap();
    let xs = [[0.1, -0.2, 0.3], [0.5, 0.4, -0.9]];
    let w = [1.0, -0.5];
    let mut tape = Tape::default();
    let mut sum = net.gradients();
    for x in &xs {
        net.forward_tape(x, &mut tape).unwrap();
        net.backward_params(&tape, &w, &mut sum).unwrap();
    }
    let numeric: Vec<f64> = {
        let a = numeric_param_grad(&net, &xs[0], &w, 1e-6);
        let b = numeric_param_grad(&net, &xs[1], &w, 1e-6);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    };
    assert!(max_relative_error(&sum.flatten(), &numeric, 1e-6) < 1e-4);
}

#[test]
fn stale_tape_is_rejected() {
    let a = Mlp::new(&[3, 4, 1], Activation::Identity, 1).unwrap();
    let b = Mlp::new(&[5, 4, 1], Activation::Identity, 1).unwrap();
    let mut tape = Tape::default();
    a.forward_tape(&[0.0; 3], &mut tape).unwrap();
    assert!(b.input_gradient(&tape, &[1.0]).is_err());
    assert!(a.input_gradient(&Tape::default(), &[1.0]).is_err());
}

#[test]
fn batched_passes_match_per_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for act in [Activation::Identity, Activation::Logistic, Activation::Relu] {
        for rows in [1, 3, 4, 9] {
            let (net, _, _) = random_case(&mut rng, act);
            let (ni, no) = (net.input_dim(), net.output_dim());
            let inputs: Vec<f64> = (0..rows * ni).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d_out: Vec<f64> = (0..rows * no).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut btape = BatchTape::default();
            let out = net.forward_batch(&inputs, rows, &mut btape).unwrap().to_vec();
            let mut bgrads = net.gradients();
            let bdx = net.backward_batch(&btape, &d_out, Some(&mut bgrads), true).unwrap().unwrap();

            let mut sgrads = net.gradients();
            let mut sdx = Vec::new();
            let mut sout = Vec::new();
            let mut tape = Tape::default();
            for r in 0..rows {
                sout.extend_from_slice(net.forward_tape(&inputs[r * ni..(r + 1) * ni], &mut tape).unwrap());
                sdx.extend(net.backward(&tape, &d_out[r * no..(r + 1) * no], &mut sgrads).unwrap());
            }
            assert!(max_relative_error(&out, &sout, 1e-9) < 1e-10, "{act:?} rows {rows}");
            assert!(max_relative_error(&bdx, &sdx, 1e-9) < 1e-10, "{act:?} rows {rows}");
            assert!(max_relative_error(&bgrads.flatten(), &sgrads.flatten(), 1e-9) < 1e-10);
        }
    }
}
