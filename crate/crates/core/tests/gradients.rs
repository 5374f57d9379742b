use ganbench_core::gancore::{gradient_penalty, vanilla_losses, wasserstein_losses, Layer, Net, Tape, Tensor};
use ganbench_core::rng::{self, Domain};

fn random_tensor(shape: &[usize], seed: u64, index: u64, scale: f64) -> Tensor<f64> {
    let mut r = rng::stream(seed, Domain::Eval, index);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng::normal(&mut r)).collect())
}

/// Dense → Tanh → Dense critic on `d`-dimensional inputs.
fn two_layer_critic(d: usize, h: usize, seed: u64) -> Net<f64> {
    let mut net = Net::new(
        vec![Layer::Dense { inputs: d, outputs: h }, Layer::Tanh, Layer::Dense { inputs: h, outputs: 1 }],
        vec![d],
        seed,
        0,
    );
    for (i, p) in net.params.iter_mut().enumerate() {
        p.tensor = random_tensor(&p.tensor.shape, seed, 100 + i as u64, 0.7);
    }
    net
}

/// Critic objective with the penalty; interpolation weights come from a
/// fixed stream so repeated evaluations see the same `x̂`.
fn objective(net: &mut Net<f64>, real: &Tensor<f64>, fake: &Tensor<f64>, seed: u64) -> (f64, Vec<Tensor<f64>>) {
    let mut tape = Tape::new();
    let params = net.bind(&mut tape);
    let rv = tape.leaf(real.clone());
    let fv = tape.leaf(fake.clone());
    let mut phase = ganbench_core::gancore::Phase::eval();
    let cr = net.forward(&mut tape, &params, rv, &mut phase);
    let cf = net.forward(&mut tape, &params, fv, &mut phase);
    let l = wasserstein_losses(&mut tape, cr, cf);
    let mut eps = rng::stream(seed, Domain::Eval, 7);
    let gp = gradient_penalty(&mut tape, net, &params, real, fake, 10.0, &mut eps).unwrap();
    let total = tape.add(l.d_loss, gp);
    let value = tape.item(total);
    let grads = tape.grad(total, &params);
    (value, grads.iter().map(|g| tape.value(*g).clone()).collect())
}

#[test]
fn penalty_parameter_gradients_match_central_differences() {
    for config in 0..20u64 {
        let d = 2 + (config % 3) as usize;
        let h = 8 + (config % 4) as usize * 4;
        let batch = 3 + (config % 5) as usize;
        let mut net = two_layer_critic(d, h, config);
        assert!(net.param_count() <= 200);
        let real = random_tensor(&[batch, d], config, 1, 1.0);
        let fake = random_tensor(&[batch, d], config, 2, 1.5);
        let (_, analytic) = objective(&mut net, &real, &fake, config);
        let step = 1e-5;
        let (mut diff2, mut norm2) = (0.0, 0.0);
        for pi in 0..net.params.len() {
            for k in 0..net.params[pi].tensor.data.len() {
                let orig = net.params[pi].tensor.data[k];
                net.params[pi].tensor.data[k] = orig + step;
                let (up, _) = objective(&mut net, &real, &fake, config);
                net.params[pi].tensor.data[k] = orig - step;
                let (down, _) = objective(&mut net, &real, &fake, config);
                net.params[pi].tensor.data[k] = orig;
                let numeric = (up - down) / (2.0 * step);
                let a = analytic[pi].data[k];
                diff2 += (a - numeric) * (a - numeric);
                norm2 += numeric * numeric;
            }
        }
        let rel = (diff2 / norm2).sqrt();
        assert!(rel < 1e-4, "config {config}: relative error {rel:e}");
    }
}

#[test]
fn unit_norm_linear_critic_has_zero_penalty() {
    for d in [1usize, 2, 3, 7] {
        let mut net = Net::<f64>::new(vec![Layer::Dense { inputs: d, outputs: 1 }], vec![d], 0, 0);
        let w = random_tensor(&[d, 1], d as u64, 0, 1.0);
        let norm = w.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        net.params[0].tensor = w.map(|v| v / norm);
        net.params[1].tensor = Tensor::new(vec![1], vec![0.3]);
        let mut tape = Tape::new();
        let params = net.bind(&mut tape);
        let real = random_tensor(&[16, d], 5, 1, 2.0);
        let fake = random_tensor(&[16, d], 5, 2, 2.0);
        let mut eps = rng::stream(3, Domain::Eval, 0);
        let gp = gradient_penalty(&mut tape, &mut net, &params, &real, &fake, 10.0, &mut eps).unwrap();
        assert!(tape.item(gp).abs() <= 1e-10, "d={d}: {}", tape.item(gp));
    }
}

#[test]
fn penalty_of_scaled_linear_critic_matches_closed_form() {
    // ‖∇C‖ = s everywhere, so the penalty is λ(s − 1)².
    let mut net = Net::<f64>::new(vec![Layer::Dense { inputs: 2, outputs: 1 }], vec![2], 0, 0);
    net.params[0].tensor = Tensor::new(vec![2, 1], vec![1.8, 2.4]);
    let mut tape = Tape::new();
    let params = net.bind(&mut tape);
    let real = random_tensor(&[8, 2], 1, 1, 1.0);
    let fake = random_tensor(&[8, 2], 1, 2, 1.0);
    let mut eps = rng::stream(0, Domain::Eval, 0);
    let gp = gradient_penalty(&mut tape, &mut net, &params, &real, &fake, 10.0, &mut eps).unwrap();
    assert!((tape.item(gp) - 10.0 * 4.0).abs() < 1e-9);
}

#[test]
fn vanilla_closed_form_at_one_half() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(Tensor::full(&[5, 1], 0.5));
    let b = tape.leaf(Tensor::full(&[5, 1], 0.5));
    let l = vanilla_losses(&mut tape, a, b);
    let ln2 = std::f64::consts::LN_2;
    assert!((tape.item(l.d_loss) - 2.0 * ln2).abs() < 1e-9);
    assert!((tape.item(l.g_loss) - ln2).abs() < 1e-9);
}

#[test]
fn wasserstein_critic_loss_is_antisymmetric() {
    for seed in 0..50 {
        let a = random_tensor(&[9, 1], seed, 0, 3.0);
        let b = random_tensor(&[9, 1], seed, 1, 3.0);
        let mut tape = Tape::<f64>::new();
        let (va, vb) = (tape.leaf(a), tape.leaf(b));
        let ab = wasserstein_losses(&mut tape, va, vb).d_loss;
        let ba = wasserstein_losses(&mut tape, vb, va).d_loss;
        assert_eq!(tape.item(ab), -tape.item(ba));
    }
}
