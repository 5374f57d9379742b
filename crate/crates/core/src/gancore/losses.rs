//! Adversarial objectives and the gradient penalty.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::nn::{Layer, Net, Phase};
use super::tape::{Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// Scores are clamped into `[ε, 1 − ε]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

/// Added under the square root of the gradient norm so its derivative stays
/// finite at a zero gradient.
pub const NORM_EPS: f64 = 1e-20;

pub struct AdversarialLosses {
    /// Discriminator / critic objective.
    pub d_loss: Var,
    pub g_loss: Var,
    /// Some score sat outside `[ε, 1 − ε]` and was clamped.
    pub clamped: bool,
}

/// Cross-entropy GAN objective on post-sigmoid scores:
/// `d = −mean(log D(x)) − mean(log(1 − D(G(z))))`, `g = −mean(log D(G(z)))`
/// (non-saturating generator loss).
pub fn vanilla_losses<T: Scalar>(tape: &mut Tape<T>, d_real: Var, d_fake: Var) -> AdversarialLosses {
    let (lo, hi) = (T::of(SCORE_EPS), T::of(1.0 - SCORE_EPS));
    let (real, c1) = tape.clamp(d_real, lo, hi);
    let (fake, c2) = tape.clamp(d_fake, lo, hi);
    let log_real = tape.log(real);
    let real_term = tape.mean_all(log_real);
    let neg_fake = tape.neg(fake);
    let one_minus = tape.shift(neg_fake, T::one());
    let log_one_minus = tape.log(one_minus);
    let fake_term = tape.mean_all(log_one_minus);
    let sum = tape.add(real_term, fake_term);
    let d_loss = tape.neg(sum);
    let log_fake = tape.log(fake);
    let g_mean = tape.mean_all(log_fake);
    let g_loss = tape.neg(g_mean);
    AdversarialLosses {
        d_loss,
        g_loss,
        clamped: c1 || c2,
    }
}

/// Wasserstein objective: `c = mean(C(G(z))) − mean(C(x))`, `g = −mean(C(G(z)))`.
pub fn wasserstein_losses<T: Scalar>(tape: &mut Tape<T>, c_real: Var, c_fake: Var) -> AdversarialLosses {
    let mr = tape.mean_all(c_real);
    let mf = tape.mean_all(c_fake);
    let d_loss = tape.sub(mf, mr);
    let g_loss = tape.neg(mf);
    AdversarialLosses {
        d_loss,
        g_loss,
        clamped: false,
    }
}

/// Fraction of real scores above ½ plus fake scores below ½, halved.
pub fn discriminator_accuracy<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> f64 {
    let half = T::of(0.5);
    let r = d_real.data.iter().filter(|&&v| v > half).count() as f64 / d_real.len().max(1) as f64;
    let f = d_fake.data.iter().filter(|&&v| v < half).count() as f64 / d_fake.len().max(1) as f64;
    0.5 * (r + f)
}

/// `λ · mean_i (‖∇ₓ C(x̂ᵢ)‖₂ − 1)²` on `x̂ᵢ = εᵢ·realᵢ + (1 − εᵢ)·fakeᵢ`,
/// `εᵢ ~ U[0, 1)` per sample.
///
/// The returned node depends on `critic_params` through the recorded
/// input-gradient, so differentiating it gives the penalty's parameter
/// gradient. The critic must be a Wasserstein critic (scalar output, no
/// sigmoid head).
pub fn gradient_penalty<T: Scalar>(
    tape: &mut Tape<T>,
    critic: &mut Net<T>,
    critic_params: &[Var],
    real: &Tensor<T>,
    fake: &Tensor<T>,
    lambda: T,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    if real.shape != fake.shape {
        return Err(Error::ShapeMismatch(format!("real {:?} vs fake {:?}", real.shape, fake.shape)));
    }
    if matches!(critic.layers.last(), Some(Layer::Sigmoid)) {
        return Err(Error::UnsupportedArchitecture(format!(
            "gradient penalty needs an unbounded critic head, found a sigmoid discriminator"
        )));
    }
    if critic.output_shape().as_deref() != Some(&[1][..]) {
        return Err(Error::UnsupportedArchitecture(format!("critic output is not a scalar per sample")));
    }
    let n = real.shape[0];
    if n == 0 {
        return Err(Error::InvalidArgument(format!("empty batch")));
    }
    let per = real.len() / n;
    let eps: Vec<T> = (0..n).map(|_| T::of(rng::uniform(rng))).collect();
    let mut mixed = Vec::with_capacity(real.len());
    for i in 0..n {
        let e = eps[i];
        for j in i * per..(i + 1) * per {
            mixed.push(e * real.data[j] + (T::one() - e) * fake.data[j]);
        }
    }
    let x_hat = tape.leaf(Tensor::new(real.shape.clone(), mixed));
    let mut phase = Phase {
        training: true,
        update_stats: false,
        rng: Some(rng),
    };
    let scores = critic.forward(tape, critic_params, x_hat, &mut phase);
    let total = tape.sum_all(scores);
    let g = tape.grad(total, &[x_hat])[0];
    let flat = tape.reshape(g, &[n, per]);
    let sq = tape.square(flat);
    let sumsq = tape.sum_cols(sq);
    let padded = tape.shift(sumsq, T::of(NORM_EPS));
    let norm = tape.sqrt(padded);
    let dev = tape.shift(norm, -T::one());
    let dev2 = tape.square(dev);
    let mean = tape.mean_all(dev2);
    Ok(tape.scale(mean, lambda))
}
