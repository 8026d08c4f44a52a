//! Finite-difference verification of analytic gradients.
//!
//! `grad_check` compares the gradient a loss evaluator reports against
//! central finite differences, one parameter at a time, and returns the
//! worst relative error. It is the guard that keeps the hand-rolled
//! differentiation in this module honest.

use crate::adapt::normalize::{eta_vars, NormalizedDepthMap};
use crate::adapt::tape::{Tape, Var};
use crate::adapt::{AdaptError, DiscriminatorParams, MappingParams};

/// Compare analytic gradients against central finite differences.
///
/// `f` evaluates the loss and its analytic gradient at a parameter vector.
/// For each parameter `i` the finite-difference estimate is
/// `(f(p + h·e_i) - f(p - h·e_i)) / (2h)`, and the reported error is
/// `|g_i - fd_i| / max(1, |fd_i|)`; the maximum over parameters is returned.
pub fn grad_check<F>(mut f: F, params: &[f64], h: f64) -> Result<f64, AdaptError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(AdaptError::StepOutOfRange(h));
    }
    let (value, grad) = f(params);
    assert_eq!(grad.len(), params.len(), "gradient length vs parameters");
    if !value.is_finite() {
        return Err(AdaptError::NonFinite("loss value"));
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(AdaptError::NonFiniteGradient { index });
    }

    let mut worst = 0.0f64;
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = f(&probe).0;
        probe[i] = params[i] - h;
        let down = f(&probe).0;
        probe[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        if !fd.is_finite() {
            return Err(AdaptError::NonFiniteGradient { index: i });
        }
        let rel = (grad[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Build an evaluator of the complete adaptation objective — both
/// adversarial terms plus the cycle term — as a function of the packed
/// mapping parameters `[noise θ | restore θ]`, with the discriminators held
/// fixed. Suitable for [`grad_check`].
pub fn objective_evaluator(
    syn: Vec<NormalizedDepthMap>,
    real: Vec<NormalizedDepthMap>,
    d_noise: DiscriminatorParams,
    d_restore: DiscriminatorParams,
    hidden: usize,
) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) {
    let per_mapping = 3 + 11 * hidden;
    let (w, h) = (syn[0].width(), syn[0].height());

    move |packed: &[f64]| {
        assert_eq!(packed.len(), 2 * per_mapping, "packed parameter length");
        let mut tape = Tape::new();
        let theta_n: Vec<Var> = packed[..per_mapping]
            .iter()
            .map(|&v| tape.leaf(v))
            .collect();
        let theta_r: Vec<Var> = packed[per_mapping..]
            .iter()
            .map(|&v| tape.leaf(v))
            .collect();

        let score = |tape: &mut Tape, d: &DiscriminatorParams, x: &[Var]| -> Var {
            let mut z = tape.leaf(d.bias());
            for (&wi, &xi) in d.weights().iter().zip(x) {
                let wv = tape.leaf(wi);
                let m = tape.mul(wv, xi);
                z = tape.add(z, m);
            }
            let s = tape.sigmoid(z);
            tape.clamp(s, 1e-7, 1.0 - 1e-7)
        };
        let log1m = |tape: &mut Tape, s: Var| -> Var {
            let neg = tape.neg(s);
            let one_minus = tape.offset(neg, 1.0);
            tape.ln(one_minus)
        };
        let l1 = |tape: &mut Tape, a: &[Var], b: &[Var]| -> Var {
            let diffs: Vec<Var> = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = tape.sub(x, y);
                    tape.abs(d)
                })
                .collect();
            tape.mean(&diffs)
        };

        let mut fake_terms_n = Vec::new();
        let mut cycle_syn = Vec::new();
        for s in &syn {
            let input: Vec<Var> = s
                .values()
                .as_slice()
                .iter()
                .map(|&v| tape.leaf(v))
                .collect();
            let mapped =
                MappingParams::forward_tape(&mut tape, &theta_n, hidden, &input, w, h);
            let fake = eta_vars(&mut tape, &mapped);
            let s_fake = score(&mut tape, &d_noise, &fake);
            fake_terms_n.push(log1m(&mut tape, s_fake));
            let trip = MappingParams::forward_tape(&mut tape, &theta_r, hidden, &fake, w, h);
            cycle_syn.push(l1(&mut tape, &trip, &input));
        }

        let mut fake_terms_r = Vec::new();
        let mut cycle_real = Vec::new();
        for t in &real {
            let input: Vec<Var> = t
                .values()
                .as_slice()
                .iter()
                .map(|&v| tape.leaf(v))
                .collect();
            let mapped =
                MappingParams::forward_tape(&mut tape, &theta_r, hidden, &input, w, h);
            let fake = eta_vars(&mut tape, &mapped);
            let s_fake = score(&mut tape, &d_restore, &fake);
            fake_terms_r.push(log1m(&mut tape, s_fake));
            let trip = MappingParams::forward_tape(&mut tape, &theta_n, hidden, &fake, w, h);
            cycle_real.push(l1(&mut tape, &trip, &input));
        }

        // Real-sample terms are constant in the mapping parameters but keep
        // the value equal to the full objective.
        let mut real_terms_n = Vec::new();
        for t in &real {
            let xs: Vec<Var> = t
                .values()
                .as_slice()
                .iter()
                .map(|&v| tape.leaf(v))
                .collect();
            let sc = score(&mut tape, &d_noise, &xs);
            real_terms_n.push(tape.ln(sc));
        }
        let mut real_terms_r = Vec::new();
        for s in &syn {
            let xs: Vec<Var> = s
                .values()
                .as_slice()
                .iter()
                .map(|&v| tape.leaf(v))
                .collect();
            let sc = score(&mut tape, &d_restore, &xs);
            real_terms_r.push(tape.ln(sc));
        }

        let rn = tape.mean(&real_terms_n);
        let fn_ = tape.mean(&fake_terms_n);
        let l_noise = tape.add(rn, fn_);
        let rr = tape.mean(&real_terms_r);
        let fr = tape.mean(&fake_terms_r);
        let l_restore = tape.add(rr, fr);
        let cs = tape.mean(&cycle_syn);
        let cr = tape.mean(&cycle_real);
        let l_cycle = tape.add(cs, cr);
        let adv = tape.add(l_noise, l_restore);
        let total = tape.add(adv, l_cycle);

        let grads = tape.gradients(total);
        let grad: Vec<f64> = theta_n
            .iter()
            .chain(&theta_r)
            .map(|&v| grads.get(v))
            .collect();
        (tape.value(total), grad)
    }
}
