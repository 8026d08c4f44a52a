//! Desk-scale min-max training of the two depth mappings.
//!
//! Two mappings are trained jointly: `noise` (clean → sensor-like) and
//! `restore` (sensor-like → clean), each judged by its own discriminator.
//! Mapping outputs are re-normalized before anything consumes them, so the
//! game is played entirely in normalized depth space:
//!
//! - discriminator for the noise direction: genuine sensor-like maps vs
//!   `η(noise(s))`
//! - discriminator for the restore direction: genuine clean maps vs
//!   `η(restore(t))`
//! - cycle terms: `restore(η(noise(s))) ≈ s` and `noise(η(restore(t))) ≈ t`
//!
//! Each step ascends the discriminators on the adversarial objective, then
//! descends the mappings on the total objective, with the adversarial part
//! of the mapping update in the non-saturating form (maximize `log D(fake)`
//! rather than minimize `log(1 - D(fake))`; same fixed points, no vanishing
//! gradient when the discriminator is ahead). The recorded trace always
//! reports the plain adversarial values, so it is comparable across steps.
//!
//! The discriminators are deliberately simple — logistic regression on the
//! flattened map — which keeps the game winnable for a tiny mapping and
//! makes every gradient hand-checkable.

use serde::{Deserialize, Serialize};

use crate::adapt::mapping::{MappingParams, MappingRole};
use crate::adapt::normalize::{eta_slice, eta_vars, NormalizedDepthMap};
use crate::adapt::tape::{Tape, Var};
use crate::adapt::{cycle_loss, gan_loss, total_objective, AdaptError};
use crate::grid::Grid;
use crate::rng::SeedStream;

/// Scores are clamped to `[EPS, 1-EPS]` before any logarithm.
const SCORE_EPS: f64 = 1e-7;

/// Header line for the CSV loss trace.
pub const TRACE_HEADER: &str = "step,l_noise,l_restore,l_cycle,total";

/// One row of the training trace: the adversarial value of each direction,
/// the cycle term, and their plain sum, all measured at the end of the step.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct TraceRecord {
    pub step: usize,
    pub l_noise: f64,
    pub l_restore: f64,
    pub l_cycle: f64,
    pub total: f64,
}

impl TraceRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.l_noise, self.l_restore, self.l_cycle, self.total
        )
    }
}

/// Logistic-regression discriminator over the flattened map.
#[derive(Clone, PartialEq, Debug)]
pub struct DiscriminatorParams {
    w: Vec<f64>,
    b: f64,
}

impl DiscriminatorParams {
    pub fn zeros(pixels: usize) -> DiscriminatorParams {
        DiscriminatorParams {
            w: vec![0.0; pixels],
            b: 0.0,
        }
    }

    pub fn new(w: Vec<f64>, b: f64) -> DiscriminatorParams {
        DiscriminatorParams { w, b }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn pixels(&self) -> usize {
        self.w.len()
    }

    /// Probability the sample is genuine, clamped inside (0, 1).
    pub fn score(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.w.len(), "discriminator input size");
        let z: f64 = self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let s = 1.0 / (1.0 + (-z).exp());
        s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    }
}

/// Hyperparameters of [`train_minmax`]. The defaults are tuned for the
/// 1-D toy fixtures in the test suite.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr_mapping: f64,
    pub lr_discriminator: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            steps: 2000,
            lr_mapping: 0.02,
            lr_discriminator: 0.25,
            hidden: 4,
            seed: 7,
        }
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub noise: MappingParams,
    pub restore: MappingParams,
    pub disc_noise: DiscriminatorParams,
    pub disc_restore: DiscriminatorParams,
    pub trace: Vec<TraceRecord>,
}

impl TrainOutcome {
    /// Pooled held-out discriminator accuracy; see [`discriminator_accuracy`].
    pub fn heldout_accuracy(
        &self,
        syn: &[NormalizedDepthMap],
        real: &[NormalizedDepthMap],
    ) -> Result<f64, AdaptError> {
        discriminator_accuracy(
            &self.noise,
            &self.restore,
            &self.disc_noise,
            &self.disc_restore,
            syn,
            real,
        )
    }
}

fn check_sets(
    syn: &[NormalizedDepthMap],
    real: &[NormalizedDepthMap],
) -> Result<(usize, usize), AdaptError> {
    if syn.is_empty() || real.is_empty() {
        return Err(AdaptError::EmptyBatch);
    }
    let (w, h) = (syn[0].width(), syn[0].height());
    for m in syn.iter().chain(real) {
        if m.width() != w || m.height() != h {
            return Err(AdaptError::ShapeMismatch(format!(
                "all training maps must share one shape; found {}x{} and {}x{}",
                w,
                h,
                m.width(),
                m.height()
            )));
        }
        if m.iter_valid().count() != w * h {
            return Err(AdaptError::ShapeMismatch(
                "training maps must be fully valid (no holes)".into(),
            ));
        }
    }
    Ok((w, h))
}

fn eta_grid(values: &Grid<f64>, step: usize, term: &'static str) -> Result<Grid<f64>, AdaptError> {
    match eta_slice(values.as_slice()) {
        Ok(v) => Ok(Grid::from_vec(values.width(), values.height(), v).unwrap()),
        Err(_) => Err(AdaptError::DivergenceDetected { step, term }),
    }
}

fn dense(values: Grid<f64>) -> Result<NormalizedDepthMap, AdaptError> {
    NormalizedDepthMap::dense(values)
}

/// Alternating min-max training. Deterministic for a given config: the seed
/// fixes the hidden-layer initialization, and every step is full-batch.
pub fn train_minmax(
    syn: &[NormalizedDepthMap],
    real: &[NormalizedDepthMap],
    config: &TrainConfig,
) -> Result<TrainOutcome, AdaptError> {
    let (w, h) = check_sets(syn, real)?;
    let pixels = w * h;

    let root = SeedStream::new(config.seed);
    let mut noise = MappingParams::identity(
        MappingRole::Noise,
        config.hidden,
        &mut root.stream("noise-init"),
    );
    let mut restore = MappingParams::identity(
        MappingRole::Restore,
        config.hidden,
        &mut root.stream("restore-init"),
    );
    let mut d_noise = DiscriminatorParams::zeros(pixels);
    let mut d_restore = DiscriminatorParams::zeros(pixels);
    let mut trace = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        update_discriminators(
            syn, real, &noise, &restore, &mut d_noise, &mut d_restore, config, step,
        )?;
        update_mappings(
            syn, real, &mut noise, &mut restore, &d_noise, &d_restore, config, w, h,
        );
        trace.push(measure(
            syn, real, &noise, &restore, &d_noise, &d_restore, step,
        )?);
    }

    Ok(TrainOutcome {
        noise,
        restore,
        disc_noise: d_noise,
        disc_restore: d_restore,
        trace,
    })
}

/// Mapped-and-renormalized outputs of one mapping over a set, plain math.
fn fakes_plain(
    params: &MappingParams,
    set: &[NormalizedDepthMap],
    step: usize,
    term: &'static str,
) -> Result<Vec<Grid<f64>>, AdaptError> {
    set.iter()
        .map(|m| eta_grid(&params.forward(m.values()), step, term))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn update_discriminators(
    syn: &[NormalizedDepthMap],
    real: &[NormalizedDepthMap],
    noise: &MappingParams,
    restore: &MappingParams,
    d_noise: &mut DiscriminatorParams,
    d_restore: &mut DiscriminatorParams,
    config: &TrainConfig,
    step: usize,
) -> Result<(), AdaptError> {
    let fake_n = fakes_plain(noise, syn, step, "eta(noise(s)) in discriminator update")?;
    let fake_r = fakes_plain(restore, real, step, "eta(restore(t)) in discriminator update")?;

    let mut tape = Tape::new();
    let (wn, bn) = leaf_disc(&mut tape, d_noise);
    let (wr, br) = leaf_disc(&mut tape, d_restore);

    let l_noise = gan_tape(
        &mut tape,
        &wn,
        bn,
        real.iter().map(|m| m.values().as_slice()),
        fake_n.iter().map(|g| g.as_slice()),
    );
    let l_restore = gan_tape(
        &mut tape,
        &wr,
        br,
        syn.iter().map(|m| m.values().as_slice()),
        fake_r.iter().map(|g| g.as_slice()),
    );
    let objective = tape.add(l_noise, l_restore);
    let grads = tape.gradients(objective);

    // Gradient ascent: the discriminators maximize the adversarial value.
    for (wi, vi) in d_noise.w.iter_mut().zip(&wn) {
        *wi += config.lr_discriminator * grads.get(*vi);
    }
    d_noise.b += config.lr_discriminator * grads.get(bn);
    for (wi, vi) in d_restore.w.iter_mut().zip(&wr) {
        *wi += config.lr_discriminator * grads.get(*vi);
    }
    d_restore.b += config.lr_discriminator * grads.get(br);
    Ok(())
}

fn leaf_disc(tape: &mut Tape, d: &DiscriminatorParams) -> (Vec<Var>, Var) {
    let w = d.w.iter().map(|&v| tape.leaf(v)).collect();
    let b = tape.leaf(d.b);
    (w, b)
}

fn score_tape(tape: &mut Tape, w: &[Var], b: Var, x: &[Var]) -> Var {
    assert_eq!(w.len(), x.len(), "discriminator input size");
    let mut z = b;
    for (wi, xi) in w.iter().zip(x) {
        let m = tape.mul(*wi, *xi);
        z = tape.add(z, m);
    }
    let s = tape.sigmoid(z);
    tape.clamp(s, SCORE_EPS, 1.0 - SCORE_EPS)
}

/// `mean(log D(real)) + mean(log(1 - D(fake)))` on the tape, with the
/// samples entering as constants (only the discriminator is differentiated).
fn gan_tape<'a, 'b>(
    tape: &mut Tape,
    w: &[Var],
    b: Var,
    real: impl Iterator<Item = &'a [f64]>,
    fake: impl Iterator<Item = &'b [f64]>,
) -> Var {
    let mut real_terms = Vec::new();
    for sample in real {
        let xs: Vec<Var> = sample.iter().map(|&v| tape.leaf(v)).collect();
        let s = score_tape(tape, w, b, &xs);
        real_terms.push(tape.ln(s));
    }
    let mut fake_terms = Vec::new();
    for sample in fake {
        let xs: Vec<Var> = sample.iter().map(|&v| tape.leaf(v)).collect();
        let s = score_tape(tape, w, b, &xs);
        let neg = tape.neg(s);
        let one_minus = tape.offset(neg, 1.0);
        fake_terms.push(tape.ln(one_minus));
    }
    let r = tape.mean(&real_terms);
    let f = tape.mean(&fake_terms);
    tape.add(r, f)
}

#[allow(clippy::too_many_arguments)]
fn update_mappings(
    syn: &[NormalizedDepthMap],
    real: &[NormalizedDepthMap],
    noise: &mut MappingParams,
    restore: &mut MappingParams,
    d_noise: &DiscriminatorParams,
    d_restore: &DiscriminatorParams,
    config: &TrainConfig,
    w: usize,
    h: usize,
) {
    let mut tape = Tape::new();
    let theta_n: Vec<Var> = noise.theta().iter().map(|&v| tape.leaf(v)).collect();
    let theta_r: Vec<Var> = restore.theta().iter().map(|&v| tape.leaf(v)).collect();
    let (wn, bn) = leaf_disc(&mut tape, d_noise);
    let (wr, br) = leaf_disc(&mut tape, d_restore);

    let mut log_scores_n = Vec::with_capacity(syn.len());
    let mut cycle_syn = Vec::with_capacity(syn.len());
    for s in syn {
        let input: Vec<Var> = s.values().as_slice().iter().map(|&v| tape.leaf(v)).collect();
        let mapped = MappingParams::forward_tape(&mut tape, &theta_n, config.hidden, &input, w, h);
        let fake = eta_vars(&mut tape, &mapped);
        let score = score_tape(&mut tape, &wn, bn, &fake);
        log_scores_n.push(tape.ln(score));
        let trip = MappingParams::forward_tape(&mut tape, &theta_r, config.hidden, &fake, w, h);
        cycle_syn.push(l1_mean(&mut tape, &trip, &input));
    }

    let mut log_scores_r = Vec::with_capacity(real.len());
    let mut cycle_real = Vec::with_capacity(real.len());
    for t in real {
        let input: Vec<Var> = t.values().as_slice().iter().map(|&v| tape.leaf(v)).collect();
        let mapped = MappingParams::forward_tape(&mut tape, &theta_r, config.hidden, &input, w, h);
        let fake = eta_vars(&mut tape, &mapped);
        let score = score_tape(&mut tape, &wr, br, &fake);
        log_scores_r.push(tape.ln(score));
        let trip = MappingParams::forward_tape(&mut tape, &theta_n, config.hidden, &fake, w, h);
        cycle_real.push(l1_mean(&mut tape, &trip, &input));
    }

    // Non-saturating adversarial terms plus the cycle terms. Minimized.
    let mean_n = tape.mean(&log_scores_n);
    let mean_r = tape.mean(&log_scores_r);
    let adv_n = tape.neg(mean_n);
    let adv_r = tape.neg(mean_r);
    let cyc_s = tape.mean(&cycle_syn);
    let cyc_r = tape.mean(&cycle_real);
    let adv = tape.add(adv_n, adv_r);
    let cyc = tape.add(cyc_s, cyc_r);
    let objective = tape.add(adv, cyc);
    let grads = tape.gradients(objective);

    for (p, v) in noise.theta_mut().iter_mut().zip(&theta_n) {
        *p -= config.lr_mapping * grads.get(*v);
    }
    for (p, v) in restore.theta_mut().iter_mut().zip(&theta_r) {
        *p -= config.lr_mapping * grads.get(*v);
    }
}

fn l1_mean(tape: &mut Tape, a: &[Var], b: &[Var]) -> Var {
    let diffs: Vec<Var> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = tape.sub(x, y);
            tape.abs(d)
        })
        .collect();
    tape.mean(&diffs)
}

/// End-of-step measurement with the public loss functions.
fn measure(
    syn: &[NormalizedDepthMap],
    real: &[NormalizedDepthMap],
    noise: &MappingParams,
    restore: &MappingParams,
    d_noise: &DiscriminatorParams,
    d_restore: &DiscriminatorParams,
    step: usize,
) -> Result<TraceRecord, AdaptError> {
    let fake_n = fakes_plain(noise, syn, step, "eta(noise(s)) in measurement")?;
    let fake_r = fakes_plain(restore, real, step, "eta(restore(t)) in measurement")?;

    let real_scores_n: Vec<f64> = real
        .iter()
        .map(|m| d_noise.score(m.values().as_slice()))
        .collect();
    let fake_scores_n: Vec<f64> = fake_n.iter().map(|g| d_noise.score(g.as_slice())).collect();
    let real_scores_r: Vec<f64> = syn
        .iter()
        .map(|m| d_restore.score(m.values().as_slice()))
        .collect();
    let fake_scores_r: Vec<f64> = fake_r
        .iter()
        .map(|g| d_restore.score(g.as_slice()))
        .collect();

    let l_noise = gan_loss(&real_scores_n, &fake_scores_n)?;
    let l_restore = gan_loss(&real_scores_r, &fake_scores_r)?;

    let syn_rt: Vec<NormalizedDepthMap> = fake_n
        .iter()
        .map(|g| dense(restore.forward(g)))
        .collect::<Result<_, _>>()?;
    let real_rt: Vec<NormalizedDepthMap> = fake_r
        .iter()
        .map(|g| dense(noise.forward(g)))
        .collect::<Result<_, _>>()?;
    let l_cycle = cycle_loss(syn, &syn_rt, real, &real_rt)?;

    for (v, term) in [
        (l_noise, "l_noise"),
        (l_restore, "l_restore"),
        (l_cycle, "l_cycle"),
    ] {
        if !v.is_finite() {
            return Err(AdaptError::DivergenceDetected { step, term });
        }
    }
    let total = total_objective(l_noise, l_restore, l_cycle)
        .map_err(|_| AdaptError::DivergenceDetected { step, term: "total" })?;
    Ok(TraceRecord {
        step,
        l_noise,
        l_restore,
        l_cycle,
        total,
    })
}

/// Pooled accuracy of both discriminators on held-out sets: every genuine
/// sample should score above 0.5, every mapped-and-renormalized sample below.
/// An untrained (all-zero) discriminator scores exactly 0.5 everywhere, is
/// never "above", and lands at exactly 0.5 accuracy.
pub fn discriminator_accuracy(
    noise: &MappingParams,
    restore: &MappingParams,
    d_noise: &DiscriminatorParams,
    d_restore: &DiscriminatorParams,
    syn: &[NormalizedDepthMap],
    real: &[NormalizedDepthMap],
) -> Result<f64, AdaptError> {
    check_sets(syn, real)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut judge = |score: f64, genuine: bool| {
        let predicted_genuine = score > 0.5;
        if predicted_genuine == genuine {
            correct += 1;
        }
        total += 1;
    };

    for t in real {
        judge(d_noise.score(t.values().as_slice()), true);
    }
    for s in syn {
        let fake = eta_slice(noise.forward(s.values()).as_slice())?;
        judge(d_noise.score(&fake), false);
    }
    for s in syn {
        judge(d_restore.score(s.values().as_slice()), true);
    }
    for t in real {
        let fake = eta_slice(restore.forward(t.values()).as_slice())?;
        judge(d_restore.score(&fake), false);
    }
    Ok(correct as f64 / total as f64)
}
