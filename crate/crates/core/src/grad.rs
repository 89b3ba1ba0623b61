//! Differentiable-chain plumbing: a uniform forward/VJP stage contract, a
//! finite-difference verifier, and the Adam update for the latent
//! perturbation. Adjoints are hand-written per stage and verified
//! stage-by-stage rather than recorded on a general tape.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::GradMode;
use crate::error::{Error, Result};
use crate::transform::LatentGrid;

/// One differentiable pipeline stage over flat real vectors.
pub struct Stage<'a> {
    pub name: String,
    pub grad_mode: GradMode,
    pub forward: Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a>,
    /// `(saved forward input, output cotangent) -> input cotangent`
    pub vjp: Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync + 'a>,
}

impl<'a> Stage<'a> {
    pub fn new(
        name: impl Into<String>,
        grad_mode: GradMode,
        forward: impl Fn(&[f64]) -> Vec<f64> + Sync + 'a,
        vjp: impl Fn(&[f64], &[f64]) -> Vec<f64> + Sync + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            grad_mode,
            forward: Box::new(forward),
            vjp: Box::new(vjp),
        }
    }
}

/// Run the chain forward, apply the loss head, and sweep the VJPs back to
/// the leaf. Straight-through stages contribute whatever their vjp closure
/// implements (typically the identity pass-through).
pub fn chain_forward_backward(
    stages: &[Stage<'_>],
    leaf: &[f64],
    loss_head: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> (f64, Vec<f64>) {
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(stages.len() + 1);
    activations.push(leaf.to_vec());
    for stage in stages {
        let next = (stage.forward)(activations.last().expect("non-empty"));
        activations.push(next);
    }
    let (loss, mut cot) = loss_head(activations.last().expect("non-empty"));
    for (stage, input) in stages.iter().zip(&activations).rev() {
        cot = (stage.vjp)(input, &cot);
    }
    (loss, cot)
}

/// Report from the finite-difference gradient verifier.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub stage: String,
    pub directions: usize,
    pub step: f64,
    pub max_rel_error: f64,
}

/// Check a stage's VJP against central finite differences of `<f(x), w>`
/// for a random cotangent `w` and `directions` random directions.
pub fn fd_verify(stage: &Stage<'_>, probe: &[f64], directions: usize, step: f64) -> FdReport {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_f00d);
    let y = (stage.forward)(probe);
    let w: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grad = (stage.vjp)(probe, &w);

    let mut max_rel: f64 = 0.0;
    for _ in 0..directions {
        let dir: Vec<f64> = (0..probe.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |s: f64| -> f64 {
            let x: Vec<f64> = probe
                .iter()
                .zip(&dir)
                .map(|(p, d)| p + s * step * d)
                .collect();
            (stage.forward)(&x).iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let fd = (eval(1.0) - eval(-1.0)) / (2.0 * step);
        let analytic: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let denom = fd.abs().max(analytic.abs()).max(1e-12);
        max_rel = max_rel.max((fd - analytic).abs() / denom);
    }
    FdReport {
        stage: stage.name.clone(),
        directions,
        step,
        max_rel_error: max_rel,
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
        {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

/// First/second-moment accumulators shaped like the perturbation planes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m_re: Vec<f64>,
    v_re: Vec<f64>,
    m_im: Vec<f64>,
    v_im: Vec<f64>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, plane_len: usize) -> Self {
        Self {
            cfg,
            step: 0,
            m_re: vec![0.0; plane_len],
            v_re: vec![0.0; plane_len],
            m_im: vec![0.0; plane_len],
            v_im: vec![0.0; plane_len],
        }
    }
}

/// One bias-corrected Adam update of `delta` in place. A non-finite
/// gradient aborts (long runs must fail loudly rather than diverge).
pub fn adam_step(delta: &mut LatentGrid, grad: &LatentGrid, state: &mut AdamState) -> Result<()> {
    if !delta.same_shape(grad) {
        return Err(Error::ShapeMismatch("Adam gradient shape mismatch".into()));
    }
    if delta.plane_len() != state.m_re.len() {
        return Err(Error::ShapeMismatch("Adam state shape mismatch".into()));
    }
    if !grad.is_finite() {
        return Err(Error::Aborted("non-finite gradient in Adam update".into()));
    }
    state.step += 1;
    let t = state.step;
    let c = state.cfg;
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    let update = |x: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..x.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    };
    let (re, im) = delta.planes_mut();
    update(re, grad.re(), &mut state.m_re, &mut state.v_re);
    update(im, grad.im(), &mut state.m_im, &mut state.v_im);
    Ok(())
}
