//! Adversarial attacks on enhancers: MSE-FGSM, MSE-PGD and the
//! optimization-based attack, plus the target factory.
//!
//! FGSM and PGD step *along* the sign of `∇ₓ MSE(g(x), t_adv)`. The
//! optimization attack minimizes `MSE(x*, x) + α · ‖g(x*) − t_adv‖₂` with Adam,
//! starting from `x* = x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{rms, Waveform};
use crate::enhancers::{EnhancerModel, ParamLeaves};
use crate::error::{Error, Result};
use crate::grad::{AdamConfig, AdamState, Bindings, Graph, GraphBuilder, NodeId, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fgsm,
    Pgd,
    Opt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Pgd => "pgd",
            Method::Opt => "opt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub method: Method,
    /// Per-step signed-gradient amplitude (FGSM, PGD).
    pub epsilon: f64,
    /// L∞ radius of the PGD projection ball around `x`.
    pub s_radius: f64,
    /// PGD iterations.
    pub steps: usize,
    /// Optimization-attack iterations.
    pub itr: usize,
    /// Weight of the output-distance term in the optimization attack.
    pub alpha: f64,
    /// Adam learning rate for the optimization attack.
    pub lr: f64,
    /// Optional L∞ bound on the optimization attack's perturbation;
    /// `None` runs the unconstrained algorithm.
    pub opt_linf: Option<f64>,
    /// Clip `x*` to `[-1, 1]` after every update.
    pub clamp_audio: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: Method::Opt,
            epsilon: 0.002,
            s_radius: 0.05,
            steps: 20,
            itr: 500,
            alpha: 0.0001,
            lr: 0.001,
            opt_linf: None,
            clamp_audio: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be ≥ 0");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be ≥ 0");
        }
        if self.method == Method::Pgd {
            if self.steps == 0 {
                return bad("pgd needs steps ≥ 1");
            }
            if !(self.s_radius >= self.epsilon) {
                return bad("pgd needs s_radius ≥ epsilon");
            }
        }
        if self.method == Method::Opt && !(self.lr > 0.0) {
            return bad("opt needs lr > 0");
        }
        if let Some(b) = self.opt_linf {
            if !(b >= 0.0) {
                return bad("opt_linf must be ≥ 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Silence,
    Noise,
    Speech,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec<T> {
    pub kind: TargetKind,
    pub seed: u64,
    pub clip: Option<Waveform<T>>,
}

impl<T: Scalar> TargetSpec<T> {
    pub fn silence() -> Self {
        Self {
            kind: TargetKind::Silence,
            seed: 0,
            clip: None,
        }
    }

    pub fn noise(seed: u64) -> Self {
        Self {
            kind: TargetKind::Noise,
            seed,
            clip: None,
        }
    }

    pub fn speech(clip: Waveform<T>) -> Self {
        Self {
            kind: TargetKind::Speech,
            seed: 0,
            clip: Some(clip),
        }
    }
}

/// RMS of the noise target.
pub const NOISE_TARGET_RMS: f64 = 0.1;

/// Desired enhancer output shaped like `like`.
pub fn make_target<T: Scalar>(spec: &TargetSpec<T>, like: &Waveform<T>) -> Result<Waveform<T>> {
    let n = like.len();
    let sr = like.sample_rate;
    match spec.kind {
        TargetKind::Silence => Ok(Waveform::zeros(n, sr)),
        TargetKind::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = rms(&raw);
            let gain = if r > 0.0 { NOISE_TARGET_RMS / r } else { 0.0 };
            Ok(Waveform::new(raw.into_iter().map(|v| T::lit(v * gain)).collect(), sr))
        }
        TargetKind::Speech => {
            let clip = spec
                .clip
                .as_ref()
                .ok_or_else(|| Error::Config("speech target needs a clip".into()))?;
            let mut samples: Vec<T> = clip.samples.iter().take(n).copied().collect();
            samples.resize(n, T::zero());
            Ok(Waveform::new(samples, sr))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// PGD/FGSM: `MSE(g(x*ₜ), t_adv)`. OPT: `L3`.
    pub objective: f64,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvExample<T> {
    pub x_star: Waveform<T>,
    pub perturbation: Waveform<T>,
    pub trace: Vec<TraceStep>,
    pub config: AttackConfig,
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn check_inputs<T: Scalar>(model: &EnhancerModel<T>, x: &Waveform<T>, t: &Waveform<T>) -> Result<()> {
    x.validate()?;
    if t.len() != x.len() {
        return Err(Error::Shape(format!(
            "target has {} samples, input {}",
            t.len(),
            x.len()
        )));
    }
    if x.len() < model.min_len() {
        return Err(Error::Size(format!(
            "input of {} samples shorter than model minimum {}",
            x.len(),
            model.min_len()
        )));
    }
    Ok(())
}

/// `MSE(g(x), t)` graph used by the signed-gradient attacks.
pub struct OutputLoss<T> {
    pub graph: Graph<T>,
    pub input: NodeId,
    pub target: NodeId,
    pub params: ParamLeaves,
}

impl<T: Scalar> OutputLoss<T> {
    pub fn new(model: &EnhancerModel<T>, len: usize) -> Result<Self> {
        let mut b = GraphBuilder::new();
        let input = b.input("x", &[len])?;
        let target = b.input("t_adv", &[len])?;
        let (y, params) = model.splice(&mut b, input)?;
        let loss = b.mse(y, target)?;
        Ok(Self {
            graph: b.finish(loss)?,
            input,
            target,
            params,
        })
    }

    pub fn value_and_grad(
        &self,
        model: &EnhancerModel<T>,
        x: &Tensor<T>,
        t: &Tensor<T>,
    ) -> Result<(T, Tensor<T>)> {
        let mut b = Bindings::new();
        b.bind(self.input, x).bind(self.target, t);
        self.params.bind(model, &mut b);
        let (v, mut g) = self.graph.value_and_gradients(&b, &[self.input])?;
        let g = g.remove(0);
        if !v.is_finite() || !g.is_finite() {
            return Err(Error::Numeric("non-finite loss or gradient".into()));
        }
        Ok((v, g))
    }
}

fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

fn finish<T: Scalar>(
    x: &Waveform<T>,
    x_star: Vec<T>,
    trace: Vec<TraceStep>,
    cfg: &AttackConfig,
) -> AdvExample<T> {
    let perturbation = x_star.iter().zip(&x.samples).map(|(&a, &b)| a - b).collect();
    AdvExample {
        x_star: Waveform::new(x_star, x.sample_rate),
        perturbation: Waveform::new(perturbation, x.sample_rate),
        trace,
        config: cfg.clone(),
    }
}

/// One signed-gradient step: `x* = x + ε · sign(∇ₓ MSE(g(x), t_adv))`.
pub fn fgsm<T: Scalar>(
    model: &EnhancerModel<T>,
    x: &Waveform<T>,
    t_adv: &Waveform<T>,
    cfg: &AttackConfig,
) -> Result<AdvExample<T>> {
    cfg.validate()?;
    check_inputs(model, x, t_adv)?;
    let loss = OutputLoss::new(model, x.len())?;
    let xt = Tensor::vector(x.samples.clone());
    let tt = Tensor::vector(t_adv.samples.clone());
    let (v, g) = loss.value_and_grad(model, &xt, &tt)?;
    let eps = T::lit(cfg.epsilon);
    let x_star = x
        .samples
        .iter()
        .zip(g.data())
        .map(|(&xi, &gi)| {
            let s = xi + eps * sign(gi);
            if cfg.clamp_audio {
                clamp_unit(s)
            } else {
                s
            }
        })
        .collect();
    let trace = vec![TraceStep {
        objective: v.as_f64(),
        l1: None,
        l2: None,
    }];
    Ok(finish(x, x_star, trace, cfg))
}

/// Iterated signed-gradient steps projected onto the L∞ ball of radius
/// `s_radius` around `x`. Starts at `x`; the trace holds the objective at
/// each iterate before its update.
pub fn pgd<T: Scalar>(
    model: &EnhancerModel<T>,
    x: &Waveform<T>,
    t_adv: &Waveform<T>,
    cfg: &AttackConfig,
) -> Result<AdvExample<T>> {
    cfg.validate()?;
    if cfg.steps == 0 {
        return Err(Error::Config("pgd needs steps ≥ 1".into()));
    }
    check_inputs(model, x, t_adv)?;
    let loss = OutputLoss::new(model, x.len())?;
    let tt = Tensor::vector(t_adv.samples.clone());
    let eps = T::lit(cfg.epsilon);
    let radius = T::lit(cfg.s_radius);
    let mut cur = Tensor::vector(x.samples.clone());
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (v, g) = loss
            .value_and_grad(model, &cur, &tt)
            .map_err(|e| Error::Numeric(format!("pgd step {step}: {e}")))?;
        trace.push(TraceStep {
            objective: v.as_f64(),
            l1: None,
            l2: None,
        });
        for ((c, &gi), &xi) in cur.data_mut().iter_mut().zip(g.data()).zip(&x.samples) {
            let moved = *c + eps * sign(gi);
            let offset = (moved - xi).max(-radius).min(radius);
            *c = if cfg.clamp_audio {
                clamp_unit(xi + offset)
            } else {
                xi + offset
            };
        }
    }
    Ok(finish(x, cur.into_data(), trace, cfg))
}

/// `L3 = MSE(x*, x) + α · ‖g(x*) − t_adv‖₂` graph.
pub struct OptLoss<T> {
    pub graph: Graph<T>,
    pub x_star: NodeId,
    pub x_orig: NodeId,
    pub target: NodeId,
    pub l1: NodeId,
    pub l2: NodeId,
    pub params: ParamLeaves,
}

impl<T: Scalar> OptLoss<T> {
    pub fn new(model: &EnhancerModel<T>, len: usize, alpha: f64) -> Result<Self> {
        let mut b = GraphBuilder::new();
        let x_star = b.input("x_star", &[len])?;
        let x_orig = b.input("x", &[len])?;
        let target = b.input("t_adv", &[len])?;
        let (y, params) = model.splice(&mut b, x_star)?;
        let l1 = b.mse(x_star, x_orig)?;
        let diff = b.sub(y, target)?;
        let l2 = b.l2_norm(diff)?;
        let weighted = b.scalar_mul(l2, T::lit(alpha))?;
        let l3 = b.add(l1, weighted)?;
        Ok(Self {
            graph: b.finish(l3)?,
            x_star,
            x_orig,
            target,
            l1,
            l2,
            params,
        })
    }

    /// `(L1, L2, L3)` and `∇_{x*} L3`.
    pub fn evaluate(
        &self,
        model: &EnhancerModel<T>,
        x_star: &Tensor<T>,
        x: &Tensor<T>,
        t: &Tensor<T>,
    ) -> Result<((f64, f64, f64), Tensor<T>)> {
        let mut b = Bindings::new();
        b.bind(self.x_star, x_star)
            .bind(self.x_orig, x)
            .bind(self.target, t);
        self.params.bind(model, &mut b);
        let (l3, mut g, obs) = self
            .graph
            .gradients_observing(&b, &[self.x_star], &[self.l1, self.l2])?;
        Ok((
            (obs[0].item().as_f64(), obs[1].item().as_f64(), l3.as_f64()),
            g.remove(0),
        ))
    }
}

/// Optimization attack: `itr` Adam steps on `x*` from `x* = x`.
pub fn opt_attack<T: Scalar>(
    model: &EnhancerModel<T>,
    x: &Waveform<T>,
    t_adv: &Waveform<T>,
    cfg: &AttackConfig,
) -> Result<AdvExample<T>> {
    cfg.validate()?;
    check_inputs(model, x, t_adv)?;
    let loss = OptLoss::new(model, x.len(), cfg.alpha)?;
    let xt = Tensor::vector(x.samples.clone());
    let tt = Tensor::vector(t_adv.samples.clone());
    let mut cur = xt.clone();
    let mut adam = AdamState::new(x.len(), AdamConfig::with_lr(cfg.lr));
    let bound = cfg.opt_linf.map(T::lit);
    let mut trace = Vec::with_capacity(cfg.itr);
    for step in 0..cfg.itr {
        let ((l1, l2, l3), g) = loss.evaluate(model, &cur, &xt, &tt)?;
        if !l3.is_finite() {
            return Err(Error::Numeric(format!("opt step {step}: non-finite loss {l3}")));
        }
        trace.push(TraceStep {
            objective: l3,
            l1: Some(l1),
            l2: Some(l2),
        });
        adam.step(cur.data_mut(), g.data())
            .map_err(|e| Error::Numeric(format!("opt step {step}: {e}")))?;
        if bound.is_some() || cfg.clamp_audio {
            for (c, &xi) in cur.data_mut().iter_mut().zip(&x.samples) {
                if let Some(r) = bound {
                    *c = xi + (*c - xi).max(-r).min(r);
                }
                if cfg.clamp_audio {
                    *c = clamp_unit(*c);
                }
            }
        }
    }
    Ok(finish(x, cur.into_data(), trace, cfg))
}

/// Dispatches on `cfg.method`.
pub fn run_attack<T: Scalar>(
    model: &EnhancerModel<T>,
    x: &Waveform<T>,
    t_adv: &Waveform<T>,
    cfg: &AttackConfig,
) -> Result<AdvExample<T>> {
    match cfg.method {
        Method::Fgsm => fgsm(model, x, t_adv, cfg),
        Method::Pgd => pgd(model, x, t_adv, cfg),
        Method::Opt => opt_attack(model, x, t_adv, cfg),
    }
}
