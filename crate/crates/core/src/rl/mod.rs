//! PPO reward shaping, advantage estimation and loss terms over per-token
//! arrays of shape `(batch, max_tokens)`.
//!
//! Every operation takes a 0/1 `mask`; masked-out positions never affect a
//! result and are zero in every returned array.

mod golden;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

pub use golden::{evaluate, to_array, to_rows, GoldenBatch, GoldenCase, GoldenExpected, KernelOutputs};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RlError {
    #[error("{name} has shape {got:?}, expected {want:?}")]
    ShapeMismatch { name: &'static str, got: Vec<usize>, want: Vec<usize> },
    #[error("mask must contain only 0 and 1, found {0}")]
    InvalidMask(f64),
    #[error("sequence {0} has no masked-in tokens")]
    EmptySequence(usize),
    #[error("whitening needs at least 2 masked-in elements, found {0}")]
    DegenerateMask(usize),
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoHyper {
    pub eps_clip: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lam: f64,
    pub whiten_eps: f64,
    pub whiten_rewards: bool,
    pub whiten_advantages: bool,
}

impl Default for PpoHyper {
    fn default() -> Self {
        PpoHyper {
            eps_clip: 0.2,
            beta: 0.05,
            gamma: 1.0,
            lam: 0.95,
            whiten_eps: 1e-8,
            whiten_rewards: false,
            whiten_advantages: true,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return Err(RlError::InvalidHyper("eps_clip must lie in (0, 1)"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(RlError::InvalidHyper("beta must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(RlError::InvalidHyper("gamma and lam must lie in [0, 1]"));
        }
        if !(self.whiten_eps >= 0.0 && self.whiten_eps.is_finite()) {
            return Err(RlError::InvalidHyper("whiten_eps must be non-negative"));
        }
        Ok(())
    }
}

/// One rollout batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoBatch {
    pub logp_policy: Array2<f64>,
    pub logp_old: Array2<f64>,
    pub logp_ref: Array2<f64>,
    pub values: Array2<f64>,
    pub mask: Array2<f64>,
    /// Sandbox reward per sequence, 0 or 1.
    pub terminal_reward: Array1<f64>,
}

fn same_shape(name: &'static str, a: ArrayView2<f64>, want: &[usize]) -> Result<(), RlError> {
    if a.shape() != want {
        return Err(RlError::ShapeMismatch { name, got: a.shape().to_vec(), want: want.to_vec() });
    }
    Ok(())
}

fn check_mask(mask: ArrayView2<f64>) -> Result<(), RlError> {
    match mask.iter().find(|&&m| m != 0.0 && m != 1.0) {
        Some(&m) => Err(RlError::InvalidMask(m)),
        None => Ok(()),
    }
}

fn finite_where_masked(name: &'static str, x: ArrayView2<f64>, mask: ArrayView2<f64>) -> Result<(), RlError> {
    if Zip::from(x).and(mask).all(|&v, &m| m == 0.0 || v.is_finite()) {
        Ok(())
    } else {
        Err(RlError::NonFiniteInput(name))
    }
}

impl PpoBatch {
    pub fn shape(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let want = self.mask.shape().to_vec();
        for (name, a) in [
            ("logp_policy", &self.logp_policy),
            ("logp_old", &self.logp_old),
            ("logp_ref", &self.logp_ref),
            ("values", &self.values),
        ] {
            same_shape(name, a.view(), &want)?;
            finite_where_masked(name, a.view(), self.mask.view())?;
        }
        if self.terminal_reward.len() != want[0] {
            return Err(RlError::ShapeMismatch {
                name: "terminal_reward",
                got: vec![self.terminal_reward.len()],
                want: vec![want[0]],
            });
        }
        if !self.terminal_reward.iter().all(|r| r.is_finite()) {
            return Err(RlError::NonFiniteInput("terminal_reward"));
        }
        check_mask(self.mask.view())?;
        for (i, row) in self.mask.rows().into_iter().enumerate() {
            if !row.iter().any(|&m| m == 1.0) {
                return Err(RlError::EmptySequence(i));
            }
        }
        Ok(())
    }
}

/// Normalizes the masked-in elements to `(x - mean) / (std + eps)` using the
/// population standard deviation, adding the mean back when `shift_mean` is
/// false.
pub fn whiten(x: ArrayView2<f64>, mask: ArrayView2<f64>, eps: f64, shift_mean: bool) -> Result<Array2<f64>, RlError> {
    same_shape("x", x, mask.shape())?;
    check_mask(mask)?;
    let vals: Vec<f64> = Zip::from(x).and(mask).fold(Vec::new(), |mut acc, &v, &m| {
        if m == 1.0 {
            acc.push(v);
        }
        acc
    });
    let n = vals.len();
    if n < 2 {
        return Err(RlError::DegenerateMask(n));
    }
    if !vals.iter().all(|v| v.is_finite()) {
        return Err(RlError::NonFiniteInput("x"));
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let scale = 1.0 / (var.sqrt() + eps);
    let back = if shift_mean { 0.0 } else { mean };
    Ok(Zip::from(x).and(mask).map_collect(|&v, &m| if m == 1.0 { (v - mean) * scale + back } else { 0.0 }))
}

fn last_masked(row: ArrayView1<f64>) -> Option<usize> {
    row.iter().rposition(|&m| m == 1.0)
}

/// Per-token rewards: `-beta * (logp_policy - logp_ref)` on every masked-in
/// token, with the sequence's terminal reward added at its last masked-in
/// token. Optionally whitened without re-centering.
pub fn shaped_rewards(batch: &PpoBatch, hyper: &PpoHyper) -> Result<Array2<f64>, RlError> {
    batch.validate()?;
    hyper.validate()?;
    let mut rewards = Zip::from(&batch.logp_policy).and(&batch.logp_ref).and(&batch.mask).map_collect(|&p, &r, &m| {
        if m == 1.0 {
            -hyper.beta * (p - r)
        } else {
            0.0
        }
    });
    for (i, row) in batch.mask.rows().into_iter().enumerate() {
        let t = last_masked(row).ok_or(RlError::EmptySequence(i))?;
        rewards[[i, t]] += batch.terminal_reward[i];
    }
    if hyper.whiten_rewards {
        rewards = whiten(rewards.view(), batch.mask.view(), hyper.whiten_eps, false)?;
    }
    Ok(rewards)
}

/// Advantages and returns; both are zero where the mask is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Array2<f64>,
    pub returns: Array2<f64>,
}

/// Generalized advantage estimation over each row's masked-in tokens, taken
/// in order as one contiguous sequence. The value after the last token is 0.
/// `returns = advantages + values`. No whitening.
pub fn gae(
    rewards: ArrayView2<f64>,
    values: ArrayView2<f64>,
    mask: ArrayView2<f64>,
    gamma: f64,
    lam: f64,
) -> Result<Advantages, RlError> {
    same_shape("rewards", rewards, mask.shape())?;
    same_shape("values", values, mask.shape())?;
    check_mask(mask)?;
    finite_where_masked("rewards", rewards, mask)?;
    finite_where_masked("values", values, mask)?;
    let mut adv = Array2::zeros(mask.raw_dim());
    let mut ret = Array2::zeros(mask.raw_dim());
    for i in 0..mask.nrows() {
        let idx: Vec<usize> = (0..mask.ncols()).filter(|&t| mask[[i, t]] == 1.0).collect();
        let mut next_adv = 0.0;
        let mut next_value = 0.0;
        for &t in idx.iter().rev() {
            let delta = rewards[[i, t]] + gamma * next_value - values[[i, t]];
            let a = delta + gamma * lam * next_adv;
            adv[[i, t]] = a;
            ret[[i, t]] = a + values[[i, t]];
            next_adv = a;
            next_value = values[[i, t]];
        }
    }
    Ok(Advantages { advantages: adv, returns: ret })
}

/// `gae` followed by advantage whitening when the hyperparameters ask for it.
/// Returns are computed before whitening.
pub fn estimate_advantages(
    rewards: ArrayView2<f64>,
    values: ArrayView2<f64>,
    mask: ArrayView2<f64>,
    hyper: &PpoHyper,
) -> Result<Advantages, RlError> {
    hyper.validate()?;
    let mut out = gae(rewards, values, mask, hyper.gamma, hyper.lam)?;
    if hyper.whiten_advantages {
        out.advantages = whiten(out.advantages.view(), mask, hyper.whiten_eps, true)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateLoss {
    pub loss: f64,
    pub ratio_mean: f64,
    pub clip_fraction: f64,
}

fn clip_active(ratio: f64, adv: f64, eps: f64) -> bool {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    clipped * adv < ratio * adv
}

fn surrogate_inputs(
    logp_policy: ArrayView2<f64>,
    logp_old: ArrayView2<f64>,
    advantages: ArrayView2<f64>,
    mask: ArrayView2<f64>,
    eps_clip: f64,
) -> Result<usize, RlError> {
    same_shape("logp_policy", logp_policy, mask.shape())?;
    same_shape("logp_old", logp_old, mask.shape())?;
    same_shape("advantages", advantages, mask.shape())?;
    check_mask(mask)?;
    finite_where_masked("logp_policy", logp_policy, mask)?;
    finite_where_masked("logp_old", logp_old, mask)?;
    finite_where_masked("advantages", advantages, mask)?;
    if !(eps_clip > 0.0 && eps_clip < 1.0) {
        return Err(RlError::InvalidHyper("eps_clip must lie in (0, 1)"));
    }
    match mask.iter().filter(|&&m| m == 1.0).count() {
        0 => Err(RlError::DegenerateMask(0)),
        n => Ok(n),
    }
}

/// Negative masked mean of `min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)`
/// with `ratio = exp(logp_policy - logp_old)`. Advantages are constants.
pub fn clipped_surrogate_loss(
    logp_policy: ArrayView2<f64>,
    logp_old: ArrayView2<f64>,
    advantages: ArrayView2<f64>,
    mask: ArrayView2<f64>,
    eps_clip: f64,
) -> Result<SurrogateLoss, RlError> {
    let n = surrogate_inputs(logp_policy, logp_old, advantages, mask, eps_clip)? as f64;
    let (mut objective, mut ratio_sum, mut clipped) = (0.0, 0.0, 0usize);
    Zip::from(logp_policy).and(logp_old).and(advantages).and(mask).for_each(|&p, &o, &a, &m| {
        if m == 1.0 {
            let ratio = (p - o).exp();
            let bounded = ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip);
            objective += (ratio * a).min(bounded * a);
            ratio_sum += ratio;
            clipped += usize::from(clip_active(ratio, a, eps_clip));
        }
    });
    let out = SurrogateLoss { loss: -objective / n, ratio_mean: ratio_sum / n, clip_fraction: clipped as f64 / n };
    if !out.loss.is_finite() {
        return Err(RlError::NonFiniteInput("ratio"));
    }
    Ok(out)
}

/// Gradient of [`clipped_surrogate_loss`] with respect to `logp_policy`.
/// Tokens on the clipped branch get exactly 0.
pub fn clipped_surrogate_grad(
    logp_policy: ArrayView2<f64>,
    logp_old: ArrayView2<f64>,
    advantages: ArrayView2<f64>,
    mask: ArrayView2<f64>,
    eps_clip: f64,
) -> Result<Array2<f64>, RlError> {
    let n = surrogate_inputs(logp_policy, logp_old, advantages, mask, eps_clip)? as f64;
    Ok(Zip::from(logp_policy).and(logp_old).and(advantages).and(mask).map_collect(|&p, &o, &a, &m| {
        if m != 1.0 {
            return 0.0;
        }
        let ratio = (p - o).exp();
        if clip_active(ratio, a, eps_clip) {
            0.0
        } else {
            -ratio * a / n
        }
    }))
}

/// Old values and range for clipped value loss.
#[derive(Debug, Clone, Copy)]
pub struct ValueClip<'a> {
    pub old_values: ArrayView2<'a, f64>,
    pub range: f64,
}

/// Masked mean of `0.5 * (V - returns)^2`; with a clip, each token takes the
/// larger of the clipped and unclipped errors.
pub fn value_loss(
    values: ArrayView2<f64>,
    returns: ArrayView2<f64>,
    mask: ArrayView2<f64>,
    clip: Option<ValueClip<'_>>,
) -> Result<f64, RlError> {
    same_shape("values", values, mask.shape())?;
    same_shape("returns", returns, mask.shape())?;
    check_mask(mask)?;
    if let Some(c) = &clip {
        same_shape("old_values", c.old_values, mask.shape())?;
        if c.range.is_nan() || c.range < 0.0 {
            return Err(RlError::InvalidHyper("value clip range must be non-negative"));
        }
    }
    let n = mask.iter().filter(|&&m| m == 1.0).count();
    if n == 0 {
        return Err(RlError::DegenerateMask(0));
    }
    let mut total = 0.0;
    for ((ix, &m), (&v, &r)) in mask.indexed_iter().zip(values.iter().zip(returns.iter())) {
        if m != 1.0 {
            continue;
        }
        let mut err = 0.5 * (v - r) * (v - r);
        if let Some(c) = &clip {
            let old = c.old_values[ix];
            let vc = old + (v - old).clamp(-c.range, c.range);
            err = err.max(0.5 * (vc - r) * (vc - r));
        }
        total += err;
    }
    Ok(total / n as f64)
}

/// Masked mean of `-logp` over the sampled tokens.
pub fn entropy_diag(logp_policy: ArrayView2<f64>, mask: ArrayView2<f64>) -> Result<f64, RlError> {
    same_shape("logp_policy", logp_policy, mask.shape())?;
    check_mask(mask)?;
    finite_where_masked("logp_policy", logp_policy, mask)?;
    let (sum, n) = Zip::from(logp_policy).and(mask).fold(
        (0.0, 0usize),
        |(s, n), &p, &m| {
            if m == 1.0 {
                (s - p, n + 1)
            } else {
                (s, n)
            }
        },
    );
    if n == 0 {
        return Err(RlError::DegenerateMask(0));
    }
    Ok(sum / n as f64)
}
