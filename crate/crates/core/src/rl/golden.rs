//! Golden-batch file format: a JSON document holding a batch as nested
//! row lists, the hyperparameters, and the expected kernel outputs.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::*;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenBatch {
    pub logp_policy: Rows,
    pub logp_old: Rows,
    pub logp_ref: Rows,
    pub values: Rows,
    pub mask: Rows,
    pub terminal_reward: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenExpected {
    pub rewards: Rows,
    pub advantages: Rows,
    pub returns: Rows,
    pub loss: f64,
    pub ratio_mean: f64,
    pub clip_fraction: f64,
    pub grad: Rows,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenCase {
    pub name: String,
    pub hyper: PpoHyper,
    pub batch: GoldenBatch,
    pub expected: GoldenExpected,
}

/// Everything the kernel computes for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutputs {
    pub rewards: Array2<f64>,
    pub advantages: Array2<f64>,
    pub returns: Array2<f64>,
    pub surrogate: SurrogateLoss,
    pub grad: Array2<f64>,
    pub value_loss: f64,
    pub entropy: f64,
}

pub fn to_array(rows: &Rows) -> Result<Array2<f64>, RlError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(RlError::ShapeMismatch { name: "rows", got: vec![n, bad.len()], want: vec![n, m] });
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
}

pub fn to_rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl GoldenBatch {
    pub fn to_batch(&self) -> Result<PpoBatch, RlError> {
        Ok(PpoBatch {
            logp_policy: to_array(&self.logp_policy)?,
            logp_old: to_array(&self.logp_old)?,
            logp_ref: to_array(&self.logp_ref)?,
            values: to_array(&self.values)?,
            mask: to_array(&self.mask)?,
            terminal_reward: Array1::from(self.terminal_reward.clone()),
        })
    }
}

impl GoldenCase {
    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<GoldenCase>, String> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| format!("{}: {e}", path.as_ref().display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.as_ref().display()))
    }
}

/// Runs the full kernel: shaped rewards, advantages, surrogate loss and its
/// gradient, value loss against the returns, and the entropy diagnostic.
pub fn evaluate(batch: &PpoBatch, hyper: &PpoHyper) -> Result<KernelOutputs, RlError> {
    let rewards = shaped_rewards(batch, hyper)?;
    let Advantages { advantages, returns } =
        estimate_advantages(rewards.view(), batch.values.view(), batch.mask.view(), hyper)?;
    let args = (batch.logp_policy.view(), batch.logp_old.view(), advantages.view(), batch.mask.view());
    let surrogate = clipped_surrogate_loss(args.0, args.1, args.2, args.3, hyper.eps_clip)?;
    let grad = clipped_surrogate_grad(args.0, args.1, args.2, args.3, hyper.eps_clip)?;
    let value_loss = value_loss(batch.values.view(), returns.view(), batch.mask.view(), None)?;
    let entropy = entropy_diag(batch.logp_policy.view(), batch.mask.view())?;
    Ok(KernelOutputs { rewards, advantages, returns, surrogate, grad, value_loss, entropy })
}
