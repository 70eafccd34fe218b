use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};
use crate::tensor::{Element, Graph, Var};

/// Weight of the duration term in the total loss.
pub const DURATION_LOSS_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub l2_mel: f64,
    pub l1_duration: f64,
    pub total: f64,
}

impl LossReport {
    pub fn csv_header() -> &'static str {
        "step,l2_mel,l1_duration,total"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.l2_mel, self.l1_duration, self.total)
    }
}

/// Loss nodes of one example.
pub struct LossVars {
    pub l2_mel: Var,
    pub l1_duration: Var,
    pub total: Var,
}

impl LossVars {
    pub fn report<F: Element>(&self, g: &Graph<F>, step: usize) -> LossReport {
        LossReport {
            step,
            l2_mel: g.value(self.l2_mel)[0].to_f64(),
            l1_duration: g.value(self.l1_duration)[0].to_f64(),
            total: g.value(self.total)[0].to_f64(),
        }
    }
}

/// Mean squared error over every mel entry of the sentence plus 0.01 times
/// the mean absolute error of the `log(1 + d)` durations over every phoneme.
pub fn compute_loss<F: Element>(
    g: &mut Graph<F>,
    pred_mel: Var,
    target_mel: Var,
    pred_logdur: Var,
    target_logdur: Var,
) -> Result<LossVars> {
    if g.shape(pred_mel) != g.shape(target_mel) {
        return Err(contract_err!(
            "predicted mel {:?} and target {:?} differ",
            g.shape(pred_mel),
            g.shape(target_mel)
        ));
    }
    if g.shape(pred_logdur) != g.shape(target_logdur) {
        return Err(contract_err!(
            "predicted durations {:?} and targets {:?} differ",
            g.shape(pred_logdur),
            g.shape(target_logdur)
        ));
    }
    let diff = g.sub(pred_mel, target_mel)?;
    let sq = g.square(diff);
    let l2_mel = g.mean(sq);
    let ddiff = g.sub(pred_logdur, target_logdur)?;
    let ad = g.abs(ddiff);
    let l1_duration = g.mean(ad);
    let weighted = g.scale(l1_duration, F::from_f64(DURATION_LOSS_WEIGHT));
    let total = g.add(l2_mel, weighted)?;
    Ok(LossVars {
        l2_mel,
        l1_duration,
        total,
    })
}

/// `log(1 + d)` targets as an `N x 1` column.
pub fn log_duration_targets<F: Element>(g: &mut Graph<F>, frames: &[u32]) -> Result<Var> {
    g.input(
        &[frames.len(), 1],
        frames.iter().map(|&d| F::from_f64((d as f64).ln_1p())).collect(),
    )
}
