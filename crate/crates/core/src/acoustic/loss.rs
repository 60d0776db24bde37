use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use super::model::VarianceOutputs;
use crate::error::{Error, Result};
use crate::nn::scalar;
use crate::representation::RepresentationSequence;

/// Per-term acoustic losses of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticLossBreakdown {
    pub rep_l1: f64,
    pub dur_mse: f64,
    pub pitch_mse: f64,
    pub energy_mse: f64,
    pub total: f64,
}

/// Log-domain duration target; zero-frame phonemes share the target of one-frame ones.
pub fn log_duration_target(frames: u32) -> f64 {
    (frames.max(1) as f64).ln()
}

/// Graph-level loss terms, each a scalar tensor.
pub(crate) struct LossTerms {
    pub rep_l1: Tensor,
    pub dur_mse: Tensor,
    pub pitch_mse: Tensor,
    pub energy_mse: Tensor,
    pub total: Tensor,
}

impl LossTerms {
    /// Masked mean absolute error over valid frames and MSE over valid phonemes.
    /// `frame_mask` is `(batch, frames)`, `phone_mask` is `(batch, phonemes)`.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        rep: &Tensor,
        rep_target: &Tensor,
        frame_mask: &Tensor,
        predictions: [&Tensor; 3],
        targets: [&Tensor; 3],
        phone_mask: &Tensor,
        weights: &LossWeights,
    ) -> Result<Self> {
        if rep.dims() != rep_target.dims() {
            return Err(Error::Shape(format!(
                "predicted representation {:?} vs target {:?}",
                rep.dims(),
                rep_target.dims()
            )));
        }
        let dim = rep.dims()[2] as f64;
        let cells = (frame_mask.sum_all()? * dim)?;
        let rep_l1 = (rep - rep_target)?
            .abs()?
            .broadcast_mul(&frame_mask.unsqueeze(2)?)?
            .sum_all()?
            .div(&cells)?;
        let n_phones = phone_mask.sum_all()?;
        let mse = |p: &Tensor, t: &Tensor| -> Result<Tensor> {
            Ok((p - t)?.sqr()?.mul(phone_mask)?.sum_all()?.div(&n_phones)?)
        };
        let dur_mse = mse(predictions[0], targets[0])?;
        let pitch_mse = mse(predictions[1], targets[1])?;
        let energy_mse = mse(predictions[2], targets[2])?;
        let total = ((((&rep_l1 * weights.rep)? + (&dur_mse * weights.duration)?)? + (&pitch_mse * weights.pitch)?)?
            + (&energy_mse * weights.energy)?)?;
        Ok(Self {
            rep_l1,
            dur_mse,
            pitch_mse,
            energy_mse,
            total,
        })
    }

    pub fn breakdown(&self) -> Result<AcousticLossBreakdown> {
        let b = AcousticLossBreakdown {
            rep_l1: scalar(&self.rep_l1)?,
            dur_mse: scalar(&self.dur_mse)?,
            pitch_mse: scalar(&self.pitch_mse)?,
            energy_mse: scalar(&self.energy_mse)?,
            total: scalar(&self.total)?,
        };
        if !b.total.is_finite() {
            return Err(Error::NonFinite(format!("acoustic loss {b:?}")));
        }
        Ok(b)
    }
}

/// Unit-weighted loss between a predicted and a target utterance.
/// Variance vectors are compared as given (log-duration, normalized pitch and energy).
pub fn acoustic_loss(
    predicted: &RepresentationSequence,
    target: &RepresentationSequence,
    predicted_variance: &VarianceOutputs,
    target_variance: &VarianceOutputs,
) -> Result<AcousticLossBreakdown> {
    if predicted.n_frames() != target.n_frames() || predicted.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "predicted {}x{} frames vs target {}x{}",
            predicted.n_frames(),
            predicted.dim(),
            target.n_frames(),
            target.dim()
        )));
    }
    let n = predicted_variance.log_duration.len();
    let lens_ok = [
        &predicted_variance.pitch,
        &predicted_variance.energy,
        &target_variance.log_duration,
        &target_variance.pitch,
        &target_variance.energy,
    ]
    .iter()
    .all(|v| v.len() == n);
    if !lens_ok || n == 0 || predicted.n_frames() == 0 {
        return Err(Error::Shape("variance vectors differ in length or are empty".into()));
    }
    let dev = Device::Cpu;
    let rep = |r: &RepresentationSequence| -> Result<Tensor> {
        let v: Vec<f64> = r.frames.iter().map(|&x| x as f64).collect();
        Ok(Tensor::from_vec(v, (1, r.n_frames(), r.dim()), &dev)?)
    };
    let row = |v: &[f32]| -> Result<Tensor> {
        Ok(Tensor::from_vec(v.iter().map(|&x| x as f64).collect::<Vec<_>>(), (1, n), &dev)?)
    };
    let p = [
        row(&predicted_variance.log_duration)?,
        row(&predicted_variance.pitch)?,
        row(&predicted_variance.energy)?,
    ];
    let t = [
        row(&target_variance.log_duration)?,
        row(&target_variance.pitch)?,
        row(&target_variance.energy)?,
    ];
    let terms = LossTerms::compute(
        &rep(predicted)?,
        &rep(target)?,
        &Tensor::ones((1, predicted.n_frames()), DType::F64, &dev)?,
        [&p[0], &p[1], &p[2]],
        [&t[0], &t[1], &t[2]],
        &Tensor::ones((1, n), DType::F64, &dev)?,
        &LossWeights::default(),
    )?;
    terms.breakdown()
}
