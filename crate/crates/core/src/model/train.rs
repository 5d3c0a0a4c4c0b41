use serde::{Deserialize, Serialize};

use super::objective::{register, total_loss, Batch, LossValues};
use super::optim::{adam_step, sgd_step, AdamMoments, AdamSettings};
use super::{ModelState, OptimizerKind, TrainConfig};
use crate::autodiff::{Matrix, Tape};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::label_space;
use crate::prompt_bank;

/// Loss components measured at the start of an epoch, before its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub task_loss: f64,
    pub align_loss: f64,
    pub reg_loss: f64,
    pub total_loss: f64,
}

impl EpochRecord {
    fn new(epoch: usize, v: LossValues) -> Self {
        EpochRecord {
            epoch,
            task_loss: v.task,
            align_loss: v.align,
            reg_loss: v.reg,
            total_loss: v.total,
        }
    }
}

/// Full-batch gradient descent on the joint objective for `cfg.epochs`
/// epochs. `on_epoch` sees each record as it is produced.
///
/// A non-finite loss, gradient or parameter aborts with
/// [`Error::Divergence`] naming the epoch; `state` is then left at its last
/// finite value.
pub fn fit(
    state: &mut ModelState,
    train: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    if train.n_classes() != state.n_classes() {
        return Err(Error::Compatibility(format!(
            "training data has {} classes, model has {}",
            train.n_classes(),
            state.n_classes()
        )));
    }
    let batch = Batch::encode(&state.encoder, train.examples())?;
    let settings = AdamSettings {
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_eps,
    };
    let mut moments = {
        let reg = state.registry();
        AdamMoments::zeros_like(&reg.map(|(_, m)| m))
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::Divergence { epoch },
            other => other,
        };
        let mut tape = Tape::new();
        let vars = register(&mut tape, state);
        let terms = total_loss(&mut tape, &vars, &batch, cfg).map_err(diverged)?;
        let values = terms.values(&tape)?;
        let mut grads = tape.backward(terms.total).map_err(diverged)?;
        let grads: Vec<Matrix> = vars
            .in_order()
            .iter()
            .map(|v| grads.take(*v).expect("registry parameter has a gradient"))
            .collect();

        let record = EpochRecord::new(epoch, values);
        on_epoch(&record);
        trace.push(record);

        let backup: Vec<Matrix> = state.registry().iter().map(|(_, m)| (*m).clone()).collect();
        let mut params = state.registry_mut();
        match cfg.optimizer {
            OptimizerKind::Sgd => sgd_step(&mut params, &grads, cfg.lr)?,
            OptimizerKind::Adam => adam_step(&mut params, &grads, &mut moments, cfg.lr, epoch, settings)?,
        }
        if !params.iter().all(|p| p.is_finite()) {
            for (p, old) in params.iter_mut().zip(backup) {
                **p = old;
            }
            return Err(Error::Divergence { epoch });
        }
    }
    Ok(trace)
}

/// Class probabilities (B×C) for encoded features (B×d_h).
pub fn predict_proba(state: &ModelState, features: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bank = state.bank.register(&mut tape, false);
    let labels = state.labels.register(&mut tape, false);
    let h = tape.constant(features.clone());
    let fused = prompt_bank::fuse(&mut tape, h, &bank)?;
    let probs = label_space::score(&mut tape, fused.z, &labels)?;
    Ok(tape.value(probs)?.clone())
}

/// Label-space projections `u = W·z` (B×d_e) for encoded features.
pub fn project_features(state: &ModelState, features: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bank = state.bank.register(&mut tape, false);
    let labels = state.labels.register(&mut tape, false);
    let h = tape.constant(features.clone());
    let fused = prompt_bank::fuse(&mut tape, h, &bank)?;
    let u = label_space::project(&mut tape, fused.z, &labels)?;
    Ok(tape.value(u)?.clone())
}
