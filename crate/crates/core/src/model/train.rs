use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CaeModel, ModelError};
use crate::numerics::{adam_step, mse_loss, AdamState, ParamSlot, Tensor};

/// Optimizer state and progress carried between epochs and into checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: AdamState<f32>,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean reconstruction MSE of each completed epoch.
    pub loss_history: Vec<f64>,
}

impl TrainState {
    pub fn new(model: &CaeModel) -> Self {
        let lens: Vec<usize> = model.params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self { adam: AdamState::new(model.config.adam, &lens), epoch: 0, loss_history: Vec::new() }
    }
}

/// Order in which training images are visited in `epoch`.
///
/// Depends only on the seed and the epoch number, so resumed runs replay
/// the same order.
pub fn epoch_order(seed: u64, epoch: usize, len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order
}

/// One optimizer step on `batch`; returns the batch MSE.
pub fn train_step(model: &mut CaeModel, adam: &mut AdamState<f32>, batch: &Tensor) -> Result<f64, ModelError> {
    let (recon, cache) = model.forward_reconstruct(batch)?;
    let (loss, grad) = mse_loss(&recon, batch)?;
    let grads = model.backward(&cache, &grad)?;
    let grad_views = grads.tensors();
    let mut slots: Vec<ParamSlot<'_, f32>> = model
        .params
        .tensors_mut()
        .into_iter()
        .zip(&grad_views)
        .map(|((_, value), (name, grad))| ParamSlot { name: name.as_str(), value, grad })
        .collect();
    adam_step(&mut slots, adam)?;
    Ok(loss)
}

/// Trains until `model.config.epochs` epochs are complete.
///
/// `images` holds the whole training split (`N × 3 × H × W`, values in
/// `[0, 1]`). `on_epoch` receives `(epoch_index, mean_loss)`.
pub fn train(
    model: &mut CaeModel,
    state: &mut TrainState,
    images: &Tensor,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(), ModelError> {
    let n = images.shape().n;
    if n == 0 || images.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let batch_size = model.config.batch_size;
    let seed = model.config.seed;
    while state.epoch < model.config.epochs {
        let epoch = state.epoch;
        let order = epoch_order(seed, epoch, n);
        let mut total = 0.0;
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let batch = images.select(idx)?;
            let loss = train_step(model, &mut state.adam, &batch)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            debug!("epoch {epoch} batch {b}: mse {loss:.6}");
            total += loss * idx.len() as f64;
        }
        let mean = total / n as f64;
        info!("epoch {} / {}: mean mse {mean:.6}", epoch + 1, model.config.epochs);
        state.loss_history.push(mean);
        state.epoch += 1;
        on_epoch(epoch, mean);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_cae, CaeConfig, ConfigMode};
    use crate::numerics::Shape;

    fn small() -> CaeConfig {
        CaeConfig {
            mode: ConfigMode::Experimental,
            input_size: (32, 32),
            encoder_channels: vec![4, 4, 4, 4, 4],
            bottleneck_channels: vec![4, 4, 1, 4],
            decoder_channels: vec![4, 4, 4, 4, 3],
            embedding_dim: 8,
            batch_size: 3,
            epochs: 2,
            ..CaeConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let mut cfg = small();
        cfg.epochs = 0;
        let mut model = build_cae(cfg, 3).unwrap();
        let before = model.clone();
        let mut state = TrainState::new(&model);
        let data = Tensor::full(Shape::new(4, 3, 32, 32), 0.5).unwrap();
        train(&mut model, &mut state, &data, |_, _| {}).unwrap();
        assert_eq!(model, before);
        assert!(state.loss_history.is_empty());
    }

    #[test]
    fn history_has_one_entry_per_epoch_and_is_reproducible() {
        let data = Tensor::from_vec(
            Shape::new(5, 3, 32, 32),
            (0..5 * 3 * 32 * 32).map(|i| ((i % 97) as f32) / 97.0).collect(),
        )
        .unwrap();
        let run = || {
            let mut model = build_cae(small(), 3).unwrap();
            let mut state = TrainState::new(&model);
            train(&mut model, &mut state, &data, |_, _| {}).unwrap();
            (model, state)
        };
        let (m1, s1) = run();
        let (m2, s2) = run();
        assert_eq!(s1.loss_history.len(), 2);
        assert_eq!(s1, s2);
        assert_eq!(m1, m2);
        assert_eq!(s1.adam.step, 4);
    }

    #[test]
    fn epoch_order_is_a_permutation() {
        let mut o = epoch_order(7, 3, 50);
        assert_ne!(o, (0..50).collect::<Vec<_>>());
        o.sort();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
        assert_eq!(epoch_order(7, 3, 50), epoch_order(7, 3, 50));
    }
}
