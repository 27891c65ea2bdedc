use crate::error::{Error, Result};

/// Learning rate at `epoch`: constant `base_lr` for the first
/// `epochs_constant` epochs, then linear decay to exactly zero over the next
/// `epochs_decay` epochs.
pub fn lr_schedule(
    epoch: usize,
    epochs_constant: usize,
    epochs_decay: usize,
    base_lr: f64,
) -> Result<f64> {
    let end = epochs_constant + epochs_decay;
    if epoch > end {
        return Err(Error::InvalidParameter(format!(
            "epoch {epoch} outside the schedule range 0..={end}"
        )));
    }
    if epoch < epochs_constant {
        Ok(base_lr)
    } else if epochs_decay == 0 {
        Ok(0.0)
    } else {
        let remaining = (end - epoch) as f64 / epochs_decay as f64;
        Ok(base_lr * remaining)
    }
}
