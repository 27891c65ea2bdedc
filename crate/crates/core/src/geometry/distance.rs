use crate::error::{Error, Result};
use crate::geometry::pose::{Pose3d, NUM_JOINTS};

/// Outlier-robust pose distance: the mean squared per-coordinate error `M`
/// over jointly valid joints when `M < epsilon`, compressed to
/// `M^0.1 * epsilon^0.9` above the threshold. Continuous at `M = epsilon`.
pub fn smooth_mse(p: &Pose3d, q: &Pose3d, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smooth_mse epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..NUM_JOINTS {
        if p.valid[j] && q.valid[j] {
            for c in 0..3 {
                let d = p.joints[j][c] - q.joints[j][c];
                sum += d * d;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedDistance);
    }
    let m = sum / (3.0 * n as f64);
    Ok(smooth_mse_branch(m, epsilon))
}

/// The scalar branch shared with the differentiable loss path.
pub(crate) fn smooth_mse_branch(m: f64, epsilon: f64) -> f64 {
    if m < epsilon {
        m
    } else {
        m.powf(0.1) * epsilon.powf(0.9)
    }
}
