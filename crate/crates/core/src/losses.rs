//! The training objective, assembled from differentiable pieces: per-view
//! adversarial, cycle and identity terms, the shared 3D pose term, and the
//! weighted total. Every function builds nodes on the tape and returns the
//! scalar loss id.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Scalar, Tid};
use crate::error::{Error, Result};
use crate::geometry::{scale_pose, LimbProfile, Pose3d, Skeleton};
use crate::models::{
    estimate_pose, pose_to_target, Bound, CropTransform, EstimatedPose, KeypointDetector,
};

/// How discriminator score maps are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// Scores are logits of D's real-probability; losses are the negated
    /// log-objective (so optima sit at 0 and a coin-flip D scores 2 ln 2).
    Log,
    /// Least-squares scores: real targets 1, fake targets 0.
    LeastSquares,
}

/// Generator-side adversarial term in `Log` mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenAdvVariant {
    /// Minimize -log D(fake) (the standard non-saturating form).
    NonSaturating,
    /// Minimize log(1 - D(fake)) literally.
    Saturating,
}

/// Loss weights and smooth-MSE threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub epsilon: f64,
    pub gan_mode: GanMode,
    pub gen_adv: GenAdvVariant,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 1.0,
            lambda3: 5.0,
            lambda4: 1.0,
            epsilon: 400.0,
            gan_mode: GanMode::LeastSquares,
            gen_adv: GenAdvVariant::NonSaturating,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-view loss values for the metrics log. `gan_g`/`identity` are the
/// sums of both directions' terms; `per_view_total` is their weighted
/// combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewLossReport {
    pub view_id: String,
    pub gan_g: f64,
    pub gan_d: f64,
    pub cycle: f64,
    pub identity: f64,
    pub per_view_total: f64,
}

impl ViewLossReport {
    /// Consistency of the stored total with its components (1e-6 relative).
    pub fn is_consistent(&self, w: &LossWeights) -> bool {
        let expect = w.lambda1 * self.cycle + w.lambda2 * self.gan_g + w.lambda3 * self.identity;
        (self.per_view_total - expect).abs() <= 1e-6 * expect.abs().max(1.0)
    }
}

fn assert_finite<T: Scalar>(g: &Graph<T>, id: Tid, what: &str) -> Result<()> {
    if g.value(id).iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("gan score map ({what})")))
    }
}

/// Generator-side adversarial term from D's score map on fakes.
pub fn gan_generator_term<T: Scalar>(
    g: &mut Graph<T>,
    d_on_fake: Tid,
    mode: GanMode,
    gen_adv: GenAdvVariant,
) -> Result<Tid> {
    assert_finite(g, d_on_fake, "fake")?;
    Ok(match mode {
        GanMode::Log => match gen_adv {
            GenAdvVariant::NonSaturating => {
                let neg_fake = g.neg(d_on_fake);
                let sp = g.softplus(neg_fake); // -log sigmoid(fake)
                g.mean_all(sp)
            }
            GenAdvVariant::Saturating => {
                // log(1 - D(fake)) = -softplus(fake), minimized as-is.
                let sp = g.softplus(d_on_fake);
                let m = g.mean_all(sp);
                g.neg(m)
            }
        },
        GanMode::LeastSquares => {
            let fake_m1 = g.add_scalar(d_on_fake, -T::one());
            let sq = g.square(fake_m1);
            g.mean_all(sq)
        }
    })
}

/// Discriminator-side term: the negated log objective in `Log` mode (optimum
/// 0), or the halved least-squares sum.
pub fn gan_discriminator_term<T: Scalar>(
    g: &mut Graph<T>,
    d_on_real: Tid,
    d_on_fake: Tid,
    mode: GanMode,
) -> Result<Tid> {
    assert_finite(g, d_on_real, "real")?;
    assert_finite(g, d_on_fake, "fake")?;
    Ok(match mode {
        GanMode::Log => {
            let neg_real = g.neg(d_on_real);
            let sp_real = g.softplus(neg_real); // -log sigmoid(real)
            let d_real = g.mean_all(sp_real);
            let sp_fake = g.softplus(d_on_fake); // -log(1 - sigmoid(fake))
            let d_fake = g.mean_all(sp_fake);
            g.add(d_real, d_fake)
        }
        GanMode::LeastSquares => {
            let real_m1 = g.add_scalar(d_on_real, -T::one());
            let sq_real = g.square(real_m1);
            let m_real = g.mean_all(sq_real);
            let sq_fake = g.square(d_on_fake);
            let m_fake = g.mean_all(sq_fake);
            let sum = g.add(m_real, m_fake);
            g.scale(sum, T::cast_from(0.5))
        }
    })
}

/// Adversarial loss from discriminator score maps, averaged over the map.
/// Returns `(generator_term, discriminator_term)`. The caller wires
/// detachment: `d_on_fake` must be D(fake.detach()) when optimizing D and
/// D(fake) with D's parameters bound frozen when optimizing G.
pub fn gan_loss<T: Scalar>(
    g: &mut Graph<T>,
    d_on_real: Tid,
    d_on_fake: Tid,
    mode: GanMode,
    gen_adv: GenAdvVariant,
) -> Result<(Tid, Tid)> {
    let g_term = gan_generator_term(g, d_on_fake, mode, gen_adv)?;
    let d_term = gan_discriminator_term(g, d_on_real, d_on_fake, mode)?;
    Ok((g_term, d_term))
}

/// Mean absolute difference between an image and its cycle reconstruction.
pub fn cycle_loss<T: Scalar>(g: &mut Graph<T>, real: Tid, reconstructed: Tid) -> Result<Tid> {
    if g.value(real).shape() != g.value(reconstructed).shape() {
        return Err(Error::ShapeMismatch(format!(
            "cycle loss: {:?} vs {:?}",
            g.value(real).shape(),
            g.value(reconstructed).shape()
        )));
    }
    Ok(g.l1_distance(reconstructed, real))
}

/// Mean absolute change a generator applies to an image already in its
/// output domain.
pub fn identity_loss<T: Scalar>(g: &mut Graph<T>, real: Tid, mapped: Tid) -> Result<Tid> {
    cycle_loss(g, real, mapped)
}

/// The per-view objective: `l1*cycle + l2*(gan_a + gan_b) + l3*(id_a + id_b)`.
pub fn per_view_objective<T: Scalar>(
    g: &mut Graph<T>,
    cycle: Tid,
    gan_g: (Tid, Tid),
    identity: (Tid, Tid),
    w: &LossWeights,
) -> Tid {
    let c = g.scale(cycle, T::cast_from(w.lambda1));
    let gan = g.add(gan_g.0, gan_g.1);
    let gan = g.scale(gan, T::cast_from(w.lambda2));
    let id = g.add(identity.0, identity.1);
    let id = g.scale(id, T::cast_from(w.lambda3));
    let s = g.add(c, gan);
    g.add(s, id)
}

/// One direction's 3D pose term with its byproducts.
pub struct Pose3dLoss {
    pub loss: Tid,
    pub estimate: EstimatedPose,
    pub scaled_target: Pose3d,
}

/// The smooth-MSE between the proportion-scaled source ground-truth pose and
/// the frozen estimator's prediction from the fake multi-view tuple.
/// Gradients flow into the fake images (and through them into generators),
/// never into the detector.
#[allow(clippy::too_many_arguments)]
pub fn pose_3d_loss<T: Scalar>(
    g: &mut Graph<T>,
    detector: &KeypointDetector<T>,
    frozen: &Bound,
    fake_views: &[Tid],
    cameras: &[crate::geometry::CameraView],
    crops: &[CropTransform],
    source_gt: &Pose3d,
    target_profile: &LimbProfile,
    skeleton: &Skeleton,
    epsilon: f64,
) -> Result<Pose3dLoss> {
    let scaled = scale_pose(source_gt, skeleton, target_profile)?;
    let estimate = estimate_pose(g, detector, frozen, fake_views, cameras, crops)?;
    let (target, target_valid) = pose_to_target::<T>(&scaled);
    let joint_mask: Vec<bool> = estimate
        .valid
        .iter()
        .zip(&target_valid)
        .map(|(a, b)| *a && *b)
        .collect();
    if !joint_mask.iter().any(|m| *m) {
        return Err(Error::UndefinedDistance);
    }
    let loss = g.smooth_mse_to(estimate.joints, &target, &joint_mask, epsilon);
    Ok(Pose3dLoss {
        loss,
        estimate,
        scaled_target: scaled,
    })
}

/// The full objective: the per-view sum plus `lambda4` times both
/// directional 3D terms. With `lambda4 = 0` the 3D terms must not be built
/// at all, so the reduction to independent per-view training is exact.
pub fn total_objective<T: Scalar>(
    g: &mut Graph<T>,
    view_totals: &[Tid],
    pose_terms: Option<(Tid, Tid)>,
    w: &LossWeights,
) -> Tid {
    assert!(!view_totals.is_empty());
    let mut total = view_totals[0];
    for &v in &view_totals[1..] {
        total = g.add(total, v);
    }
    if let Some((ab, ba)) = pose_terms {
        debug_assert!(w.lambda4 > 0.0, "3D terms built with lambda4 = 0");
        let p = g.add(ab, ba);
        let p = g.scale(p, T::cast_from(w.lambda4));
        total = g.add(total, p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    fn const_map(g: &mut Graph<f64>, v: f64) -> Tid {
        g.constant(ArrayD::from_elem(vec![1, 3, 3], v))
    }

    fn leaf_map(g: &mut Graph<f64>, v: f64) -> Tid {
        g.leaf(ArrayD::from_elem(vec![1, 3, 3], v))
    }

    #[test]
    fn log_mode_perfect_discriminator_scores_zero() {
        let mut g = Graph::new();
        // Probabilities 1 / 0 correspond to logits +/- inf; +/-40 is within
        // 1e-12 of the optimum.
        let real = const_map(&mut g, 40.0);
        let fake = const_map(&mut g, -40.0);
        let (_gt, dt) =
            gan_loss(&mut g, real, fake, GanMode::Log, GenAdvVariant::NonSaturating).unwrap();
        assert!(g.scalar(dt).abs() < 1e-12);
    }

    #[test]
    fn log_mode_coin_flip_discriminator() {
        let mut g = Graph::new();
        let real = const_map(&mut g, 0.0); // sigmoid -> 0.5
        let fake = const_map(&mut g, 0.0);
        let (_gt, dt) =
            gan_loss(&mut g, real, fake, GanMode::Log, GenAdvVariant::NonSaturating).unwrap();
        let expect = 2.0 * f64::ln(2.0); // 1.386...
        assert!((g.scalar(dt) - expect).abs() < 1e-12);
    }

    #[test]
    fn least_squares_example_from_uniform_scores() {
        let mut g = Graph::new();
        let real = const_map(&mut g, 0.7);
        let fake = const_map(&mut g, 0.3);
        let (gt, dt) = gan_loss(
            &mut g,
            real,
            fake,
            GanMode::LeastSquares,
            GenAdvVariant::NonSaturating,
        )
        .unwrap();
        assert!((g.scalar(dt) - 0.09).abs() < 1e-12);
        assert!((g.scalar(gt) - 0.49).abs() < 1e-12);
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let mut g = Graph::new();
        let real = const_map(&mut g, f64::NAN);
        let fake = const_map(&mut g, 0.0);
        assert!(matches!(
            gan_loss(&mut g, real, fake, GanMode::Log, GenAdvVariant::NonSaturating),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn cycle_and_identity_examples() {
        let mut g = Graph::new();
        let real = const_map(&mut g, 0.0);
        let rec = const_map(&mut g, 0.5);
        let l = cycle_loss(&mut g, real, rec).unwrap();
        assert!((g.scalar(l) - 0.5).abs() < 1e-12);

        let same = const_map(&mut g, 0.25);
        let l0 = cycle_loss(&mut g, same, same).unwrap();
        assert_eq!(g.scalar(l0), 0.0);

        // Binary image fully flipped -> mean |1 - 0| = 1.
        let ones = const_map(&mut g, 1.0);
        let zeros = const_map(&mut g, 0.0);
        let l1 = identity_loss(&mut g, ones, zeros).unwrap();
        assert!((g.scalar(l1) - 1.0).abs() < 1e-12);

        let bad = g.constant(ArrayD::zeros(vec![1, 2, 2]));
        assert!(cycle_loss(&mut g, real, bad).is_err());
    }

    #[test]
    fn random_pair_l1_matches_scalar_oracle() {
        use crate::autodiff::fdcheck::seeded_values;
        let a = seeded_values(&[3, 4, 5], 21);
        let b = seeded_values(&[3, 4, 5], 22);
        let mut g = Graph::new();
        let ia = g.constant(a.clone());
        let ib = g.constant(b.clone());
        let l = cycle_loss(&mut g, ia, ib).unwrap();
        let oracle: f64 =
            a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        assert!((g.scalar(l) - oracle).abs() < 1e-12);
    }

    #[test]
    fn per_view_objective_arithmetic() {
        let w = LossWeights {
            lambda1: 10.0,
            lambda2: 1.0,
            lambda3: 5.0,
            ..Default::default()
        };
        let mut g: Graph<f64> = Graph::new();
        let one = g.constant(ArrayD::from_elem(Vec::<usize>::new(), 1.0));
        let total = per_view_objective(&mut g, one, (one, one), (one, one), &w);
        assert!((g.scalar(total) - 22.0).abs() < 1e-12);

        let wz = LossWeights {
            lambda2: 0.0,
            lambda3: 0.0,
            ..w
        };
        let total = per_view_objective(&mut g, one, (one, one), (one, one), &wz);
        assert!((g.scalar(total) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn per_view_objective_matches_weighted_sum_oracle_and_is_linear() {
        let vals = [0.37, 0.11, 0.93, 0.55, 0.21];
        for l1 in [0.0, 2.5] {
            for l2 in [0.0, 1.25] {
                for l3 in [0.0, 7.0] {
                    let w = LossWeights {
                        lambda1: l1,
                        lambda2: l2,
                        lambda3: l3,
                        ..Default::default()
                    };
                    let mut g = Graph::new();
                    let ids: Vec<Tid> = vals
                        .iter()
                        .map(|v| g.constant(ArrayD::from_elem(Vec::<usize>::new(), *v)))
                        .collect();
                    let total =
                        per_view_objective(&mut g, ids[0], (ids[1], ids[2]), (ids[3], ids[4]), &w);
                    let oracle =
                        l1 * vals[0] + l2 * (vals[1] + vals[2]) + l3 * (vals[3] + vals[4]);
                    assert!((g.scalar(total) - oracle).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn total_objective_examples() {
        let w = LossWeights {
            lambda4: 1.0,
            ..Default::default()
        };
        let mut g: Graph<f64> = Graph::new();
        let v0 = g.constant(ArrayD::from_elem(Vec::<usize>::new(), 3.0));
        let v1 = g.constant(ArrayD::from_elem(Vec::<usize>::new(), 5.0));
        let p0 = g.constant(ArrayD::from_elem(Vec::<usize>::new(), 2.0));
        let p1 = g.constant(ArrayD::from_elem(Vec::<usize>::new(), 4.0));
        let with = total_objective(&mut g, &[v0, v1], Some((p0, p1)), &w);
        assert!((g.scalar(with) - 14.0).abs() < 1e-12);
        // lambda4 = 0: the baseline reduction is the bare per-view sum.
        let without = total_objective(&mut g, &[v0, v1], None, &w);
        assert!((g.scalar(without) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn total_objective_random_weighted_sum_oracle() {
        for l4 in [0.25, 1.0, 3.5] {
            let w = LossWeights {
                lambda4: l4,
                ..Default::default()
            };
            let vals = [1.7, 0.3, 0.9];
            let poses = (0.4, 2.2);
            let mut g = Graph::new();
            let ids: Vec<Tid> = vals
                .iter()
                .map(|v| g.constant(ArrayD::from_elem(Vec::<usize>::new(), *v)))
                .collect();
            let pa = g.constant(ArrayD::from_elem(Vec::<usize>::new(), poses.0));
            let pb = g.constant(ArrayD::from_elem(Vec::<usize>::new(), poses.1));
            let total = total_objective(&mut g, &ids, Some((pa, pb)), &w);
            let oracle = vals.iter().sum::<f64>() + l4 * (poses.0 + poses.1);
            assert!((g.scalar(total) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn gan_losses_nonneg_and_grads_match_fd() {
        use crate::autodiff::fdcheck::check_gradients_multi;
        for mode in [GanMode::Log, GanMode::LeastSquares] {
            check_gradients_multi(
                &[&[1, 3, 3], &[1, 3, 3]],
                |g, ids| {
                    let (gt, dt) =
                        gan_loss(g, ids[0], ids[1], mode, GenAdvVariant::NonSaturating).unwrap();
                    assert!(g.scalar(gt) >= 0.0);
                    assert!(g.scalar(dt) >= 0.0);
                    g.add(gt, dt)
                },
                1e-6,
                1e-9,
            );
        }
        // The saturating variant stays differentiable too.
        check_gradients_multi(
            &[&[1, 2, 2], &[1, 2, 2]],
            |g, ids| {
                let (gt, _dt) =
                    gan_loss(g, ids[0], ids[1], GanMode::Log, GenAdvVariant::Saturating).unwrap();
                gt
            },
            1e-6,
            1e-9,
        );
    }

    #[test]
    fn report_consistency_check() {
        let w = LossWeights::default();
        let mut r = ViewLossReport {
            view_id: "v0".into(),
            gan_g: 0.5,
            gan_d: 0.3,
            cycle: 0.2,
            identity: 0.1,
            per_view_total: 0.0,
        };
        r.per_view_total = w.lambda1 * r.cycle + w.lambda2 * r.gan_g + w.lambda3 * r.identity;
        assert!(r.is_consistent(&w));
        r.per_view_total += 0.01;
        assert!(!r.is_consistent(&w));
    }

    #[test]
    fn grads_flow_through_generator_side_only_where_expected() {
        let mut g = Graph::new();
        let real = const_map(&mut g, 0.8);
        let fake = leaf_map(&mut g, 0.2);
        let (gt, _dt) = gan_loss(
            &mut g,
            real,
            fake,
            GanMode::LeastSquares,
            GenAdvVariant::NonSaturating,
        )
        .unwrap();
        let grads = g.backward(gt);
        assert!(grads.get(fake).is_some());
        assert!(grads.get(real).is_none());
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights {
            lambda1: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            epsilon: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
