//! Differentiable pose ops: confidence-weighted DLT triangulation (solved as
//! the smallest eigenpair of the 4x4 normal matrix, with an analytic
//! eigenvector-perturbation backward) and the smooth-MSE pose distance.

use ndarray::ArrayD;

use super::graph::{BackwardOp, GradSink, Graph, Tid, Values};
use super::scalar::Scalar;

/// Relative eigenvalue threshold for declaring the DLT system rank-deficient
/// (matches the geometry module's singular-value threshold, squared).
const RANK_EPS_SQ: f64 = 1e-24;

/// Minimum spectral gap (relative to the largest eigenvalue) below which the
/// eigenvector derivative is numerically meaningless and gradients for the
/// joint are dropped.
const GAP_EPS: f64 = 1e-18;

/// Per-view inputs to the triangulation node. `xs`, `ys`, `conf` are (J,)
/// tensors of full-frame pixel coordinates and DLT weights; `projection` is
/// the camera's 3x4 matrix (rows).
#[derive(Clone, Copy)]
pub struct ViewObservation {
    pub xs: Tid,
    pub ys: Tid,
    pub conf: Tid,
    pub projection: [[f64; 4]; 3],
}

/// Jacobi eigendecomposition of a symmetric 4x4 matrix. Returns eigenvalues
/// in ascending order and eigenvectors as matching columns.
pub(crate) fn eig_sym4(m: [[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut a = m;
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let tol = (norm * 1e-15).max(f64::MIN_POSITIVE);
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..4 {
            for q in (p + 1)..4 {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if a[p][q].abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..4 {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut vals = [a[0][0], a[1][1], a[2][2], a[3][3]];
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let sorted_vals = [vals[order[0]], vals[order[1]], vals[order[2]], vals[order[3]]];
    let mut sorted_vecs = [[0.0; 4]; 4];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..4 {
            sorted_vecs[k][dst] = v[k][src];
        }
    }
    vals = sorted_vals;
    (vals, sorted_vecs)
}

struct JointSolve {
    /// Unit homogeneous solution (smallest eigenvector of A^T A).
    h: [f64; 4],
    eigenvalues: [f64; 4],
    eigenvectors: [[f64; 4]; 4],
}

/// Builds the weighted DLT normal matrix for one joint and solves it.
/// Returns `None` when the system is rank-deficient or the solution is at
/// infinity.
fn solve_joint(rows: &[[f64; 4]]) -> Option<JointSolve> {
    let mut m = [[0.0; 4]; 4];
    for row in rows {
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let (vals, vecs) = eig_sym4(m);
    // vals are sigma^2 in ascending order; rank < 3 when the second-smallest
    // is negligible against the largest.
    if vals[1] <= RANK_EPS_SQ * vals[3].max(f64::MIN_POSITIVE) {
        return None;
    }
    let h = [vecs[0][0], vecs[1][0], vecs[2][0], vecs[3][0]];
    if h[3].abs() <= 1e-12 {
        return None;
    }
    Some(JointSolve {
        h,
        eigenvalues: vals,
        eigenvectors: vecs,
    })
}

fn dlt_rows(proj: &[[f64; 4]; 3], u: f64, v: f64, w: f64) -> [[f64; 4]; 2] {
    let mut rows = [[0.0; 4]; 2];
    for c in 0..4 {
        rows[0][c] = w * (u * proj[2][c] - proj[0][c]);
        rows[1][c] = w * (v * proj[2][c] - proj[1][c]);
    }
    rows
}

struct TriangulateBack {
    views: Vec<ViewObservation>,
    valid: Vec<bool>,
}

impl<T: Scalar> BackwardOp<T> for TriangulateBack {
    fn backward(&self, grad: &ArrayD<T>, values: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let n_joints = grad.shape()[0];
        let n_views = self.views.len();
        let mut dx = vec![ArrayD::<T>::zeros(vec![n_joints]); n_views];
        let mut dy = vec![ArrayD::<T>::zeros(vec![n_joints]); n_views];
        let mut dc = vec![ArrayD::<T>::zeros(vec![n_joints]); n_views];

        for j in 0..n_joints {
            if !self.valid[j] {
                continue;
            }
            let g3 = [
                grad[[j, 0]].cast_f64(),
                grad[[j, 1]].cast_f64(),
                grad[[j, 2]].cast_f64(),
            ];
            if g3 == [0.0, 0.0, 0.0] {
                continue;
            }
            // Rebuild the stacked system exactly as the forward pass did.
            let mut rows = Vec::with_capacity(2 * n_views);
            let mut obs = Vec::with_capacity(n_views);
            for view in &self.views {
                let u = values.get(view.xs)[[j]].cast_f64();
                let v = values.get(view.ys)[[j]].cast_f64();
                let w = values.get(view.conf)[[j]].cast_f64().max(0.0);
                let r = dlt_rows(&view.projection, u, v, w);
                rows.push(r[0]);
                rows.push(r[1]);
                obs.push((u, v, w));
            }
            let Some(sol) = solve_joint(&rows) else {
                continue;
            };
            let (vals, vecs, h) = (sol.eigenvalues, sol.eigenvectors, sol.h);
            let gap = vals[1] - vals[0];
            if gap <= GAP_EPS * vals[3].max(f64::MIN_POSITIVE) {
                continue; // locally non-differentiable; drop this joint
            }
            let x = [h[0] / h[3], h[1] / h[3], h[2] / h[3]];
            let gdotx = g3[0] * x[0] + g3[1] * x[1] + g3[2] * x[2];
            let gh = [
                g3[0] / h[3],
                g3[1] / h[3],
                g3[2] / h[3],
                -gdotx / h[3],
            ];
            // dv_min = (lambda_min I - M)^+ dM v_min, so
            // grad_M = [(lambda_min I - M)^+ g_h] v^T with the pseudo-inverse
            // assembled from the remaining eigenpairs.
            let mut pg = [0.0; 4];
            for k in 1..4 {
                let denom = vals[0] - vals[k];
                let mut dot = 0.0;
                for i in 0..4 {
                    dot += vecs[i][k] * gh[i];
                }
                let scale = dot / denom;
                for i in 0..4 {
                    pg[i] += scale * vecs[i][k];
                }
            }
            // grad_A = A (G_M + G_M^T) with G_M = pg h^T.
            // Compute per DLT row: grad_A[r] = A[r] . (pg h^T + h pg^T).
            let mut gm = [[0.0; 4]; 4];
            for i in 0..4 {
                for k in 0..4 {
                    gm[i][k] = pg[i] * h[k] + h[i] * pg[k];
                }
            }
            for (vi, view) in self.views.iter().enumerate() {
                let (u, v, w) = obs[vi];
                let mut grad_rows = [[0.0; 4]; 2];
                for (ri, row) in [&rows[2 * vi], &rows[2 * vi + 1]].iter().enumerate() {
                    for k in 0..4 {
                        let mut acc = 0.0;
                        for i in 0..4 {
                            acc += row[i] * gm[i][k];
                        }
                        grad_rows[ri][k] = acc;
                    }
                }
                let p = &view.projection;
                let mut du = 0.0;
                let mut dv = 0.0;
                let mut dw = 0.0;
                for k in 0..4 {
                    du += grad_rows[0][k] * w * p[2][k];
                    dv += grad_rows[1][k] * w * p[2][k];
                    dw += grad_rows[0][k] * (u * p[2][k] - p[0][k])
                        + grad_rows[1][k] * (v * p[2][k] - p[1][k]);
                }
                dx[vi][[j]] = dx[vi][[j]] + T::cast_from(du);
                dy[vi][[j]] = dy[vi][[j]] + T::cast_from(dv);
                dc[vi][[j]] = dc[vi][[j]] + T::cast_from(dw);
            }
        }
        let grads = dx.into_iter().zip(dy).zip(dc);
        for (view, ((gx, gy), gc)) in self.views.iter().zip(grads) {
            sink.add(view.xs, gx);
            sink.add(view.ys, gy);
            sink.add(view.conf, gc);
        }
    }
}

struct SmoothMseBack<T: Scalar> {
    pred: Tid,
    target: ArrayD<T>,
    valid: Vec<bool>,
    epsilon: f64,
    mse: f64,
}

impl<T: Scalar> BackwardOp<T> for SmoothMseBack<T> {
    fn backward(&self, grad: &ArrayD<T>, values: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let g = grad.iter().next().expect("scalar").cast_f64();
        let n = self.valid.iter().filter(|v| **v).count();
        let factor = if self.mse < self.epsilon {
            1.0
        } else {
            0.1 * self.mse.powf(-0.9) * self.epsilon.powf(0.9)
        };
        let pred = values.get(self.pred);
        let mut dp = ArrayD::<T>::zeros(pred.shape().to_vec());
        let scale = g * factor * 2.0 / (3.0 * n as f64);
        for (j, &ok) in self.valid.iter().enumerate() {
            if !ok {
                continue;
            }
            for c in 0..3 {
                let d = pred[[j, c]].cast_f64() - self.target[[j, c]].cast_f64();
                dp[[j, c]] = T::cast_from(scale * d);
            }
        }
        sink.add(self.pred, dp);
    }
}

impl<T: Scalar> Graph<T> {
    /// Joint-wise confidence-weighted DLT triangulation across views.
    ///
    /// Inputs are (J,) coordinate/weight tensors per view; the output is a
    /// (J, 3) tensor of world points plus a per-joint validity mask. Joints
    /// with fewer than two positive-weight views, or with a rank-deficient /
    /// at-infinity solve, come back invalid (zero row, no gradient).
    /// Gradients flow into the coordinates and the weights of every view.
    pub fn triangulate(&mut self, views: &[ViewObservation]) -> (Tid, Vec<bool>) {
        assert!(views.len() >= 2, "triangulate needs at least two views");
        let n_joints = self.value(views[0].xs).shape()[0];
        for view in views {
            assert_eq!(self.value(view.xs).shape(), [n_joints]);
            assert_eq!(self.value(view.ys).shape(), [n_joints]);
            assert_eq!(self.value(view.conf).shape(), [n_joints]);
        }
        let mut out = ArrayD::<T>::zeros(vec![n_joints, 3]);
        let mut valid = vec![false; n_joints];
        for j in 0..n_joints {
            let mut rows = Vec::with_capacity(2 * views.len());
            let mut positive = 0usize;
            for view in views {
                let u = self.value(view.xs)[[j]].cast_f64();
                let v = self.value(view.ys)[[j]].cast_f64();
                let w = self.value(view.conf)[[j]].cast_f64().max(0.0);
                if w > 0.0 {
                    positive += 1;
                }
                let r = dlt_rows(&view.projection, u, v, w);
                rows.push(r[0]);
                rows.push(r[1]);
            }
            if positive < 2 {
                continue;
            }
            if let Some(sol) = solve_joint(&rows) {
                let h = sol.h;
                for c in 0..3 {
                    out[[j, c]] = T::cast_from(h[c] / h[3]);
                }
                valid[j] = true;
            }
        }
        let ids: Vec<Tid> = views.iter().flat_map(|v| [v.xs, v.ys, v.conf]).collect();
        let needs = self.any_needs_grad(&ids);
        let back = needs.then(|| {
            Box::new(TriangulateBack {
                views: views.to_vec(),
                valid: valid.clone(),
            }) as Box<dyn BackwardOp<T>>
        });
        let id = self.push(out, needs, back);
        (id, valid)
    }

    /// Smooth-MSE distance between a (J, 3) prediction and a constant target
    /// over the given jointly valid joints: mean squared per-coordinate error
    /// `M` below `epsilon`, `M^0.1 * epsilon^0.9` above it.
    pub fn smooth_mse_to(
        &mut self,
        pred: Tid,
        target: &ArrayD<T>,
        valid: &[bool],
        epsilon: f64,
    ) -> Tid {
        assert!(epsilon > 0.0, "smooth_mse epsilon must be positive");
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "smooth_mse shapes");
        let n = valid.iter().filter(|v| **v).count();
        assert!(n > 0, "smooth_mse needs at least one jointly valid joint");
        let mut sum = 0.0;
        for (j, &ok) in valid.iter().enumerate() {
            if !ok {
                continue;
            }
            for c in 0..3 {
                let d = p[[j, c]].cast_f64() - target[[j, c]].cast_f64();
                sum += d * d;
            }
        }
        let mse = sum / (3.0 * n as f64);
        let value = crate::geometry::smooth_mse_branch(mse, epsilon);
        let needs = self.needs_grad(pred);
        self.push(
            ArrayD::from_elem(Vec::<usize>::new(), T::cast_from(value)),
            needs,
            needs.then(|| {
                Box::new(SmoothMseBack {
                    pred,
                    target: target.clone(),
                    valid: valid.to_vec(),
                    epsilon,
                    mse,
                }) as Box<dyn BackwardOp<T>>
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::fdcheck::{check_gradients_multi, seeded_values};
    use super::*;
    use crate::geometry::{triangulate_point, CameraView};
    use nalgebra::{Matrix3, Vector3};

    fn proj_rows(cam: &CameraView) -> [[f64; 4]; 3] {
        let mut rows = [[0.0; 4]; 3];
        for r in 0..3 {
            for c in 0..4 {
                rows[r][c] = cam.projection[(r, c)];
            }
        }
        rows
    }

    fn test_cameras() -> Vec<CameraView> {
        let mk = |id: &str, angle: f64, height: f64| {
            let c = Vector3::new(4.0 * angle.cos(), height, 4.0 * angle.sin());
            let fwd = (-c).normalize();
            let up0 = Vector3::new(0.0, 1.0, 0.0);
            let right = fwd.cross(&up0).normalize();
            let up = right.cross(&fwd);
            let r = Matrix3::from_rows(&[right.transpose(), (-up).transpose(), fwd.transpose()]);
            let k = Matrix3::new(2.0, 0.0, 0.5, 0.0, 2.0, 0.4, 0.0, 0.0, 1.0);
            CameraView::from_krt(id, &k, &r, &(-r * c), (4, 4)).unwrap()
        };
        vec![mk("a", 0.3, 1.0), mk("b", 1.9, -0.5), mk("c", 3.8, 0.4)]
    }

    #[test]
    fn eig_sym4_diagonalizes() {
        let m = [
            [4.0, 1.0, 0.5, 0.2],
            [1.0, 3.0, -0.7, 0.1],
            [0.5, -0.7, 2.0, 0.3],
            [0.2, 0.1, 0.3, 1.0],
        ];
        let (vals, vecs) = eig_sym4(m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..4 {
            // M v_k = lambda_k v_k
            for i in 0..4 {
                let mut mv = 0.0;
                for j in 0..4 {
                    mv += m[i][j] * vecs[j][k];
                }
                assert!((mv - vals[k] * vecs[i][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_matches_geometry_svd_route() {
        // The graph op and the nalgebra-SVD geometry route must agree.
        let cams = test_cameras();
        let target = [0.3, 0.2, -0.4];
        let px: Vec<[f64; 2]> = cams
            .iter()
            .map(|c| c.project_point(target, 0).unwrap())
            .collect();
        let weights = [1.0, 0.6, 1.4];

        let mut g: Graph<f64> = Graph::new();
        let views: Vec<ViewObservation> = cams
            .iter()
            .zip(&px)
            .zip(&weights)
            .map(|((cam, p), &w)| ViewObservation {
                xs: g.constant(ndarray::arr1(&[p[0]]).into_dyn()),
                ys: g.constant(ndarray::arr1(&[p[1]]).into_dyn()),
                conf: g.constant(ndarray::arr1(&[w]).into_dyn()),
                projection: proj_rows(cam),
            })
            .collect();
        let (out, valid) = g.triangulate(&views);
        assert!(valid[0]);

        let obs: Vec<(&CameraView, [f64; 2], f64)> = cams
            .iter()
            .zip(&px)
            .zip(&weights)
            .map(|((c, p), &w)| (c, *p, w))
            .collect();
        let svd_route = triangulate_point(&obs).unwrap();
        for c in 0..3 {
            assert!(
                (g.value(out)[[0, c]] - svd_route[c]).abs() < 1e-9,
                "coord {c}"
            );
        }
    }

    #[test]
    fn insufficient_views_invalidate_joint() {
        let cams = test_cameras();
        let mut g: Graph<f64> = Graph::new();
        let views: Vec<ViewObservation> = cams
            .iter()
            .enumerate()
            .map(|(i, cam)| ViewObservation {
                xs: g.constant(ndarray::arr1(&[0.5]).into_dyn()),
                ys: g.constant(ndarray::arr1(&[0.5]).into_dyn()),
                conf: g.constant(ndarray::arr1(&[if i == 0 { 1.0 } else { 0.0 }]).into_dyn()),
                projection: proj_rows(cam),
            })
            .collect();
        let (_, valid) = g.triangulate(&views);
        assert!(!valid[0]);
    }

    #[test]
    fn triangulation_gradients_match_finite_differences() {
        let cams = test_cameras();
        let projections: Vec<[[f64; 4]; 3]> = cams.iter().map(proj_rows).collect();
        // 2 joints; inputs are coords (pixels ~O(1) here) and positive confs.
        let target = seeded_values(&[2, 3], 99);
        check_gradients_multi(
            &[&[2], &[2], &[2], &[2], &[2], &[2], &[2], &[2], &[2]],
            |g, ids| {
                let views: Vec<ViewObservation> = (0..3)
                    .map(|v| ViewObservation {
                        xs: ids[3 * v],
                        ys: ids[3 * v + 1],
                        conf: g.add_scalar(ids[3 * v + 2], 1.1), // keep positive
                        projection: projections[v],
                    })
                    .collect();
                let (out, valid) = g.triangulate(&views);
                assert!(valid.iter().all(|v| *v));
                let t = target.mapv(|v| v);
                g.smooth_mse_to(out, &t, &valid, 1e6)
            },
            2e-5,
            1e-9,
        );
    }

    #[test]
    fn smooth_mse_branches_and_gradients() {
        // Below-threshold branch value.
        let mut g: Graph<f64> = Graph::new();
        let pred = g.leaf(ndarray::arr2(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]).into_dyn());
        let target = ndarray::arr2(&[[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]]).into_dyn();
        let d = g.smooth_mse_to(pred, &target, &[true, true], 400.0);
        assert!((g.scalar(d) - 0.5).abs() < 1e-12); // 3 coords off by 1 over 6

        // Above-threshold branch, both value and gradient.
        let eps = 0.05;
        for shift in [0.0, 3.0] {
            check_gradients_multi(
                &[&[2, 3]],
                |g, ids| {
                    let p = g.add_scalar(ids[0], shift);
                    let target = ndarray::ArrayD::zeros(vec![2, 3]);
                    g.smooth_mse_to(p, &target, &[true, true], eps)
                },
                1e-6,
                1e-9,
            );
        }
    }

    #[test]
    fn invalid_joints_are_masked_out() {
        let mut g: Graph<f64> = Graph::new();
        let pred = g.leaf(ndarray::arr2(&[[5.0, 5.0, 5.0], [1.0, 1.0, 1.0]]).into_dyn());
        let target = ndarray::ArrayD::zeros(vec![2, 3]);
        let d = g.smooth_mse_to(pred, &target, &[false, true], 400.0);
        assert!((g.scalar(d) - 1.0).abs() < 1e-12);
        let grads = g.backward(d);
        let gp = grads.get(pred).unwrap();
        assert_eq!(gp[[0, 0]], 0.0, "masked joint receives no gradient");
        assert!(gp[[1, 0]] != 0.0);
    }
}
