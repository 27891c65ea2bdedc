//! Anti-aliased software rasterizer for the synthetic articulated figure:
//! capsules for bones, discs for joints, painted over a flat background.
//! Coverage-based edge blending keeps drawn centroids subpixel-accurate,
//! which the renderer-vs-projection consistency checks rely on.

use ndarray::Array3;

use crate::models::ImageTensor;

#[derive(Debug, Clone, Copy)]
pub struct Rgb(pub f32, pub f32, pub f32);

pub struct Canvas {
    data: Array3<f32>,
    height: usize,
    width: usize,
}

impl Canvas {
    pub fn new(height: usize, width: usize, background: Rgb) -> Self {
        let mut data = Array3::zeros((3, height, width));
        for (c, v) in [background.0, background.1, background.2].iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), c).fill(*v);
        }
        Self {
            data,
            height,
            width,
        }
    }

    fn blend(&mut self, x: usize, y: usize, color: Rgb, alpha: f32) {
        if alpha <= 0.0 {
            return;
        }
        let a = alpha.min(1.0);
        for (c, v) in [color.0, color.1, color.2].iter().enumerate() {
            let old = self.data[[c, y, x]];
            self.data[[c, y, x]] = old * (1.0 - a) + v * a;
        }
    }

    /// Coverage of a pixel center at signed distance `d` from a shape of
    /// radius `r` (1 inside, 0 outside, linear ramp over one pixel).
    fn coverage(d: f32, r: f32) -> f32 {
        (r + 0.5 - d).clamp(0.0, 1.0)
    }

    pub fn draw_disc(&mut self, center: [f64; 2], radius: f64, color: Rgb) {
        let (cx, cy, r) = (center[0] as f32, center[1] as f32, radius as f32);
        let x0 = (cx - r - 1.5).floor().max(0.0) as usize;
        let x1 = ((cx + r + 1.5).ceil() as usize).min(self.width.saturating_sub(1));
        let y0 = (cy - r - 1.5).floor().max(0.0) as usize;
        let y1 = ((cy + r + 1.5).ceil() as usize).min(self.height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                self.blend(x, y, color, Self::coverage(d, r));
            }
        }
    }

    pub fn draw_capsule(&mut self, a: [f64; 2], b: [f64; 2], radius: f64, color: Rgb) {
        let (ax, ay, bx, by, r) = (a[0] as f32, a[1] as f32, b[0] as f32, b[1] as f32, radius as f32);
        let x0 = (ax.min(bx) - r - 1.5).floor().max(0.0) as usize;
        let x1 = ((ax.max(bx) + r + 1.5).ceil() as usize).min(self.width.saturating_sub(1));
        let y0 = (ay.min(by) - r - 1.5).floor().max(0.0) as usize;
        let y1 = ((ay.max(by) + r + 1.5).ceil() as usize).min(self.height.saturating_sub(1));
        let (dx, dy) = (bx - ax, by - ay);
        let len_sq = dx * dx + dy * dy;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f32 - ax, y as f32 - ay);
                let t = if len_sq > 0.0 {
                    ((px * dx + py * dy) / len_sq).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (px - t * dx, py - t * dy);
                let d = (qx * qx + qy * qy).sqrt();
                self.blend(x, y, color, Self::coverage(d, r));
            }
        }
    }

    pub fn into_image(self) -> ImageTensor {
        ImageTensor::new(self.data).expect("canvas values are in range")
    }
}
