use std::sync::Arc;

use ndarray::Array2;

use super::{Image, ProjectionGeometry, Sinogram};
use crate::error::{check_shape, Result};

/// Discrete parallel-beam X-ray transform on a fixed grid.
///
/// Each sinogram entry is the exact length-weighted line integral of the
/// pixel-indicator image model: the ray is walked one strip at a time along
/// its dominant axis and each strip's chord is split between the (at most
/// two) pixels it crosses. [`XrayTransform::adjoint`] visits the same weights
/// in the same order, so the pair is an exact transpose.
#[derive(Clone, Debug)]
pub struct XrayTransform {
    geometry: ProjectionGeometry,
    width: usize,
    height: usize,
    pixel_size: f64,
    trig: Vec<(f64, f64)>,
    rays: Option<Arc<RayTable>>,
}

/// Every ray's `(pixel, weight)` list in trace order, row-compressed by
/// `angle · bins + bin`.
#[derive(Debug)]
struct RayTable {
    start: Vec<usize>,
    pixel: Vec<u32>,
    weight: Vec<f64>,
}

/// Largest estimated weight count that is cached (about 100 MB).
const CACHE_LIMIT: usize = 8_000_000;

impl XrayTransform {
    pub fn new(
        geometry: ProjectionGeometry,
        width: usize,
        height: usize,
        pixel_size: f64,
    ) -> Result<Self> {
        geometry.check_covers(width, height, pixel_size)?;
        let trig = geometry
            .angles_deg()
            .iter()
            .map(|a| {
                let r = a.to_radians();
                (r.cos(), r.sin())
            })
            .collect();
        let mut op = Self {
            geometry,
            width,
            height,
            pixel_size,
            trig,
            rays: None,
        };
        let (na, nb) = op.sinogram_dim();
        if na * nb * 2 * width.max(height) <= CACHE_LIMIT {
            op.rays = Some(Arc::new(op.tabulate()));
        }
        Ok(op)
    }

    #[cfg(test)]
    fn untabulated(mut self) -> Self {
        self.rays = None;
        self
    }

    fn tabulate(&self) -> RayTable {
        let (na, nb) = self.sinogram_dim();
        let mut table = RayTable {
            start: Vec::with_capacity(na * nb + 1),
            pixel: Vec::new(),
            weight: Vec::new(),
        };
        table.start.push(0);
        for a in 0..na {
            for k in 0..nb {
                self.trace(a, k, |p, w| {
                    table.pixel.push(p as u32);
                    table.weight.push(w);
                });
                table.start.push(table.pixel.len());
            }
        }
        table
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    /// `(height, width)` of the image side.
    pub fn image_dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// `(angles, bins)` of the sinogram side.
    pub fn sinogram_dim(&self) -> (usize, usize) {
        self.geometry.value_dim()
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    /// Calls `visit(flat_pixel_index, weight)` for every pixel crossed by
    /// the ray of view `angle` through detector bin `bin`.
    fn trace(&self, angle: usize, bin: usize, mut visit: impl FnMut(usize, f64)) {
        let (c, s) = self.trig[angle];
        let t = self.geometry.bin_center(bin);
        let h = self.pixel_size;
        let (w, hgt) = (self.width, self.height);
        let (px, py) = (t * c, t * s);
        let (dx, dy) = (-s, c);
        let half_w = w as f64 / 2.0;
        let half_h = hgt as f64 / 2.0;

        if dy.abs() >= dx.abs() {
            // Walk rows; within a row the ray's column coordinate moves by < 1.
            let slope = dx / dy;
            let chord = h / dy.abs();
            for row in 0..hgt {
                let y_hi = (half_h - row as f64) * h;
                let y_lo = y_hi - h;
                let a = (px + (y_lo - py) * slope) / h + half_w;
                let b = (px + (y_hi - py) * slope) / h + half_w;
                spread(a.min(b), a.max(b), w, |col, frac| {
                    visit(row * w + col, chord * frac)
                });
            }
        } else {
            let slope = dy / dx;
            let chord = h / dx.abs();
            for col in 0..w {
                let x_lo = (col as f64 - half_w) * h;
                let x_hi = x_lo + h;
                // Row index grows as y decreases.
                let a = half_h - (py + (x_lo - px) * slope) / h;
                let b = half_h - (py + (x_hi - px) * slope) / h;
                spread(a.min(b), a.max(b), hgt, |row, frac| {
                    visit(row * w + col, chord * frac)
                });
            }
        }
    }

    /// Applies the transform to raw image values `[row, col]`.
    pub fn forward(&self, image: &Array2<f64>) -> Array2<f64> {
        assert_eq!(image.dim(), self.image_dim(), "image shape mismatch");
        let flat = image.as_slice().expect("standard layout");
        let (na, nb) = self.sinogram_dim();
        let mut out = Array2::zeros((na, nb));
        if let Some(t) = &self.rays {
            for (ray, o) in out.iter_mut().enumerate() {
                let r = t.start[ray]..t.start[ray + 1];
                *o = t.pixel[r.clone()].iter().zip(&t.weight[r]).map(|(&p, &w)| w * flat[p as usize]).sum();
            }
            return out;
        }
        for a in 0..na {
            for k in 0..nb {
                let mut acc = 0.0;
                self.trace(a, k, |p, wgt| acc += wgt * flat[p]);
                out[[a, k]] = acc;
            }
        }
        out
    }

    /// Exact transpose of [`XrayTransform::forward`].
    pub fn adjoint(&self, sino: &Array2<f64>) -> Array2<f64> {
        assert_eq!(sino.dim(), self.sinogram_dim(), "sinogram shape mismatch");
        let mut out = Array2::<f64>::zeros(self.image_dim());
        let flat = out.as_slice_mut().expect("standard layout");
        let (na, nb) = self.sinogram_dim();
        if let Some(t) = &self.rays {
            for (ray, &v) in sino.iter().enumerate() {
                if v != 0.0 {
                    let r = t.start[ray]..t.start[ray + 1];
                    for (&p, &w) in t.pixel[r.clone()].iter().zip(&t.weight[r]) {
                        flat[p as usize] += w * v;
                    }
                }
            }
            return out;
        }
        for a in 0..na {
            for k in 0..nb {
                let v = sino[[a, k]];
                if v != 0.0 {
                    self.trace(a, k, |p, wgt| flat[p] += wgt * v);
                }
            }
        }
        out
    }

    /// Operator norm estimate by power iteration on `RᵀR`.
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        let mut x = Array2::from_elem(self.image_dim(), 1.0);
        let mut est = 0.0;
        for _ in 0..iterations.max(1) {
            let n = crate::field::norm(&x);
            if n == 0.0 {
                return 0.0;
            }
            x.mapv_inplace(|v| v / n);
            x = self.adjoint(&self.forward(&x));
            est = crate::field::norm(&x).sqrt();
        }
        est
    }
}

/// Splits the index interval `[lo, hi]` (width ≤ 1) into per-cell fractions.
/// A degenerate interval goes wholly to the half-open cell containing it.
#[inline]
fn spread(lo: f64, hi: f64, n: usize, mut visit: impl FnMut(usize, f64)) {
    let width = hi - lo;
    let n_f = n as f64;
    if hi < 0.0 || lo >= n_f {
        return;
    }
    if width <= 1e-12 {
        let cell = lo.floor();
        if cell >= 0.0 && cell < n_f {
            visit(cell as usize, 1.0);
        }
        return;
    }
    let first = lo.floor();
    let edge = first + 1.0;
    if first >= 0.0 {
        let overlap = hi.min(edge) - lo;
        if overlap > 0.0 {
            visit(first as usize, overlap / width);
        }
    }
    if hi > edge && edge < n_f {
        visit(edge as usize, (hi - edge) / width);
    }
}

/// Projects `image` with a geometry built for its grid.
pub fn forward_project(image: &Image, geometry: &ProjectionGeometry) -> Result<Sinogram> {
    let op = XrayTransform::new(
        geometry.clone(),
        image.width(),
        image.height(),
        image.pixel_size,
    )?;
    Ok(Sinogram {
        geometry: geometry.clone(),
        values: op.forward(&image.values),
    })
}

/// Adjoint of [`forward_project`] onto a `width × height` grid.
pub fn back_project(
    sinogram: &Sinogram,
    width: usize,
    height: usize,
    pixel_size: f64,
) -> Result<Image> {
    check_shape(sinogram.geometry.value_dim(), sinogram.values.dim())?;
    let op = XrayTransform::new(sinogram.geometry.clone(), width, height, pixel_size)?;
    Ok(Image {
        values: op.adjoint(&sinogram.values),
        pixel_size,
    })
}
