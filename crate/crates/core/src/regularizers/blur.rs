use ndarray::Array2;

/// Sampled 1D Gaussian truncated at `4σ` and renormalised to unit sum.
#[derive(Clone, Debug)]
pub struct GaussianKernel {
    weights: Vec<f64>,
    radius: usize,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Self {
        if sigma <= 0.0 {
            return Self {
                weights: vec![1.0],
                radius: 0,
            };
        }
        let radius = (4.0 * sigma).ceil() as usize;
        let mut weights: Vec<f64> = (0..=2 * radius)
            .map(|k| {
                let x = k as f64 - radius as f64;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { weights, radius }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_identity(&self) -> bool {
        self.radius == 0
    }

    /// Separable blur with replicate padding.
    pub fn apply(&self, f: &Array2<f64>) -> Array2<f64> {
        if self.is_identity() {
            return f.clone();
        }
        let (rows, cols) = f.dim();
        let src = f.as_standard_layout();
        let src = src.as_slice().unwrap();
        let mut tmp = vec![0.0; rows * cols];
        for i in 0..rows {
            self.pass_forward(&src[i * cols..(i + 1) * cols], 1, &mut tmp[i * cols..], 1, cols);
        }
        let mut out = vec![0.0; rows * cols];
        for j in 0..cols {
            self.pass_forward(&tmp[j..], cols, &mut out[j..], cols, rows);
        }
        Array2::from_shape_vec((rows, cols), out).unwrap()
    }

    /// Exact transpose of [`GaussianKernel::apply`]; differs from it only
    /// near the border, where replicate padding folds weight back inward.
    pub fn apply_adjoint(&self, f: &Array2<f64>) -> Array2<f64> {
        if self.is_identity() {
            return f.clone();
        }
        let (rows, cols) = f.dim();
        let src = f.as_standard_layout();
        let src = src.as_slice().unwrap();
        let mut tmp = vec![0.0; rows * cols];
        for j in 0..cols {
            self.pass_adjoint(&src[j..], cols, &mut tmp[j..], cols, rows);
        }
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            self.pass_adjoint(&tmp[i * cols..], 1, &mut out[i * cols..], 1, cols);
        }
        Array2::from_shape_vec((rows, cols), out).unwrap()
    }

    fn pass_forward(&self, src: &[f64], ss: usize, dst: &mut [f64], ds: usize, n: usize) {
        let r = self.radius as isize;
        let last = n as isize - 1;
        for i in 0..n as isize {
            let mut acc = 0.0;
            for (k, w) in self.weights.iter().enumerate() {
                let idx = (i + k as isize - r).clamp(0, last) as usize;
                acc += w * src[idx * ss];
            }
            dst[i as usize * ds] = acc;
        }
    }

    fn pass_adjoint(&self, src: &[f64], ss: usize, dst: &mut [f64], ds: usize, n: usize) {
        let r = self.radius as isize;
        let last = n as isize - 1;
        for i in 0..n {
            dst[i * ds] = 0.0;
        }
        for i in 0..n as isize {
            let v = src[i as usize * ss];
            for (k, w) in self.weights.iter().enumerate() {
                let idx = (i + k as isize - r).clamp(0, last) as usize;
                dst[idx * ds] += w * v;
            }
        }
    }
}

/// Convolution with the heat kernel of standard deviation `sigma` (pixels).
pub fn gaussian_blur(f: &Array2<f64>, sigma: f64) -> Array2<f64> {
    GaussianKernel::new(sigma).apply(f)
}

pub fn gaussian_blur_adjoint(f: &Array2<f64>, sigma: f64) -> Array2<f64> {
    GaussianKernel::new(sigma).apply_adjoint(f)
}
