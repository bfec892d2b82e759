use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::all_finite;

/// A reconstruction on a square-pixel grid centred on the origin.
///
/// `values` is indexed `[row, col]`; row 0 is the top of the image (largest
/// `y`), column 0 the left edge (smallest `x`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub values: Array2<f64>,
    pub pixel_size: f64,
}

impl Image {
    pub fn new(values: Array2<f64>, pixel_size: f64) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Config("image must have at least one pixel".into()));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::Config(format!("pixel size {pixel_size} must be positive")));
        }
        if !all_finite(&values) {
            return Err(Error::Config("image contains non-finite values".into()));
        }
        Ok(Self { values, pixel_size })
    }

    pub fn zeros(width: usize, height: usize, pixel_size: f64) -> Self {
        Self {
            values: Array2::zeros((height, width)),
            pixel_size,
        }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }
}

/// Parallel-beam acquisition geometry.
///
/// A view at angle `θ` integrates along rays with direction `(-sin θ, cos θ)`;
/// the detector coordinate of a point is `t = x cos θ + y sin θ`. At 0° the
/// rays run vertically, so each detector bin sees one image column.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionGeometry {
    angles_deg: Vec<f64>,
    detector_count: usize,
    detector_spacing: f64,
    detector_offset: f64,
}

impl ProjectionGeometry {
    pub fn new(
        angles_deg: Vec<f64>,
        detector_count: usize,
        detector_spacing: f64,
        detector_offset: f64,
    ) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::Config("geometry needs at least one angle".into()));
        }
        if detector_count == 0 {
            return Err(Error::Config("detector_count must be at least 1".into()));
        }
        if !(detector_spacing > 0.0 && detector_spacing.is_finite()) {
            return Err(Error::Config("detector_spacing must be positive".into()));
        }
        if !detector_offset.is_finite() {
            return Err(Error::Config("detector_offset must be finite".into()));
        }
        if angles_deg.iter().any(|a| !(0.0..180.0).contains(a)) {
            return Err(Error::Config("angles must lie in [0°, 180°)".into()));
        }
        if angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("angles must be strictly increasing".into()));
        }
        Ok(Self {
            angles_deg,
            detector_count,
            detector_spacing,
            detector_offset,
        })
    }

    /// `count` angles spaced `step_deg` apart starting at `start_deg`.
    pub fn uniform(
        count: usize,
        start_deg: f64,
        step_deg: f64,
        detector_count: usize,
        detector_spacing: f64,
    ) -> Result<Self> {
        let angles = (0..count).map(|i| start_deg + step_deg * i as f64).collect();
        Self::new(angles, detector_count, detector_spacing, 0.0)
    }

    /// Enough unit-pixel bins to cover the grid diagonal plus a four-bin margin.
    ///
    /// A 200×200 grid gets 287 bins.
    pub fn default_detector_count(width: usize, height: usize) -> usize {
        let side = width.max(height) as f64;
        (std::f64::consts::SQRT_2 * side).ceil() as usize + 4
    }

    /// 180 views at 1° with the default detector for a `width × height` grid.
    pub fn full_degree_grid(width: usize, height: usize, pixel_size: f64) -> Self {
        Self::uniform(
            180,
            0.0,
            1.0,
            Self::default_detector_count(width, height),
            pixel_size,
        )
        .expect("static geometry is valid")
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn angle_count(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn detector_count(&self) -> usize {
        self.detector_count
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    pub fn detector_offset(&self) -> f64 {
        self.detector_offset
    }

    /// Signed detector coordinate of bin `k`'s centre.
    pub fn bin_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5 - self.detector_count as f64 / 2.0) * self.detector_spacing
            + self.detector_offset
    }

    /// Storage shape of sinogram values: `(angles, bins)`.
    pub fn value_dim(&self) -> (usize, usize) {
        (self.angles_deg.len(), self.detector_count)
    }

    /// Conventional `bins × angles` shape, e.g. `287×180`.
    pub fn shape(&self) -> (usize, usize) {
        (self.detector_count, self.angles_deg.len())
    }

    /// Checks that the detector spans the diagonal of a grid of the given
    /// physical size.
    pub fn check_covers(&self, width: usize, height: usize, pixel_size: f64) -> Result<()> {
        let half_diag = 0.5 * pixel_size * ((width * width + height * height) as f64).sqrt();
        let half_span = 0.5 * self.detector_count as f64 * self.detector_spacing;
        let lo = self.detector_offset - half_span;
        let hi = self.detector_offset + half_span;
        let slack = 1e-9 * half_diag.max(1.0);
        if lo > -half_diag + slack || hi < half_diag - slack {
            return Err(Error::Config(format!(
                "detector span [{lo:.4}, {hi:.4}] does not cover the image diagonal ±{half_diag:.4}"
            )));
        }
        Ok(())
    }
}

/// Line integrals indexed `[angle, bin]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub geometry: ProjectionGeometry,
    pub values: Array2<f64>,
}

impl Sinogram {
    pub fn new(geometry: ProjectionGeometry, values: Array2<f64>) -> Result<Self> {
        crate::error::check_shape(geometry.value_dim(), values.dim())?;
        if !all_finite(&values) {
            return Err(Error::Config("sinogram contains non-finite values".into()));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: ProjectionGeometry) -> Self {
        let values = Array2::zeros(geometry.value_dim());
        Self { geometry, values }
    }
}
