//! Synthetic limited-angle datasets: phantom, wedge mask and noisy data.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::phantoms::{add_gaussian_noise, faceted_particle, shepp_logan_modified, two_rings};
use crate::tomo::{make_limited_angle_mask, wedge_angles, ProjectionGeometry, SampleMask, Sinogram, XrayTransform};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    Rings,
    SheppLogan,
    Particle,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rings" => Ok(Self::Rings),
            "shepp-logan" | "shepp_logan" => Ok(Self::SheppLogan),
            "particle" => Ok(Self::Particle),
            _ => Err(Error::Config(format!("unknown phantom '{s}' (rings, shepp-logan, particle)"))),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rings => "rings",
            Self::SheppLogan => "shepp-logan",
            Self::Particle => "particle",
        })
    }
}

pub fn make_phantom(kind: PhantomKind, size: usize) -> Result<Array2<f64>> {
    if size < 16 {
        return Err(Error::Config(format!("grid size must be at least 16, got {size}")));
    }
    Ok(match kind {
        PhantomKind::Rings => two_rings(size).values,
        PhantomKind::SheppLogan => shepp_logan_modified(size, size)?.values,
        PhantomKind::Particle => faceted_particle(size).values,
    })
}

/// Acquisition settings of a synthetic experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub phantom: PhantomKind,
    /// Grid side in pixels.
    pub size: usize,
    /// Side length of the imaged square; `None` means unit pixels.
    /// Detector bins are as wide as pixels either way.
    pub extent: Option<f64>,
    /// Full angular grid: `views` angles from 0 in steps of `angle_step`.
    pub views: usize,
    pub angle_step: f64,
    /// Acquired wedge, in degrees modulo 180.
    pub wedge_center: f64,
    pub wedge_width: f64,
    /// Keep only every `stride`-th view of the grid inside the wedge.
    pub stride: usize,
    /// Noise standard deviation as a fraction of the peak clean signal.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            phantom: PhantomKind::Rings,
            size: 64,
            extent: None,
            views: 180,
            angle_step: 1.0,
            wedge_center: 0.0,
            wedge_width: 60.0,
            stride: 1,
            noise: 0.05,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub phantom: Array2<f64>,
    pub op: XrayTransform,
    pub mask: SampleMask,
    /// Noise-free sinogram over every view.
    pub clean: Array2<f64>,
    /// Noisy data, zero off the acquired region.
    pub data: Array2<f64>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.stride == 0 || !(self.angle_step > 0.0) {
            return Err(Error::Config("views, stride and angle_step must be positive".into()));
        }
        if let Some(e) = self.extent {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("extent must be positive, got {e}")));
            }
        }
        if !(self.wedge_width > 0.0 && self.wedge_width <= 180.0) {
            return Err(Error::Config(format!("wedge_width must lie in (0, 180], got {}", self.wedge_width)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }

    pub fn pixel_size(&self) -> f64 {
        self.extent.map_or(1.0, |e| e / self.size as f64)
    }

    pub fn geometry(&self) -> Result<ProjectionGeometry> {
        let bins = ProjectionGeometry::default_detector_count(self.size, self.size);
        ProjectionGeometry::uniform(self.views, 0.0, self.angle_step, bins, self.pixel_size())
    }

    pub fn synthesize(&self) -> Result<Dataset> {
        self.validate()?;
        let phantom = make_phantom(self.phantom, self.size)?;
        let geometry = self.geometry()?;
        let op = XrayTransform::new(geometry.clone(), self.size, self.size, self.pixel_size())?;
        let step = self.angle_step * self.stride as f64;
        let kept: Vec<f64> = wedge_angles(&geometry, self.wedge_center, self.wedge_width)
            .into_iter()
            .filter(|a| {
                let k = a / step;
                (k - k.round()).abs() < 1e-6
            })
            .collect();
        let mask = make_limited_angle_mask(&geometry, &kept)?;
        let clean = op.forward(&phantom);
        let noisy = add_gaussian_noise(&Sinogram::new(geometry, clean.clone())?, self.noise, self.seed)?;
        let data = noisy.values * &mask.weights();
        Ok(Dataset {
            phantom,
            op,
            mask,
            clean,
            data,
        })
    }
}
