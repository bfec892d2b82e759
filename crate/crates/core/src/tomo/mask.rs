use ndarray::Array2;

use super::{ProjectionGeometry, Sinogram};
use crate::error::{check_shape, Error, Result};

/// The acquired region of the sinogram: `true` where data was measured.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMask {
    pub geometry: ProjectionGeometry,
    pub flags: Array2<bool>,
}

impl SampleMask {
    pub fn new(geometry: ProjectionGeometry, flags: Array2<bool>) -> Result<Self> {
        check_shape(geometry.value_dim(), flags.dim())?;
        if !flags.iter().any(|&f| f) {
            return Err(Error::Config("sample mask has no acquired entries".into()));
        }
        Ok(Self { geometry, flags })
    }

    pub fn full(geometry: ProjectionGeometry) -> Self {
        let flags = Array2::from_elem(geometry.value_dim(), true);
        Self { geometry, flags }
    }

    /// Mask as a 0/1 weight field.
    pub fn weights(&self) -> Array2<f64> {
        self.flags.mapv(|f| if f { 1.0 } else { 0.0 })
    }

    /// Indices of views with at least one acquired bin.
    pub fn kept_views(&self) -> Vec<usize> {
        self.flags
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&f| f))
            .map(|(i, _)| i)
            .collect()
    }

    /// `bins × kept views`, the effective shape of the measured data.
    pub fn data_shape(&self) -> (usize, usize) {
        (self.geometry.detector_count(), self.kept_views().len())
    }

    pub fn acquired_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Mask that keeps exactly the views whose angle appears in `kept_deg`.
pub fn make_limited_angle_mask(geometry: &ProjectionGeometry, kept_deg: &[f64]) -> Result<SampleMask> {
    if kept_deg.is_empty() {
        return Err(Error::Config("kept angle set is empty".into()));
    }
    let angles = geometry.angles_deg();
    let mut keep = vec![false; angles.len()];
    for &k in kept_deg {
        let idx = angles
            .iter()
            .position(|&a| (a - k).abs() <= 1e-9)
            .ok_or_else(|| Error::Config(format!("kept angle {k}° is not in the geometry")))?;
        keep[idx] = true;
    }
    let flags = Array2::from_shape_fn(geometry.value_dim(), |(a, _)| keep[a]);
    SampleMask::new(geometry.clone(), flags)
}

/// Angles of `geometry` within a wedge of total width `width_deg` centred on
/// `center_deg`, measured modulo 180°. A wedge centred on 0° keeps both ends
/// of the sinogram and drops the middle.
pub fn wedge_angles(geometry: &ProjectionGeometry, center_deg: f64, width_deg: f64) -> Vec<f64> {
    let start = center_deg - width_deg / 2.0;
    geometry
        .angles_deg()
        .iter()
        .copied()
        // Half-open `[center - w/2, center + w/2)`, so a 60° wedge on a 1°
        // grid keeps exactly 60 views.
        .filter(|&a| (a - start).rem_euclid(180.0) < width_deg - 1e-9)
        .collect()
}

/// Zeroes every entry outside the acquired region.
pub fn apply_mask(mask: &SampleMask, sinogram: &Sinogram) -> Result<Sinogram> {
    check_shape(mask.flags.dim(), sinogram.values.dim())?;
    let mut values = sinogram.values.clone();
    values.zip_mut_with(&mask.flags, |v, &f| {
        if !f {
            *v = 0.0
        }
    });
    Ok(Sinogram {
        geometry: sinogram.geometry.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degree_grid() -> ProjectionGeometry {
        ProjectionGeometry::full_degree_grid(200, 200, 1.0)
    }

    #[test]
    fn all_angles_gives_full_mask() {
        let g = ProjectionGeometry::uniform(6, 0.0, 30.0, 5, 1.0).unwrap();
        let m = make_limited_angle_mask(&g, g.angles_deg()).unwrap();
        assert!(m.flags.iter().all(|&f| f));
        assert_eq!(m, SampleMask::full(g));
    }

    #[test]
    fn sixty_degree_wedge_on_reference_grid() {
        let g = degree_grid();
        let kept = wedge_angles(&g, 0.0, 60.0);
        assert_eq!(kept.len(), 60);
        let m = make_limited_angle_mask(&g, &kept).unwrap();
        assert_eq!(m.data_shape(), (287, 60));
        // Middle of the sinogram is missing.
        assert!(!m.flags[[90, 0]]);
        assert!(m.flags[[0, 0]] && m.flags[[179, 0]]);
    }

    #[test]
    fn contiguous_sixty_views() {
        let g = degree_grid();
        let kept: Vec<f64> = (60..120).map(f64::from).collect();
        let m = make_limited_angle_mask(&g, &kept).unwrap();
        assert_eq!(m.data_shape(), (287, 60));
    }

    #[test]
    fn stem_like_subsampling() {
        let g = ProjectionGeometry::uniform(45, 0.0, 3.0, 173, 1.0).unwrap();
        let kept = &g.angles_deg()[8..37];
        let m = make_limited_angle_mask(&g, kept).unwrap();
        assert_eq!(g.shape(), (173, 45));
        assert_eq!(m.data_shape(), (173, 29));
    }

    #[test]
    fn empty_or_unknown_angles_rejected() {
        let g = degree_grid();
        assert!(make_limited_angle_mask(&g, &[]).is_err());
        assert!(make_limited_angle_mask(&g, &[0.5]).is_err());
    }

    #[test]
    fn mask_is_a_projection() {
        let g = ProjectionGeometry::uniform(4, 0.0, 45.0, 3, 1.0).unwrap();
        let m = make_limited_angle_mask(&g, &[45.0, 90.0]).unwrap();
        let s = Sinogram::new(
            g.clone(),
            Array2::from_shape_fn(g.value_dim(), |(a, k)| (a * 3 + k) as f64 + 0.5),
        )
        .unwrap();
        let once = apply_mask(&m, &s).unwrap();
        let twice = apply_mask(&m, &once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.values[[0, 1]], 0.0);
        assert_eq!(once.values[[1, 1]], 4.5);
    }

    #[test]
    fn single_flag_on_ones() {
        let g = ProjectionGeometry::uniform(3, 0.0, 60.0, 3, 1.0).unwrap();
        let mut flags = Array2::from_elem(g.value_dim(), false);
        flags[[1, 2]] = true;
        let m = SampleMask::new(g.clone(), flags).unwrap();
        let s = Sinogram::new(g.clone(), Array2::ones(g.value_dim())).unwrap();
        let out = apply_mask(&m, &s).unwrap();
        assert_eq!(out.values.sum(), 1.0);
        assert_eq!(out.values[[1, 2]], 1.0);
    }

    #[test]
    fn mask_requires_an_acquired_entry() {
        let g = ProjectionGeometry::uniform(2, 0.0, 90.0, 3, 1.0).unwrap();
        assert!(SampleMask::new(g.clone(), Array2::from_elem(g.value_dim(), false)).is_err());
    }
}
