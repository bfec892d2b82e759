//! Synthetic ground truths and the additive noise model.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::max_value;
use crate::tomo::{Image, Sinogram};

/// Sub-pixel samples per axis used to anti-alias ring boundaries.
const RING_SUPERSAMPLE: usize = 4;

/// Pixel centre in units where the grid spans `[-w/2, w/2] × [-h/2, h/2]`,
/// `y` pointing up.
fn pixel_center(row: usize, col: usize, width: usize, height: usize) -> (f64, f64) {
    (
        col as f64 + 0.5 - width as f64 / 2.0,
        height as f64 / 2.0 - row as f64 - 0.5,
    )
}

/// Nested discs of decreasing radius (in pixels), each overwriting the
/// interior with its intensity. `radii = [r0, r1]`, `intensities = [1, 0]`
/// makes a single ring of width `r0 - r1`.
pub fn concentric_rings(width: usize, height: usize, radii: &[f64], intensities: &[f64]) -> Result<Image> {
    if radii.len() != intensities.len() {
        return Err(Error::Config("radii and intensities differ in length".into()));
    }
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("radii must be positive and strictly decreasing".into()));
    }
    let half = width.min(height) as f64 / 2.0;
    if radii.first().is_some_and(|&r| r > half) {
        return Err(Error::Config(format!(
            "outer radius {} exceeds the grid half-extent {half}",
            radii[0]
        )));
    }
    let n = RING_SUPERSAMPLE;
    let values = Array2::from_shape_fn((height, width), |(r, c)| {
        let (cx, cy) = pixel_center(r, c, width, height);
        let mut acc = 0.0;
        for si in 0..n {
            for sj in 0..n {
                let x = cx + (sj as f64 + 0.5) / n as f64 - 0.5;
                let y = cy + (si as f64 + 0.5) / n as f64 - 0.5;
                let rad = x.hypot(y);
                let mut v = 0.0;
                for (&rr, &val) in radii.iter().zip(intensities) {
                    if rad <= rr {
                        v = val;
                    } else {
                        break;
                    }
                }
                acc += v;
            }
        }
        acc / (n * n) as f64
    });
    Image::new(values, 1.0)
}

/// Two rings, as in the canonical radially symmetric test object.
pub fn two_rings(size: usize) -> Image {
    let r = size as f64 / 2.0;
    concentric_rings(size, size, &[0.85 * r, 0.7 * r, 0.5 * r, 0.35 * r], &[1.0, 0.0, 1.0, 0.0])
        .expect("static ring layout is valid")
}

/// Ellipse `(intensity, semi-axis a, semi-axis b, x0, y0, rotation°)` in the
/// unit square `[-1, 1]²`.
pub type Ellipse = (f64, f64, f64, f64, f64, f64);

/// Toft's modified Shepp-Logan table.
pub const MODIFIED_SHEPP_LOGAN: [Ellipse; 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

pub fn inside_ellipse(e: &Ellipse, x: f64, y: f64) -> bool {
    let (_, a, b, x0, y0, phi) = *e;
    let (s, c) = phi.to_radians().sin_cos();
    let (dx, dy) = (x - x0, y - y0);
    let xr = dx * c + dy * s;
    let yr = -dx * s + dy * c;
    (xr / a).powi(2) + (yr / b).powi(2) <= 1.0
}

/// Sum of ellipses sampled at pixel centres on `[-1, 1]²`.
pub fn ellipse_phantom(width: usize, height: usize, ellipses: &[Ellipse]) -> Array2<f64> {
    Array2::from_shape_fn((height, width), |(r, c)| {
        let (px, py) = pixel_center(r, c, width, height);
        let (x, y) = (2.0 * px / width as f64, 2.0 * py / height as f64);
        ellipses
            .iter()
            .filter(|e| inside_ellipse(e, x, y))
            .map(|e| e.0)
            .sum()
    })
}

/// Modified Shepp-Logan phantom with values in `[0, 1]` and maximum 1.
pub fn shepp_logan_modified(width: usize, height: usize) -> Result<Image> {
    if width < 16 || height < 16 {
        return Err(Error::Config("Shepp-Logan needs at least 16×16 pixels".into()));
    }
    // Round away summation noise such as 1 - 0.8 - 0.2 ≠ 0.
    let values = ellipse_phantom(width, height, &MODIFIED_SHEPP_LOGAN)
        .mapv(|v| (v * 1e12).round() / 1e12);
    Image::new(values, 1.0)
}

/// Faceted convex particle with a denser core: a stand-in for the electron
/// tomography slice, whose real data is not bundled.
pub fn faceted_particle(size: usize) -> Image {
    let hexagon = |x: f64, y: f64, r: f64, rot: f64| {
        (0..6).all(|k| {
            let a = rot + k as f64 * std::f64::consts::FRAC_PI_3;
            x * a.cos() + y * a.sin() <= r * (std::f64::consts::PI / 6.0).cos()
        })
    };
    let values = Array2::from_shape_fn((size, size), |(r, c)| {
        let (px, py) = pixel_center(r, c, size, size);
        let (x, y) = (2.0 * px / size as f64, 2.0 * py / size as f64);
        if hexagon(x - 0.05, y + 0.02, 0.3, 0.3) {
            1.0
        } else if hexagon(x, y, 0.75, 0.1) {
            0.6
        } else {
            0.0
        }
    });
    Image::new(values, 1.0).expect("finite")
}

/// Adds i.i.d. `N(0, (level · max s)²)` noise, reproducible from `seed`.
pub fn add_gaussian_noise(s: &Sinogram, level_fraction: f64, seed: u64) -> Result<Sinogram> {
    if !(level_fraction >= 0.0) {
        return Err(Error::Config("noise level must be non-negative".into()));
    }
    if level_fraction == 0.0 {
        return Ok(s.clone());
    }
    let sd = level_fraction * max_value(&s.values);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = s.clone();
    out.values.mapv_inplace(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + sd * z
    });
    Ok(out)
}

/// The diagonal-stripe inpainting and denoising test bed.
#[derive(Clone, Debug)]
pub struct StripePhantom {
    pub clean: Array2<f64>,
    pub noisy: Array2<f64>,
    /// `true` inside the region to inpaint.
    pub hole: Array2<bool>,
    /// Indicator weight: 0 on pixels whose forward difference crosses a
    /// stripe edge, 1 elsewhere.
    pub c1: Array2<f64>,
    /// Unit normal of the stripe edges, `(x, y)`.
    pub normal: [f64; 2],
    /// Row distance between the two edges at a fixed column.
    pub edge_separation: usize,
    /// Column extent of the hole.
    pub hole_width: usize,
}

impl StripePhantom {
    pub fn hole_count(&self) -> usize {
        self.hole.iter().filter(|&&h| h).count()
    }
}

/// 48×48 image with one 45° stripe `40 ≤ row + col < 48` and a central
/// 16×16 hole. The hole is wider than the stripe's vertical thickness.
pub fn stripe_phantom_pair() -> StripePhantom {
    stripe_phantom_with(48, 40, 48, 16, 0.1, 5)
}

pub fn stripe_phantom_with(
    size: usize,
    lower: usize,
    upper: usize,
    hole: usize,
    noise: f64,
    seed: u64,
) -> StripePhantom {
    let clean = Array2::from_shape_fn((size, size), |(i, j)| {
        if (lower..upper).contains(&(i + j)) {
            1.0
        } else {
            0.0
        }
    });
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noisy = clean.mapv(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + noise * z
    });
    let start = (size - hole) / 2;
    let hole_mask = Array2::from_shape_fn((size, size), |(i, j)| {
        (start..start + hole).contains(&i) && (start..start + hole).contains(&j)
    });
    let c1 = Array2::from_shape_fn((size, size), |(i, j)| {
        if i + j + 1 == lower || i + j + 1 == upper {
            0.0
        } else {
            1.0
        }
    });
    let n = std::f64::consts::FRAC_1_SQRT_2;
    StripePhantom {
        clean,
        noisy,
        hole: hole_mask,
        c1,
        normal: [n, n],
        edge_separation: upper - lower,
        hole_width: hole,
    }
}
