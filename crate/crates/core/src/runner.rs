//! Experiment orchestration: dataset synthesis, the four reconstruction
//! methods, and artifact files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::baselines::{fbp, sirt, tv_reconstruct_from};
use crate::config::ExperimentConfig;
use crate::energy::JointProblem;
use crate::error::{Error, Result};
use crate::experiment::Dataset;
use crate::field::{max_value, min_value};
use crate::io::{write_field, write_mask_csv, write_pgm};
use crate::metrics::{anisotropy_ratio, psnr, ssim, threshold, threshold_level};
use crate::solvers::{cone_bound_check, run_joint, slope, JointState, PdhgOptions, RunOptions, SlopeOptions};

/// One reconstruction and its scores against the phantom.
#[derive(Clone, Debug)]
pub struct MethodResult {
    pub name: &'static str,
    pub image: Array2<f64>,
    pub psnr: f64,
    pub ssim: f64,
}

impl MethodResult {
    fn new(name: &'static str, image: Array2<f64>, phantom: &Array2<f64>) -> Self {
        Self {
            name,
            psnr: psnr(&image, phantom),
            ssim: ssim(&image, phantom),
            image,
        }
    }
}

/// Where artifacts go; `None` runs without writing anything.
#[derive(Clone, Debug, Default)]
pub struct ArtifactDir {
    pub dir: Option<PathBuf>,
    pub pgm: bool,
}

impl ArtifactDir {
    pub fn new(dir: &Path, pgm: bool) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            pgm,
        })
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    /// Writes `name.tomo` and, if enabled, `name.pgm` scaled to the field's
    /// own range.
    pub fn field(&self, name: &str, f: &Array2<f64>) -> Result<()> {
        if let Some(p) = self.path(&format!("{name}.tomo")) {
            write_field(&p, f)?;
            if self.pgm {
                write_pgm(&self.path(&format!("{name}.pgm")).unwrap(), f, min_value(f), max_value(f))?;
            }
        }
        Ok(())
    }

    pub fn text(&self, name: &str, body: &str) -> Result<()> {
        if let Some(p) = self.path(name) {
            fs::write(p, body)?;
        }
        Ok(())
    }
}

/// The TV reconstruction used both as a method and as the joint solver's
/// starting point.
pub fn tv_initial(cfg: &ExperimentConfig, data: &Dataset) -> Result<Array2<f64>> {
    let opts = PdhgOptions {
        max_iters: cfg.tv.iters,
        tol: 0.0,
        ..Default::default()
    };
    let z = Array2::zeros(data.op.image_dim());
    let norm = data.op.norm_estimate(30);
    Ok(tv_reconstruct_from(&data.op, norm, &data.mask, &data.data, cfg.tv.lambda, &z, &opts)?.x)
}

pub fn joint_problem(cfg: &ExperimentConfig, data: &Dataset) -> Result<JointProblem> {
    JointProblem::new(data.op.clone(), &data.mask, &data.data, cfg.joint.clone())
}

/// Runs the joint solver from `u0`, `v0 = R u0`.
pub fn joint_from(
    cfg: &ExperimentConfig,
    data: &Dataset,
    u0: &Array2<f64>,
    art: &ArtifactDir,
    verbose: bool,
) -> Result<JointState> {
    let prob = joint_problem(cfg, data)?;
    let v0 = data.op.forward(u0);
    let opts = RunOptions {
        checkpoint_every: cfg.output.checkpoint_every,
        checkpoint_dir: art.path("checkpoints"),
        verbose,
    };
    let state = run_joint(&prob, u0, &v0, &opts)?;
    if let Some(p) = art.path("trace.csv") {
        state.write_trace_csv(&p)?;
    }
    Ok(state)
}

pub fn write_dataset(art: &ArtifactDir, data: &Dataset) -> Result<()> {
    art.field("phantom", &data.phantom)?;
    art.field("sinogram_clean", &data.clean)?;
    art.field("data", &data.data)?;
    if let Some(p) = art.path("mask.csv") {
        write_mask_csv(&p, &data.mask.flags)?;
    }
    Ok(())
}

/// One of `fbp`, `sirt`, `tv`.
pub fn single_baseline(cfg: &ExperimentConfig, data: &Dataset, art: &ArtifactDir, name: &str) -> Result<MethodResult> {
    let (name, image) = match name {
        "fbp" => ("fbp", fbp(&data.op, &data.mask, &data.data, cfg.fbp_window)?),
        "sirt" => ("sirt", sirt(&data.op, &data.mask, &data.data, cfg.sirt_iters)?.u),
        "tv" => ("tv", tv_initial(cfg, data)?),
        other => return Err(Error::Config(format!("unknown method '{other}'"))),
    };
    art.field(name, &image)?;
    Ok(MethodResult::new(name, image, &data.phantom))
}

/// FBP, SIRT and TV.
pub fn baselines(cfg: &ExperimentConfig, data: &Dataset, art: &ArtifactDir) -> Result<Vec<MethodResult>> {
    ["fbp", "sirt", "tv"]
        .iter()
        .map(|m| single_baseline(cfg, data, art, m))
        .collect()
}

/// Per-block slopes and the cone bound in `u` at a joint iterate, as
/// `key = value` text.
pub fn criticality_report(
    cfg: &ExperimentConfig,
    data: &Dataset,
    state: &JointState,
    samples: usize,
    radius: f64,
) -> Result<String> {
    let prob = joint_problem(cfg, data)?;
    let (ud, vd) = (state.u.dim(), state.v.dim());
    let energy = |u: &[f64], v: &[f64]| -> f64 {
        if u.iter().any(|&x| x < 0.0) {
            return f64::INFINITY;
        }
        let u = Array2::from_shape_vec(ud, u.to_vec()).expect("image shape");
        let v = Array2::from_shape_vec(vd, v.to_vec()).expect("sinogram shape");
        prob.energy(&u, &v).map_or(f64::NAN, |t| t.total)
    };
    let u: Vec<f64> = state.u.iter().copied().collect();
    let v: Vec<f64> = state.v.iter().copied().collect();
    let opts = SlopeOptions::default();
    let su = slope(|x| energy(x, &v), &u, &opts);
    let sv = slope(|y| energy(&u, y), &v, &opts);
    let cone = cone_bound_check(|x| energy(x, &v), &u, state.tau_x, samples, radius, cfg.dataset.seed, |x| {
        x.iter_mut().for_each(|p| *p = p.max(0.0))
    });
    let mut s = String::new();
    let _ = writeln!(s, "energy = {}", energy(&u, &v));
    let _ = writeln!(s, "slope_u = {}", su.value);
    let _ = writeln!(s, "slope_u.radius = {}", su.radius);
    let _ = writeln!(s, "slope_v = {}", sv.value);
    let _ = writeln!(s, "slope_v.radius = {}", sv.radius);
    let _ = writeln!(s, "cone.tau = {}", state.tau_x);
    let _ = writeln!(s, "cone.samples = {}", cone.samples);
    let _ = writeln!(s, "cone.violations = {}", cone.violations);
    let _ = writeln!(s, "cone.worst_margin = {}", cone.worst_margin);
    let _ = writeln!(s, "cone.slack = {}", cone.slack);
    Ok(s)
}

/// All four methods on one dataset.
#[derive(Clone, Debug)]
pub struct Comparison {
    /// `fbp`, `sirt`, `tv`, `joint`, in that order.
    pub rows: Vec<MethodResult>,
    pub joint: JointState,
}

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Fixed-width PSNR/SSIM table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<8}{:>10}{:>10}\n", "method", "psnr", "ssim");
        for r in &self.rows {
            let _ = writeln!(s, "{:<8}{:>10.3}{:>10.4}", r.name, r.psnr, r.ssim);
        }
        s
    }
}

pub fn compare_methods(
    cfg: &ExperimentConfig,
    data: &Dataset,
    art: &ArtifactDir,
    verbose: bool,
) -> Result<Comparison> {
    let mut rows = baselines(cfg, data, art)?;
    let u0 = rows[2].image.clone();
    art.field("u0", &u0)?;
    art.field("v0", &data.op.forward(&u0))?;
    let joint = joint_from(cfg, data, &u0, art, verbose)?;
    art.field("joint_u", &joint.u)?;
    art.field("joint_v", &joint.v)?;
    rows.push(MethodResult::new("joint", joint.u.clone(), &data.phantom));
    for r in &rows {
        art.field(&format!("{}_threshold", r.name), &threshold(&r.image))?;
    }
    Ok(Comparison { rows, joint })
}

/// `key = value` summary of a comparison. Contains no timings, so it is
/// identical across runs with the same configuration.
pub fn metrics_text(cfg: &ExperimentConfig, data: &Dataset, cmp: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name = {}", cfg.name);
    let _ = writeln!(s, "seed = {}", cfg.dataset.seed);
    let _ = writeln!(s, "size = {}", cfg.dataset.size);
    let _ = writeln!(s, "views_acquired = {}", data.mask.kept_views().len());
    let _ = writeln!(s, "phantom.anisotropy = {}", anisotropy_ratio(&data.phantom));
    for r in &cmp.rows {
        let _ = writeln!(s, "{}.psnr = {}", r.name, r.psnr);
        let _ = writeln!(s, "{}.ssim = {}", r.name, r.ssim);
        let _ = writeln!(s, "{}.anisotropy = {}", r.name, anisotropy_ratio(&r.image));
        let _ = writeln!(s, "{}.threshold = {}", r.name, threshold_level(&r.image));
        let _ = writeln!(s, "{}.min = {}", r.name, min_value(&r.image));
        let _ = writeln!(s, "{}.max = {}", r.name, max_value(&r.image));
    }
    let j = &cmp.joint;
    let _ = writeln!(s, "joint.iterations = {}", j.iteration);
    let _ = writeln!(s, "joint.energy_initial = {}", j.initial_energy());
    let _ = writeln!(s, "joint.energy_final = {}", j.final_energy());
    let _ = writeln!(s, "joint.worst_increase = {}", j.worst_increase());
    let _ = writeln!(s, "joint.step_sum = {}", j.step_sum);
    let _ = writeln!(s, "joint.step_sum_bound = {}", j.step_sum_bound());
    let _ = writeln!(s, "joint.backtracks = {}", j.backtracks);
    let _ = writeln!(s, "joint.tau_x = {}", j.tau_x);
    let _ = writeln!(s, "joint.tau_y = {}", j.tau_y);
    s
}

/// Synthesizes the configured dataset, runs every method and writes all
/// artifacts into `out`. If a method fails, the artifacts written so far
/// stay and `error.txt` records the failure.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, verbose: bool) -> Result<Comparison> {
    let art = ArtifactDir::new(out, cfg.output.pgm)?;
    art.text("config.cfg", &cfg.to_text())?;
    let result = (|| {
        let data = cfg.dataset.synthesize()?;
        write_dataset(&art, &data)?;
        let cmp = compare_methods(cfg, &data, &art, verbose)?;
        art.text("metrics.txt", &metrics_text(cfg, &data, &cmp))?;
        art.text("table.txt", &cmp.table())?;
        Ok(cmp)
    })();
    if let Err(e) = &result {
        let kind = match e {
            Error::Solver(_) => "solver",
            Error::Config(_) | Error::Shape { .. } => "config",
            Error::Io(_) | Error::Format(_) => "io",
        };
        art.text("error.txt", &format!("kind = {kind}\nmessage = {e}\n"))?;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::DatasetSpec;

    #[test]
    fn failures_leave_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            dataset: DatasetSpec {
                // No grid angle falls inside this wedge.
                wedge_center: 0.5,
                wedge_width: 0.2,
                size: 16,
                ..DatasetSpec::default()
            },
            ..ExperimentConfig::default()
        };
        let err = run_experiment(&cfg, dir.path(), false).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let manifest = fs::read_to_string(dir.path().join("error.txt")).unwrap();
        assert!(manifest.starts_with("kind = config\n"), "{manifest}");
        assert!(dir.path().join("config.cfg").exists());
        assert!(!dir.path().join("metrics.txt").exists());
    }

    #[test]
    fn comparison_table_has_a_row_per_method() {
        let cfg = ExperimentConfig::from_text(
            "[dataset]\nsize = 16\nviews = 20\nangle_step = 9\n[tv]\niters = 20\n[sirt]\niters = 5\n\
             [joint]\nbeta2 = 1\nbeta3 = 1\nsigma = 1\niters = 1\ninner_iters = 10\n",
        )
        .unwrap();
        let data = cfg.dataset.synthesize().unwrap();
        let cmp = compare_methods(&cfg, &data, &ArtifactDir::default(), false).unwrap();
        let names: Vec<_> = cmp.rows.iter().map(|r| r.name).collect();
        assert_eq!(names, ["fbp", "sirt", "tv", "joint"]);
        assert_eq!(cmp.table().lines().count(), 5);
        assert_eq!(cmp.row("tv").unwrap().image, tv_initial(&cfg, &data).unwrap());
    }
}
