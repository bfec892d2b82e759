//! Experiment configuration: flat `key = value` lines grouped under
//! `[section]` headers.
//!
//! ```text
//! # comment
//! [dataset]
//! phantom = rings
//! size = 64
//!
//! [joint]
//! beta2 = 3e3
//! ```
//!
//! Unknown sections or keys are rejected so that typos surface as errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::baselines::RampWindow;
use crate::energy::JointParams;
use crate::error::{Error, Result};
use crate::experiment::DatasetSpec;

/// Raw sections in file order-independent form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        let mut section = String::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", no + 1)))?;
                section = name.trim().to_string();
                out.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", no + 1)));
            }
            let previous = out
                .sections
                .entry(section.clone())
                .or_default()
                .insert(key.to_string(), value.trim().to_string());
            if previous.is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {}", no + 1, qualified(&section, key))));
            }
        }
        Ok(out)
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Settings of the standalone TV reconstruction, also used as the joint
/// solver's starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct TvSettings {
    pub lambda: f64,
    pub iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSettings {
    /// Joint-solver checkpoint period (0 = off).
    pub checkpoint_every: usize,
    /// Also write PGM renders.
    pub pgm: bool,
}

/// Everything an experiment run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub fbp_window: RampWindow,
    pub sirt_iters: usize,
    pub tv: TvSettings,
    pub joint: JointParams,
    pub output: OutputSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: DatasetSpec::default(),
            fbp_window: RampWindow::Hann,
            sirt_iters: 100,
            tv: TvSettings {
                lambda: 1.0,
                iters: 1000,
            },
            joint: JointParams::default(),
            output: OutputSettings {
                checkpoint_every: 0,
                pgm: true,
            },
        }
    }
}

/// Consumes keys of one section, remembering which were read.
struct Reader<'a> {
    section: &'a str,
    map: BTreeMap<String, String>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: fmt::Display,
    {
        if let Some(raw) = self.map.remove(key) {
            *slot = raw.parse().map_err(|e| {
                Error::Config(format!("{} = '{raw}': {e}", qualified(self.section, key)))
            })?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Config(format!("unknown key {}", qualified(self.section, k)))),
            None => Ok(()),
        }
    }
}

impl FromStr for RampWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram-lak" | "ramlak" => Ok(Self::RamLak),
            "hann" => Ok(Self::Hann),
            _ => Err(Error::Config(format!("unknown filter window '{s}' (ram-lak, hann)"))),
        }
    }
}

impl fmt::Display for RampWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RamLak => "ram-lak",
            Self::Hann => "hann",
        })
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let mut cfg = Self::default();
        let mut take = |name: &'static str| Reader {
            section: name,
            map: raw.sections.remove(name).unwrap_or_default(),
        };

        let mut r = take("");
        r.get("name", &mut cfg.name)?;
        r.finish()?;

        let d = &mut cfg.dataset;
        let mut r = take("dataset");
        r.get("phantom", &mut d.phantom)?;
        r.get("size", &mut d.size)?;
        let mut extent = f64::NAN;
        r.get("extent", &mut extent)?;
        d.extent = (!extent.is_nan()).then_some(extent);
        r.get("views", &mut d.views)?;
        r.get("angle_step", &mut d.angle_step)?;
        r.get("wedge_center", &mut d.wedge_center)?;
        r.get("wedge_width", &mut d.wedge_width)?;
        r.get("stride", &mut d.stride)?;
        r.get("noise", &mut d.noise)?;
        r.get("seed", &mut d.seed)?;
        r.finish()?;

        let mut r = take("fbp");
        r.get("window", &mut cfg.fbp_window)?;
        r.finish()?;

        let mut r = take("sirt");
        r.get("iters", &mut cfg.sirt_iters)?;
        r.finish()?;

        let mut r = take("tv");
        r.get("lambda", &mut cfg.tv.lambda)?;
        r.get("iters", &mut cfg.tv.iters)?;
        r.finish()?;

        let j = &mut cfg.joint;
        let mut r = take("joint");
        r.get("alpha1", &mut j.alpha1)?;
        r.get("alpha2", &mut j.alpha2)?;
        r.get("alpha3", &mut j.alpha3)?;
        r.get("beta1", &mut j.beta1)?;
        r.get("beta2", &mut j.beta2)?;
        r.get("beta3", &mut j.beta3)?;
        r.get("rho", &mut j.rho)?;
        r.get("sigma", &mut j.sigma)?;
        r.get("tau_x", &mut j.tau_x)?;
        r.get("tau_y", &mut j.tau_y)?;
        r.get("iters", &mut j.iters)?;
        r.get("inner_iters", &mut j.inner_iters)?;
        r.get("inner_tol", &mut j.inner_tol)?;
        r.finish()?;

        let mut r = take("output");
        r.get("checkpoint_every", &mut cfg.output.checkpoint_every)?;
        r.get("pgm", &mut cfg.output.pgm)?;
        r.finish()?;

        if let Some(name) = raw.sections.keys().next() {
            return Err(Error::Config(format!("unknown section [{name}]")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.joint.validate()?;
        if !(self.tv.lambda >= 0.0 && self.tv.lambda.is_finite()) {
            return Err(Error::Config(format!("tv.lambda must be non-negative, got {}", self.tv.lambda)));
        }
        if self.dataset.size < 16 {
            return Err(Error::Config(format!("dataset.size must be at least 16, got {}", self.dataset.size)));
        }
        Ok(())
    }

    /// The resolved configuration in the input format; parsing it back
    /// gives the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.dataset;
        let j = &self.joint;
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "\n[dataset]");
        let _ = writeln!(s, "phantom = {}", d.phantom);
        let _ = writeln!(s, "size = {}", d.size);
        if let Some(e) = d.extent {
            let _ = writeln!(s, "extent = {e:?}");
        }
        let _ = writeln!(s, "views = {}", d.views);
        let _ = writeln!(s, "angle_step = {:?}", d.angle_step);
        let _ = writeln!(s, "wedge_center = {:?}", d.wedge_center);
        let _ = writeln!(s, "wedge_width = {:?}", d.wedge_width);
        let _ = writeln!(s, "stride = {}", d.stride);
        let _ = writeln!(s, "noise = {:?}", d.noise);
        let _ = writeln!(s, "seed = {}", d.seed);
        let _ = writeln!(s, "\n[fbp]\nwindow = {}", self.fbp_window);
        let _ = writeln!(s, "\n[sirt]\niters = {}", self.sirt_iters);
        let _ = writeln!(s, "\n[tv]\nlambda = {:?}\niters = {}", self.tv.lambda, self.tv.iters);
        let _ = writeln!(s, "\n[joint]");
        for (k, v) in [
            ("alpha1", j.alpha1),
            ("alpha2", j.alpha2),
            ("alpha3", j.alpha3),
            ("beta1", j.beta1),
            ("beta2", j.beta2),
            ("beta3", j.beta3),
            ("rho", j.rho),
            ("sigma", j.sigma),
            ("tau_x", j.tau_x),
            ("tau_y", j.tau_y),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "iters = {}", j.iters);
        let _ = writeln!(s, "inner_iters = {}", j.inner_iters);
        let _ = writeln!(s, "inner_tol = {:?}", j.inner_tol);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "checkpoint_every = {}", self.output.checkpoint_every);
        let _ = writeln!(s, "pgm = {}", self.output.pgm);
        s
    }
}

/// Configurations shipped with the binary, by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("rings", include_str!("../configs/rings.cfg")),
    ("shepp-logan", include_str!("../configs/shepp-logan.cfg")),
    ("particle", include_str!("../configs/particle.cfg")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Loads `spec` as a file path, falling back to a bundled name.
pub fn resolve(spec: &str) -> Result<ExperimentConfig> {
    let path = Path::new(spec);
    if path.exists() {
        return ExperimentConfig::load(path);
    }
    match bundled(spec) {
        Some(text) => ExperimentConfig::from_text(text),
        None => {
            let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
            Err(Error::Config(format!(
                "no config file '{spec}' and no bundled config of that name ({})",
                names.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::PhantomKind;

    #[test]
    fn sections_and_comments() {
        let raw = RawConfig::parse("a = 1 # trailing\n; full line\n[s]\nb=two\n\n[t]\n").unwrap();
        assert_eq!(raw.sections[""]["a"], "1");
        assert_eq!(raw.sections["s"]["b"], "two");
        assert!(raw.sections["t"].is_empty());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(RawConfig::parse("[open\n").is_err());
        assert!(RawConfig::parse("novalue\n").is_err());
        assert!(RawConfig::parse("[s]\nk=1\nk=2\n").is_err());
    }

    #[test]
    fn unknown_names_are_errors() {
        let e = ExperimentConfig::from_text("[joint]\nbeta9 = 1\n").unwrap_err();
        assert!(e.to_string().contains("joint.beta9"), "{e}");
        let e = ExperimentConfig::from_text("[jiont]\nbeta2 = 1\n").unwrap_err();
        assert!(e.to_string().contains("[jiont]"), "{e}");
    }

    #[test]
    fn bad_values_name_their_key() {
        let e = ExperimentConfig::from_text("[dataset]\nsize = big\n").unwrap_err();
        assert!(e.to_string().contains("dataset.size"), "{e}");
        assert!(ExperimentConfig::from_text("[joint]\nrho = 0\n").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        for (_, text) in BUNDLED {
            let cfg = ExperimentConfig::from_text(text).unwrap();
            assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn rings_config_carries_the_table_weights() {
        let cfg = ExperimentConfig::from_text(bundled("rings").unwrap()).unwrap();
        let j = &cfg.joint;
        assert_eq!(cfg.dataset.phantom, PhantomKind::Rings);
        assert_eq!(cfg.dataset.extent, Some(1.0));
        assert_eq!(
            (j.alpha1, j.alpha2, j.alpha3, j.beta1, j.beta2, j.beta3, j.rho, j.sigma),
            (0.25, 1.0, 0.1, 3e-5, 3e3, 1e10, 1.0, 8.0)
        );
    }
}
