//! TOML run configuration with validation against solver preconditions.

use std::path::{Path, PathBuf};

use bidomain_core::domain::{StripGeometry, Tensor2};
use bidomain_core::ionic::IonicModel;
use bidomain_core::spectral::FractionalParams;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub conductivity: ConductivitySection,
    pub ionic: IonicSection,
    pub spectral: SpectralSection,
    pub time: TimeSection,
    pub forcing: ForcingSection,
    pub initial: InitialSection,
    pub periodic: PeriodicSection,
    pub tolerances: ToleranceSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub heart_length: f64,
    pub torso_length: f64,
    pub y_period: f64,
    pub nx_heart: usize,
    pub nx_torso: usize,
    pub ny: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = StripGeometry::default();
        GeometrySection {
            heart_length: g.heart_length,
            torso_length: g.torso_length,
            y_period: g.y_period,
            nx_heart: g.nx_heart,
            nx_torso: g.nx_torso,
            ny: g.ny,
        }
    }
}

/// Symmetric tensors as `[xx, xy, yy]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConductivitySection {
    pub sigma_i: [f64; 3],
    pub sigma_e: [f64; 3],
    pub sigma_t: [f64; 3],
}

impl Default for ConductivitySection {
    fn default() -> Self {
        ConductivitySection {
            sigma_i: [1.0, 0.0, 1.0],
            sigma_e: [2.0, 0.0, 2.0],
            sigma_t: [1.5, 0.0, 1.5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FitzhughNagumo,
    LinearTest,
    Inert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonicSection {
    pub model: ModelKind,
    pub a: f64,
    pub eps: f64,
    pub gamma: f64,
}

impl Default for IonicSection {
    fn default() -> Self {
        IonicSection {
            model: ModelKind::FitzhughNagumo,
            a: 0.1,
            eps: 0.01,
            gamma: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Level for single-level runs.
    pub m: usize,
    pub levels: Vec<usize>,
    pub reference: usize,
    pub a1: f64,
    pub alpha0: f64,
    /// Gauss points per direction for the nonlinear projection.
    pub quadrature_points: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            m: 16,
            levels: vec![4, 8, 16, 32],
            reference: 64,
            a1: 1.0,
            alpha0: 0.8,
            quadrature_points: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t1: f64,
    pub dt: f64,
    /// Use the certified contraction horizon in `converge` instead of `t1`.
    pub certified_horizon: bool,
    pub period: f64,
    pub samples: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            t1: 0.5,
            dt: 1e-3,
            certified_horizon: false,
            period: 1.0,
            samples: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Constant,
    Sine,
    Cosine,
}

/// Endocardial source `s(y, t) = amplitude · cos(2π k y / Y) · profile(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSection {
    pub amplitude: f64,
    pub wavenumber: u32,
    pub profile: ProfileKind,
}

impl Default for ForcingSection {
    fn default() -> Self {
        ForcingSection {
            amplitude: 0.1,
            wavenumber: 1,
            profile: ProfileKind::Cosine,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Zero,
    Bump,
}

/// Initial potential: zero or a von Mises bump centred in the heart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub width: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            kind: InitialKind::Bump,
            amplitude: 1.0,
            width: 0.25,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicSection {
    /// Ball radius; when absent the largest radius satisfying the
    /// contraction condition with `radius_margin` is used.
    pub r0: Option<f64>,
    pub radius_margin: Option<f64>,
    /// Random path pairs for the empirical Lipschitz probe.
    pub probes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub fixed_point: f64,
    pub max_iter: usize,
    pub delta_min: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            fixed_point: 1e-10,
            max_iter: 200,
            delta_min: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

fn tensor(v: [f64; 3]) -> Tensor2 {
    Tensor2 {
        xx: v[0],
        xy: v[1],
        yy: v[2],
    }
}

impl HarnessConfig {
    /// Parse TOML text; `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let config: HarnessConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(format!("{origin}: {e}")))?;
        config.validate().map_err(|issue| issue.locate(text, origin))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn geometry(&self) -> StripGeometry {
        let g = &self.geometry;
        StripGeometry {
            x0: 0.0,
            heart_length: g.heart_length,
            torso_length: g.torso_length,
            y_period: g.y_period,
            nx_heart: g.nx_heart,
            nx_torso: g.nx_torso,
            ny: g.ny,
        }
    }

    pub fn tensors(&self) -> (Tensor2, Tensor2, Tensor2) {
        let c = &self.conductivity;
        (tensor(c.sigma_i), tensor(c.sigma_e), tensor(c.sigma_t))
    }

    pub fn model(&self) -> bidomain_core::Result<IonicModel> {
        let i = &self.ionic;
        let a1 = self.spectral.a1;
        match i.model {
            ModelKind::FitzhughNagumo => IonicModel::fitzhugh_nagumo(i.a, i.eps, i.gamma, a1),
            ModelKind::LinearTest => IonicModel::linear_test(a1),
            ModelKind::Inert => IonicModel::inert(a1),
        }
    }

    pub fn params(&self) -> bidomain_core::Result<FractionalParams> {
        FractionalParams::new(self.spectral.a1, self.spectral.alpha0, self.time.period)
    }

    /// Largest level any subcommand may request.
    pub fn max_level(&self) -> usize {
        let s = &self.spectral;
        s.levels.iter().copied().chain([s.m, s.reference]).max().unwrap_or(0)
    }

    /// Range checks that mirror the solver preconditions.
    pub fn validate(&self) -> Result<(), Issue> {
        let g = &self.geometry;
        positive("geometry", "heart_length", g.heart_length)?;
        positive("geometry", "y_period", g.y_period)?;
        if !(g.torso_length >= 0.0 && g.torso_length.is_finite()) {
            return Err(Issue::new("geometry", "torso_length", "must be non-negative"));
        }
        nonzero("geometry", "nx_heart", g.nx_heart)?;
        nonzero("geometry", "ny", g.ny)?;
        if (g.torso_length > 0.0) != (g.nx_torso > 0) {
            return Err(Issue::new("geometry", "nx_torso", "must be zero exactly when torso_length is zero"));
        }
        let c = &self.conductivity;
        for (key, t) in [("sigma_i", c.sigma_i), ("sigma_e", c.sigma_e), ("sigma_t", c.sigma_t)] {
            let (lo, _) = tensor(t).eigenvalues();
            if !(lo > 0.0 && t.iter().all(|v| v.is_finite())) {
                return Err(Issue::new("conductivity", key, "must be symmetric positive definite"));
            }
        }
        let i = &self.ionic;
        if i.model == ModelKind::FitzhughNagumo {
            finite("ionic", "a", i.a)?;
            positive("ionic", "eps", i.eps)?;
            positive("ionic", "gamma", i.gamma)?;
        }
        let s = &self.spectral;
        positive("spectral", "a1", s.a1)?;
        if !(s.alpha0 > 0.75 && s.alpha0 < 1.0) {
            return Err(Issue::new("spectral", "alpha0", "must lie in (3/4, 1)"));
        }
        nonzero("spectral", "quadrature_points", s.quadrature_points)?;
        if s.levels.iter().any(|&m| m >= s.reference) {
            return Err(Issue::new("spectral", "levels", "every level must be below the reference"));
        }
        let heart_nodes = (g.nx_heart + 1) * g.ny;
        let limit = format!("must stay below the {heart_nodes} heart nodes");
        if s.m >= heart_nodes {
            return Err(Issue::new("spectral", "m", &limit));
        }
        if s.reference >= heart_nodes {
            return Err(Issue::new("spectral", "reference", &limit));
        }
        let t = &self.time;
        positive("time", "t1", t.t1)?;
        positive("time", "dt", t.dt)?;
        positive("time", "period", t.period)?;
        nonzero("time", "samples", t.samples)?;
        finite("forcing", "amplitude", self.forcing.amplitude)?;
        positive("initial", "width", self.initial.width)?;
        finite("initial", "amplitude", self.initial.amplitude)?;
        if let Some(r0) = self.periodic.r0 {
            positive("periodic", "r0", r0)?;
        }
        if let Some(m) = self.periodic.radius_margin {
            if !(m > 0.0 && m <= 1.0) {
                return Err(Issue::new("periodic", "radius_margin", "must lie in (0, 1]"));
            }
        }
        let tol = &self.tolerances;
        positive("tolerances", "fixed_point", tol.fixed_point)?;
        nonzero("tolerances", "max_iter", tol.max_iter)?;
        if !(tol.delta_min >= 0.0 && tol.delta_min.is_finite()) {
            return Err(Issue::new("tolerances", "delta_min", "must be non-negative"));
        }
        Ok(())
    }
}

/// A failed range check, located by section and key.
#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub section: &'static str,
    pub key: &'static str,
    pub message: String,
}

impl Issue {
    fn new(section: &'static str, key: &'static str, message: &str) -> Self {
        Issue {
            section,
            key,
            message: message.to_string(),
        }
    }

    /// Attach the line of `key` inside `[section]` when it appears in `text`.
    pub fn locate(&self, text: &str, origin: &str) -> HarnessError {
        let mut in_section = false;
        for (k, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') {
                in_section = trimmed.trim_matches(|c| c == '[' || c == ']').trim() == self.section;
                continue;
            }
            let key = trimmed.split('=').next().unwrap_or("").trim();
            if in_section && key == self.key {
                return HarnessError::Config(format!(
                    "{origin}:{}: {}.{} {}",
                    k + 1,
                    self.section,
                    self.key,
                    self.message
                ));
            }
        }
        HarnessError::Config(format!("{origin}: {}.{} {}", self.section, self.key, self.message))
    }
}

fn finite(section: &'static str, key: &'static str, v: f64) -> Result<(), Issue> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Issue::new(section, key, "must be finite"))
    }
}

fn positive(section: &'static str, key: &'static str, v: f64) -> Result<(), Issue> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Issue::new(section, key, "must be positive"))
    }
}

fn nonzero(section: &'static str, key: &'static str, v: usize) -> Result<(), Issue> {
    if v > 0 {
        Ok(())
    } else {
        Err(Issue::new(section, key, "must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        HarnessConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(HarnessConfig::parse("", "inline").unwrap(), HarnessConfig::default());
    }

    #[test]
    fn range_error_reports_line() {
        let text = "seed = 1\n[spectral]\nm = 8\nalpha0 = 0.5\n";
        let err = HarnessConfig::parse(text, "run.toml").unwrap_err().to_string();
        assert!(err.contains("run.toml:4"), "{err}");
        assert!(err.contains("spectral.alpha0"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = HarnessConfig::parse("[geometry]\nnx = 3\n", "x").unwrap_err().to_string();
        assert!(err.contains("nx"), "{err}");
    }

    #[test]
    fn torso_resolution_must_match_length() {
        let text = "[geometry]\ntorso_length = 0.0\n";
        let err = HarnessConfig::parse(text, "x").unwrap_err().to_string();
        assert!(err.contains("nx_torso"), "{err}");
    }
}
