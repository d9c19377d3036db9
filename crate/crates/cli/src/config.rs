//! Experiment configuration: `key = value` lines with dotted sections, or JSON.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Subcommand;

#[derive(Debug)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        Self { location: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub time: TimeSection,
    pub materials: MaterialsSection,
    pub problem: ProblemSection,
    pub initial_state: InitialStateSection,
    pub solver: SolverSection,
    pub study: StudySection,
    pub checks: ChecksSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub nt: usize,
}

/// Uniform coefficients, with an optional Gaussian bump added to `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialsSection {
    pub eps: f64,
    pub eps_bump_amplitude: f64,
    pub eps_bump_center: [f64; 2],
    pub eps_bump_width: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Identity,
    Resolvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub alpha: f64,
    pub s_index: usize,
    pub terminal_weight: TerminalKind,
    /// Resolvent parameter when `terminal_weight = "resolvent"`.
    pub terminal_n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Gaussian,
    BoundarySilent,
    Random,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateSection {
    pub preset: Preset,
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
    /// Radius of the supported disc for `boundary-silent`.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub cg_tol: f64,
    /// `0` selects `10 √dim + 200`.
    pub cg_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    Trapezoid,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub n_list: Vec<u32>,
    pub probes: usize,
    pub sample_steps: Vec<usize>,
    /// Times, as fractions of `T`, where `P_n` is compared with `P`.
    pub riccati_times: Vec<f64>,
    pub transition_splits: usize,
    pub perturbations: usize,
    pub quadrature: QuadratureKind,
    pub lanczos_iter: usize,
    pub admissibility_grids: Vec<usize>,
    pub admissibility_samples: usize,
    pub power_steps: usize,
}

/// Check tolerances and the checks that only report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    pub optimality: f64,
    pub cost_identity: f64,
    pub feedback_cheap: f64,
    pub feedback_independent: f64,
    pub transition: f64,
    pub approx_final: f64,
    pub zero_sigma_control: f64,
    pub pq_identity: f64,
    pub coercivity: f64,
    pub admissibility_spread: f64,
    pub oracle_state: f64,
    pub oracle_control: f64,
    pub oracle_riccati: f64,
    pub oracle_spectrum: f64,
    pub report_only: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 8, ny: 8 }
    }
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { t_final: 1.0, nt: 64 }
    }
}

impl Default for MaterialsSection {
    fn default() -> Self {
        Self { eps: 1.0, eps_bump_amplitude: 0.0, eps_bump_center: [0.5, 0.5], eps_bump_width: 0.2, mu: 1.0, sigma: 0.0 }
    }
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self { alpha: 1.0, s_index: 0, terminal_weight: TerminalKind::Identity, terminal_n: 8 }
    }
}

impl Default for InitialStateSection {
    fn default() -> Self {
        Self { preset: Preset::Gaussian, center: [0.4, 0.6], width: 0.2, amplitude: 1.0, radius: 0.3 }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { cg_tol: 1e-10, cg_max_iter: 0 }
    }
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            n_list: vec![1, 2, 4, 8, 16, 32, 64],
            probes: 2,
            sample_steps: vec![8, 24, 40, 56],
            riccati_times: vec![0.0, 0.5],
            transition_splits: 3,
            perturbations: 10,
            quadrature: QuadratureKind::Trapezoid,
            lanczos_iter: 30,
            admissibility_grids: vec![8, 16, 32],
            admissibility_samples: 4,
            power_steps: 20,
        }
    }
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            optimality: 1e-8,
            cost_identity: 1e-8,
            feedback_cheap: 1e-8,
            feedback_independent: 1e-6,
            transition: 1e-7,
            approx_final: 1e-3,
            zero_sigma_control: 5e-3,
            pq_identity: 5e-3,
            coercivity: 0.5,
            admissibility_spread: 10.0,
            oracle_state: 1e-10,
            oracle_control: 1e-7,
            oracle_riccati: 1e-9,
            oracle_spectrum: 1e-6,
            report_only: vec!["approx_final_control".into(), "approx_final_riccati".into(), "coercivity".into()],
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec![Format::Json, Format::Csv] }
    }
}

/// Every check name a run can emit.
pub const CHECK_NAMES: &[&str] = &[
    "cg_converged",
    "optimality",
    "cost_identity",
    "feedback_cheap",
    "feedback_independent",
    "transition_state",
    "transition_control",
    "approx_monotone",
    "approx_final_control",
    "approx_final_riccati",
    "zero_sigma_control",
    "pq_identity",
    "pq_terminal",
    "coercivity",
    "coercivity_cross",
    "admissibility_finite",
    "admissibility_spread",
    "oracle_state",
    "oracle_control",
    "oracle_riccati",
    "oracle_spectrum",
];

impl ExperimentConfig {
    /// Parses JSON when the file ends in `.json` or opens with `{`, and the
    /// line-oriented format otherwise.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::field(&path.display().to_string(), format!("cannot read: {e}")))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_text(&text)
        }
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    let col = span.start - text[..span.start].rfind('\n').map_or(0, |p| p + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "config".into(),
            };
            ConfigError { location, message: e.message().to_string() }
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
        })
    }

    /// Range checks plus the requirements of `sub`.
    pub fn validate(&self, sub: Subcommand) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::field(field, format!("must be positive and finite, got {v}")))
            }
        };
        if self.grid.nx < 2 || self.grid.ny < 2 {
            return Err(ConfigError::field("grid", "nx and ny must be at least 2"));
        }
        if self.grid.nx > 256 || self.grid.ny > 256 {
            return Err(ConfigError::field("grid", "nx and ny must be at most 256"));
        }
        positive("time.T", self.time.t_final)?;
        if self.time.nt < 2 {
            return Err(ConfigError::field("time.nt", "must be at least 2"));
        }
        let m = &self.materials;
        positive("materials.eps", m.eps)?;
        positive("materials.mu", m.mu)?;
        positive("materials.eps_bump_width", m.eps_bump_width)?;
        if !(m.eps_bump_amplitude.is_finite() && m.eps_bump_amplitude > -m.eps) {
            return Err(ConfigError::field("materials.eps_bump_amplitude", "eps + bump must stay positive"));
        }
        if !(m.sigma.is_finite() && m.sigma >= 0.0) {
            return Err(ConfigError::field("materials.sigma", format!("must be nonnegative, got {}", m.sigma)));
        }
        positive("problem.alpha", self.problem.alpha)?;
        if self.problem.s_index >= self.time.nt {
            return Err(ConfigError::field("problem.s_index", format!("must be below time.nt = {}", self.time.nt)));
        }
        if self.problem.terminal_weight == TerminalKind::Resolvent && self.problem.terminal_n == 0 {
            return Err(ConfigError::field("problem.terminal_n", "must be at least 1"));
        }
        let st = &self.initial_state;
        positive("initial_state.width", st.width)?;
        positive("initial_state.radius", st.radius)?;
        if !st.amplitude.is_finite() {
            return Err(ConfigError::field("initial_state.amplitude", "must be finite"));
        }
        positive("solver.cg_tol", self.solver.cg_tol)?;
        let c = &self.checks;
        for (name, v) in [
            ("checks.optimality", c.optimality),
            ("checks.cost_identity", c.cost_identity),
            ("checks.feedback_cheap", c.feedback_cheap),
            ("checks.feedback_independent", c.feedback_independent),
            ("checks.transition", c.transition),
            ("checks.approx_final", c.approx_final),
            ("checks.zero_sigma_control", c.zero_sigma_control),
            ("checks.pq_identity", c.pq_identity),
            ("checks.coercivity", c.coercivity),
            ("checks.admissibility_spread", c.admissibility_spread),
            ("checks.oracle_state", c.oracle_state),
            ("checks.oracle_control", c.oracle_control),
            ("checks.oracle_riccati", c.oracle_riccati),
            ("checks.oracle_spectrum", c.oracle_spectrum),
        ] {
            positive(name, v)?;
        }
        for name in &c.report_only {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(ConfigError::field("checks.report_only", format!("unknown check `{name}`")));
            }
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::field("output.formats", "must name at least one of \"json\", \"csv\""));
        }
        self.validate_study(sub)?;
        match sub {
            Subcommand::ZeroSigma if m.sigma != 0.0 => Err(ConfigError::field(
                "materials.sigma",
                format!("zero-sigma requires sigma = 0, got {}", m.sigma),
            )),
            Subcommand::ZeroSigma if self.problem.terminal_weight != TerminalKind::Identity => {
                Err(ConfigError::field("problem.terminal_weight", "zero-sigma requires \"identity\""))
            }
            Subcommand::OracleCompare => {
                let n = (self.grid.nx + 1) * (self.grid.ny + 1) + self.grid.nx * (self.grid.ny + 1) + self.grid.ny * (self.grid.nx + 1);
                let controls = 2 * (self.grid.nx + self.grid.ny) * self.time.nt;
                if n > mxlqr::approx::dense::MAX_DENSE_STATE || controls > mxlqr::approx::dense::MAX_DENSE_CONTROL {
                    Err(ConfigError::field(
                        "grid",
                        format!("oracle-compare needs a state dimension ≤ {} and ≤ {} control unknowns, got {n} and {controls}",
                            mxlqr::approx::dense::MAX_DENSE_STATE, mxlqr::approx::dense::MAX_DENSE_CONTROL),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn validate_study(&self, sub: Subcommand) -> Result<(), ConfigError> {
        let s = &self.study;
        let nt = self.time.nt;
        match sub {
            Subcommand::Feedback => {
                if s.sample_steps.is_empty() {
                    return Err(ConfigError::field("study.sample_steps", "must not be empty"));
                }
                if let Some(&k) = s.sample_steps.iter().find(|&&k| k <= self.problem.s_index || k >= nt) {
                    return Err(ConfigError::field(
                        "study.sample_steps",
                        format!("step {k} outside ({}, {nt})", self.problem.s_index),
                    ));
                }
            }
            Subcommand::Transition if s.transition_splits == 0 || nt - self.problem.s_index < 3 => {
                return Err(ConfigError::field("study.transition_splits", "needs at least one split and three steps after s"));
            }
            Subcommand::Approx => {
                if s.n_list.len() < 2 || s.n_list.windows(2).any(|w| w[0] >= w[1]) || s.n_list[0] == 0 {
                    return Err(ConfigError::field("study.n_list", "must be strictly increasing positive integers, at least two"));
                }
                if s.probes == 0 {
                    return Err(ConfigError::field("study.probes", "must be at least 1"));
                }
                if s.riccati_times.is_empty() || s.riccati_times.iter().any(|t| !(0.0..1.0).contains(t)) {
                    return Err(ConfigError::field("study.riccati_times", "fractions of T in [0, 1)"));
                }
            }
            Subcommand::ZeroSigma | Subcommand::OracleCompare if s.lanczos_iter < 2 => {
                return Err(ConfigError::field("study.lanczos_iter", "must be at least 2"));
            }
            Subcommand::Admissibility => {
                if s.admissibility_grids.is_empty() || s.admissibility_grids.iter().any(|&n| !(2..=128).contains(&n)) {
                    return Err(ConfigError::field("study.admissibility_grids", "grid sizes in 2..=128, at least one"));
                }
                if s.admissibility_samples == 0 || s.power_steps == 0 {
                    return Err(ConfigError::field("study", "admissibility_samples and power_steps must be positive"));
                }
            }
            _ => {}
        }
        if sub == Subcommand::Solve && s.perturbations == 0 {
            return Err(ConfigError::field("study.perturbations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn report_only(&self, check: &str) -> bool {
        self.checks.report_only.iter().any(|c| c == check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_desk_config() {
        let c = ExperimentConfig::from_text("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!((c.grid.nx, c.grid.ny, c.time.nt, c.time.t_final, c.problem.alpha), (8, 8, 64, 1.0, 1.0));
    }

    #[test]
    fn dotted_keys_and_sections_agree() {
        let a = ExperimentConfig::from_text("grid.nx = 6\ntime.nt = 16\n").unwrap();
        let b = ExperimentConfig::from_text("[grid]\nnx = 6\n[time]\nnt = 16\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grid.nx, 6);
    }

    #[test]
    fn unknown_key_names_line() {
        let e = ExperimentConfig::from_text("[grid]\nnx = 6\nnz = 3\n").unwrap_err();
        assert_eq!(e.location, "line 3, column 1");
        assert!(e.message.contains("nz"), "{e}");
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert!(ExperimentConfig::from_json("{\"grid\": {\"nq\": 1}}").is_err());
    }

    #[test]
    fn zero_sigma_rejects_conductivity() {
        let c = ExperimentConfig::from_text("materials.sigma = 0.1").unwrap();
        let e = c.validate(Subcommand::ZeroSigma).unwrap_err();
        assert_eq!(e.location, "materials.sigma");
        assert!(c.validate(Subcommand::Solve).is_ok());
    }

    #[test]
    fn range_errors_name_the_field() {
        let c = ExperimentConfig::from_text("problem.alpha = -1").unwrap();
        assert_eq!(c.validate(Subcommand::Solve).unwrap_err().location, "problem.alpha");
        let c = ExperimentConfig::from_text("checks.report_only = [\"nope\"]").unwrap();
        assert_eq!(c.validate(Subcommand::Solve).unwrap_err().location, "checks.report_only");
        let c = ExperimentConfig::from_text("study.sample_steps = [0, 70]").unwrap();
        assert_eq!(c.validate(Subcommand::Feedback).unwrap_err().location, "study.sample_steps");
    }
}
