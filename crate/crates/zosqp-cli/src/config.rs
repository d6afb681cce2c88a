//! Run configuration: a sectioned text file ([problem], [solver], [output])
//! plus command-line overrides. Flags win over file values, and the
//! effective configuration is echoed into the run manifest together with a
//! hash that is stable under key reordering.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zosqp::oracle::BlackBox;
use zosqp::problems::power::{default_power_spec, PowerNetworkSpec};
use zosqp::problems::synthetic::{make_synthetic_nlp, SyntheticNlpSpec};
use zosqp::solver::{ModelMode, Schedule, SolverConfig, StepMode};

use crate::CliError;

/// Whole config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSection {
    Synthetic {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_m_ineq")]
        m_ineq: usize,
        #[serde(default = "default_problem_seed")]
        seed: u64,
    },
    Power {
        #[serde(default = "default_problem_seed")]
        seed: u64,
        /// Optional path (relative to the config file) to a full network
        /// spec; takes precedence over `seed`.
        #[serde(default)]
        spec: Option<PathBuf>,
    },
}

fn default_n() -> usize {
    100
}
fn default_m_ineq() -> usize {
    10
}
fn default_problem_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub d: usize,
    /// Finite-difference radius; omitted means scale-adaptive.
    pub r: Option<f64>,
    #[serde(rename = "L")]
    pub prox_weight: f64,
    pub eta: f64,
    pub tau: f64,
    pub sigma: f64,
    pub beta: f64,
    pub max_backtracks: usize,
    pub max_rejections: usize,
    pub lambda_bound: f64,
    pub mu_bound: f64,
    pub seed: u64,
    /// "fixed" or "linesearch".
    pub mode: String,
    /// "two-point" or "exact".
    pub model: String,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub qp_tol: f64,
    pub wall_time: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let base = SolverConfig::default();
        SolverSection {
            d: base.subspace_dim,
            r: base.radius,
            prox_weight: 10.0,
            eta: 0.1,
            tau: base.tau,
            sigma: base.sigma,
            beta: base.beta,
            max_backtracks: base.max_backtracks,
            max_rejections: base.max_rejections,
            lambda_bound: base.lambda_bound,
            mu_bound: base.mu_bound,
            seed: base.seed,
            mode: "fixed".to_string(),
            model: "two-point".to_string(),
            iterations: base.iterations,
            qp_tol: base.qp_tol,
            wall_time: base.record_wall_time,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Emit per-iteration series (objective, violations, KKT gap) as CSVs.
    pub plotdata: bool,
    /// For power runs: simulate the final iterate and write trajectory.csv.
    pub trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), plotdata: true, trajectory: true }
    }
}

/// Command-line overrides; `None` leaves the file value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub d: Option<usize>,
    pub r: Option<f64>,
    pub prox_weight: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub iterations: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(d) = ov.d {
            self.solver.d = d;
        }
        if let Some(r) = ov.r {
            self.solver.r = Some(r);
        }
        if let Some(l) = ov.prox_weight {
            self.solver.prox_weight = l;
        }
        if let Some(tau) = ov.tau {
            self.solver.tau = tau;
        }
        if let Some(seed) = ov.seed {
            self.solver.seed = seed;
        }
        if let Some(mode) = &ov.mode {
            self.solver.mode = mode.clone();
        }
        if let Some(t) = ov.iterations {
            self.solver.iterations = t;
        }
        if let Some(out) = &ov.out {
            self.output.dir = out.clone();
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let mode = match self.solver.mode.as_str() {
            "fixed" => StepMode::FixedStep,
            "linesearch" => StepMode::LineSearch,
            other => {
                return Err(CliError::Config(format!(
                    "unknown mode '{other}', expected 'fixed' or 'linesearch'"
                )))
            }
        };
        let model_mode = match self.solver.model.as_str() {
            "two-point" => ModelMode::TwoPoint,
            "exact" => ModelMode::Exact,
            other => {
                return Err(CliError::Config(format!(
                    "unknown model '{other}', expected 'two-point' or 'exact'"
                )))
            }
        };
        Ok(SolverConfig {
            subspace_dim: self.solver.d,
            radius: self.solver.r,
            prox_schedule: Schedule::Constant(self.solver.prox_weight),
            step_schedule: Schedule::Constant(self.solver.eta),
            lambda_bound: self.solver.lambda_bound,
            mu_bound: self.solver.mu_bound,
            tau: self.solver.tau,
            sigma: self.solver.sigma,
            beta: self.solver.beta,
            max_backtracks: self.solver.max_backtracks,
            max_rejections: self.solver.max_rejections,
            iterations: self.solver.iterations,
            seed: self.solver.seed,
            mode,
            model_mode,
            qp_tol: self.solver.qp_tol,
            qp_max_iter: None,
            record_wall_time: self.solver.wall_time,
        })
    }

    /// Instantiate the configured problem. Paths inside the problem section
    /// resolve relative to `config_dir`.
    pub fn build_problem(&self, config_dir: &Path) -> Result<BuiltProblem, CliError> {
        match &self.problem {
            ProblemSection::Synthetic { n, m_ineq, seed } => Ok(BuiltProblem::Synthetic(
                SyntheticNlpSpec { n: *n, m_ineq: *m_ineq, seed: *seed },
            )),
            ProblemSection::Power { seed, spec } => {
                let network = match spec {
                    Some(rel) => {
                        let path = config_dir.join(rel);
                        let text = fs::read_to_string(&path).map_err(|e| {
                            CliError::Config(format!("cannot read {}: {e}", path.display()))
                        })?;
                        toml::from_str(&text).map_err(|e| {
                            CliError::Config(format!("cannot parse {}: {e}", path.display()))
                        })?
                    }
                    None => default_power_spec(*seed),
                };
                network
                    .validate()
                    .map_err(|e| CliError::Config(format!("invalid network spec: {e}")))?;
                Ok(BuiltProblem::Power(network))
            }
        }
    }
}

/// Resolved problem instance, kept as its spec so runs can re-simulate or
/// re-hash it.
pub enum BuiltProblem {
    Synthetic(SyntheticNlpSpec),
    Power(PowerNetworkSpec),
}

impl BuiltProblem {
    pub fn black_box(&self) -> Result<Box<dyn BlackBox + Send + Sync>, CliError> {
        match self {
            BuiltProblem::Synthetic(spec) => Ok(Box::new(make_synthetic_nlp(spec))),
            BuiltProblem::Power(spec) => {
                let problem = zosqp::problems::power::make_power_problem(spec.clone())
                    .map_err(|e| CliError::Config(format!("invalid network spec: {e}")))?;
                Ok(Box::new(problem))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltProblem::Synthetic(_) => "synthetic-nlp",
            BuiltProblem::Power(_) => "power-dispatch",
        }
    }

    pub fn spec_hash(&self) -> Result<String, CliError> {
        match self {
            BuiltProblem::Synthetic(spec) => canonical_hash(spec),
            BuiltProblem::Power(spec) => canonical_hash(spec),
        }
    }
}

/// SHA-256 of the canonical JSON form (object keys sorted), so the digest is
/// independent of field order in the source.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize for hashing: {e}")))?;
    let text = serde_json::to_string(&v)
        .map_err(|e| CliError::Runtime(format!("cannot serialize for hashing: {e}")))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to reproduce and locate a run, written to
/// manifest.json before the first iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub problem: String,
    pub spec_hash: String,
    pub mode: String,
    pub seed: u64,
    pub config: RunConfig,
    pub config_hash: String,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(
        config: &RunConfig,
        problem: &BuiltProblem,
        outputs: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        Ok(RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            problem: problem.name().to_string(),
            spec_hash: problem.spec_hash()?,
            mode: config.solver.mode.clone(),
            seed: config.solver.seed,
            config: config.clone(),
            config_hash: canonical_hash(config)?,
            outputs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        toml::from_str(
            r#"
            [problem]
            kind = "synthetic"
            n = 40
            m_ineq = 4

            [solver]
            d = 5
            L = 8.0
            T = 25
            mode = "linesearch"

            [output]
            dir = "artifacts"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn parses_sections_and_fills_defaults() {
        let cfg = sample();
        assert!(matches!(cfg.problem, ProblemSection::Synthetic { n: 40, m_ineq: 4, seed: 7 }));
        assert_eq!(cfg.solver.d, 5);
        assert_eq!(cfg.solver.iterations, 25);
        assert_eq!(cfg.solver.tau, 100.0);
        assert_eq!(cfg.output.dir, PathBuf::from("artifacts"));
        assert!(cfg.output.plotdata);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut cfg = sample();
        cfg.apply(&Overrides {
            d: Some(3),
            seed: Some(99),
            mode: Some("fixed".to_string()),
            iterations: Some(10),
            tau: Some(50.0),
            ..Overrides::default()
        });
        assert_eq!(cfg.solver.d, 3);
        assert_eq!(cfg.solver.seed, 99);
        assert_eq!(cfg.solver.mode, "fixed");
        assert_eq!(cfg.solver.iterations, 10);
        assert_eq!(cfg.solver.tau, 50.0);
    }

    #[test]
    fn solver_config_reflects_the_sections() {
        let cfg = sample();
        let sc = cfg.solver_config().unwrap();
        assert_eq!(sc.subspace_dim, 5);
        assert_eq!(sc.iterations, 25);
        assert_eq!(sc.mode, StepMode::LineSearch);
        assert_eq!(sc.prox_schedule.value(0), 8.0);
    }

    #[test]
    fn bad_mode_and_unknown_keys_are_config_errors() {
        let mut cfg = sample();
        cfg.solver.mode = "both".to_string();
        assert!(matches!(cfg.solver_config(), Err(CliError::Config(_))));
        let text = "[problem]\nkind = \"synthetic\"\nbogus = 1\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn canonical_hash_ignores_key_order() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"b": 1, "a": [1, 2], "c": {"y": 2.5, "x": 1.5}}"#).unwrap();
        let b: serde_json::Value =
            serde_json::from_str(r#"{"c": {"x": 1.5, "y": 2.5}, "a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(canonical_hash(&a).unwrap(), canonical_hash(&b).unwrap());
    }

    #[test]
    fn manifest_hash_round_trips_through_json() {
        let cfg = sample();
        let problem = cfg.build_problem(Path::new(".")).unwrap();
        let manifest = RunManifest::new(&cfg, &problem, BTreeMap::new()).unwrap();
        let text = serde_json::to_string(&manifest).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(canonical_hash(&back.config).unwrap(), manifest.config_hash);
    }
}
