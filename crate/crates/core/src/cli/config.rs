use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::env::DriftSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyOperators,
    DriftSweep,
    ChainsVsWalk,
    RayKnightCompare,
    TauCompare,
    ExpTimeCompare,
    ProcessCompare,
    CoupledPair,
    GwCheck,
    Recurrence,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::VerifyOperators,
        Experiment::DriftSweep,
        Experiment::ChainsVsWalk,
        Experiment::RayKnightCompare,
        Experiment::TauCompare,
        Experiment::ExpTimeCompare,
        Experiment::ProcessCompare,
        Experiment::CoupledPair,
        Experiment::GwCheck,
        Experiment::Recurrence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyOperators => "verify-operators",
            Experiment::DriftSweep => "drift-sweep",
            Experiment::ChainsVsWalk => "chains-vs-walk",
            Experiment::RayKnightCompare => "ray-knight-compare",
            Experiment::TauCompare => "tau-compare",
            Experiment::ExpTimeCompare => "exp-time-compare",
            Experiment::ProcessCompare => "process-compare",
            Experiment::CoupledPair => "coupled-pair",
            Experiment::GwCheck => "gw-check",
            Experiment::Recurrence => "recurrence",
        }
    }

    pub fn names() -> String {
        Self::ALL.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::new("experiment", format!("unknown experiment `{s}`; expected one of {}", Self::names())))
    }
}

/// A rejected configuration, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

/// Everything an experiment needs. Every field has a per-experiment
/// default (see [`ExperimentConfig::preset`]); a JSON config overrides any
/// subset, and the resolved document is echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub field: DriftSpec,
    pub n_list: Vec<u32>,
    /// Replicates per sample (SDE side, or both sides when
    /// `lattice_reps` is unset).
    pub reps: usize,
    /// Replicates for walk/chain samples, when different from `reps`.
    pub lattice_reps: Option<usize>,
    /// Space step of the local-time diffusions.
    pub dx: f64,
    /// Time step of the excited Brownian motion.
    pub dt: f64,
    /// Occupation bin width of the excited Brownian motion.
    pub delta: f64,
    pub a: f64,
    pub v: f64,
    /// Upper level of the coupled pair.
    pub v2: f64,
    /// Space points where profiles are compared.
    pub x_eval: Vec<f64>,
    /// Time at which `X^(n)` and `Y` are compared.
    pub t_eval: f64,
    /// Rate of the exponential (and geometric) time.
    pub rate: f64,
    /// Right end of the diffusion window (both ends for `tau-compare`).
    pub x_max: f64,
    /// Scaled time beyond which inverse local times are censored.
    pub tau_cap: f64,
    /// Half-width of the window for the zero-field Laplace cross-check.
    pub laplace_window: f64,
    /// Optional walk window `[lo, hi]` in scaled space units.
    pub walk_window: Option<[f64; 2]>,
    /// Step cap for walks.
    pub cap: u64,
    pub gw_p: f64,
    pub gw_k: u64,
    pub gw_initial: u64,
    /// Overrides the experiment's acceptance threshold.
    pub threshold: Option<f64>,
    /// Number of kernel iterations per unit of `n` in `drift-sweep`.
    pub m_over_n: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 0x5eed_c00c;

impl ExperimentConfig {
    /// Defaults for `experiment`.
    pub fn preset(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            field: DriftSpec::indicator(1.0, 0.0, 1.0),
            n_list: vec![25, 100, 400],
            reps: 10_000,
            lattice_reps: None,
            dx: 1e-3,
            dt: 1e-4,
            delta: 1e-2,
            a: 0.0,
            v: 1.0,
            v2: 2.0,
            x_eval: vec![1.0],
            t_eval: 1.0,
            rate: 1.0,
            x_max: 2.0,
            tau_cap: 5.0,
            laplace_window: 200.0,
            walk_window: None,
            cap: crate::walk::DEFAULT_CAP,
            gw_p: 0.52,
            gw_k: 50,
            gw_initial: 20,
            threshold: None,
            m_over_n: 1.0,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("results").join(experiment.name()),
        };
        match experiment {
            Experiment::VerifyOperators | Experiment::GwCheck | Experiment::Recurrence => {}
            Experiment::DriftSweep => c.field = DriftSpec::constant(1.0),
            Experiment::ChainsVsWalk => {
                c.n_list = vec![25];
                c.a = -0.5;
                c.x_eval = vec![0.0];
                c.walk_window = Some([-1.0, 0.0]);
            }
            Experiment::RayKnightCompare => c.dx = 1e-4,
            Experiment::TauCompare => {
                c.n_list = vec![400];
                c.lattice_reps = Some(2000);
                c.x_max = 20.0;
            }
            Experiment::ExpTimeCompare | Experiment::ProcessCompare => c.n_list = vec![100],
            Experiment::CoupledPair => {
                c.field = DriftSpec::constant(0.0);
                c.n_list = vec![200];
                c.reps = 1000;
                c.lattice_reps = Some(10_000);
                c.x_max = 1.0;
            }
        }
        c
    }

    /// Resolves a config from an optional JSON document and command-line
    /// overrides, then validates it.
    pub fn resolve(document: Option<&Value>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let user = match document {
            None => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(ConfigError::new("config", "the config must be a JSON object")),
        };
        let name = match (&overrides.experiment, user.get("experiment")) {
            (Some(n), _) => n.clone(),
            (None, Some(Value::String(n))) => n.clone(),
            (None, Some(_)) => return Err(ConfigError::new("experiment", "must be a string")),
            (None, None) => return Err(ConfigError::new("experiment", "no experiment given (use --experiment)")),
        };
        let experiment: Experiment = name.parse()?;
        let preset = serde_json::to_value(Self::preset(experiment)).expect("configs serialize");
        let merge = |keys: &mut dyn Iterator<Item = (&String, &Value)>| {
            let mut doc = preset.clone();
            let obj = doc.as_object_mut().expect("object");
            for (k, v) in keys {
                if k != "experiment" {
                    obj.insert(k.clone(), v.clone());
                }
            }
            serde_json::from_value::<Self>(doc)
        };
        let mut config = match merge(&mut user.iter()) {
            Ok(c) => c,
            Err(e) => {
                // name the first key that fails on its own
                let field = user
                    .iter()
                    .find(|kv| merge(&mut std::iter::once(*kv)).is_err())
                    .map_or_else(|| "config".to_string(), |(k, _)| k.clone());
                return Err(ConfigError::new(field, e.to_string()));
            }
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(r) = overrides.reps {
            config.reps = r;
            config.lattice_reps = None;
        }
        if let Some(o) = &overrides.out_dir {
            config.out_dir = o.clone();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn lattice_reps(&self) -> usize {
        self.lattice_reps.unwrap_or(self.reps)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |f: &str, r: String| Err(ConfigError::new(f, r));
        if self.n_list.is_empty() || self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return err("n_list", format!("must be a nonempty strictly increasing list of positive integers, got {:?}", self.n_list));
        }
        if self.reps < 2 {
            return err("reps", format!("need at least 2 replicates, got {}", self.reps));
        }
        if self.lattice_reps.is_some_and(|r| r < 2) {
            return err("lattice_reps", "need at least 2 replicates".into());
        }
        let positive = [
            ("dx", self.dx),
            ("dt", self.dt),
            ("delta", self.delta),
            ("t_eval", self.t_eval),
            ("rate", self.rate),
            ("x_max", self.x_max),
            ("tau_cap", self.tau_cap),
            ("laplace_window", self.laplace_window),
            ("m_over_n", self.m_over_n),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return err(name, format!("must be positive and finite, got {x}"));
            }
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return err("threshold", format!("must be positive, got {t}"));
            }
        }
        if !(self.a <= 0.0 && self.a.is_finite()) {
            return err("a", format!("anchor must satisfy a <= 0, got {}", self.a));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return err("v", format!("level must be nonnegative, got {}", self.v));
        }
        if !(self.v2 >= self.v && self.v2.is_finite()) {
            return err("v2", format!("need v2 >= v, got {} < {}", self.v2, self.v));
        }
        if self.x_eval.is_empty() || self.x_eval.iter().any(|x| !x.is_finite()) {
            return err("x_eval", "need at least one finite evaluation point".into());
        }
        if let Some([lo, hi]) = self.walk_window {
            let inside = |x: f64| lo <= x && x <= hi;
            if !(lo < hi) || !inside(self.a) || !self.x_eval.iter().all(|&x| inside(x)) {
                return err("walk_window", format!("[{lo}, {hi}] must contain a and every x_eval"));
            }
        }
        if self.cap == 0 {
            return err("cap", "must be positive".into());
        }
        if !(self.gw_p > 0.0 && self.gw_p < 1.0) {
            return err("gw_p", format!("must lie in (0, 1), got {}", self.gw_p));
        }
        if self.gw_k == 0 {
            return err("gw_k", "must be positive".into());
        }
        if self.gw_initial == 0 {
            return err("gw_initial", "must be positive".into());
        }
        if let Err(e) = self.field.build() {
            return err("field", e.to_string());
        }
        Ok(())
    }
}
