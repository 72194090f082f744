//! TOML run configuration.
//!
//! ```toml
//! master_seed = 7          # default 0
//! output = "out"           # default "bitfusion-out"
//!
//! [model]
//! kind = "brownian_constant"
//! k = 2
//! x = [1.0, 1.0]
//!
//! [[trigger]]              # one table per sensor
//! delta_up = 1.0
//! delta_down = 1.0
//! # c = 1.0                # required exactly when A^i and A are random
//! # mode = "continuous"    # default; or { discrete_sampling = { h = 0.1 } }
//!
//! [experiment]
//! lambda_true = 1.0
//! n_replications = 100
//! estimators = ["centralized_fixed", "decentralized_fixed"]
//! steps_per_unit = 100.0   # default 100
//! max_extensions = 4       # default 4
//! [experiment.regime.fixed_horizon]
//! t_list = [100.0]
//! delta_rule = { a = 1.0, b = 0.25 }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::EstimatorKind;
use crate::harness::{ExperimentConfig, HarnessError, Regime, DEFAULT_MAX_EXTENSIONS};
use crate::model::{build_model, ModelError, ModelSpec, TimeGrid};
use crate::trigger::TriggerConfig;

pub const DEFAULT_OUTPUT: &str = "bitfusion-out";
pub const DEFAULT_STEPS_PER_UNIT: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

fn default_output() -> PathBuf {
    PathBuf::from(DEFAULT_OUTPUT)
}

fn default_steps() -> f64 {
    DEFAULT_STEPS_PER_UNIT
}

fn default_max_extensions() -> u32 {
    DEFAULT_MAX_EXTENSIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub lambda_true: f64,
    pub n_replications: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_steps")]
    pub steps_per_unit: f64,
    #[serde(default = "default_max_extensions")]
    pub max_extensions: u32,
    pub regime: Regime,
}

/// TOML integers are signed, so seeds above `i64::MAX` are written as strings.
mod seed_repr {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        if i64::try_from(*seed).is_ok() {
            s.serialize_u64(*seed)
        } else {
            s.serialize_str(&seed.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Str(s) => s
                .parse()
                .map_err(|_| D::Error::custom(format!("master_seed `{s}` is not an unsigned 64-bit integer"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, with = "seed_repr")]
    pub master_seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub model: ModelSpec,
    pub trigger: Vec<TriggerConfig>,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    pub fn experiment_config(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            model: self.model.clone(),
            lambda_true: e.lambda_true,
            regime: e.regime.clone(),
            n_replications: e.n_replications,
            master_seed: self.master_seed,
            estimators: e.estimators.clone(),
            steps_per_unit: e.steps_per_unit,
            max_extensions: e.max_extensions,
        }
    }

    /// Horizon of a single-replication run (`simulate`, `estimate`).
    pub fn horizon(&self) -> f64 {
        match &self.experiment.regime {
            Regime::FixedHorizon { t_list, .. } => t_list.iter().copied().fold(0.0, f64::max),
            Regime::Sequential { initial_horizon, .. } => *initial_horizon,
            Regime::DiscreteSampling { t, .. } => *t,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid, ModelError> {
        TimeGrid::with_resolution(self.horizon(), self.experiment.steps_per_unit)
    }

    /// Every violation found, or `Ok` when the config is usable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let model = match build_model(self.model.clone()) {
            Ok(m) => Some(m),
            Err(ModelError::InvalidSpec(v)) => {
                errs.extend(v.into_iter().map(|e| format!("model: {e}")));
                None
            }
            Err(e) => {
                errs.push(format!("model: {e}"));
                None
            }
        };
        let dt = self.grid().ok().map(|g| g.dt());
        for (i, t) in self.trigger.iter().enumerate() {
            errs.extend(t.problems(dt).into_iter().map(|e| format!("trigger[{i}]: {e}")));
        }
        if let Some(model) = &model {
            if self.trigger.len() != model.k() {
                errs.push(format!(
                    "trigger: {} sections given for {} sensors",
                    self.trigger.len(),
                    model.k()
                ));
            } else {
                for (i, t) in self.trigger.iter().enumerate() {
                    if let Err(e) = t.check_against(model, i) {
                        errs.push(format!("trigger[{i}]: {e}"));
                    }
                }
            }
            match self.experiment_config().validate() {
                Ok(_) => {}
                Err(HarnessError::InvalidConfig(v)) => {
                    errs.extend(v.into_iter().map(|e| format!("experiment: {e}")))
                }
                Err(e) => errs.push(format!("experiment: {e}")),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(errs))
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Strict parse: syntax errors are `Parse` (with line and column), unknown or
/// missing fields and invalid values are `Validation`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Validation(vec![e.message().to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::PowerLaw;
    use crate::timefn::TimeFnSpec;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[model]
kind = "brownian_constant"
k = 2
x = [1.0, 1.0]

[[trigger]]
delta_up = 1.0
delta_down = 1.0

[[trigger]]
delta_up = 2.0
delta_down = 1.5

[experiment]
lambda_true = 1.0
n_replications = 10
estimators = ["centralized_fixed", "decentralized_fixed"]

[experiment.regime.fixed_horizon]
t_list = [10.0, 100.0]
delta_rule = { a = 1.0, b = 0.25 }
"#;

    #[test]
    fn minimal_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.master_seed, 0);
        assert_eq!(cfg.output, PathBuf::from(DEFAULT_OUTPUT));
        assert_eq!(cfg.experiment.steps_per_unit, DEFAULT_STEPS_PER_UNIT);
        assert_eq!(cfg.experiment.max_extensions, DEFAULT_MAX_EXTENSIONS);
        assert_eq!(cfg.trigger[1].delta_down, 1.5);
        assert_eq!(cfg.horizon(), 100.0);
    }

    #[test]
    fn unknown_key_named() {
        let text = MINIMAL.replace("k = 2", "k = 2\nfoo = 3");
        match parse_config(&text) {
            Err(ConfigError::Validation(v)) => assert!(v.iter().any(|e| e.contains("foo")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_threshold_rejected() {
        let text = MINIMAL.replace("delta_down = 1.5", "delta_down = -1.0");
        match parse_config(&text) {
            Err(ConfigError::Validation(v)) => assert!(v.iter().any(|e| e.contains("delta_down")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_listed() {
        let text = MINIMAL
            .replace("delta_down = 1.5", "delta_down = -1.0")
            .replace("n_replications = 10", "n_replications = 1")
            .replace("delta_up = 2.0", "delta_up = 2.0\nc = 1.0");
        match parse_config(&text) {
            Err(ConfigError::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn large_seed_as_string() {
        let text = format!("master_seed = \"{}\"\n{MINIMAL}", u64::MAX);
        assert_eq!(parse_config(&text).unwrap().master_seed, u64::MAX);
        let bad = format!("master_seed = \"x1\"\n{MINIMAL}");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_config("[model\nkind = 1") {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_section_rejected() {
        let text = MINIMAL.split("[experiment]").next().unwrap();
        assert!(matches!(parse_config(text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn sequential_with_piecewise_model_round_trips() {
        let cfg = RunConfig {
            master_seed: 11,
            output: "o".into(),
            model: ModelSpec::gaussian_det_info(
                vec![
                    TimeFnSpec::Piecewise {
                        breaks: vec![0.0, 1.0],
                        pieces: vec![vec![1.0], vec![1.0, 0.5]],
                    },
                    1.0.into(),
                ],
                vec![vec![1.0.into(), 0.5.into()], vec![0.5.into(), 1.0.into()]],
            ),
            trigger: vec![TriggerConfig::symmetric(1.0, None); 2],
            experiment: ExperimentSection {
                lambda_true: 1.0,
                n_replications: 4,
                estimators: vec![EstimatorKind::CentralizedSequential, EstimatorKind::DecentralizedSequential],
                steps_per_unit: 10.0,
                max_extensions: 2,
                regime: Regime::Sequential {
                    gamma_list: vec![10.0],
                    c_rule: PowerLaw { a: 1.0, b: 0.25 },
                    delta_rule: PowerLaw { a: 1.0, b: 0.25 },
                    initial_horizon: 20.0,
                },
            },
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn round_trip(
            seed in any::<u64>(),
            x in proptest::collection::vec(0.1f64..5.0, 1..4),
            delta in 0.1f64..10.0,
            lambda in -3.0f64..3.0,
            n in 2usize..1000,
            t in 1.0f64..1e4,
            spu in prop_oneof![Just(10.0), Just(50.0), Just(100.0)],
        ) {
            let k = x.len();
            let cfg = RunConfig {
                master_seed: seed,
                output: "runs/a".into(),
                model: ModelSpec::brownian(x),
                trigger: vec![TriggerConfig::symmetric(delta, None); k],
                experiment: ExperimentSection {
                    lambda_true: lambda,
                    n_replications: n,
                    estimators: vec![EstimatorKind::CentralizedFixed, EstimatorKind::TimingOnly],
                    steps_per_unit: spu,
                    max_extensions: 4,
                    regime: Regime::FixedHorizon { t_list: vec![t], delta_rule: PowerLaw { a: delta, b: 0.0 } },
                },
            };
            let text = cfg.to_toml().unwrap();
            prop_assert_eq!(parse_config(&text).unwrap(), cfg);
        }
    }
}
