use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregators::{self, Aggregator, LogitGrid, ThetaGrid};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::model::{InfoStructure, Model, SampleSet};

/// Where the experiment's ground-truth model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Inline(Model),
    /// Path to a model JSON file, relative to the config file.
    File(String),
    Generator {
        #[serde(flatten)]
        spec: GeneratorSpec,
        /// Defaults to the experiment's master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ModelSource {
    pub fn resolve(&self, base_dir: &Path, master_seed: u64) -> Result<Model> {
        match self {
            Self::Inline(m) => Ok(m.clone()),
            Self::File(p) => Model::from_json(&std::fs::read_to_string(base_dir.join(p))?),
            Self::Generator { spec, seed } => spec.build(seed.unwrap_or(master_seed)),
        }
    }
}

/// A learner and its hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LearnerSpec {
    /// Oracle that ignores the samples.
    BayesOptimal,
    Averaging,
    ErmEmpirical,
    EmpiricalBayes,
    ErmTheta {
        #[serde(default)]
        grid: ThetaGrid,
    },
    MultiErmTheta {
        #[serde(default)]
        grid: LogitGrid,
    },
    StronglyInformative {
        gamma: f64,
        eps: f64,
        delta: f64,
    },
    WeaklyInformative {
        gamma: f64,
    },
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BayesOptimal => "bayes_optimal",
            Self::Averaging => "averaging",
            Self::ErmEmpirical => "erm_empirical",
            Self::EmpiricalBayes => "empirical_bayes",
            Self::ErmTheta { .. } => "erm_theta",
            Self::MultiErmTheta { .. } => "multi_erm_theta",
            Self::StronglyInformative { .. } => "strong_informative",
            Self::WeaklyInformative { .. } => "weak_informative",
        }
    }

    /// Trains on `samples`; `oracle` is returned as-is for `bayes_optimal`.
    pub fn train(&self, samples: &SampleSet, oracle: Option<&Aggregator>) -> Result<Aggregator> {
        match self {
            Self::BayesOptimal => {
                oracle.cloned().ok_or_else(|| Error::InvalidParameter("bayes_optimal needs the model".into()))
            }
            Self::Averaging => Ok(Aggregator::averaging(samples.k())),
            Self::ErmEmpirical => aggregators::erm_empirical(samples),
            Self::EmpiricalBayes => aggregators::empirical_bayes(samples),
            Self::ErmTheta { grid } => aggregators::erm_theta(samples, grid),
            Self::MultiErmTheta { grid } => aggregators::multi_erm_theta(samples, grid),
            Self::StronglyInformative { gamma, eps, delta } => {
                aggregators::strongly_informative_learn(samples, *gamma, *eps, *delta, samples.n())
            }
            Self::WeaklyInformative { gamma } => aggregators::weakly_informative_learn(samples, *gamma, samples.n()),
        }
    }
}

/// Sample sizes to visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    List(Vec<usize>),
    /// `points` values spaced geometrically from `start` to `stop`, rounded.
    Geometric {
        start: usize,
        stop: usize,
        points: usize,
    },
}

impl Schedule {
    pub fn values(&self) -> Result<Vec<usize>> {
        let v = match self {
            Self::List(v) => v.clone(),
            Self::Geometric { start, stop, points } => {
                if *start == 0 || stop < start || *points == 0 {
                    return Err(Error::InvalidParameter("geometric schedule needs 0 < start <= stop".into()));
                }
                if *points == 1 {
                    vec![*start]
                } else {
                    let ratio = (*stop as f64 / *start as f64).ln() / (*points - 1) as f64;
                    (0..*points).map(|i| (*start as f64 * (ratio * i as f64).exp()).round() as usize).collect()
                }
            }
        };
        if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!("schedule {v:?} must be nonempty and strictly increasing")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Evaluation {
    #[default]
    Exact,
    /// Gap and loss on `budget` fresh draws shared by every cell.
    MonteCarlo { budget: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
}

/// One sample-complexity experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub learner: LearnerSpec,
    pub schedule: Schedule,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.values()?;
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if let Evaluation::MonteCarlo { budget: 0 } = self.evaluation {
            return Err(Error::InvalidParameter("monte_carlo budget must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load_model(&self, base_dir: &Path) -> Result<Model> {
        let m = self.model.resolve(base_dir, self.seed)?;
        if m.n() == 0 {
            return Err(Error::InvalidParameter("model has no experts".into()));
        }
        Ok(m)
    }
}
