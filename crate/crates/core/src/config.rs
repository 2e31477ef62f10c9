//! One JSON document describes an entire experiment. Its canonical
//! serialization is hashed and the hash stamps every artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::StandaloneConfig;
use crate::distill::{BlockLearningRates, TeacherSpec};
use crate::error::{Error, Result};
use crate::evolve::{PlusConfig, SslHyper};
use crate::net::CellShape;
use crate::numkernel::{Activation, TrainHyper};
use crate::pipeline::DnaSettings;
use crate::rate::Metric;
use crate::rng::{derive_seed, stream};
use crate::space::{BlockSpec, CellSpec, Constraint, OpDescriptor, SearchSpace};
use crate::task::TaskConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub catalog: Vec<OpDescriptor>,
    pub blocks: Vec<BlockSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub blocks: Vec<CellShape>,
    pub train: TrainHyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupernetConfig {
    pub train: TrainHyper,
    #[serde(default)]
    pub rates: BlockLearningRates,
    #[serde(default)]
    pub metric: Metric,
}

/// Whole-network weight-sharing baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub train: TrainHyper,
    #[serde(default = "mse")]
    pub metric: Metric,
}

fn mse() -> Metric {
    Metric::Mse
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    #[serde(default)]
    pub hyper: SslHyper,
    pub train: TrainHyper,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(default)]
    pub constraint: Constraint,
    /// Per-block loss balance; empty means all ones.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Ascending parameter budgets for the budget sweep.
    #[serde(default)]
    pub budgets: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Catalog for the op-count sweep; its leading ops must match the
    /// space's catalog so every op count shares the smallest space.
    pub op_catalog: Vec<OpDescriptor>,
    pub op_counts: Vec<usize>,
    /// Fixed budget of every whole-net supernet in the op-count sweep.
    pub op_train: TrainHyper,
    pub checkpoints: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Fixed optimizer-step budget per block in the data-amount sweep.
    pub data_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub space: SpaceConfig,
    pub task: TaskConfig,
    pub teacher: TeacherConfig,
    pub supernet: SupernetConfig,
    pub baseline: BaselineConfig,
    pub standalone: StandaloneConfig,
    pub ssl: SslConfig,
    #[serde(default)]
    pub plus: PlusConfig,
    #[serde(default)]
    pub search: SearchConfig,
    pub sweep: SweepConfig,
    #[serde(default = "default_cap")]
    pub bench_cap: usize,
}

fn default_cap() -> usize {
    2000
}

fn bottleneck(e: usize, a: Activation) -> OpDescriptor {
    OpDescriptor::bottleneck(e, a)
}

impl Default for RunConfig {
    /// The canonical toy experiment: two blocks, each with a one-layer
    /// width-4 cell and a two-layer width-8 cell, three ops, 144
    /// architectures.
    fn default() -> Self {
        use Activation::{Relu, Tanh};
        let catalog = vec![
            bottleneck(2, Relu),
            bottleneck(6, Relu),
            bottleneck(4, Tanh),
        ];
        let cells = || vec![CellSpec::new(1, 4), CellSpec::new(2, 8)];
        let train = |learning_rate: f64, epochs: usize, lr_decay: f64| TrainHyper {
            learning_rate,
            epochs,
            batch_size: 32,
            lr_decay,
            ..TrainHyper::default()
        };
        let teacher_cell = CellShape {
            width: 24,
            ops: vec![bottleneck(4, Tanh); 3],
        };
        let supernet = TrainHyper {
            decay_every_steps: Some(250),
            ..train(0.005, 120, 0.9)
        };
        RunConfig {
            seed: 1,
            space: SpaceConfig {
                catalog,
                blocks: vec![
                    BlockSpec {
                        input_width: 8,
                        output_width: 12,
                        cells: cells(),
                    },
                    BlockSpec {
                        input_width: 12,
                        output_width: 4,
                        cells: cells(),
                    },
                ],
            },
            task: TaskConfig {
                input_dim: 8,
                output_dim: 4,
                rows: 1000,
                val_fraction: 0.2,
                oracle_width: 32,
                oracle_depth: 3,
                oracle_gain: 2.0,
                noise: 0.0,
            },
            teacher: TeacherConfig {
                blocks: vec![teacher_cell.clone(), teacher_cell],
                train: train(0.003, 80, 0.97),
            },
            supernet: SupernetConfig {
                train: supernet.clone(),
                rates: BlockLearningRates {
                    first_block: 0.003,
                    other_blocks: 0.008,
                },
                metric: Metric::RelativeL1,
            },
            baseline: BaselineConfig {
                train: supernet.clone(),
                metric: Metric::Mse,
            },
            standalone: StandaloneConfig {
                train: train(0.005, 40, 0.95),
                repeats: 1,
                patience: None,
            },
            ssl: SslConfig {
                hyper: SslHyper::default(),
                train: train(0.01, 100, 0.95),
            },
            plus: PlusConfig::default(),
            search: SearchConfig {
                weights: vec![4.0, 1.0],
                ..SearchConfig::default()
            },
            sweep: SweepConfig {
                op_catalog: vec![
                    bottleneck(2, Relu),
                    bottleneck(6, Relu),
                    bottleneck(4, Tanh),
                    bottleneck(2, Tanh),
                    bottleneck(4, Relu),
                    bottleneck(6, Tanh),
                    bottleneck(8, Relu),
                    bottleneck(8, Tanh),
                ],
                op_counts: vec![2, 4, 8],
                op_train: TrainHyper {
                    decay_every_steps: Some(625),
                    ..train(0.005, 300, 0.9)
                },
                checkpoints: vec![0, 5, 10, 20, 40, 80, 120],
                fractions: vec![1.0, 0.8, 0.4],
                data_steps: 3000,
            },
            bench_cap: default_cap(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: format!("line {} column {}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_seed(&self, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prefix = |p: &str, e: Error| match e {
            Error::Config { path, reason } => Error::Config {
                path: format!(
                    "{p}.{}",
                    path.split_once('.').map_or(path.as_str(), |x| x.1)
                ),
                reason,
            },
            other => other,
        };
        self.search_space()?;
        self.task.validate()?;
        for (name, h) in [
            ("teacher.train", &self.teacher.train),
            ("supernet.train", &self.supernet.train),
            ("baseline.train", &self.baseline.train),
            ("standalone.train", &self.standalone.train),
            ("ssl.train", &self.ssl.train),
            ("sweep.op_train", &self.sweep.op_train),
        ] {
            h.validate().map_err(|e| prefix(name, e))?;
        }
        self.ssl.hyper.validate()?;
        let cfg_err = |path: &str, reason: &str| Error::Config {
            path: path.into(),
            reason: reason.into(),
        };
        let space = self.search_space()?;
        if self.teacher.blocks.len() != space.blocks.len() {
            return Err(cfg_err(
                "teacher.blocks",
                "one teacher cell per block is required",
            ));
        }
        if self
            .teacher
            .blocks
            .iter()
            .any(|c| c.width == 0 || c.ops.is_empty())
        {
            return Err(cfg_err(
                "teacher.blocks",
                "teacher cells need positive width and at least one op",
            ));
        }
        if self.task.input_dim != space.input_width()
            || self.task.output_dim != space.output_width()
        {
            return Err(cfg_err(
                "task.input_dim",
                "task dimensions must match the space's outer widths",
            ));
        }
        self.search.constraint.validate()?;
        if !self.search.weights.is_empty() && self.search.weights.len() != space.blocks.len() {
            return Err(cfg_err(
                "search.weights",
                "one weight per block is required",
            ));
        }
        if self
            .search
            .weights
            .iter()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(cfg_err("search.weights", "weights must be positive"));
        }
        if self.search.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg_err(
                "search.budgets",
                "budgets must be strictly ascending",
            ));
        }
        if !(self.plus.depth_mult >= 1.0 && self.plus.width_mult >= 1.0)
            || self.plus.generations == 0
        {
            return Err(cfg_err(
                "plus",
                "need generations >= 1 and multipliers >= 1",
            ));
        }
        let shared = self.sweep.op_catalog.len().min(space.catalog.len());
        if self.sweep.op_catalog[..shared] != space.catalog[..shared] {
            return Err(cfg_err(
                "sweep.op_catalog",
                "leading ops must match space.catalog",
            ));
        }
        if self
            .sweep
            .op_counts
            .iter()
            .any(|&c| c > self.sweep.op_catalog.len())
        {
            return Err(cfg_err("sweep.op_counts", "op count exceeds sweep catalog"));
        }
        if self.sweep.data_steps == 0 {
            return Err(cfg_err("sweep.data_steps", "must be positive"));
        }
        if self.bench_cap == 0 {
            return Err(cfg_err("bench_cap", "must be positive"));
        }
        Ok(())
    }

    pub fn search_space(&self) -> Result<SearchSpace> {
        SearchSpace::new(self.space.catalog.clone(), self.space.blocks.clone())
    }

    /// The op-count sweep's space: the same blocks over the sweep catalog.
    pub fn sweep_space(&self) -> Result<SearchSpace> {
        SearchSpace::new(self.sweep.op_catalog.clone(), self.space.blocks.clone())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn stage(&self, h: &TrainHyper, tag: u64) -> TrainHyper {
        h.with_seed(derive_seed(self.seed, &[tag]))
    }

    pub fn teacher_spec(&self) -> TeacherSpec {
        TeacherSpec {
            blocks: self.teacher.blocks.clone(),
        }
    }

    pub fn teacher_hyper(&self) -> TrainHyper {
        self.stage(&self.teacher.train, stream::TEACHER)
    }

    pub fn supernet_hyper(&self) -> TrainHyper {
        self.stage(&self.supernet.train, stream::SUPERNET_TRAIN)
    }

    pub fn dna_settings(&self, workers: usize) -> DnaSettings {
        DnaSettings {
            supernet: self.supernet_hyper(),
            rates: self.supernet.rates,
            metric: self.supernet.metric,
            workers,
        }
    }

    pub fn baseline_hyper(&self) -> TrainHyper {
        self.stage(&self.baseline.train, stream::BASELINE)
    }

    pub fn standalone_config(&self) -> StandaloneConfig {
        StandaloneConfig {
            train: self.stage(&self.standalone.train, stream::STANDALONE),
            ..self.standalone.clone()
        }
    }

    pub fn ssl_hyper(&self) -> TrainHyper {
        self.stage(&self.ssl.train, stream::SSL)
    }

    pub fn op_sweep_hyper(&self) -> TrainHyper {
        self.stage(&self.sweep.op_train, stream::BASELINE)
    }
}
