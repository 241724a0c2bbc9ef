//! Experiment configuration, stored as TOML with one table per concern:
//!
//! ```toml
//! [experiment]
//! kind = "mnist_grid"      # mnist_grid | cora | grid_equivalence | bench
//! seed = 1
//! runs = 1
//!
//! [data]
//! dir = "data/mnist"
//! train_limit = 2000
//! test_limit = 500
//!
//! [model]
//! architecture = "SConv((5,5),1,32) -> ELU -> MaxP(4) -> FC(10)"
//! pseudo = "cartesian"
//! degree = 1
//!
//! [train]
//! epochs = 5
//! batch_size = 16
//! lr = 0.001
//! ```
//!
//! Omitted keys take the defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conv::Strategy;
use crate::error::{read_to_string, Error, Result};
use crate::graph::Neighborhood;
use crate::harness::arch::Architecture;
use crate::nn::{AdamConfig, WeightDecay};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    MnistGrid,
    Cora,
    GridEquivalence,
    Bench,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MnistGrid => "mnist_grid",
            ExperimentKind::Cora => "cora",
            ExperimentKind::GridEquivalence => "grid_equivalence",
            ExperimentKind::Bench => "bench",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub equivalence: EquivalenceSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Independent training runs with seeds `seed, seed + 1, ...`.
    pub runs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { kind: ExperimentKind::MnistGrid, seed: 0, runs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: PathBuf,
    pub train_limit: usize,
    pub test_limit: usize,
    /// Grid neighborhood: cross4, full8 or full24.
    pub neighborhood: String,
    pub self_loops: bool,
    /// Node split sizes for node classification.
    pub train_nodes: usize,
    pub test_nodes: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dir: PathBuf::from("data/mnist"),
            train_limit: 2000,
            test_limit: 500,
            neighborhood: "full24".into(),
            self_loops: false,
            train_nodes: 1708,
            test_nodes: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: String,
    /// cartesian, polar, spherical or degree.
    pub pseudo: String,
    pub degree: usize,
    pub root: bool,
    pub normalize: bool,
    /// auto, edge_parallel or node_transform.
    pub strategy: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            architecture: MNIST_ARCHITECTURE.into(),
            pseudo: "cartesian".into(),
            degree: 1,
            root: true,
            normalize: true,
            strategy: "auto".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// l2 (added to the gradient) or decoupled.
    pub weight_decay_mode: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { epochs: 5, batch_size: 16, lr: 1e-3, weight_decay: 0.0, weight_decay_mode: "l2".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub degree: usize,
    pub dim: usize,
    pub edges: usize,
    pub avg_degree: usize,
    pub features: usize,
    pub kernel_sizes: Vec<usize>,
    pub depth_max: usize,
    pub depth_edges: usize,
    pub depth_features: usize,
    pub edge_sweep: Vec<usize>,
    pub edge_features: usize,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            degree: 1,
            dim: 3,
            edges: 100_000,
            avg_degree: 10,
            features: 32,
            kernel_sizes: vec![3, 4, 5, 6, 7, 8],
            depth_max: 16,
            depth_edges: 10_000,
            depth_features: 16,
            edge_sweep: vec![25_000, 50_000, 100_000, 200_000],
            edge_features: 16,
            reps: 20,
            warmup: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceSection {
    pub images: usize,
    pub size: usize,
    pub tolerance: f64,
}

impl Default for EquivalenceSection {
    fn default() -> Self {
        EquivalenceSection { images: 10, size: 8, tolerance: 1e-5 }
    }
}

pub const MNIST_ARCHITECTURE: &str = "SConv((5,5),1,32) -> ELU -> MaxP(4) -> SConv((5,5),32,64) -> ELU -> MaxP(4) \
     -> FC(512) -> ELU -> Dropout(0.5) -> FC(10)";

pub const CORA_ARCHITECTURE: &str = "Dropout(0.5) -> SConv((2),1433,16) -> ELU -> Dropout(0.5) -> SConv((2),16,7)";

impl ExperimentConfig {
    /// Settings used for each experiment when no file is given.
    pub fn preset(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            experiment: ExperimentSection { kind, ..Default::default() },
            ..Default::default()
        };
        match kind {
            ExperimentKind::MnistGrid | ExperimentKind::GridEquivalence | ExperimentKind::Bench => {}
            ExperimentKind::Cora => {
                c.experiment.runs = 10;
                c.data.dir = PathBuf::from("data/cora");
                c.model.architecture = CORA_ARCHITECTURE.into();
                c.model.pseudo = "degree".into();
                c.train = TrainSection {
                    epochs: 200,
                    batch_size: 1,
                    lr: 0.01,
                    weight_decay: 0.005,
                    weight_decay_mode: "l2".into(),
                };
            }
        }
        c
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn architecture(&self) -> Result<Architecture> {
        self.model.architecture.parse()
    }

    pub fn strategy(&self) -> Result<Strategy> {
        Strategy::parse(&self.model.strategy)
    }

    pub fn neighborhood(&self) -> Result<Neighborhood> {
        Neighborhood::parse(&self.data.neighborhood)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown neighborhood `{}`", self.data.neighborhood)))
    }

    pub fn adam(&self) -> Result<AdamConfig> {
        let t = &self.train;
        let weight_decay = match (t.weight_decay_mode.as_str(), t.weight_decay) {
            (_, w) if w == 0.0 => WeightDecay::None,
            ("l2", w) => WeightDecay::L2(w),
            ("decoupled", w) => WeightDecay::Decoupled(w),
            (other, _) => return Err(Error::InvalidConfig(format!("unknown weight decay mode `{other}`"))),
        };
        let c = AdamConfig { lr: t.lr, weight_decay, ..AdamConfig::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.experiment.runs == 0 {
            return bad("experiment.runs must be positive");
        }
        match self.experiment.kind {
            ExperimentKind::MnistGrid | ExperimentKind::Cora => {
                self.architecture()?;
                self.strategy()?;
                self.adam()?;
                if !(1..=3).contains(&self.model.degree) {
                    return bad("model.degree must be 1, 2 or 3");
                }
                if !["cartesian", "polar", "spherical", "degree"].contains(&self.model.pseudo.as_str()) {
                    return bad("model.pseudo must be cartesian, polar, spherical or degree");
                }
                if !["l2", "decoupled"].contains(&self.train.weight_decay_mode.as_str()) {
                    return bad("train.weight_decay_mode must be l2 or decoupled");
                }
                if self.train.batch_size == 0 {
                    return bad("train.batch_size must be positive");
                }
                if self.experiment.kind == ExperimentKind::MnistGrid {
                    self.neighborhood()?;
                    if self.data.train_limit == 0 || self.data.test_limit == 0 {
                        return bad("data.train_limit and data.test_limit must be positive");
                    }
                } else if self.data.train_nodes == 0 || self.data.test_nodes == 0 {
                    return bad("data.train_nodes and data.test_nodes must be positive");
                }
            }
            ExperimentKind::GridEquivalence => {
                let e = &self.equivalence;
                if e.images == 0 || e.size < 5 || !(e.tolerance > 0.0) {
                    return bad("equivalence needs images > 0, size >= 5 and a positive tolerance");
                }
            }
            ExperimentKind::Bench => {
                let b = &self.bench;
                if !(1..=3).contains(&b.degree) || !(1..=3).contains(&b.dim) {
                    return bad("bench.degree and bench.dim must be in 1..=3");
                }
                if b.reps == 0 || b.features == 0 || b.avg_degree == 0 || b.edges == 0 {
                    return bad("bench sizes and reps must be positive");
                }
                if b.kernel_sizes.iter().any(|&k| k < b.degree + 1) {
                    return bad("bench.kernel_sizes must be at least degree + 1");
                }
                if b.edge_sweep.iter().any(|&e| e < b.avg_degree) || b.depth_edges < b.avg_degree {
                    return bad("bench edge counts must be at least avg_degree");
                }
            }
        }
        Ok(())
    }
}
