//! Training and evaluation loops for grid image classification and
//! citation-graph node classification.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{read_to_string, Error, Result};
use crate::graph::{build_grid_graph, load_idx_images, load_idx_labels, parse_cora, split_nodes, CoraData};
use crate::kernel::KernelConfig;
use crate::harness::arch::{Architecture, LayerSpec};
use crate::checkpoint::Checkpoint;
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::network::{Hierarchy, ModelOptions, Network, Structure};
use crate::harness::report::{EpochRecord, MetricsReport, RunRecord};
use crate::nn::{softmax_cross_entropy, Adam, VisitOrder};
use crate::pseudo::{fit_and_apply, PseudoKind};
use crate::tensor::Matrix;

/// Overrides the Cora data directory from the config.
pub const CORA_DIR_ENV: &str = "SPLINECNN_CORA_DIR";

const DROPOUT_STREAM: u64 = 0x5eed_d209;

/// Grayscale images with one label each, row-major pixels.
#[derive(Clone, Debug)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Node features of the selected images stacked, intensities in [0, 1].
    pub fn features(&self, indices: &[usize]) -> Matrix<f32> {
        let n = self.rows * self.cols;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &k in indices {
            data.extend(self.pixels[k * n..(k + 1) * n].iter().map(|&p| p as f32 / 255.0));
        }
        Matrix::from_vec(indices.len() * n, 1, data).expect("sized above")
    }
}

fn idx_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.exists())
        .ok_or_else(|| Error::MissingData(format!("{stem}(.gz) not found in {}", dir.display())))
}

fn load_image_set(dir: &Path, images: &str, labels: &str, limit: usize) -> Result<ImageSet> {
    let imgs = load_idx_images(&idx_file(dir, images)?)?;
    let labs = load_idx_labels(&idx_file(dir, labels)?)?;
    if imgs.count != labs.len() {
        return Err(Error::MissingData(format!(
            "{images} holds {} images but {labels} holds {} labels",
            imgs.count,
            labs.len()
        )));
    }
    if imgs.count < limit {
        return Err(Error::MissingData(format!("{images} holds {} images, {limit} requested", imgs.count)));
    }
    let n = imgs.rows * imgs.cols;
    Ok(ImageSet {
        rows: imgs.rows,
        cols: imgs.cols,
        pixels: imgs.pixels[..limit * n].to_vec(),
        labels: labs[..limit].iter().map(|&l| l as usize).collect(),
    })
}

/// Loads the first `train_limit` / `test_limit` MNIST-layout IDX images.
pub fn load_mnist(dir: &Path, train_limit: usize, test_limit: usize) -> Result<(ImageSet, ImageSet)> {
    let train = load_image_set(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", train_limit)?;
    let test = load_image_set(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", test_limit)?;
    if (train.rows, train.cols) != (test.rows, test.cols) {
        return Err(Error::MissingData("train and test images differ in size".into()));
    }
    Ok((train, test))
}

fn pool_sizes(arch: &Architecture) -> Vec<usize> {
    arch.layers()
        .iter()
        .filter_map(|l| match l {
            LayerSpec::MaxP(c) => Some(*c),
            _ => None,
        })
        .collect()
}

fn accuracy(logits: &Matrix<f32>, labels: &[usize]) -> usize {
    logits.argmax_rows().iter().zip(labels).filter(|(a, b)| a == b).count()
}

/// Shared multi-resolution structure of every image in a grid experiment.
pub fn grid_hierarchy(cfg: &ExperimentConfig, rows: usize, cols: usize, seed: u64) -> Result<(Hierarchy, PseudoKind)> {
    let arch = cfg.architecture()?;
    let kind = PseudoKind::from_key(&cfg.model.pseudo, 2)?;
    let g = build_grid_graph(cols, rows, cfg.neighborhood()?, cfg.data.self_loops)?;
    let (g, _) = fit_and_apply(g, kind)?;
    let h = Hierarchy::build(g, &pool_sizes(&arch), kind, VisitOrder::Seeded(seed))?;
    Ok((h, kind))
}

/// Network matching a grid experiment config.
pub fn grid_network(cfg: &ExperimentConfig, h: &Hierarchy, kind: PseudoKind, seed: u64) -> Result<Network<f32>> {
    let options = ModelOptions {
        pseudo: kind,
        degree: cfg.model.degree,
        use_root: cfg.model.root,
        normalize: cfg.model.normalize,
        strategy: cfg.strategy()?,
        input_features: 1,
        num_classes: 10,
        nodes_per_level: Some(h.nodes_per_level()),
    };
    Network::new(&cfg.architecture()?, options, seed)
}

/// Batched structures keyed by batch size, all built from one template.
pub struct StructureCache<'a> {
    template: &'a Hierarchy,
    configs: Vec<Vec<KernelConfig>>,
    cache: HashMap<usize, Structure<f32>>,
}

impl<'a> StructureCache<'a> {
    pub fn new(template: &'a Hierarchy, net: &Network<f32>) -> Self {
        StructureCache { template, configs: net.kernel_configs(), cache: HashMap::new() }
    }

    pub fn get(&mut self, examples: usize) -> Result<&Structure<f32>> {
        if !self.cache.contains_key(&examples) {
            let parts = vec![self.template; examples];
            let s = Structure::new(&parts, &self.configs)?;
            self.cache.insert(examples, s);
        }
        Ok(&self.cache[&examples])
    }
}

/// Test accuracy of a grid network.
pub fn evaluate_grid(net: &Network<f32>, cache: &mut StructureCache, set: &ImageSet, batch: usize) -> Result<f64> {
    let mut correct = 0;
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let s = cache.get(chunk.len())?;
        let logits = net.predict(s, &set.features(chunk))?;
        let labels: Vec<usize> = chunk.iter().map(|&k| set.labels[k]).collect();
        correct += accuracy(&logits, &labels);
    }
    Ok(correct as f64 / set.len().max(1) as f64)
}

/// Trains the grid image classifier once per configured run.
pub fn train_grid(cfg: &ExperimentConfig) -> Result<(MetricsReport, Network<f32>, u64)> {
    let (train, test) = load_mnist(&cfg.data.dir, cfg.data.train_limit, cfg.data.test_limit)?;
    let mut report = MetricsReport::new(cfg.experiment.kind.name());
    let mut last = None;
    for run in 0..cfg.experiment.runs {
        let seed = cfg.experiment.seed.wrapping_add(run as u64);
        let started = Instant::now();
        let (h, kind) = grid_hierarchy(cfg, train.rows, train.cols, seed)?;
        let mut net = grid_network(cfg, &h, kind, seed)?;
        let mut cache = StructureCache::new(&h, &net);
        let mut opt = Adam::new(cfg.adam()?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let batch = cfg.train.batch_size;
        let mut initial_loss = None;
        for epoch in 1..=cfg.train.epochs {
            let t0 = Instant::now();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(epoch as u64)));
            let (mut loss_sum, mut correct) = (0.0, 0);
            for chunk in order.chunks(batch) {
                let labels: Vec<usize> = chunk.iter().map(|&k| train.labels[k]).collect();
                let s = cache.get(chunk.len())?;
                let (logits, tape) = net.forward(s, &train.features(chunk), &mut rng)?;
                let (loss, grad) = softmax_cross_entropy(&logits, &labels, None)?;
                initial_loss.get_or_insert(loss);
                loss_sum += loss * chunk.len() as f64;
                correct += accuracy(&logits, &labels);
                net.backward(s, tape, &grad)?;
                opt.step(&mut net.params_and_grads())?;
                net.zero_grad();
            }
            let test_accuracy = evaluate_grid(&net, &mut cache, &test, batch)?;
            let rec = EpochRecord {
                run,
                epoch,
                train_loss: loss_sum / train.len() as f64,
                train_accuracy: correct as f64 / train.len() as f64,
                test_accuracy,
                seconds: t0.elapsed().as_secs_f64(),
            };
            log::info!(
                "run {run} epoch {epoch}: loss {:.4} train {:.4} test {:.4} ({:.1}s)",
                rec.train_loss,
                rec.train_accuracy,
                rec.test_accuracy,
                rec.seconds
            );
            report.epochs.push(rec);
        }
        let initial_loss = match initial_loss {
            Some(l) => l,
            None => {
                let chunk: Vec<usize> = (0..batch.min(train.len())).collect();
                let labels: Vec<usize> = chunk.iter().map(|&k| train.labels[k]).collect();
                let logits = net.predict(cache.get(chunk.len())?, &train.features(&chunk))?;
                softmax_cross_entropy(&logits, &labels, None)?.0
            }
        };
        let test_accuracy = match report.epochs.last() {
            Some(e) if e.run == run => e.test_accuracy,
            _ => evaluate_grid(&net, &mut cache, &test, batch)?,
        };
        report.runs.push(RunRecord {
            run,
            seed,
            initial_loss,
            test_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        drop(cache);
        last = Some((net, seed));
    }
    let (net, seed) = last.expect("at least one run");
    Ok((report, net, seed))
}

/// Directory holding `cora.content` and `cora.cites`.
pub fn cora_dir(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os(CORA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| cfg.data.dir.clone())
}

/// Loads the citation graph with degree pseudo-coordinates attached.
pub fn load_cora_graph(dir: &Path) -> Result<CoraData> {
    let content = dir.join("cora.content");
    let cites = dir.join("cora.cites");
    for p in [&content, &cites] {
        if !p.exists() {
            return Err(Error::MissingData(format!(
                "{} not found (set {CORA_DIR_ENV} or data.dir)",
                p.display()
            )));
        }
    }
    let mut data = parse_cora(&read_to_string(&content)?, &read_to_string(&cites)?)?;
    data.graph = fit_and_apply(data.graph, PseudoKind::Degree1)?.0;
    Ok(data)
}

/// Node classifier for a citation graph.
pub fn cora_network(cfg: &ExperimentConfig, data: &CoraData, seed: u64) -> Result<Network<f32>> {
    let options = ModelOptions {
        pseudo: PseudoKind::from_key(&cfg.model.pseudo, 0)?,
        degree: cfg.model.degree,
        use_root: cfg.model.root,
        normalize: cfg.model.normalize,
        strategy: cfg.strategy()?,
        input_features: data.graph.feature_dim(),
        num_classes: data.classes.len(),
        nodes_per_level: None,
    };
    Network::new(&cfg.architecture()?, options, seed)
}

/// Trains the node classifier on `data`, one seeded split and
/// initialization per run.
pub fn train_nodes(cfg: &ExperimentConfig, data: &CoraData) -> Result<(MetricsReport, Network<f32>, u64)> {
    let kind = PseudoKind::from_key(&cfg.model.pseudo, 0)?;
    if kind != PseudoKind::Degree1 {
        return Err(Error::InvalidConfig("node classification uses degree pseudo-coordinates".into()));
    }
    let labels = data
        .graph
        .labels()
        .ok_or_else(|| Error::MissingData("citation graph has no labels".into()))?
        .to_vec();
    let x: Matrix<f32> = data.graph.features().cast();
    let mut report = MetricsReport::new(cfg.experiment.kind.name());
    let mut last = None;
    for run in 0..cfg.experiment.runs {
        let seed = cfg.experiment.seed.wrapping_add(run as u64);
        let started = Instant::now();
        let split = split_nodes(data.graph.num_nodes(), cfg.data.train_nodes, cfg.data.test_nodes, seed)?;
        let mut net = cora_network(cfg, data, seed)?;
        let h = Hierarchy::build(data.graph.clone(), &net.pool_sizes(), kind, VisitOrder::Seeded(seed))?;
        let s = Structure::<f32>::new(&[&h], &net.kernel_configs())?;
        let mut opt = Adam::new(cfg.adam()?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
        let mut initial_loss = None;
        let test_labels: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
        let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
        let eval = |net: &Network<f32>| -> Result<f64> {
            let logits = net.predict(&s, &x)?.select_rows(&split.test);
            Ok(accuracy(&logits, &test_labels) as f64 / split.test.len() as f64)
        };
        for epoch in 1..=cfg.train.epochs {
            let t0 = Instant::now();
            let (logits, tape) = net.forward(&s, &x, &mut rng)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels, Some(&split.train))?;
            initial_loss.get_or_insert(loss);
            let train_accuracy =
                accuracy(&logits.select_rows(&split.train), &train_labels) as f64 / split.train.len() as f64;
            net.backward(&s, tape, &grad)?;
            opt.step(&mut net.params_and_grads())?;
            net.zero_grad();
            report.epochs.push(EpochRecord {
                run,
                epoch,
                train_loss: loss,
                train_accuracy,
                test_accuracy: eval(&net)?,
                seconds: t0.elapsed().as_secs_f64(),
            });
        }
        let test_accuracy = eval(&net)?;
        let initial_loss = match initial_loss {
            Some(l) => l,
            None => softmax_cross_entropy(&net.predict(&s, &x)?, &labels, Some(&split.train))?.0,
        };
        log::info!("run {run} (seed {seed}): test accuracy {test_accuracy:.4}");
        report.runs.push(RunRecord {
            run,
            seed,
            initial_loss,
            test_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
        last = Some((net, seed));
    }
    let (net, seed) = last.expect("at least one run");
    Ok((report, net, seed))
}

/// Loads Cora from the configured directory and trains on it.
pub fn train_cora(cfg: &ExperimentConfig) -> Result<(MetricsReport, Network<f32>, u64)> {
    let data = load_cora_graph(&cora_dir(cfg))?;
    train_nodes(cfg, &data)
}

/// Test accuracy of a node classifier on the split drawn with `seed`.
pub fn evaluate_nodes(cfg: &ExperimentConfig, data: &CoraData, net: &Network<f32>, seed: u64) -> Result<f64> {
    let labels = data.graph.labels().ok_or_else(|| Error::MissingData("no labels".into()))?;
    let split = split_nodes(data.graph.num_nodes(), cfg.data.train_nodes, cfg.data.test_nodes, seed)?;
    let h = Hierarchy::build(data.graph.clone(), &net.pool_sizes(), PseudoKind::Degree1, VisitOrder::Seeded(seed))?;
    let s = Structure::<f32>::new(&[&h], &net.kernel_configs())?;
    let logits = net.predict(&s, &data.graph.features().cast())?.select_rows(&split.test);
    let want: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&logits, &want) as f64 / split.test.len() as f64)
}

/// Trains the experiment named in the config. Returns the report, the
/// network of the last run and that run's seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(MetricsReport, Network<f32>, u64)> {
    match cfg.experiment.kind {
        ExperimentKind::MnistGrid => train_grid(cfg),
        ExperimentKind::Cora => train_cora(cfg),
        other => Err(Error::InvalidConfig(format!("`{}` is not a training experiment", other.name()))),
    }
}

/// Test accuracy of a checkpointed network on the experiment's test set.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Checkpoint) -> Result<f64> {
    let net: Network<f32> = checkpoint.to_network(cfg.strategy()?)?;
    let seed = checkpoint.model.seed;
    match cfg.experiment.kind {
        ExperimentKind::MnistGrid => {
            let (_, test) = load_mnist(&cfg.data.dir, 0, cfg.data.test_limit)?;
            let (h, _) = grid_hierarchy(cfg, test.rows, test.cols, seed)?;
            if Some(h.nodes_per_level()) != net.options().nodes_per_level {
                return Err(Error::ShapeMismatch("checkpoint was trained on a different grid".into()));
            }
            let mut cache = StructureCache::new(&h, &net);
            evaluate_grid(&net, &mut cache, &test, cfg.train.batch_size)
        }
        ExperimentKind::Cora => evaluate_nodes(cfg, &load_cora_graph(&cora_dir(cfg))?, &net, seed),
        other => Err(Error::InvalidConfig(format!("`{}` is not a training experiment", other.name()))),
    }
}
