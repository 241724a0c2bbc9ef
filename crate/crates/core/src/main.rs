use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use splinecnn::checkpoint::Checkpoint;
use splinecnn::graph::{load_cora, load_off_mesh, save_graph_container, Graph, Neighborhood};
use splinecnn::harness::bench::run_bench;
use splinecnn::harness::checks::run_grad_checks;
use splinecnn::harness::config::{ExperimentConfig, ExperimentKind};
use splinecnn::harness::convert::image_graphs;
use splinecnn::harness::equivalence::run_grid_equivalence;
use splinecnn::harness::export::export_kernels;
use splinecnn::harness::train::{evaluate_checkpoint, run_experiment};
use splinecnn::oracle::FdConfig;
use splinecnn::{Error, Result};

#[derive(Parser)]
#[command(name = "splinecnn", version, about = "Spline-based graph convolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); defaults to the preset of the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Leave wall-clock times out of report.txt.
    #[arg(long)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the experiment in the config and write reports and a checkpoint.
    Train(Common),
    /// Evaluate a checkpoint on the experiment's test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare spline convolution on pixel grids with dense convolution.
    EquivCheck(Common),
    /// Compare analytic gradients with central finite differences.
    GradCheck(Common),
    /// Time forward passes over kernel size, depth and edge count.
    Bench(Common),
    /// Sample the kernels of one spline layer into CSV.
    ExportKernels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index among the spline layers.
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 16)]
        resolution: usize,
    },
    /// Convert raw data into the graph container format.
    Convert {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        from: Source,
        /// IDX image file, OFF mesh, or directory with cora.content and cora.cites.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        first: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = "full8")]
        neighborhood: String,
        #[arg(long)]
        self_loops: bool,
        /// Container file, default `<out>/graphs.txt`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Image,
    Mesh,
    Cora,
}

fn config(common: &Common, preset: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(preset),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

/// Runs a command; an inner `Err` is a failed check.
fn run(cli: Cli) -> Result<(&'static str, std::result::Result<String, String>)> {
    Ok(match cli.command {
        Command::Train(common) => {
            let cfg = config(&common, ExperimentKind::MnistGrid)?;
            let (report, net, seed) = run_experiment(&cfg)?;
            report.write(&common.out, common.deterministic)?;
            Checkpoint::from_network(&net, seed).save(&common.out.join("checkpoint.json"))?;
            print!("{}", report.text(!common.deterministic));
            let msg = format!(
                "experiment={} mean_accuracy={:.4} std={:.4} runs={}",
                cfg.experiment.kind.name(),
                report.mean_accuracy(),
                report.std_accuracy(),
                report.runs.len()
            );
            ("train", Ok(msg))
        }
        Command::Eval { common, checkpoint } => {
            let cfg = config(&common, ExperimentKind::MnistGrid)?;
            let acc = evaluate_checkpoint(&cfg, &Checkpoint::load(&checkpoint)?)?;
            ("eval", Ok(format!("test_accuracy={acc:.4}")))
        }
        Command::EquivCheck(common) => {
            let cfg = config(&common, ExperimentKind::GridEquivalence)?;
            let report = run_grid_equivalence(&cfg)?;
            let text = report.text(!common.deterministic);
            write(&common.out.join("equivalence.txt"), &text)?;
            print!("{text}");
            let worst = report.cases.iter().map(|c| c.max_abs_diff).fold(0.0, f64::max);
            let msg = format!("max_abs_diff={worst:.3e} tolerance={:.0e}", report.tolerance);
            ("equiv-check", if report.passed() { Ok(msg) } else { Err(msg) })
        }
        Command::GradCheck(common) => {
            let cfg = config(&common, ExperimentKind::GridEquivalence)?;
            let fd = FdConfig::default();
            let report = run_grad_checks(cfg.experiment.seed, &fd)?;
            let text = report.text();
            write(&common.out.join("grad_check.txt"), &text)?;
            print!("{text}");
            let msg = format!("max_rel_err={:.3e} tolerance={:.0e}", report.worst(), fd.tolerance);
            ("grad-check", if report.passed() { Ok(msg) } else { Err(msg) })
        }
        Command::Bench(common) => {
            let cfg = config(&common, ExperimentKind::Bench)?;
            let report = run_bench(&cfg)?;
            write(&common.out.join("bench.csv"), &report.csv())?;
            print!("{}", report.text());
            let failed: Vec<String> = report.checks().into_iter().filter(|c| !c.1).map(|c| c.0).collect();
            let msg = format!("{} timings", report.timings.len());
            ("bench", if failed.is_empty() { Ok(msg) } else { Err(failed.join(" ")) })
        }
        Command::ExportKernels { common, checkpoint, layer, resolution } => {
            let csv = export_kernels(&Checkpoint::load(&checkpoint)?, layer, resolution)?;
            let path = common.out.join(format!("kernels_layer{layer}.csv"));
            write(&path, &csv)?;
            ("export-kernels", Ok(format!("rows={} file={}", csv.lines().count() - 1, path.display())))
        }
        Command::Convert { common, from, input, first, count, neighborhood, self_loops, output } => {
            let graphs: Vec<Graph> = match from {
                Source::Image => {
                    let nb = Neighborhood::parse(&neighborhood)
                        .ok_or_else(|| Error::InvalidArgument(format!("unknown neighborhood `{neighborhood}`")))?;
                    image_graphs(&input, first, count, nb, self_loops)?
                }
                Source::Mesh => vec![load_off_mesh(&input)?],
                Source::Cora => {
                    let (data, _) = load_cora(&input.join("cora.content"), &input.join("cora.cites"), 0, 0, 0)?;
                    vec![data.graph]
                }
            };
            let path = output.unwrap_or_else(|| common.out.join("graphs.txt"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
            }
            save_graph_container(&path, &graphs)?;
            ("convert", Ok(format!("graphs={} file={}", graphs.len(), path.display())))
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Train(_) => "train",
        Command::Eval { .. } => "eval",
        Command::EquivCheck(_) => "equiv-check",
        Command::GradCheck(_) => "grad-check",
        Command::Bench(_) => "bench",
        Command::ExportKernels { .. } => "export-kernels",
        Command::Convert { .. } => "convert",
    };
    match run(cli) {
        Ok((name, Ok(msg))) => {
            println!("PASS {name} {msg}");
            ExitCode::SUCCESS
        }
        Ok((name, Err(msg))) => {
            println!("FAIL {name} {msg}");
            ExitCode::FAILURE
        }
        Err(e) => {
            println!("FAIL {name} error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use splinecnn::graph::{parse_cora, parse_graph_container, parse_idx_images, parse_idx_labels, parse_off_mesh};
    use splinecnn::harness::Architecture;

    fn root() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
    }

    fn cli(args: &[&str]) -> (&'static str, std::result::Result<String, String>) {
        run(Cli::parse_from(std::iter::once("splinecnn").chain(args.iter().copied()))).unwrap()
    }

    fn idx(dir: &Path, prefix: &str, n: usize) {
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, n as u8, 0, 0, 0, 4, 0, 0, 0, 4];
        images.extend((0..n * 16).map(|i| (i * 37 % 256) as u8));
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
        let mut labels = vec![0, 0, 8, 1, 0, 0, 0, n as u8];
        labels.extend((0..n).map(|i| (i % 10) as u8));
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
    }

    #[test]
    fn checks_pass_from_the_command_line() {
        let out = tempfile::tempdir().unwrap();
        let out = out.path().to_str().unwrap();
        for cmd in ["equiv-check", "grad-check"] {
            let (name, res) = cli(&[cmd, "--deterministic", "--out", out]);
            assert!(res.is_ok(), "{name}: {res:?}");
        }
        assert!(Path::new(out).join("equivalence.txt").exists());
        assert!(Path::new(out).join("grad_check.txt").exists());
    }

    #[test]
    fn train_eval_export_and_convert() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir(&data).unwrap();
        idx(&data, "train", 12);
        idx(&data, "t10k", 6);
        let mut cfg = ExperimentConfig::preset(ExperimentKind::MnistGrid);
        cfg.data.dir = data.clone();
        cfg.data.train_limit = 12;
        cfg.data.test_limit = 6;
        cfg.data.neighborhood = "full8".into();
        cfg.model.architecture = "SConv((3,3),1,2) -> ELU -> MaxP(4) -> FC(10)".into();
        cfg.train.epochs = 1;
        let config = dir.path().join("tiny.toml");
        std::fs::write(&config, cfg.to_toml()).unwrap();
        let (config, out) = (config.to_str().unwrap(), dir.path().join("out"));
        let out = out.to_str().unwrap();
        assert!(cli(&["train", "--config", config, "--out", out]).1.is_ok());
        let checkpoint = format!("{out}/checkpoint.json");
        assert!(cli(&["eval", "--config", config, "--checkpoint", &checkpoint]).1.is_ok());
        assert!(cli(&["export-kernels", "--checkpoint", &checkpoint, "--resolution", "4", "--out", out]).1.is_ok());
        let csv = std::fs::read_to_string(format!("{out}/kernels_layer0.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 16 * 2);

        let images = data.join("t10k-images-idx3-ubyte");
        let graphs = format!("{out}/graphs.txt");
        let args = ["convert", "--from", "image", "--input", images.to_str().unwrap(), "--count", "3", "--output", &graphs];
        assert!(cli(&args).1.is_ok());
        let parsed = parse_graph_container(&std::fs::read_to_string(&graphs).unwrap()).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0].num_nodes(), 16);
    }

    #[test]
    fn fuzz_seeds_and_configs_parse() {
        let corpus = root().join("fuzz/corpus");
        let files = |target: &str| {
            let mut paths: Vec<PathBuf> =
                std::fs::read_dir(corpus.join(target)).unwrap().map(|e| e.unwrap().path()).collect();
            paths.sort();
            assert!(!paths.is_empty(), "{target}");
            paths.into_iter().map(|p| std::fs::read(p).unwrap())
        };
        let text = |b: Vec<u8>| String::from_utf8(b).unwrap();
        for b in files("graph_container") {
            assert!(!parse_graph_container(&text(b)).unwrap().is_empty());
        }
        for b in files("off_mesh") {
            parse_off_mesh(&text(b)).unwrap();
        }
        for b in files("cora") {
            let t = text(b);
            let (content, cites) = t.split_once('\0').unwrap();
            parse_cora(content, cites).unwrap();
        }
        let mut idx: Vec<Vec<u8>> = files("idx").collect();
        parse_idx_images(&idx.remove(0)).unwrap();
        parse_idx_labels(&idx.remove(0)).unwrap();
        for b in files("config") {
            ExperimentConfig::parse(&text(b)).unwrap();
        }
        for b in files("architecture") {
            text(b).parse::<Architecture>().unwrap();
        }
        for b in files("checkpoint") {
            Checkpoint::parse(&text(b)).unwrap().to_network::<f32>(splinecnn::conv::Strategy::Auto).unwrap();
        }
        for (name, kind) in [
            ("mnist_grid", ExperimentKind::MnistGrid),
            ("cora", ExperimentKind::Cora),
            ("grid_equivalence", ExperimentKind::GridEquivalence),
            ("bench", ExperimentKind::Bench),
        ] {
            let cfg = ExperimentConfig::load(&root().join(format!("configs/{name}.toml"))).unwrap();
            assert_eq!(cfg, ExperimentConfig::preset(kind), "{name}");
        }
    }
}
