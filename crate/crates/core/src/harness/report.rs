//! Training metrics written as plain text and CSV.
//!
//! `metrics.csv` and `summary.csv` hold only quantities that are a pure
//! function of config and seed; wall-clock times go to `timing.csv`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{write_string, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub run: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Loss of the first training batch before any update.
    pub initial_loss: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub experiment: String,
    pub epochs: Vec<EpochRecord>,
    pub runs: Vec<RunRecord>,
}

impl MetricsReport {
    pub fn new(experiment: &str) -> MetricsReport {
        MetricsReport { experiment: experiment.into(), ..Default::default() }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        let a = self.accuracies();
        if a.is_empty() {
            return 0.0;
        }
        a.iter().sum::<f64>() / a.len() as f64
    }

    /// Sample standard deviation over runs, 0 for a single run.
    pub fn std_accuracy(&self) -> f64 {
        let a = self.accuracies();
        if a.len() < 2 {
            return 0.0;
        }
        let m = self.mean_accuracy();
        (a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (a.len() - 1) as f64).sqrt()
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("run,epoch,train_loss,train_accuracy,test_accuracy\n");
        for e in &self.epochs {
            writeln!(
                s,
                "{},{},{:.9},{:.9},{:.9}",
                e.run, e.epoch, e.train_loss, e.train_accuracy, e.test_accuracy
            )
            .unwrap();
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("run,seed,initial_loss,test_accuracy\n");
        for r in &self.runs {
            writeln!(s, "{},{},{:.9},{:.9}", r.run, r.seed, r.initial_loss, r.test_accuracy).unwrap();
        }
        writeln!(s, "mean,,,{:.9}", self.mean_accuracy()).unwrap();
        writeln!(s, "std,,,{:.9}", self.std_accuracy()).unwrap();
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("run,epoch,seconds\n");
        for e in &self.epochs {
            writeln!(s, "{},{},{:.6}", e.run, e.epoch, e.seconds).unwrap();
        }
        for r in &self.runs {
            writeln!(s, "{},total,{:.6}", r.run, r.seconds).unwrap();
        }
        s
    }

    /// Human-readable summary; times are left out when `with_times` is off.
    pub fn text(&self, with_times: bool) -> String {
        let mut s = format!("experiment: {}\n", self.experiment);
        for e in &self.epochs {
            write!(
                s,
                "run {} epoch {:>3}  loss {:.4}  train acc {:.4}  test acc {:.4}",
                e.run, e.epoch, e.train_loss, e.train_accuracy, e.test_accuracy
            )
            .unwrap();
            if with_times {
                write!(s, "  {:.1}s", e.seconds).unwrap();
            }
            s.push('\n');
        }
        for r in &self.runs {
            write!(s, "run {} (seed {}): test accuracy {:.4}", r.run, r.seed, r.test_accuracy).unwrap();
            if with_times {
                write!(s, " in {:.1}s", r.seconds).unwrap();
            }
            s.push('\n');
        }
        writeln!(
            s,
            "test accuracy: {:.2} +- {:.2} % over {} run(s)",
            100.0 * self.mean_accuracy(),
            100.0 * self.std_accuracy(),
            self.runs.len()
        )
        .unwrap();
        s
    }

    /// Writes `report.txt`, `metrics.csv`, `summary.csv` and `timing.csv`.
    pub fn write(&self, dir: &Path, deterministic: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_string(&dir.join("report.txt"), &self.text(!deterministic))?;
        write_string(&dir.join("metrics.csv"), &self.metrics_csv())?;
        write_string(&dir.join("summary.csv"), &self.summary_csv())?;
        write_string(&dir.join("timing.csv"), &self.timing_csv())
    }
}
