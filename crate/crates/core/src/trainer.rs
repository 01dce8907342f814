//! Training loop, grid tuning and multi-split benchmarking.
//!
//! One run trains on the split's training nodes with Adam, evaluates the
//! validation accuracy after every epoch, keeps the parameters of the best
//! validation epoch (earliest on ties), stops after `patience` epochs without
//! improvement, and evaluates the kept parameters on the test nodes once.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{self, forward, GraphContext, Model, ModelConfig, ModelKind};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::splits::Split;
use crate::tensor::{Real, Tensor};

pub const LR_GRID: [f64; 2] = [0.01, 0.005];
pub const HIDDEN_GRID_SMALL: [usize; 2] = [64, 128];
pub const HIDDEN_GRID_LARGE: [usize; 1] = [64];
pub const TAU_GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
pub const WEIGHT_DECAY: f64 = 5e-4;
pub const PATIENCE: usize = 50;
pub const MAX_EPOCHS: usize = 300;
pub const TUNE_EPOCHS_SMALL: usize = 200;
pub const TUNE_EPOCHS_LARGE: usize = 150;
pub const TUNE_SPLITS_SMALL: usize = 3;
pub const TUNE_SPLITS_LARGE: usize = 2;

/// Tag of the substream that drives dropout and edge sampling.
pub const TRAIN_STREAM: &str = "train";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub hidden: usize,
    /// Ignored by the baselines.
    pub tau: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: LR_GRID[0],
            hidden: HIDDEN_GRID_SMALL[0],
            tau: 1.0,
            weight_decay: WEIGHT_DECAY,
            patience: PATIENCE,
            max_epochs: MAX_EPOCHS,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::contract(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.max_epochs > 0 && self.patience >= self.max_epochs {
            return Err(Error::contract(format!(
                "patience {} must be below max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    /// `base` with the width and temperature taken from these hyperparameters.
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            tau: self.tau,
            ..*base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective of the training-mode pass that produced this epoch's update.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Evaluation-mode metrics of the initial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialEval {
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelConfig,
    pub hyper: TrainHyper,
    pub precision: String,
    pub seed: u64,
    pub initial: InitialEval,
    pub history: Vec<EpochRecord>,
    /// 0 means the initial parameters were never beaten.
    pub best_val_epoch: usize,
    pub best_val_acc: f64,
    pub last_epoch: usize,
    pub test_accuracy: Option<f64>,
    pub test_evaluations: usize,
    /// Set when the run aborted on a non-finite value.
    pub failure: Option<String>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per epoch.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            ));
        }
        out
    }
}

/// Report plus the best-validation parameters.
#[derive(Debug, Clone)]
pub struct TrainOutcome<R> {
    pub report: TrainReport,
    pub best: Model<R>,
}

impl<R: Real> TrainOutcome<R> {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(
            &self.best,
            self.report.seed,
            TRAIN_STREAM,
            self.report.best_val_epoch,
            self.report.best_val_acc,
        )
    }
}

struct Evaluation {
    train_acc: f64,
    val_loss: f64,
    val_acc: f64,
}

fn mean_cross_entropy<R: Real>(logits: &Tensor<R>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let total: f64 = nodes
        .iter()
        .map(|&i| {
            let row: Vec<f64> = logits.row(i).iter().map(|v| v.to_f64_lossless()).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            lse - row[labels[i]]
        })
        .sum();
    total / nodes.len() as f64
}

fn evaluate<R: Real>(model: &Model<R>, ctx: &GraphContext<R>, split: &Split) -> Result<Evaluation> {
    let logits = model.logits(ctx)?;
    let pred = model::predict(&logits);
    let labels = ctx.labels();
    Ok(Evaluation {
        train_acc: model::accuracy(&pred, labels, &split.train),
        val_loss: mean_cross_entropy(&logits, labels, &split.val),
        val_acc: model::accuracy(&pred, labels, &split.val),
    })
}

/// Accuracy of `model` on `nodes`.
pub fn evaluate_accuracy<R: Real>(model: &Model<R>, ctx: &GraphContext<R>, nodes: &[usize]) -> Result<f64> {
    let pred = model::predict(&model.logits(ctx)?);
    Ok(model::accuracy(&pred, ctx.labels(), nodes))
}

/// One optimisation step; returns the objective value before the update.
fn train_step<R: Real>(
    model: &mut Model<R>,
    adam: &mut AdamState<R>,
    ctx: &GraphContext<R>,
    split: &Split,
    is_train: &[bool],
    rng: &mut rng::StreamRng,
) -> Result<f64> {
    let config = model.config;
    let edges = if config.kind == ModelKind::Mlp {
        ctx.edges().clone()
    } else {
        ctx.sample_edges(config.edge_sampling, rng)?
    };
    let tape = Tape::new();
    let vars = model.params.on_tape(&tape);
    let out = forward(&config, &vars, ctx, &edges, true, rng)?;
    let train_labels: Vec<usize> = split.train.iter().map(|&i| ctx.labels()[i]).collect();
    let mut loss = out.logits.cross_entropy(split.train.clone(), train_labels)?;
    if config.kind == ModelKind::Csna && config.lambda_cal > 0.0 {
        let mut cal: Option<crate::autograd::Var<'_, R>> = None;
        for layer in out.layers.iter().filter_map(|l| l.csna) {
            let term = model::calibration_loss(layer.routing.cost, &edges, ctx.labels(), is_train)?;
            cal = Some(match cal {
                Some(acc) => acc.add(term)?,
                None => term,
            });
        }
        if let Some(cal) = cal {
            let layers = R::from_usize(out.layers.len()).unwrap_or_else(R::one);
            let weight = R::from_f64_lossy(config.lambda_cal) / layers;
            loss = loss.add(cal.scale(weight)?)?;
        }
    }
    let value = loss.item()?.to_f64_lossless();
    let grads = tape.backward(loss)?;
    let named = vars.named();
    let grads: Vec<Tensor<R>> = named.iter().map(|(_, v)| grads.get_or_zeros(**v)).collect();
    drop(named);
    let mut params = model.params.tensors_mut();
    adam.step(&mut params, &grads);
    if params.iter().any(|p| !p.is_finite()) {
        return Err(crate::error::TensorError::NonFinite { op: "adam" }.into());
    }
    Ok(value)
}

/// Trains one model on one split.
pub fn train<R: Real>(
    base: &ModelConfig,
    ctx: &GraphContext<R>,
    split: &Split,
    hyper: &TrainHyper,
) -> Result<TrainOutcome<R>> {
    let started = Instant::now();
    hyper.validate()?;
    let n = ctx.num_nodes();
    split.validate(n)?;
    if split.train.is_empty() {
        return Err(Error::contract("split has no training nodes"));
    }
    let config = hyper.apply(base);
    if config.normalization != ctx.normalization() {
        return Err(Error::contract("graph context normalization differs from the model config"));
    }
    let mut model = Model::<R>::new(config, hyper.seed)?;
    let mut adam = AdamState::new(AdamConfig {
        lr: hyper.lr,
        weight_decay: hyper.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = rng::substream(hyper.seed, TRAIN_STREAM);
    let mut is_train = vec![false; n];
    for &i in &split.train {
        is_train[i] = true;
    }

    let init = evaluate(&model, ctx, split)?;
    let initial = InitialEval {
        train_acc: init.train_acc,
        val_loss: init.val_loss,
        val_acc: init.val_acc,
    };
    let mut best = model.clone();
    let (mut best_epoch, mut best_acc) = (0, init.val_acc);
    let mut history = Vec::new();
    let mut failure = None;
    let mut last_epoch = 0;

    for epoch in 1..=hyper.max_epochs {
        let step = train_step(&mut model, &mut adam, ctx, split, &is_train, &mut rng)
            .and_then(|loss| evaluate(&model, ctx, split).map(|ev| (loss, ev)));
        let (train_loss, ev) = match step {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                failure = Some(format!("epoch {epoch}: {e}"));
                last_epoch = epoch;
                break;
            }
            Err(e) => return Err(e),
        };
        last_epoch = epoch;
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_acc: ev.train_acc,
            val_loss: ev.val_loss,
            val_acc: ev.val_acc,
        });
        if ev.val_acc > best_acc {
            best_acc = ev.val_acc;
            best_epoch = epoch;
            best = model.clone();
        }
        if epoch - best_epoch >= hyper.patience {
            break;
        }
    }

    let (test_accuracy, test_evaluations) = if failure.is_none() {
        (Some(evaluate_accuracy(&best, ctx, &split.test)?), 1)
    } else {
        (None, 0)
    };
    let report = TrainReport {
        model: config,
        hyper: *hyper,
        precision: R::NAME.to_string(),
        seed: hyper.seed,
        initial,
        history,
        best_val_epoch: best_epoch,
        best_val_acc: best_acc,
        last_epoch,
        test_accuracy,
        test_evaluations,
        failure,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { report, best })
}

/// Convenience wrapper building the graph context first.
pub fn train_graph<R: Real>(
    base: &ModelConfig,
    graph: &Graph,
    split: &Split,
    hyper: &TrainHyper,
) -> Result<TrainOutcome<R>> {
    let ctx = GraphContext::new(graph, base.normalization)?;
    train(base, &ctx, split, hyper)
}

pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))
}

/// Hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub lrs: Vec<f64>,
    pub hiddens: Vec<usize>,
    /// Only searched for CSNA.
    pub taus: Vec<f64>,
}

impl TuneGrid {
    /// Grid for the small graphs: two learning rates, two widths, four temperatures.
    pub fn small() -> Self {
        Self {
            lrs: LR_GRID.to_vec(),
            hiddens: HIDDEN_GRID_SMALL.to_vec(),
            taus: TAU_GRID.to_vec(),
        }
    }

    /// Grid for the large graphs: width fixed at 64.
    pub fn large() -> Self {
        Self {
            hiddens: HIDDEN_GRID_LARGE.to_vec(),
            ..Self::small()
        }
    }

    /// Cells in lexicographic (lr, hidden, τ) order; baselines get one τ.
    pub fn cells(&self, kind: ModelKind, base: &TrainHyper) -> Vec<TrainHyper> {
        let mut lrs = self.lrs.clone();
        let mut hiddens = self.hiddens.clone();
        let mut taus = if kind == ModelKind::Csna {
            self.taus.clone()
        } else {
            vec![base.tau]
        };
        lrs.sort_by(f64::total_cmp);
        hiddens.sort_unstable();
        taus.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for &lr in &lrs {
            for &hidden in &hiddens {
                for &tau in &taus {
                    out.push(TrainHyper {
                        lr,
                        hidden,
                        tau,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub hyper: TrainHyper,
    /// Best validation accuracy per tuning split; failed runs count as 0.
    pub val_accs: Vec<f64>,
    pub mean_val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub model: ModelConfig,
    pub cells: Vec<TuneCell>,
    pub best: TrainHyper,
    pub best_mean_val_acc: f64,
}

impl TuneReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Index of the cell with the highest mean validation accuracy; ties go to
/// the lexicographically smallest (lr, hidden, τ).
pub fn select_best(cells: &[TuneCell]) -> Option<usize> {
    let key = |c: &TuneCell| (c.hyper.lr, c.hyper.hidden, c.hyper.tau);
    (0..cells.len()).reduce(|best, i| {
        let (a, b) = (&cells[i], &cells[best]);
        let better = a.mean_val_acc > b.mean_val_acc
            || (a.mean_val_acc == b.mean_val_acc && {
                let (ka, kb) = (key(a), key(b));
                ka.0.total_cmp(&kb.0)
                    .then(ka.1.cmp(&kb.1))
                    .then(ka.2.total_cmp(&kb.2))
                    .is_lt()
            });
        if better { i } else { best }
    })
}

/// Exhaustive grid search scored by mean best-validation accuracy over
/// `tuning_splits`. Every cell trains with `base_hyper` apart from the
/// searched fields; set `base_hyper.max_epochs` to the tuning cap.
pub fn tune<R: Real>(
    base: &ModelConfig,
    ctx: &GraphContext<R>,
    tuning_splits: &[Split],
    grid: &TuneGrid,
    base_hyper: &TrainHyper,
    jobs: usize,
) -> Result<TuneReport> {
    let cells = grid.cells(base.kind, base_hyper);
    if cells.is_empty() {
        return Err(Error::contract("tuning grid is empty"));
    }
    if tuning_splits.is_empty() {
        return Err(Error::contract("no tuning splits"));
    }
    let jobs_list: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..tuning_splits.len()).map(move |s| (c, s)))
        .collect();
    let results: Vec<Result<f64>> = pool(jobs)?.install(|| {
        jobs_list
            .par_iter()
            .map(|&(c, s)| {
                let out = train(base, ctx, &tuning_splits[s], &cells[c])?;
                Ok(if out.report.failure.is_some() {
                    0.0
                } else {
                    out.report.best_val_acc
                })
            })
            .collect()
    });
    let mut scored = Vec::with_capacity(cells.len());
    let mut results = results.into_iter();
    for hyper in cells {
        let val_accs = (&mut results)
            .take(tuning_splits.len())
            .collect::<Result<Vec<f64>>>()?;
        let mean_val_acc = val_accs.iter().sum::<f64>() / val_accs.len() as f64;
        scored.push(TuneCell {
            hyper,
            val_accs,
            mean_val_acc,
        });
    }
    let best_idx = select_best(&scored).expect("non-empty grid");
    Ok(TuneReport {
        model: *base,
        best: scored[best_idx].hyper,
        best_mean_val_acc: scored[best_idx].mean_val_acc,
        cells: scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split: usize,
    pub test_accuracy: Option<f64>,
    pub best_val_epoch: usize,
    pub best_val_acc: f64,
    pub last_epoch: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub model: ModelConfig,
    pub hyper: TrainHyper,
    pub precision: String,
    pub per_split: Vec<SplitOutcome>,
    /// Test accuracies of the completed runs, in split order.
    pub test_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 with fewer than two runs.
    pub std: f64,
    pub failed_splits: Vec<usize>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,test_accuracy,best_val_epoch,best_val_acc,last_epoch,status\n");
        for s in &self.per_split {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.split,
                s.test_accuracy.map(|a| a.to_string()).unwrap_or_default(),
                s.best_val_epoch,
                s.best_val_acc,
                s.last_epoch,
                if s.failure.is_some() { "failed" } else { "ok" }
            ));
        }
        out
    }
}

/// `(mean, sample std)`; std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains once per split and aggregates test accuracy. Failed runs are
/// recorded and left out of the mean.
pub fn run_benchmark<R: Real>(
    base: &ModelConfig,
    ctx: &GraphContext<R>,
    splits: &[Split],
    hyper: &TrainHyper,
    jobs: usize,
) -> Result<BenchmarkReport> {
    let started = Instant::now();
    if splits.is_empty() {
        return Err(Error::contract("no splits to benchmark"));
    }
    let reports: Vec<Result<TrainReport>> = pool(jobs)?.install(|| {
        splits
            .par_iter()
            .map(|s| train(base, ctx, s, hyper).map(|o| o.report))
            .collect()
    });
    let mut per_split = Vec::with_capacity(splits.len());
    for (k, r) in reports.into_iter().enumerate() {
        let r = r?;
        per_split.push(SplitOutcome {
            split: k,
            test_accuracy: r.test_accuracy,
            best_val_epoch: r.best_val_epoch,
            best_val_acc: r.best_val_acc,
            last_epoch: r.last_epoch,
            failure: r.failure,
        });
    }
    let test_accuracies: Vec<f64> = per_split.iter().filter_map(|s| s.test_accuracy).collect();
    let failed_splits: Vec<usize> = per_split
        .iter()
        .filter(|s| s.failure.is_some())
        .map(|s| s.split)
        .collect();
    let (mean, std) = mean_std(&test_accuracies);
    Ok(BenchmarkReport {
        model: hyper.apply(base),
        hyper: *hyper,
        precision: R::NAME.to_string(),
        per_split,
        test_accuracies,
        mean,
        std,
        failed_splits,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(lr: f64, hidden: usize, tau: f64, acc: f64) -> TuneCell {
        TuneCell {
            hyper: TrainHyper {
                lr,
                hidden,
                tau,
                ..TrainHyper::default()
            },
            val_accs: vec![acc],
            mean_val_acc: acc,
        }
    }

    #[test]
    fn protocol_constants() {
        assert_eq!(LR_GRID, [0.01, 0.005]);
        assert_eq!(HIDDEN_GRID_SMALL, [64, 128]);
        assert_eq!(HIDDEN_GRID_LARGE, [64]);
        assert_eq!(TAU_GRID, [0.1, 0.5, 1.0, 2.0]);
        assert_eq!((PATIENCE, MAX_EPOCHS), (50, 300));
        assert_eq!((TUNE_EPOCHS_SMALL, TUNE_EPOCHS_LARGE), (200, 150));
        assert_eq!((TUNE_SPLITS_SMALL, TUNE_SPLITS_LARGE), (3, 2));
        assert_eq!(WEIGHT_DECAY, 5e-4);
        let h = TrainHyper::default();
        assert_eq!((h.patience, h.max_epochs, h.weight_decay), (50, 300, 5e-4));
    }

    #[test]
    fn grid_sizes() {
        let base = TrainHyper::default();
        assert_eq!(TuneGrid::small().cells(ModelKind::Csna, &base).len(), 16);
        assert_eq!(TuneGrid::small().cells(ModelKind::Gcn, &base).len(), 4);
        assert_eq!(TuneGrid::large().cells(ModelKind::Csna, &base).len(), 8);
        assert_eq!(TuneGrid::large().cells(ModelKind::Mlp, &base).len(), 2);
    }

    #[test]
    fn ties_break_toward_lower_lr_then_width_then_tau() {
        let cells = vec![
            cell(0.01, 64, 0.5, 0.8),
            cell(0.005, 128, 2.0, 0.8),
            cell(0.005, 64, 1.0, 0.8),
            cell(0.005, 64, 0.5, 0.8),
            cell(0.01, 64, 0.1, 0.7),
        ];
        assert_eq!(select_best(&cells), Some(3));
        let mut dominant = cells.clone();
        dominant[0].mean_val_acc = 0.9;
        assert_eq!(select_best(&dominant), Some(0));
        assert_eq!(select_best(&cells[..1]), Some(0));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hyper_validation() {
        let bad = TrainHyper {
            patience: 300,
            ..TrainHyper::default()
        };
        assert!(bad.validate().is_err());
        let zero = TrainHyper {
            max_epochs: 0,
            ..TrainHyper::default()
        };
        assert!(zero.validate().is_ok());
    }
}
