//! Hypernetwork training: one Dirichlet preference per step, scalarized
//! objectives, Adam on the hypernetwork weights.

use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hypernet::{HypernetArch, HypernetModel, TargetNetSpec};
use crate::prefs::{sample_dirichlet, PreferenceVector};
use crate::problems::{MtlLiteDataset, ProblemId, ProblemSpec, Split};
use crate::scalarize::{scalarize, scalarize_batch_hvi, ScalarKind, ScalarizationSpec};

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape {
                op: "adam",
                lhs: vec![self.first.len()],
                rhs: vec![params.len(), grads.len()],
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub scalarization: ScalarizationSpec,
    pub arch: HypernetArch,
    pub iterations: usize,
    pub lr: f64,
    pub alpha: f64,
    /// Mini-batch size, MTL-lite only.
    pub batch_size: usize,
    /// Preferences drawn per step; above one only for HVI.
    pub samples_per_step: usize,
    pub seed: u64,
    /// History is recorded every this many steps, plus the final step.
    pub log_every: usize,
}

pub const DEFAULT_ITERATIONS: usize = 20_000;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_ALPHA_MOO: f64 = 0.6;
pub const DEFAULT_ALPHA_MTL: f64 = 0.2;
pub const DEFAULT_BATCH: usize = 256;
pub const DEFAULT_HVI_SAMPLES: usize = 8;

impl RunConfig {
    /// Defaults for a closed-form problem.
    pub fn phn(problem: &ProblemSpec, kind: ScalarKind) -> Self {
        Self {
            problem: problem.id,
            scalarization: ScalarizationSpec::for_problem(kind, problem),
            arch: HypernetArch::for_problem(problem),
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
            alpha: DEFAULT_ALPHA_MOO,
            batch_size: DEFAULT_BATCH,
            samples_per_step: if kind == ScalarKind::Hvi {
                DEFAULT_HVI_SAMPLES
            } else {
                1
            },
            seed: 0,
            log_every: 100,
        }
    }

    /// Defaults for MTL-lite with the standard target network.
    pub fn mtl(kind: ScalarKind) -> Self {
        Self {
            problem: ProblemId::MtlLite,
            scalarization: ScalarizationSpec::new(kind, 2),
            arch: HypernetArch::for_target(2, TargetNetSpec::mtl_lite()),
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
            alpha: DEFAULT_ALPHA_MTL,
            batch_size: DEFAULT_BATCH,
            samples_per_step: if kind == ScalarKind::Hvi {
                DEFAULT_HVI_SAMPLES
            } else {
                1
            },
            seed: 0,
            log_every: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Contract(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Contract(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.samples_per_step == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Contract("batch sizes and log cadence must be at least 1".into()));
        }
        if self.samples_per_step > 1 && self.scalarization.kind != ScalarKind::Hvi {
            return Err(Error::Contract(
                "several preferences per step is only defined for hvi".into(),
            ));
        }
        self.scalarization.validate()?;
        if self.scalarization.m() != self.arch.input_dim {
            return Err(Error::Contract(format!(
                "scalarization has {} objectives, architecture takes {}",
                self.scalarization.m(),
                self.arch.input_dim
            )));
        }
        self.arch.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub ray: Vec<f64>,
    pub loss: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    /// `iteration,loss,wall_ms` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,wall_ms\n");
        for rec in &self.records {
            out.push_str(&format!(
                "{},{},{}\n",
                rec.iteration,
                crate::model::fmt_real(rec.loss),
                crate::model::fmt_real(rec.wall_ms)
            ));
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub iteration: usize,
    pub weights: Vec<f64>,
    pub adam: Adam,
    pub rng_seed: u64,
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub history: TrainHistory,
}

enum Task {
    Phn(ProblemSpec),
    Mtl {
        dataset: MtlLiteDataset,
        target: TargetNetSpec,
        train_rows: Vec<usize>,
    },
}

/// A training run that can be stepped, checkpointed and resumed.
pub struct Trainer {
    config: RunConfig,
    task: Task,
    weights: Vec<f64>,
    adam: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
    history: TrainHistory,
    started: Instant,
    elapsed_before_ms: f64,
}

const RNG_STREAM: u64 = 1;

impl Trainer {
    pub fn new_phn(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let problem = ProblemSpec::new(config.problem)?;
        if config.arch.output_dim != problem.n || config.arch.target.is_some() {
            return Err(Error::ModelMismatch(format!(
                "{} needs {} outputs, architecture has {}",
                problem.name(),
                problem.n,
                config.arch.output_dim
            )));
        }
        Self::fresh(config, Task::Phn(problem))
    }

    pub fn new_mtl(config: RunConfig, dataset: MtlLiteDataset) -> Result<Self> {
        config.validate()?;
        let target = config
            .arch
            .target
            .clone()
            .ok_or_else(|| Error::ModelMismatch("MTL training needs a target network".into()))?;
        if target.input_dim() != dataset.d || target.output_dim() != dataset.m {
            return Err(Error::ModelMismatch(format!(
                "target network {:?} does not fit {} inputs and {} tasks",
                target.widths, dataset.d, dataset.m
            )));
        }
        let train_rows = dataset.indices(Split::Train);
        if config.batch_size > train_rows.len() {
            return Err(Error::Contract(format!(
                "batch size {} exceeds the {} training rows",
                config.batch_size,
                train_rows.len()
            )));
        }
        Self::fresh(
            config,
            Task::Mtl {
                dataset,
                target,
                train_rows,
            },
        )
    }

    fn fresh(config: RunConfig, task: Task) -> Result<Self> {
        let model = HypernetModel::build(config.arch.clone(), config.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(RNG_STREAM);
        Ok(Self {
            adam: Adam::new(config.lr, model.weights.len()),
            weights: model.weights,
            config,
            task,
            rng,
            iteration: 0,
            history: TrainHistory::default(),
            started: Instant::now(),
            elapsed_before_ms: 0.0,
        })
    }

    /// Continue a closed-form run from a checkpoint.
    pub fn resume_phn(checkpoint: Checkpoint) -> Result<Self> {
        let mut trainer = Self::new_phn(checkpoint.config.clone())?;
        trainer.restore(checkpoint)?;
        Ok(trainer)
    }

    /// Continue an MTL-lite run; the dataset must be the one it started with.
    pub fn resume_mtl(checkpoint: Checkpoint, dataset: MtlLiteDataset) -> Result<Self> {
        let mut trainer = Self::new_mtl(checkpoint.config.clone(), dataset)?;
        trainer.restore(checkpoint)?;
        Ok(trainer)
    }

    fn restore(&mut self, ckpt: Checkpoint) -> Result<()> {
        if ckpt.weights.len() != self.weights.len() {
            return Err(Error::ModelMismatch(format!(
                "checkpoint has {} weights, architecture needs {}",
                ckpt.weights.len(),
                self.weights.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(ckpt.rng_seed);
        rng.set_stream(ckpt.rng_stream);
        rng.set_word_pos(ckpt.rng_word_pos);
        self.rng = rng;
        self.weights = ckpt.weights;
        self.adam = ckpt.adam;
        self.iteration = ckpt.iteration;
        self.elapsed_before_ms = ckpt.history.records.last().map_or(0.0, |r| r.wall_ms);
        self.history = ckpt.history;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            iteration: self.iteration,
            weights: self.weights.clone(),
            adam: self.adam.clone(),
            rng_seed: self.config.seed,
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
            history: self.history.clone(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// One optimizer step; returns the scalarized loss.
    pub fn step(&mut self) -> Result<f64> {
        let cfg = &self.config;
        let m = cfg.arch.input_dim;
        let rays = (0..cfg.samples_per_step)
            .map(|_| sample_dirichlet(cfg.alpha, m, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        let batch_rows = match &self.task {
            Task::Mtl { train_rows, .. } => index::sample(&mut self.rng, train_rows.len(), cfg.batch_size)
                .into_iter()
                .map(|i| train_rows[i])
                .collect(),
            Task::Phn(_) => Vec::new(),
        };

        let tape = Tape::new();
        let phi = tape.param(Tensor::vector(self.weights.clone()));
        let ray_matrix = Tensor::new(
            vec![rays.len(), m],
            rays.iter().flat_map(|r| r.as_slice().iter().copied()).collect(),
        )?;
        let out = cfg.arch.forward(phi, tape.constant(ray_matrix))?;
        let width = cfg.arch.output_dim;
        let objectives = (0..rays.len())
            .map(|j| {
                let row = out.slice(j * width, width)?;
                match &self.task {
                    Task::Phn(problem) => problem.evaluate(row),
                    Task::Mtl { dataset, target, .. } => mtl_task_losses(&tape, target, row, dataset, &batch_rows),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let loss = if cfg.scalarization.kind == ScalarKind::Hvi {
            let fs = tape.concat(&objectives)?.reshape(&[rays.len(), m])?;
            scalarize_batch_hvi(&cfg.scalarization, fs, &rays)?
        } else {
            scalarize(&cfg.scalarization, objectives[0], &rays[0])?
        };
        let value = loss.item();
        if !value.is_finite() || value > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                iteration: self.iteration,
                loss: value,
                ray: rays[0].as_slice().to_vec(),
            });
        }
        let grads = tape.backward(loss)?;
        let grad = grads.get(phi.id()).expect("phi is a parameter").data();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration: self.iteration,
                loss: value,
                ray: rays[0].as_slice().to_vec(),
            });
        }
        self.adam.update(&mut self.weights, grad)?;
        self.iteration += 1;
        if self.iteration.is_multiple_of(self.config.log_every) || self.iteration == self.config.iterations {
            self.history.records.push(HistoryRecord {
                iteration: self.iteration,
                ray: rays[0].as_slice().to_vec(),
                loss: value,
                wall_ms: self.elapsed_before_ms + self.started.elapsed().as_secs_f64() * 1e3,
            });
        }
        Ok(value)
    }

    /// Steps until `until` (capped at the configured iteration count).
    pub fn run_until(&mut self, until: usize) -> Result<()> {
        let stop = until.min(self.config.iterations);
        while self.iteration < stop {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(HypernetModel, TrainHistory)> {
        let model = HypernetModel::from_weights(self.config.arch.clone(), self.weights, self.config.seed)?;
        Ok((model, self.history))
    }
}

/// Per-task mean squared errors of the target network `theta` on `rows`.
fn mtl_task_losses<'t>(
    tape: &'t Tape,
    target: &TargetNetSpec,
    theta: Var<'t>,
    dataset: &MtlLiteDataset,
    rows: &[usize],
) -> Result<Var<'t>> {
    let b = rows.len();
    let xs: Vec<f64> = rows
        .iter()
        .flat_map(|&i| dataset.input_row(i).iter().copied())
        .collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|&i| dataset.target_row(i).iter().copied())
        .collect();
    let pred = target.forward(theta, tape.constant(Tensor::matrix(b, dataset.d, xs)?))?;
    let resid = pred.sub(tape.constant(Tensor::matrix(b, dataset.m, ys)?))?;
    let sq = resid.mul(resid)?;
    let averager = tape.constant(Tensor::matrix(1, b, vec![1.0 / b as f64; b])?);
    averager.matmul(sq)?.reshape(&[dataset.m])
}

/// Trains a hypernetwork on a closed-form problem.
pub fn train_phn(config: RunConfig) -> Result<(HypernetModel, TrainHistory)> {
    let mut trainer = Trainer::new_phn(config)?;
    trainer.run_until(usize::MAX)?;
    trainer.finish()
}

/// Trains a hypernetwork that emits target-network weights.
pub fn train_mtl(config: RunConfig, dataset: MtlLiteDataset) -> Result<(HypernetModel, TrainHistory)> {
    let mut trainer = Trainer::new_mtl(config, dataset)?;
    trainer.run_until(usize::MAX)?;
    trainer.finish()
}

/// Per-task mean squared errors of the network generated for `r`.
pub fn mtl_losses(
    model: &HypernetModel,
    dataset: &MtlLiteDataset,
    split: Split,
    r: &PreferenceVector,
) -> Result<Vec<f64>> {
    let target = model
        .arch
        .target
        .as_ref()
        .ok_or_else(|| Error::ModelMismatch("model has no target network".into()))?;
    let theta = model.forward(r)?;
    let rows = dataset.indices(split);
    let mut totals = vec![0.0; dataset.m];
    for &i in &rows {
        let pred = target.forward_values(&theta, dataset.input_row(i))?;
        for ((t, p), y) in totals.iter_mut().zip(&pred).zip(dataset.target_row(i)) {
            *t += (p - y) * (p - y);
        }
    }
    Ok(totals.into_iter().map(|t| t / rows.len() as f64).collect())
}
