//! Optimization loop: per-epoch triplet sampling, α annealing, Adam updates
//! on the joint loss, validation Recall@20 and early stopping.

mod adam;
mod sampling;

pub use adam::Adam;
pub use sampling::{sample_overlap, sample_triplets};

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{Checkpoint, DomainEncoder, EncodeMode, ModelParams};
use crate::error::{Error, Result};
use crate::eval::{evaluate, RankingContext, Slice};
use crate::graph::DomainTag;
use crate::objective::{joint_loss, Gradients, JointInputs, LossWeights, TripletBatch};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub patience: usize,
    pub batches_per_epoch: usize,
    pub overlap_batch: usize,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// Cut-off of the validation recall.
    pub eval_n: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 1000,
            patience: 50,
            batches_per_epoch: 100,
            overlap_batch: 64,
            lr: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            alpha_start: 0.5,
            alpha_end: 1.0,
            eval_n: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs_max == 0 {
            return bad("epochs_max must be positive".into());
        }
        if self.patience > self.epochs_max {
            return bad(format!("patience {} exceeds epochs_max {}", self.patience, self.epochs_max));
        }
        if self.batches_per_epoch == 0 || self.eval_n == 0 {
            return bad("batches_per_epoch and eval_n must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return bad(format!("lr {} and adam_eps {} must be positive", self.lr, self.adam_eps));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!("adam betas {:?} must lie in [0, 1)", self.adam_betas));
        }
        if self.alpha_start > self.alpha_end {
            return bad(format!("alpha schedule {} -> {} must be non-decreasing", self.alpha_start, self.alpha_end));
        }
        Ok(())
    }
}

/// Linear schedule from `alpha_start` at epoch 0 to `alpha_end` at the last
/// epoch of the budget.
pub fn alpha_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs_max <= 1 {
        return cfg.alpha_start;
    }
    let t = (epoch.min(cfg.epochs_max - 1)) as f64 / (cfg.epochs_max - 1) as f64;
    cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * t
}

/// `epoch loss recallA recallB alpha`; recalls are ×100, `NaN` when a domain
/// has no validation users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub loss: f64,
    pub recall: [f64; 2],
    pub alpha: f64,
}

impl HistoryRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.epoch, self.loss, self.recall[0], self.recall[1], self.alpha
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(' ').collect();
        let bad = || Error::Parse {
            path: "<history>".into(),
            line: 0,
            msg: format!("bad history record {line:?}"),
        };
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            loss: num(f[1])?,
            recall: [num(f[2])?, num(f[3])?],
            alpha: num(f[4])?,
        })
    }

    /// Mean over domains that have validation users.
    pub fn validation_metric(&self) -> f64 {
        let vals: Vec<f64> = self.recall.iter().copied().filter(|v| !v.is_nan()).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

/// Everything needed to continue training from an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Next epoch to run.
    pub epoch: usize,
    pub params: ModelParams<T>,
    pub adam: Adam<T>,
    pub best_val: f64,
    pub best_epoch: Option<usize>,
    pub best_params: ModelParams<T>,
    pub epochs_since_best: usize,
    pub history: Vec<HistoryRecord>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        Self {
            epoch: 0,
            adam: Adam::new(&params),
            best_val: f64::NEG_INFINITY,
            best_epoch: None,
            best_params: params.clone(),
            epochs_since_best: 0,
            history: Vec::new(),
            params,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::default();
        let c = &mut ck.config;
        c.insert("precision".into(), T::TAG.into());
        c.insert("state.epoch".into(), self.epoch.to_string());
        c.insert("state.best_val".into(), self.best_val.to_string());
        c.insert(
            "state.best_epoch".into(),
            self.best_epoch.map_or("none".into(), |e| e.to_string()),
        );
        c.insert("state.epochs_since_best".into(), self.epochs_since_best.to_string());
        c.insert("state.adam_steps".into(), self.adam.steps.to_string());
        for h in &self.history {
            c.insert(format!("history.{:06}", h.epoch), h.to_line());
        }
        ck.push_params("params.", &self.params);
        ck.push_params("best.", &self.best_params);
        ck.push_params("adam_m.", &self.adam.m);
        ck.push_params("adam_v.", &self.adam.v);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let parse = |k: &str| -> Result<String> { Ok(ck.config_value(k)?.to_string()) };
        let bad = |k: &str| Error::Version(format!("bad training state field {k}"));
        let epoch = parse("state.epoch")?.parse().map_err(|_| bad("state.epoch"))?;
        let best_val = parse("state.best_val")?.parse().map_err(|_| bad("state.best_val"))?;
        let best_epoch = match parse("state.best_epoch")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad("state.best_epoch"))?),
        };
        let epochs_since_best = parse("state.epochs_since_best")?
            .parse()
            .map_err(|_| bad("state.epochs_since_best"))?;
        let steps = parse("state.adam_steps")?.parse().map_err(|_| bad("state.adam_steps"))?;
        let history = ck
            .config
            .iter()
            .filter(|(k, _)| k.starts_with("history."))
            .map(|(_, v)| HistoryRecord::parse(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            epoch,
            params: ck.params("params.")?,
            adam: Adam {
                m: ck.params("adam_m.")?,
                v: ck.params("adam_v.")?,
                steps,
            },
            best_val,
            best_epoch,
            best_params: ck.params("best.")?,
            epochs_since_best,
            history,
        })
    }
}

/// Inputs of the training loop. Encoders are built over train edges with
/// seen-only neighbor indices.
pub struct TrainData<'a, T> {
    pub encoders: [&'a DomainEncoder<T>; 2],
    pub validation: [&'a RankingContext; 2],
    /// Overlap pairs usable during training (seen in both domains).
    pub overlap: &'a [(usize, usize)],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub history: Vec<HistoryRecord>,
}

pub struct Trainer<'a, T> {
    data: TrainData<'a, T>,
    cfg: TrainConfig,
    weights: LossWeights,
    state: TrainState<T>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(data: TrainData<'a, T>, cfg: TrainConfig, weights: LossWeights, params: ModelParams<T>) -> Result<Self> {
        Self::resume(data, cfg, weights, TrainState::new(params))
    }

    pub fn resume(data: TrainData<'a, T>, cfg: TrainConfig, weights: LossWeights, state: TrainState<T>) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        if data.encoders[0].graph().tag() != DomainTag::A || data.encoders[1].graph().tag() != DomainTag::B {
            return Err(Error::Population("encoders must be ordered [A, B]".into()));
        }
        Ok(Self {
            data,
            cfg,
            weights,
            state,
        })
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn into_state(self) -> TrainState<T> {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.cfg.epochs_max || self.state.epochs_since_best > self.cfg.patience
    }

    /// Validation Recall@`eval_n` (×100) per domain with current parameters.
    pub fn validate(&self, params: &ModelParams<T>, alpha: f64) -> Result<[f64; 2]> {
        let mut out = [f64::NAN; 2];
        for tag in DomainTag::BOTH {
            let enc = self.data.encoders[tag.index()];
            let reps = enc.encode_infer(params.domain(tag), alpha)?;
            match evaluate(tag, &reps, self.data.validation[tag.index()], &[self.cfg.eval_n], Slice::All, &[]) {
                Ok(rows) => out[tag.index()] = rows[0].recall,
                Err(Error::NoEvaluableUsers(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// Runs one epoch and returns its history record.
    pub fn run_epoch(&mut self) -> Result<HistoryRecord> {
        let epoch = self.state.epoch;
        let alpha = alpha_at(epoch, &self.cfg);
        let mut rng = epoch_rng(self.cfg.seed, epoch);
        let [enc_a, enc_b] = self.data.encoders;
        let batches_a = sample_triplets(enc_a.graph(), self.cfg.batches_per_epoch, &mut rng);
        let batches_b = sample_triplets(enc_b.graph(), self.cfg.batches_per_epoch, &mut rng);
        let mut loss_sum = 0.0;
        for (b, (ta, tb)) in batches_a.into_iter().zip(batches_b).enumerate() {
            let batch = TripletBatch { domains: [ta, tb] };
            let (reps_a, trace_a) = enc_a.encode(self.state.params.domain(DomainTag::A), alpha, EncodeMode::Train(&mut rng))?;
            let (reps_b, trace_b) = enc_b.encode(self.state.params.domain(DomainTag::B), alpha, EncodeMode::Train(&mut rng))?;
            let overlap = if self.weights.gamma > 0.0 {
                sample_overlap(self.data.overlap, self.cfg.overlap_batch, &mut rng)
            } else {
                None
            };
            let mut grads = Gradients::zeros(&self.state.params, [&reps_a, &reps_b]);
            let inputs = JointInputs {
                reps: [&reps_a, &reps_b],
                graphs: [enc_a.graph(), enc_b.graph()],
                batch: &batch,
                overlap: overlap.as_ref(),
                params: &self.state.params,
                weights: &self.weights,
            };
            let loss = joint_loss(&inputs, Some(&mut grads))?;
            let finite_grads = grads.params.is_finite() && grads.reps.iter().all(|g| g.is_finite());
            if !loss.total.is_finite() || !finite_grads {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    dump: divergence_dump(&loss, &batch, overlap.as_ref().map_or(0, |o| o.pairs.len())),
                });
            }
            enc_a.backward(&trace_a, &grads.reps[0], alpha, &mut grads.params.domains[0])?;
            enc_b.backward(&trace_b, &grads.reps[1], alpha, &mut grads.params.domains[1])?;
            self.state
                .adam
                .step(&mut self.state.params, &grads.params, self.cfg.lr, self.cfg.adam_betas, self.cfg.adam_eps);
            loss_sum += loss.total.as_f64();
        }
        let recall = self.validate(&self.state.params, alpha)?;
        let record = HistoryRecord {
            epoch,
            loss: loss_sum / self.cfg.batches_per_epoch as f64,
            recall,
            alpha,
        };
        let metric = record.validation_metric();
        if metric > self.state.best_val || self.state.best_epoch.is_none() {
            self.state.best_val = if metric.is_nan() { f64::NEG_INFINITY } else { metric };
            self.state.best_epoch = Some(epoch);
            self.state.best_params = self.state.params.clone();
            self.state.epochs_since_best = 0;
        } else {
            self.state.epochs_since_best += 1;
        }
        self.state.history.push(record);
        self.state.epoch += 1;
        log::info!("epoch {}", record.to_line());
        Ok(record)
    }

    pub fn run(mut self) -> Result<TrainOutcome<T>> {
        while !self.is_finished() {
            self.run_epoch()?;
        }
        Ok(TrainOutcome {
            params: self.state.best_params,
            best_epoch: self.state.best_epoch,
            best_val: self.state.best_val,
            history: self.state.history,
        })
    }
}

fn divergence_dump<T: Scalar>(loss: &crate::objective::LossBreakdown<T>, batch: &TripletBatch, overlap: usize) -> String {
    let mut s = format!(
        "bpr=[{}, {}] se=[{}, {}] cl={} total={}; triplets=[{}, {}] overlap={overlap}",
        loss.bpr[0],
        loss.bpr[1],
        loss.se[0],
        loss.se[1],
        loss.cl,
        loss.total,
        batch.domains[0].len(),
        batch.domains[1].len()
    );
    for tag in DomainTag::BOTH {
        for t in batch.domain(tag).iter().take(5) {
            let _ = write!(s, "; {tag}({},{},{})", t.user, t.pos, t.neg);
        }
    }
    s
}

/// Trains from `params` until early stopping or the epoch budget.
pub fn train<T: Scalar>(data: TrainData<'_, T>, cfg: TrainConfig, weights: LossWeights, params: ModelParams<T>) -> Result<TrainOutcome<T>> {
    Trainer::new(data, cfg, weights, params)?.run()
}
