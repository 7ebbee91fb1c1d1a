use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{compute_miou, cross_entropy, lr_at, Metrics, RunConfig};
use crate::data::{Dataset, Split, Task};
use crate::model::{prepare_clip, Checkpoint, ForwardCache, HeadConfig, PreparedClip, StsMixer};
use crate::nn::{clip_grad_norm, sgd_step_with_decay, Grads, Parameters, Tensor3};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

pub const METRICS_CSV_HEADER: &str = "epoch,lr,train_loss,val_metric";

/// Stream of the run seed used for the per-epoch shuffle.
const SHUFFLE_STREAM: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_metric: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.lr, self.train_loss, self.val_metric)
    }
}

/// Where a run writes its artifacts; either may be omitted.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOutputs<'a> {
    pub metrics_csv: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: StsMixer,
    /// Weights after the last epoch.
    pub params: Parameters,
    /// Weights of the epoch with the best validation metric.
    pub best_params: Parameters,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

/// Class indices the loss compares against: one per clip, or one per anchor.
pub fn targets(clip: &PreparedClip, head: &HeadConfig) -> Result<Vec<usize>> {
    let missing = |what: &str| Error::Parameter(format!("clip has no {what} for a {} head", head.task_name()));
    match head {
        HeadConfig::Classification { .. } => {
            Ok(vec![clip.clip_label.ok_or_else(|| missing("clip label"))? as usize])
        }
        HeadConfig::Segmentation { .. } => Ok(clip
            .anchor_labels
            .as_ref()
            .ok_or_else(|| missing("point labels"))?
            .iter()
            .map(|&l| l as usize)
            .collect()),
    }
}

/// The metric used for model selection: accuracy for classification, mIoU for
/// segmentation.
pub fn selection_metric(task: Task, m: &Metrics) -> f64 {
    match task {
        Task::Classification => m.accuracy,
        Task::Segmentation => m.miou,
    }
}

fn stack(rows: &[Tensor3]) -> Matrix {
    let classes = rows[0].channels();
    let data: Vec<f64> = rows.iter().flat_map(|t| t.data().iter().copied()).collect();
    let n = data.len() / classes;
    Matrix::from_vec(n, classes, data).unwrap_or_else(|_| Matrix::zeros(n, classes))
}

/// Mean cross-entropy of a batch, optionally accumulating its gradient into `grads`.
pub fn batch_loss(model: &StsMixer, params: &Parameters, batch: &[&PreparedClip], grads: Option<&mut Grads>) -> Result<f64> {
    let head = model.config().head;
    let mut logits = Vec::with_capacity(batch.len());
    let mut caches: Vec<ForwardCache> = Vec::with_capacity(batch.len());
    let mut all_targets = Vec::new();
    for clip in batch {
        let (l, c) = model.forward(params, clip)?;
        all_targets.extend(targets(clip, &head)?);
        logits.push(l);
        caches.push(c);
    }
    let stacked = stack(&logits);
    if !stacked.is_finite() {
        return Ok(f64::NAN);
    }
    let (loss, dlogits) = cross_entropy(&stacked, &all_targets)?;
    if let Some(g) = grads {
        let mut offset = 0;
        for ((clip, cache), l) in batch.iter().zip(&caches).zip(&logits) {
            let len = l.data().len();
            let d = Tensor3::from_vec(1, l.tokens(), l.channels(), dlogits.data()[offset..offset + len].to_vec())?;
            offset += len;
            model.backward(params, clip, cache, &d, g);
        }
    }
    Ok(loss)
}

/// Forward-only metrics over `clips`, in order.
pub fn evaluate(model: &StsMixer, params: &Parameters, clips: &[PreparedClip]) -> Result<Metrics> {
    let head = model.config().head;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    let mut loss = 0.0;
    let mut rows = 0;
    for clip in clips {
        let (l, _) = model.forward(params, clip)?;
        let t = targets(clip, &head)?;
        let m = stack(std::slice::from_ref(&l));
        loss += cross_entropy(&m, &t)?.0 * t.len() as f64;
        rows += t.len();
        for r in 0..m.rows() {
            let row = m.row(r);
            let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            pred.push(best);
        }
        truth.extend(t);
    }
    let mut metrics = compute_miou(&pred, &truth, head.outputs());
    metrics.loss = if rows > 0 { loss / rows as f64 } else { 0.0 };
    Ok(metrics)
}

/// Prepares every clip of `split` for `cfg`'s model.
pub fn prepare_split(dataset: &Dataset, split: Split, cfg: &RunConfig, threads: usize) -> Result<Vec<PreparedClip>> {
    check_dataset(dataset, cfg)?;
    dataset
        .split(split)
        .into_iter()
        .map(|c| prepare_clip(&c.video, &cfg.model, threads))
        .collect()
}

/// Rejects datasets whose task or label count disagrees with the run.
pub fn check_dataset(dataset: &Dataset, cfg: &RunConfig) -> Result<()> {
    if dataset.task() != cfg.task {
        return Err(Error::ConfigMismatch(format!(
            "dataset is {} but the run is {}",
            dataset.task(),
            cfg.task
        )));
    }
    if dataset.num_labels() > cfg.model.head.outputs() {
        return Err(Error::ConfigMismatch(format!(
            "dataset has {} labels but the head has {} outputs",
            dataset.num_labels(),
            cfg.model.head.outputs()
        )));
    }
    Ok(())
}

fn write_line(file: &mut Option<File>, path: Option<&Path>, line: &str) -> Result<()> {
    if let (Some(f), Some(p)) = (file.as_mut(), path) {
        writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

/// Runs SGD with momentum for `cfg.epochs` epochs over `train`, evaluating on `val`
/// after each epoch. The metrics CSV gains one row per epoch; the checkpoint is
/// rewritten whenever the validation metric reaches or beats the best so far, so ties go
/// to the later (longer trained) epoch.
pub fn train_loop(cfg: &RunConfig, train: &[PreparedClip], val: &[PreparedClip], out: TrainOutputs) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Parameter("training split is empty".into()));
    }
    let (model, mut params) = StsMixer::new(&cfg.model, cfg.seed)?;
    let config_json = cfg.canonical_json();
    let mut csv = match out.metrics_csv {
        Some(p) => Some(File::create(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    write_line(&mut csv, out.metrics_csv, METRICS_CSV_HEADER)?;

    let mut rng = Rng::derive(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = Grads::zeros_like(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Parameters)> = None;
    let mut steps = 0;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedClip> = chunk.iter().map(|&i| &train[i]).collect();
            grads.zero();
            let loss = batch_loss(&model, &params, &batch, Some(&mut grads))?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            clip_grad_norm(&mut grads, cfg.grad_clip);
            params.zero_grad();
            params.accumulate(&grads);
            sgd_step_with_decay(&mut params, lr, cfg.momentum, cfg.weight_decay);
            loss_sum += loss * chunk.len() as f64;
            steps += 1;
        }
        let val_metric = if val.is_empty() {
            f64::NAN
        } else {
            selection_metric(cfg.task, &evaluate(&model, &params, val)?)
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_metric,
        };
        write_line(&mut csv, out.metrics_csv, &record.csv_row())?;
        history.push(record);

        if best.as_ref().map_or(true, |(_, m, _)| val_metric >= *m) {
            if let Some(p) = out.checkpoint {
                Checkpoint::from_parameters(config_json.clone(), &params).write(p)?;
            }
            best = Some((epoch, val_metric, params.clone()));
        }
    }

    let (best_epoch, best_metric, best_params) = best.unwrap_or_else(|| (0, f64::NAN, params.clone()));
    Ok(TrainOutcome {
        model,
        params,
        best_params,
        best_epoch,
        best_metric,
        history,
        steps,
    })
}

/// Loads a checkpoint for `expected`, or for whatever run it was saved from when
/// `expected` is `None`. Model-shaping fields must agree exactly.
pub fn load_checkpoint(path: &Path, expected: Option<&RunConfig>) -> Result<(RunConfig, StsMixer, Parameters)> {
    let ck = Checkpoint::read(path)?;
    let stored = RunConfig::from_json(&ck.config)
        .map_err(|e| Error::Checkpoint(format!("embedded config is invalid: {e}")))?;
    if let Some(exp) = expected {
        if exp.task != stored.task || exp.model != stored.model {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint was trained with {} but the config asks for {}",
                serde_json::to_string(&stored.model)?,
                serde_json::to_string(&exp.model)?
            )));
        }
    }
    let (model, mut params) = StsMixer::new(&stored.model, stored.seed)?;
    ck.load_into(&mut params)?;
    Ok((stored, model, params))
}
