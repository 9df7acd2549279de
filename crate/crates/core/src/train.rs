//! Mini-batch training with Adam, evaluation, and run-directory outputs.
//!
//! Per-sample forward/backward passes fan out over the rayon pool; results
//! are collected in sample order and reduced sequentially, so the outcome does
//! not depend on the number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{
    compute_norm_stats, edibility_map, infer_n_classes, normalize, read_manifest, read_ppm, resize, split,
    AugmentSpec, NormStats, SampleRecord,
};
use crate::error::{Error, Result};
use crate::metrics::{
    edibility_collapse_scored, ConfusionMatrix, EdibilityReport, MetricReport, ScoredPrediction,
};
use crate::models::{Classifier, Model, ModelKind, QMViT, QNN, ViT};
use crate::nn::{cross_entropy_with_grad, softmax, AdamState, Tensor};
use crate::with_model;

pub fn build_model<R: Rng + ?Sized>(cfg: &RunConfig, n_classes: usize, rng: &mut R) -> Result<Model> {
    Ok(match cfg.model {
        ModelKind::QMViT => Model::QMViT(QMViT::init(&cfg.qmvit_config(n_classes)?, rng)?),
        ModelKind::ViT => Model::ViT(ViT::init(&cfg.vit_config(n_classes), rng)?),
        ModelKind::QNN => Model::QNN(QNN::init(&cfg.qnn_config(n_classes), rng)?),
    })
}

/// The quanvolutional baseline maps raw `[0, 1]` intensities onto rotation
/// angles, so it sees unnormalised pixels.
pub fn uses_normalization(kind: ModelKind) -> bool {
    kind != ModelKind::QNN
}

/// Resize, then normalise when statistics are given.
pub fn preprocess(image: &Tensor, size: usize, stats: Option<&NormStats>) -> Result<Tensor> {
    let r = resize(image, size, size)?;
    match stats {
        Some(s) => normalize(&r, s),
        None => Ok(r),
    }
}

/// Manifest rows with their decoded images.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
    pub images: Vec<Tensor>,
}

impl Dataset {
    pub fn load(manifest: &Path) -> Result<Self> {
        let records = read_manifest(manifest)?;
        let images = records
            .par_iter()
            .map(|r| read_ppm(&r.image_path))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { records, images })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.species).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

pub fn loss_curve_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in log {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            e.epoch,
            e.train_loss,
            opt(e.val_loss),
            opt(e.val_accuracy)
        );
    }
    s
}

/// Trailing moving averages with window `w` (shorter at the start).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Softmax scores for every image plus the mean cross-entropy.
pub fn score<M: Classifier>(model: &M, images: &[Tensor], labels: &[usize]) -> Result<(Vec<ScoredPrediction>, f64)> {
    if images.len() != labels.len() {
        return Err(Error::Dimension("images and labels differ in length".into()));
    }
    let per: Vec<(ScoredPrediction, f64)> = images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, &y)| {
            let logits = model.logits(img)?;
            let (loss, _) = cross_entropy_with_grad(&logits, y)?;
            Ok((ScoredPrediction::new(softmax(&logits), y)?, loss))
        })
        .collect::<Result<_>>()?;
    let n = per.len().max(1) as f64;
    let loss = per.iter().map(|p| p.1).sum::<f64>() / n;
    Ok((per.into_iter().map(|p| p.0).collect(), loss))
}

pub fn score_model(model: &Model, images: &[Tensor], labels: &[usize]) -> Result<(Vec<ScoredPrediction>, f64)> {
    with_model!(model, m => score(m, images, labels))
}

/// Metric report, confusion matrix and edibility view of one scored split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub confusion: ConfusionMatrix,
    pub edibility: EdibilityReport,
    pub loss: f64,
}

pub fn evaluate(model: &Model, images: &[Tensor], labels: &[usize], edible: &[bool]) -> Result<Evaluation> {
    let (scored, loss) = score_model(model, images, labels)?;
    let n = model.n_classes();
    let preds: Vec<usize> = scored.iter().map(ScoredPrediction::predicted).collect();
    let confusion = crate::metrics::confusion(&preds, labels, n)?;
    Ok(Evaluation {
        report: MetricReport::from_confusion(&confusion, Some(&scored))?,
        edibility: edibility_collapse_scored(&scored, edible)?,
        confusion,
        loss,
    })
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("class_{c}")).collect()
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub n_classes: usize,
    pub model: Model,
    pub stats: NormStats,
    pub edible: Vec<bool>,
    pub log: Vec<EpochLog>,
    pub train_eval: Evaluation,
    pub val_eval: Option<Evaluation>,
    pub checkpoint: Checkpoint,
}

struct Prepared {
    raw: Vec<Tensor>,
    prepared: Vec<Tensor>,
    labels: Vec<usize>,
    /// Positions in the manifest; they key the augmentation randomness.
    index: Vec<usize>,
}

fn gather(data: &Dataset, idx: &[usize], size: usize) -> Result<Prepared> {
    let raw = idx
        .par_iter()
        .map(|&i| resize(&data.images[i], size, size))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        prepared: Vec::new(),
        labels: idx.iter().map(|&i| data.records[i].species).collect(),
        index: idx.to_vec(),
        raw,
    })
}

fn prepare(s: &mut Prepared, stats: Option<&NormStats>) -> Result<()> {
    s.prepared = match stats {
        Some(st) => s.raw.par_iter().map(|r| normalize(r, st)).collect::<Result<_>>()?,
        None => s.raw.clone(),
    };
    Ok(())
}

/// Trains per `cfg` on an in-memory dataset.
pub fn train(cfg: &RunConfig, data: &Dataset, progress: &mut dyn FnMut(&EpochLog)) -> Result<TrainOutput> {
    cfg.validate()?;
    let inferred = infer_n_classes(&data.records)?;
    let n_classes = match cfg.n_classes {
        0 => inferred,
        n if n >= inferred => n,
        n => {
            return Err(Error::Config(format!(
                "n_classes {n} but the manifest uses species up to {}",
                inferred - 1
            )))
        }
    };
    let edible = edibility_map(&data.records, n_classes)?;
    let parts = split(
        &data.records,
        (1.0 - cfg.val_fraction - cfg.test_fraction, cfg.val_fraction, cfg.test_fraction),
        cfg.seed,
    )?;
    if parts.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let size = cfg.image_size;
    let mut tr = gather(data, &parts.train, size)?;
    let mut va = gather(data, &parts.val, size)?;
    let stats = compute_norm_stats(&tr.raw)?;
    let use_norm = uses_normalization(cfg.model);
    let norm = use_norm.then_some(&stats);
    prepare(&mut tr, norm)?;
    prepare(&mut va, norm)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = build_model(cfg, n_classes, &mut init_rng)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let augment = cfg.augment.then(|| cfg.augment_spec());
    let mut adam = AdamState::new(model.flatten().len(), cfg.lr);

    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let train_loss = with_model!(&mut model, m => run_epoch(
            m, cfg, &tr, norm, augment.as_ref(), epoch, &mut shuffle_rng, &mut adam
        ))?;
        let (val_loss, val_accuracy) = if va.labels.is_empty() {
            (None, None)
        } else {
            let (scored, loss) = score_model(&model, &va.prepared, &va.labels)?;
            let correct = scored.iter().filter(|s| s.predicted() == s.label).count();
            (Some(loss), Some(correct as f64 / scored.len() as f64))
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            val_accuracy,
        };
        progress(&entry);
        log.push(entry);
    }

    let train_eval = evaluate(&model, &tr.prepared, &tr.labels, &edible)?;
    let val_eval = if va.labels.is_empty() {
        None
    } else {
        Some(evaluate(&model, &va.prepared, &va.labels, &edible)?)
    };
    let saved_stats = if use_norm { stats } else { NormStats::identity(stats.channels()) };
    let checkpoint = Checkpoint::new(cfg, n_classes, &model, &saved_stats, &edible, &shuffle_rng);
    Ok(TrainOutput {
        n_classes,
        model,
        stats: saved_stats,
        edible,
        log,
        train_eval,
        val_eval,
        checkpoint,
    })
}

fn run_epoch<M: Classifier>(
    model: &mut M,
    cfg: &RunConfig,
    tr: &Prepared,
    norm: Option<&NormStats>,
    augment: Option<&AugmentSpec>,
    epoch: usize,
    rng: &mut ChaCha8Rng,
    adam: &mut AdamState,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..tr.labels.len()).collect();
    order.shuffle(rng);
    let mut adam_params = model.flatten();
    let mut total = 0.0;
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let per: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|&i| {
                let img = match augment {
                    Some(a) => {
                        let aug = a.apply(&tr.raw[i], epoch as u64, tr.index[i] as u64)?;
                        match norm {
                            Some(s) => normalize(&aug, s)?,
                            None => aug,
                        }
                    }
                    None => tr.prepared[i].clone(),
                };
                let (logits, cache) = model.forward_train(&img)?;
                let (loss, dlogits) = cross_entropy_with_grad(&logits, tr.labels[i])?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "epoch {}, batch {b}: loss {loss} on training sample {}",
                        epoch + 1,
                        tr.index[i]
                    )));
                }
                Ok((loss, model.backward(&cache, &dlogits)?))
            })
            .collect::<Result<_>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; adam_params.len()];
        for (loss, g) in &per {
            total += loss;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v * scale;
            }
        }
        if cfg.weight_decay > 0.0 {
            for (g, p) in grad.iter_mut().zip(&adam_params) {
                *g += cfg.weight_decay * p;
            }
        }
        adam.update(&mut adam_params, &grad).map_err(|e| match e {
            Error::NonFinite(what) => Error::Numeric(format!("epoch {}, batch {b}: non-finite {what}", epoch + 1)),
            other => other,
        })?;
        model.load_flat(&adam_params)?;
    }
    Ok(total / tr.labels.len() as f64)
}

/// Trains from `cfg.manifest` and writes the run directory:
/// `config.txt`, `loss_curve.csv`, `checkpoint.bin`, `metrics.json` and
/// `confusion.csv` (validation split, or the training split when there is no
/// validation data), `train_metrics.json` and `edibility.json`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path, progress: &mut dyn FnMut(&EpochLog)) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = Dataset::load(&cfg.manifest)?;
    let out = train(cfg, &data, progress)?;
    write_run(out_dir, cfg, &out)?;
    Ok(out)
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_run(out_dir: &Path, cfg: &RunConfig, out: &TrainOutput) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let echo = RunConfig {
        n_classes: out.n_classes,
        ..cfg.clone()
    };
    write(out_dir.join("config.txt"), echo.to_text())?;
    write(out_dir.join("loss_curve.csv"), loss_curve_csv(&out.log))?;
    out.checkpoint.save(&out_dir.join("checkpoint.bin"))?;
    write(out_dir.join("train_metrics.json"), out.train_eval.report.to_json())?;
    let main = out.val_eval.as_ref().unwrap_or(&out.train_eval);
    write_evaluation(out_dir, main, out.n_classes)
}

/// `metrics.json`, `confusion.csv` and `edibility.json`.
pub fn write_evaluation(out_dir: &Path, ev: &Evaluation, n_classes: usize) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(out_dir.join("metrics.json"), ev.report.to_json())?;
    write(out_dir.join("confusion.csv"), ev.confusion.to_csv(&class_names(n_classes))?)?;
    write(out_dir.join("edibility.json"), ev.edibility.to_json())
}
