//! Command-line verbs: `train`, `eval`, `predict`, `make-toyset`,
//! `export-circuit`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{read_ppm, synthetic_toyset, write_manifest, write_ppm, SampleRecord};
use crate::error::{Error, Result};
use crate::metrics::ScoredPrediction;
use crate::nn::softmax;
use crate::pqc::{build_ansatz, AnsatzSpec, ParamVector};
use crate::qsim::Circuit;
use crate::train::{evaluate, preprocess, run_train, uses_normalization, write_evaluation, Dataset};

#[derive(Debug, Parser)]
#[command(name = "qmvit", version, about = "Train and evaluate hybrid quantum vision transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; any config key can be overridden with `--key value`.
    Train {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory for checkpoint, curves and metrics.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (results do not depend on this).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        quiet: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Score a checkpoint on every image of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Also write metrics.json, confusion.csv and edibility.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Classify one PPM image and print JSON.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Write the seeded synthetic shapes dataset.
    MakeToyset {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the gate listing of the configured loader and ansatz.
    ExportCircuit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Take ansatz angles from the first attention head of a checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
}

/// Splits `--key value` or `--key=value` arguments into pairs.
pub fn override_pairs(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key value`, got `{a}`")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("`--{key}` needs a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

pub fn apply_overrides(cfg: &mut RunConfig, args: &[String]) -> Result<()> {
    for (k, v) in override_pairs(args)? {
        cfg.set(&k, &v)?;
    }
    Ok(())
}

/// Config file first, then command-line overrides, over the defaults of
/// whichever model the two select.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut pairs = match path {
        Some(p) => RunConfig::pairs(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Vec::new(),
    };
    pairs.extend(override_pairs(overrides)?);
    RunConfig::from_pairs(&pairs)
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Loader gates as a listing: Hadamards are real gates, data rotations are
/// comments because their angles depend on the input. Ansatz angles follow.
pub fn export_circuit(cfg: &RunConfig, theta: Option<&ParamVector>) -> Result<(String, Circuit)> {
    let loader = cfg.loader.spec(cfg.qubits);
    loader.validate()?;
    let spec = AnsatzSpec::new(cfg.qubits, cfg.layers).with_entangler(cfg.entangler);
    spec.validate()?;
    let theta = match theta {
        Some(t) => t.clone(),
        None => ParamVector::init_uniform(&spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
    };
    let mut circuit = Circuit::new(cfg.qubits);
    let mut text = format!("QUBITS {}\n", cfg.qubits);
    let _ = writeln!(text, "# loader: {}", cfg.loader);
    for j in 0..cfg.qubits {
        if loader.prepend_hadamard {
            let h = crate::qsim::Gate::h(j);
            let _ = writeln!(text, "{h}");
            circuit.push(h)?;
        }
    }
    for j in 0..cfg.qubits {
        let sign = if loader.angle_sign() < 0.0 { "-" } else { "" };
        let _ = writeln!(text, "# {} {j} {sign}x[{j}]", loader.rotation(j, 0.0).kind_name());
    }
    let _ = writeln!(
        text,
        "# ansatz: {} layer(s), {}",
        cfg.layers, cfg.entangler
    );
    let ansatz = build_ansatz(&spec, &theta)?;
    for g in ansatz.gates() {
        let _ = writeln!(text, "{g}");
    }
    circuit.extend(&ansatz)?;
    Ok((text, circuit))
}

/// Class id, probabilities and edibility of one image, as JSON.
pub fn predict_json(ck: &Checkpoint, image: &Path) -> Result<String> {
    let r = ck.restore()?;
    let raw = read_ppm(image)?;
    let stats = uses_normalization(r.config.model).then_some(&r.stats);
    let x = preprocess(&raw, r.config.image_size, stats)?;
    let probs = softmax(&r.model.logits(&x)?);
    let class = crate::metrics::argmax(&probs);
    let sp = ScoredPrediction::new(probs, class)?;
    Ok(serde_json::json!({
        "class": class,
        "probabilities": sp.probs,
        "edible": r.edible[class],
    })
    .to_string())
}

/// Evaluates on every manifest row; returns the metrics JSON.
pub fn eval_checkpoint(ck: &Checkpoint, manifest: &Path, out: Option<&Path>) -> Result<String> {
    let r = ck.restore()?;
    let data = Dataset::load(manifest)?;
    let n = r.model.n_classes();
    if let Some(bad) = data.records.iter().find(|rec| rec.species >= n) {
        return Err(Error::Config(format!(
            "manifest species {} outside the checkpoint's {n} classes",
            bad.species
        )));
    }
    let stats = uses_normalization(r.config.model).then_some(&r.stats);
    let images = data
        .images
        .iter()
        .map(|img| preprocess(img, r.config.image_size, stats))
        .collect::<Result<Vec<_>>>()?;
    let ev = evaluate(&r.model, &images, &data.labels(), &r.edible)?;
    if let Some(dir) = out {
        write_evaluation(dir, &ev, n)?;
    }
    Ok(ev.report.to_json())
}

pub fn make_toyset(seed: u64, classes: usize, per_class: usize, size: usize, out: &Path) -> Result<Vec<SampleRecord>> {
    let set = synthetic_toyset(seed, classes, per_class, size)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (rec, img) in &set {
        write_ppm(&out.join(&rec.image_path), img)?;
    }
    let records: Vec<SampleRecord> = set.into_iter().map(|(r, _)| r).collect();
    write_manifest(&out.join("manifest.csv"), &records)?;
    Ok(records)
}

pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // A closed pipe (`qmvit --help | head`) is not an error.
            let _ = write!(std::io::stdout(), "{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    let mut stdout = std::io::stdout().lock();
    let mut emit = |s: &str| {
        let _ = writeln!(stdout, "{s}");
    };
    match cli.command {
        Command::Train {
            config,
            out,
            threads,
            quiet,
            overrides,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            set_threads(threads)?;
            let result = run_train(&cfg, &out, &mut |e| {
                if !quiet {
                    eprintln!(
                        "epoch {:>3}  train_loss {:.6}  val_loss {}  val_acc {}",
                        e.epoch,
                        e.train_loss,
                        e.val_loss.map_or("-".into(), |v| format!("{v:.6}")),
                        e.val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
                    );
                }
            })?;
            emit(
                &serde_json::json!({
                    "train_accuracy": result.train_eval.report.accuracy(),
                    "epochs": result.log.len(),
                    "out": out.display().to_string(),
                })
                .to_string(),
            );
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
            threads,
        } => {
            set_threads(threads)?;
            let ck = Checkpoint::load(&checkpoint)?;
            emit(eval_checkpoint(&ck, &manifest, out.as_deref())?.trim_end());
        }
        Command::Predict { checkpoint, image } => {
            emit(&predict_json(&Checkpoint::load(&checkpoint)?, &image)?);
        }
        Command::MakeToyset {
            seed,
            classes,
            per_class,
            size,
            out,
        } => {
            let recs = make_toyset(seed, classes, per_class, size, &out)?;
            emit(&format!("wrote {} images to {}", recs.len(), out.display()));
        }
        Command::ExportCircuit {
            config,
            checkpoint,
            out,
            overrides,
        } => {
            let (cfg, theta) = match checkpoint {
                Some(p) => {
                    let ck = Checkpoint::load(&p)?;
                    let mut cfg = ck.config.clone();
                    apply_overrides(&mut cfg, &overrides)?;
                    let t = ck.array("blocks.0.heads.0.theta_q")?.data.clone();
                    (cfg, Some(ParamVector(t)))
                }
                None => (load_config(config.as_deref(), &overrides)?, None),
            };
            let (text, _) = export_circuit(&cfg, theta.as_ref())?;
            match out {
                Some(p) => write_file(&p, text.as_bytes())?,
                None => emit(text.trim_end()),
            }
        }
    }
    Ok(())
}
