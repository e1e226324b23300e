//! Command-line front end. Every subcommand resolves its configuration
//! (defaults, then `--config`, then flags), runs, and writes artifacts that
//! embed the resolved configuration and the tool version.

pub mod recipes;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adversarial::{train, GanConfig, GanMode, GanRun};
use crate::cohorts::{ablation, cohort_label, desk_domains, split, AblationConfig, EvalOn};
use crate::cycle::{train_cycle, CycleConfig};
use crate::dataio::{
    gen_gaussian, gen_mixture, gen_uniform, meta_path, read_samples, read_vector, rotate_2d, write_meta, write_samples,
    write_vector, MixtureComponent, RngStream, SampleMeta,
};
use crate::error::{Error, Result};
use crate::kliep::{fit, ImportanceModel, KliepConfig, SOURCE_TO_TARGET, TARGET_TO_SOURCE};
use crate::metrics::{histogram, line_chart_svg, pool, report, DistanceReport, DEFAULT_BINS};

use recipes::{summarize_weights, ToyArm};

pub const TOOL_VERSION: &str = concat!("prematch ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    Uniform,
    Gaussian,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dist: Dist,
    pub n: usize,
    pub dim: usize,
    pub low: f64,
    pub high: f64,
    pub mu: f64,
    pub sigma: f64,
    pub components: Vec<MixtureComponent>,
    /// Rotation in radians of the first two coordinates, applied after sampling.
    pub rotate: Option<f64>,
    pub tag: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dist: Dist::Uniform,
            n: 10_000,
            dim: 300,
            low: 0.0,
            high: 10.0,
            mu: 7.0,
            sigma: 0.5,
            components: Vec::new(),
            rotate: None,
            tag: None,
        }
    }
}

/// Everything a run depends on. A stored copy reruns to identical artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub kliep: KliepConfig,
    pub gan: GanConfig,
    pub cycle: CycleConfig,
    pub ablation: AblationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            seeds: vec![1, 2, 3],
            data: DataConfig::default(),
            kliep: KliepConfig::default(),
            gan: GanConfig::default(),
            cycle: CycleConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prematch", version, about = "KLIEP importance weighting for adversarial distribution matching")]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON on stdout instead of the summary table.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic data set.
    GenData(GenDataArgs),
    /// Fit a KLIEP importance model.
    FitKliep(FitKliepArgs),
    /// Evaluate an importance model on samples.
    Weights(WeightsArgs),
    /// Train a vanilla or importance-weighted GAN.
    TrainGan(TrainGanArgs),
    /// Train the bidirectional cycle system.
    TrainCycle(TrainCycleArgs),
    /// Pooled moments and distances between two sample files.
    EvalDist(EvalDistArgs),
    /// Split samples into importance cohorts.
    Cohorts(CohortsArgs),
    /// Train one model per importance cohort and compare.
    Ablation(AblationArgs),
    /// Pooled histogram overlay of sample files.
    Hist(HistArgs),
    /// End-to-end uniform-to-Gaussian comparison of vanilla and weighted GANs.
    ReproToy(ReproToyArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub dist: Option<Dist>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub high: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Rotation in radians of the first two coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub rotate: Option<f64>,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    /// `ŵ = p_target / p_source`, evaluated on source samples.
    SourceToTarget,
    /// `ψ̂ = p_source / p_target`, evaluated on target samples.
    TargetToSource,
}

#[derive(Debug, Args)]
pub struct KliepFlags {
    #[arg(long)]
    pub num_centers: Option<usize>,
    #[arg(long)]
    pub cv_folds: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitKliepArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "source-to-target")]
    pub direction: DirectionArg,
    #[command(flatten)]
    pub kliep: KliepFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GanFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gen_lr: Option<f64>,
    #[arg(long)]
    pub disc_lr: Option<f64>,
    /// Reshuffle batches every epoch.
    #[arg(long)]
    pub shuffle: bool,
    /// Literal `E[w log(1 − d(g(x)))]` generator loss.
    #[arg(long)]
    pub saturating: bool,
}

impl GanFlags {
    fn apply(&self, g: &mut GanConfig) {
        set(&mut g.epochs, self.epochs);
        set(&mut g.batch_size, self.batch_size);
        set(&mut g.gen_lr, self.gen_lr);
        set(&mut g.disc_lr, self.disc_lr);
        g.shuffle |= self.shuffle;
        g.saturating |= self.saturating;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Vanilla,
    Kliep,
}

impl From<ModeArg> for GanMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vanilla => GanMode::Vanilla,
            ModeArg::Kliep => GanMode::Kliep,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainGanArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "vanilla")]
    pub mode: ModeArg,
    /// Source importance weights, one per line (required for `--mode kliep`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub gan: GanFlags,
    /// Also write the translated source samples here.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainCycleArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Importance model `ŵ` (source → target); requires `--psi-model`.
    #[arg(long, requires = "psi_model")]
    pub w_model: Option<PathBuf>,
    /// Importance model `ψ̂` (target → source); requires `--w-model`.
    #[arg(long, requires = "w_model")]
    pub psi_model: Option<PathBuf>,
    #[arg(long)]
    pub lambda_cyc: Option<f64>,
    #[command(flatten)]
    pub gan: GanFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalDistArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CohortsArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalOnArg {
    Full,
    Cohort,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Source samples; without `--source`/`--target` the built-in 2-D domains are used.
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    /// Source weights; fitted with KLIEP when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub eval_on: Option<EvalOnArg>,
    #[command(flatten)]
    pub gan: GanFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// Comma-separated sample files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Comma-separated labels (default: file stems).
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value = "Pooled histogram")]
    pub title: String,
    /// SVG output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON with the bin counts.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproToyArgs {
    #[command(flatten)]
    pub gan: GanFlags,
    #[command(flatten)]
    pub kliep: KliepFlags,
    /// Also write the source and target samples.
    #[arg(long)]
    pub write_data: bool,
    /// Output directory.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl KliepFlags {
    fn apply(&self, k: &mut KliepConfig) {
        set(&mut k.num_centers, self.num_centers);
        set(&mut k.cv_folds, self.cv_folds);
        set(&mut k.max_iters, self.max_iters);
    }
}

/// Flag misuse detected after parsing; reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// `dir/run.json` → `dir/run.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn envelope(command: &str, cfg: &ExperimentConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("tool_version".into(), json!(TOOL_VERSION));
    m.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    m
}

/// Output of a subcommand: the JSON summary and a human-readable table.
struct Outcome {
    summary: Value,
    table: String,
}

fn report_row(label: &str, r: &DistanceReport) -> String {
    format!(
        "{label:<12} mu {:>8.4}  sigma {:>8.4}  W1 {:>8.4}  energy {:>8.4}\n",
        r.mu_a, r.sigma_a, r.wasserstein, r.energy
    )
}

fn gen_data(cfg: &mut ExperimentConfig, a: &GenDataArgs) -> Result<Outcome> {
    let d = &mut cfg.data;
    set(&mut d.dist, a.dist);
    set(&mut d.n, a.n);
    set(&mut d.dim, a.dim);
    set(&mut d.low, a.low);
    set(&mut d.high, a.high);
    set(&mut d.mu, a.mu);
    set(&mut d.sigma, a.sigma);
    if a.rotate.is_some() {
        d.rotate = a.rotate;
    }
    if a.tag.is_some() {
        d.tag = a.tag.clone();
    }
    let d = cfg.data.clone();
    let rng = RngStream::new(cfg.seed, crate::dataio::streams::DATA);
    let (mut set_, params) = match d.dist {
        Dist::Uniform => (gen_uniform(d.n, d.dim, d.low, d.high, rng)?, json!({"low": d.low, "high": d.high})),
        Dist::Gaussian => (gen_gaussian(d.n, d.dim, d.mu, d.sigma, rng)?, json!({"mu": d.mu, "sigma": d.sigma})),
        Dist::Mixture => (gen_mixture(d.n, &d.components, rng)?, json!({"components": d.components})),
    };
    let mut params = params;
    if let Some(angle) = d.rotate {
        set_ = rotate_2d(&set_, angle)?;
        params["rotate"] = json!(angle);
    }
    let tag = d.tag.clone().unwrap_or_else(|| set_.tag().to_string());
    let set_ = set_.with_tag(tag.clone());
    write_samples(&set_, &a.out)?;
    let meta = SampleMeta {
        tag,
        n: set_.n(),
        d: set_.dim(),
        generator: serde_json::to_value(d.dist)?.as_str().unwrap_or_default().to_string(),
        params,
        seed: Some(cfg.seed),
        tool_version: Some(TOOL_VERSION.into()),
    };
    write_meta(&meta, &a.out)?;
    let (mu, sigma) = crate::metrics::moments(&pool(&set_));
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "n": set_.n(), "d": set_.dim(), "mu": mu, "sigma": sigma}),
        table: format!("wrote {} ({} x {}), pooled mu {mu:.4} sigma {sigma:.4}\n", path_str(&a.out), set_.n(), set_.dim()),
    })
}

fn model_artifact(model: &ImportanceModel, cfg: &ExperimentConfig, inputs: Value) -> Result<Value> {
    let mut v = serde_json::to_value(model)?;
    let obj = v.as_object_mut().expect("model serializes to an object");
    for (k, val) in envelope("fit-kliep", cfg) {
        obj.insert(k, val);
    }
    obj.insert("inputs".into(), inputs);
    Ok(v)
}

fn read_model(path: &Path) -> Result<ImportanceModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn fit_kliep_cmd(cfg: &mut ExperimentConfig, a: &FitKliepArgs) -> Result<Outcome> {
    a.kliep.apply(&mut cfg.kliep);
    let source = read_samples(&a.source)?;
    let target = read_samples(&a.target)?;
    let rng = RngStream::new(cfg.seed, crate::dataio::streams::KLIEP);
    let (mut model, den) = match a.direction {
        DirectionArg::SourceToTarget => (fit(&target, &source, &cfg.kliep, rng)?, &source),
        DirectionArg::TargetToSource => (fit(&source, &target, &cfg.kliep, rng)?, &target),
    };
    model.direction = match a.direction {
        DirectionArg::SourceToTarget => SOURCE_TO_TARGET.into(),
        DirectionArg::TargetToSource => TARGET_TO_SOURCE.into(),
    };
    let inputs = json!({"source": path_str(&a.source), "target": path_str(&a.target)});
    write_json(&a.out, &model_artifact(&model, cfg, inputs)?)?;
    let ws = summarize_weights(&model.weights(den)?);
    Ok(Outcome {
        summary: json!({
            "out": path_str(&a.out),
            "direction": model.direction,
            "sigma": model.sigma(),
            "iters": model.fit_log.iters,
            "objective": model.fit_log.objective,
            "denominator_weights": ws,
        }),
        table: format!(
            "{}: sigma {:.4}, {} iterations, objective {:.6}\ndenominator weights: mean {:.12} max {:.4} effective n {:.1}\n",
            model.direction, model.sigma(), model.fit_log.iters, model.fit_log.objective, ws.mean, ws.max, ws.effective_sample_size
        ),
    })
}

fn weights_cmd(cfg: &ExperimentConfig, a: &WeightsArgs) -> Result<Outcome> {
    let model = read_model(&a.model)?;
    let samples = read_samples(&a.samples)?;
    let w = model.weights(&samples)?;
    write_vector(&w, &a.out)?;
    let s = summarize_weights(&w);
    let mut meta = envelope("weights", cfg);
    meta.insert("inputs".into(), json!({"model": path_str(&a.model), "samples": path_str(&a.samples)}));
    meta.insert("direction".into(), json!(model.direction));
    meta.insert("summary".into(), serde_json::to_value(&s)?);
    write_json(&meta_path(&a.out), &Value::Object(meta))?;
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "summary": s}),
        table: format!(
            "{} weights: mean {:.12} min {:.4e} max {:.4} effective n {:.1}\n",
            s.n, s.mean, s.min, s.max, s.effective_sample_size
        ),
    })
}

fn history_svg(title: &str, series: &[(&str, Vec<f64>)]) -> String {
    let refs: Vec<(&str, &[f64])> = series.iter().map(|(l, v)| (*l, v.as_slice())).collect();
    line_chart_svg(title, &refs)
}

fn gan_artifact(run: &GanRun, cfg: &ExperimentConfig, inputs: Value, metrics: &DistanceReport) -> Result<Value> {
    let mut m = envelope("train-gan", cfg);
    m.insert("mode".into(), json!(run.mode));
    m.insert("seed".into(), json!(run.seed));
    m.insert("inputs".into(), inputs);
    m.insert("history".into(), serde_json::to_value(&run.history)?);
    m.insert("final_metrics".into(), serde_json::to_value(metrics)?);
    if let Some(w) = &run.importance {
        m.insert("importance".into(), serde_json::to_value(summarize_weights(w))?);
    }
    Ok(Value::Object(m))
}

fn write_gan_outputs(run: &GanRun, out: &Path, artifact: &Value) -> Result<()> {
    write_json(out, artifact)?;
    write_text(&sibling(out, "generator.json"), &run.generator.to_json()?)?;
    write_text(&sibling(out, "discriminator.json"), &run.discriminator.to_json()?)?;
    let h = &run.history;
    write_text(
        &sibling(out, "loss.svg"),
        &history_svg(
            &format!("{} GAN losses", run.mode),
            &[
                ("discriminator", h.iter().map(|e| e.disc_loss).collect()),
                ("generator", h.iter().map(|e| e.gen_loss).collect()),
            ],
        ),
    )
}

fn train_gan_cmd(cfg: &mut ExperimentConfig, a: &TrainGanArgs) -> std::result::Result<Outcome, Failure> {
    let mode = GanMode::from(a.mode);
    if mode == GanMode::Kliep && a.weights.is_none() {
        return Err(Failure::Usage("--weights is required when --mode kliep".into()));
    }
    if mode == GanMode::Vanilla && a.weights.is_some() {
        return Err(Failure::Usage("--weights only applies to --mode kliep".into()));
    }
    a.gan.apply(&mut cfg.gan);
    let source = read_samples(&a.source)?;
    let target = read_samples(&a.target)?;
    let weights = a.weights.as_deref().map(read_vector).transpose()?;
    let run = train(&source, &target, mode, weights.as_deref(), &cfg.gan, cfg.seed)?;
    let generated = run.generate(&source)?;
    let metrics = report(&generated, &target)?;
    let inputs = json!({
        "source": path_str(&a.source),
        "target": path_str(&a.target),
        "weights": a.weights.as_deref().map(path_str),
    });
    write_gan_outputs(&run, &a.out, &gan_artifact(&run, cfg, inputs, &metrics)?)?;
    if let Some(p) = &a.generated {
        write_samples(&generated, p)?;
    }
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "mode": mode, "final_metrics": metrics}),
        table: report_row(&mode.to_string(), &metrics),
    })
}

fn train_cycle_cmd(cfg: &mut ExperimentConfig, a: &TrainCycleArgs) -> Result<Outcome> {
    a.gan.apply(&mut cfg.cycle.gan);
    set(&mut cfg.cycle.lambda_cyc, a.lambda_cyc);
    let source = read_samples(&a.source)?;
    let target = read_samples(&a.target)?;
    let weights = match (&a.w_model, &a.psi_model) {
        (Some(w), Some(p)) => Some((read_model(w)?.weights(&source)?, read_model(p)?.weights(&target)?)),
        _ => None,
    };
    let run = train_cycle(
        &source,
        &target,
        weights.as_ref().map(|(w, p)| (w.as_slice(), p.as_slice())),
        &cfg.cycle,
        cfg.seed,
    )?;
    let forward = report(&run.translate_source(&source)?, &target)?;
    let backward = report(&run.translate_target(&target)?, &source)?;
    let mut m = envelope("train-cycle", cfg);
    m.insert("seed".into(), json!(cfg.seed));
    m.insert(
        "inputs".into(),
        json!({
            "source": path_str(&a.source),
            "target": path_str(&a.target),
            "w_model": a.w_model.as_deref().map(path_str),
            "psi_model": a.psi_model.as_deref().map(path_str),
        }),
    );
    m.insert(
        "weights".into(),
        json!({
            "source": summarize_weights(&run.system.w_source),
            "target": summarize_weights(&run.system.w_target),
        }),
    );
    m.insert("history".into(), serde_json::to_value(&run.history)?);
    m.insert("final_metrics".into(), json!({"source_to_target": forward, "target_to_source": backward}));
    write_json(&a.out, &Value::Object(m))?;
    let s = &run.system;
    for (name, net) in [("g_r", &s.g_r), ("g_s", &s.g_s), ("d_r", &s.d_r), ("d_s", &s.d_s)] {
        write_text(&sibling(&a.out, &format!("{name}.json")), &net.to_json()?)?;
    }
    let h = &run.history;
    write_text(
        &sibling(&a.out, "loss.svg"),
        &history_svg(
            "cycle losses",
            &[
                ("d_r", h.iter().map(|e| e.disc_r).collect()),
                ("d_s", h.iter().map(|e| e.disc_s).collect()),
                ("g_r adversarial", h.iter().map(|e| e.adv_r).collect()),
                ("g_s adversarial", h.iter().map(|e| e.adv_s).collect()),
                ("cycle", h.iter().map(|e| e.cycle).collect()),
            ],
        ),
    )?;
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "source_to_target": forward, "target_to_source": backward}),
        table: report_row("g_r(source)", &forward) + &report_row("g_s(target)", &backward),
    })
}

fn eval_dist_cmd(cfg: &ExperimentConfig, a: &EvalDistArgs) -> Result<Outcome> {
    let sa = read_samples(&a.a)?;
    let sb = read_samples(&a.b)?;
    let r = report(&sa, &sb)?;
    if let Some(out) = &a.out {
        let mut m = envelope("eval-dist", cfg);
        m.insert("inputs".into(), json!({"a": path_str(&a.a), "b": path_str(&a.b)}));
        m.insert("report".into(), serde_json::to_value(&r)?);
        write_json(out, &Value::Object(m))?;
    }
    Ok(Outcome {
        summary: serde_json::to_value(&r)?,
        table: format!(
            "a: mu {:.4} sigma {:.4} (n = {})\nb: mu {:.4} sigma {:.4} (n = {})\nWasserstein-1 {:.4}\nenergy distance {:.4}\n",
            r.mu_a, r.sigma_a, r.n_pooled_a, r.mu_b, r.sigma_b, r.n_pooled_b, r.wasserstein, r.energy
        ),
    })
}

fn cohorts_cmd(cfg: &mut ExperimentConfig, a: &CohortsArgs) -> Result<Outcome> {
    set(&mut cfg.ablation.k, a.k);
    let w = read_vector(&a.weights)?;
    let cut = split(&w, cfg.ablation.k)?;
    let mut m = envelope("cohorts", cfg);
    m.insert("inputs".into(), json!({"weights": path_str(&a.weights)}));
    m.insert("thresholds".into(), json!(cut.thresholds));
    m.insert("cohort_sizes".into(), json!(cut.sizes));
    let labels: Vec<String> = (0..cut.k()).map(|c| cohort_label(c, cut.k())).collect();
    m.insert("labels".into(), json!(labels));
    m.insert("assignment".into(), json!(cut.assignment));
    write_json(&a.out, &Value::Object(m))?;
    let mut table = String::new();
    for (c, label) in labels.iter().enumerate() {
        table += &format!("{label:<8} {} samples\n", cut.sizes[c]);
    }
    table += &format!("thresholds {:?}\n", cut.thresholds);
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "thresholds": cut.thresholds, "cohort_sizes": cut.sizes}),
        table,
    })
}

fn ablation_cmd(cfg: &mut ExperimentConfig, a: &AblationArgs) -> Result<Outcome> {
    let ab = &mut cfg.ablation;
    set(&mut ab.k, a.k);
    if let Some(m) = a.mode {
        ab.mode = m.into();
    }
    if let Some(e) = a.eval_on {
        ab.eval_on = match e {
            EvalOnArg::Full => EvalOn::Full,
            EvalOnArg::Cohort => EvalOn::Cohort,
        };
    }
    a.gan.apply(&mut ab.gan);
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    let (source, target) = match (&a.source, &a.target) {
        (Some(s), Some(t)) => (read_samples(s)?, read_samples(t)?),
        _ => desk_domains(recipes::DESK_SOURCE_N, recipes::DESK_TARGET_N, cfg.seed)?,
    };
    let (weights, weight_source) = match &a.weights {
        Some(p) => (read_vector(p)?, json!(path_str(p))),
        None => {
            let (model, w) = recipes::fit_source_weights(&source, &target, &cfg.kliep, cfg.seed)?;
            (w, json!({"fitted": {"sigma": model.sigma(), "iters": model.fit_log.iters}}))
        }
    };
    let r = ablation(&source, &target, &weights, &cfg.ablation, &cfg.seeds)?;
    let mut m = envelope("ablation", cfg);
    m.insert(
        "inputs".into(),
        json!({
            "source": a.source.as_deref().map(path_str),
            "target": a.target.as_deref().map(path_str),
            "weights": weight_source,
        }),
    );
    m.insert("metric".into(), json!("pooled generated-vs-target distances replace segmentation IoU"));
    m.insert("thresholds".into(), json!(r.thresholds));
    m.insert("cohort_sizes".into(), json!(r.cohort_sizes));
    m.insert("mean_weight".into(), json!(r.mean_weight));
    m.insert("per_cohort".into(), serde_json::to_value(&r.per_cohort)?);
    write_json(&a.out, &Value::Object(m))?;
    let mut table = String::new();
    for c in &r.per_cohort {
        table += &report_row(&format!("{} s{}", c.cohort, c.seed), &c.report);
    }
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "cohort_sizes": r.cohort_sizes, "per_cohort": r.per_cohort}),
        table,
    })
}

fn hist_cmd(cfg: &ExperimentConfig, a: &HistArgs) -> std::result::Result<Outcome, Failure> {
    let labels: Vec<String> = match &a.labels {
        Some(l) if l.len() != a.inputs.len() => {
            return Err(Failure::Usage(format!("{} labels for {} inputs", l.len(), a.inputs.len())));
        }
        Some(l) => l.clone(),
        None => a
            .inputs
            .iter()
            .map(|p| p.file_stem().map_or_else(|| path_str(p), |s| s.to_string_lossy().into_owned()))
            .collect(),
    };
    let pooled: Vec<Vec<f64>> = a.inputs.iter().map(|p| read_samples(p).map(|s| pool(&s))).collect::<Result<_>>()?;
    let series: Vec<(&str, &[f64])> = labels.iter().map(String::as_str).zip(pooled.iter().map(Vec::as_slice)).collect();
    let h = histogram(&series, a.bins)?;
    write_text(&a.out, &h.to_svg(&a.title))?;
    if let Some(j) = &a.json_out {
        let mut m = envelope("hist", cfg);
        m.insert("inputs".into(), json!(a.inputs.iter().map(|p| path_str(p)).collect::<Vec<_>>()));
        m.insert("histogram".into(), serde_json::to_value(&h).map_err(Error::from)?);
        write_json(j, &Value::Object(m))?;
    }
    Ok(Outcome {
        summary: json!({"out": path_str(&a.out), "bins": h.bins, "lo": h.lo, "hi": h.hi}),
        table: format!("wrote {} ({} series, {} bins over [{:.4}, {:.4}])\n", path_str(&a.out), labels.len(), h.bins, h.lo, h.hi),
    })
}

fn repro_toy_cmd(cfg: &mut ExperimentConfig, a: &ReproToyArgs) -> Result<Outcome> {
    a.gan.apply(&mut cfg.gan);
    a.kliep.apply(&mut cfg.kliep);
    let dir = &a.out_prefix;
    let toy = recipes::repro_toy(cfg.seed, &cfg.kliep, &cfg.gan)?;
    if a.write_data {
        write_samples(&toy.source, &dir.join("source.csv"))?;
        write_samples(&toy.target, &dir.join("target.csv"))?;
    }
    let inputs = json!({"source": "uniform(0,10) 10000x300", "target": "gaussian(7,0.5) 10000x300"});
    write_json(&dir.join("kliep_model.json"), &model_artifact(&toy.model, cfg, inputs.clone())?)?;
    write_vector(&toy.weights, &dir.join("weights.txt"))?;

    let mut arms = serde_json::Map::new();
    let mut table = report_row("source", &toy.baseline);
    let mut pooled = vec![("source", pool(&toy.source)), ("target", pool(&toy.target))];
    let mut first_failure = None;
    for (name, arm) in [("vanilla", &toy.vanilla), ("kliep", &toy.kliep)] {
        match arm {
            ToyArm::Trained { run, generated, report } => {
                let out = dir.join(format!("{name}_run.json"));
                write_gan_outputs(run, &out, &gan_artifact(run, cfg, inputs.clone(), report)?)?;
                arms.insert(name.into(), serde_json::to_value(report)?);
                table += &report_row(name, report);
                pooled.push((name, pool(generated)));
            }
            ToyArm::Failed(msg) => {
                arms.insert(name.into(), json!({"error": msg}));
                table += &format!("{name:<12} training failed: {msg}\n");
                first_failure.get_or_insert_with(|| msg.clone());
            }
        }
    }
    let series: Vec<(&str, &[f64])> = pooled.iter().map(|(l, v)| (*l, v.as_slice())).collect();
    let h = histogram(&series, DEFAULT_BINS)?;
    write_text(&dir.join("hist.svg"), &h.to_svg("Source, target and generated distributions"))?;

    let mut m = envelope("repro-toy", cfg);
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("baseline".into(), serde_json::to_value(&toy.baseline)?);
    m.insert("importance".into(), serde_json::to_value(summarize_weights(&toy.weights))?);
    m.insert("kliep_sigma".into(), json!(toy.model.sigma()));
    m.insert("runs".into(), Value::Object(arms));
    let summary = Value::Object(m);
    write_json(&dir.join("summary.json"), &summary)?;
    if let Some(msg) = first_failure {
        return Err(Error::Contract(format!("repro-toy: a training run failed ({msg}); see summary.json")));
    }
    Ok(Outcome { summary, table })
}

fn dispatch(cli: &Cli) -> std::result::Result<Outcome, Failure> {
    let mut cfg = load_config(cli)?;
    Ok(match &cli.command {
        Command::GenData(a) => gen_data(&mut cfg, a)?,
        Command::FitKliep(a) => fit_kliep_cmd(&mut cfg, a)?,
        Command::Weights(a) => weights_cmd(&cfg, a)?,
        Command::TrainGan(a) => train_gan_cmd(&mut cfg, a)?,
        Command::TrainCycle(a) => train_cycle_cmd(&mut cfg, a)?,
        Command::EvalDist(a) => eval_dist_cmd(&cfg, a)?,
        Command::Cohorts(a) => cohorts_cmd(&mut cfg, a)?,
        Command::Ablation(a) => ablation_cmd(&mut cfg, a)?,
        Command::Hist(a) => hist_cmd(&cfg, a)?,
        Command::ReproToy(a) => repro_toy_cmd(&mut cfg, a)?,
    })
}

fn error_line(kind: &str, message: &str) -> String {
    json!({"error": kind, "message": message}).to_string()
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let rendered = e.kind().as_str().map(str::to_string).unwrap_or_default();
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", error_line("usage", if first.is_empty() { &rendered } else { &first }));
            return 2;
        }
    };
    match dispatch(&cli) {
        Ok(o) => {
            if cli.json {
                println!("{}", o.summary);
            } else {
                print!("{}", o.table);
            }
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", error_line("usage", &msg));
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}
