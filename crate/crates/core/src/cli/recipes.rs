//! Experiment recipes shared by the CLI and the test suites.

use serde::{Deserialize, Serialize};

use crate::adversarial::{train, GanConfig, GanMode, GanRun};
use crate::cohorts::{ablation, desk_domains, AblationConfig, AblationReport};
use crate::dataio::{gen_gaussian, gen_mixture, gen_uniform, rotate_2d, streams, MixtureComponent, RngStream, SampleSet};
use crate::error::{Error, Result};
use crate::kliep::{fit, ImportanceModel, KliepConfig};
use crate::metrics::{report, DistanceReport};

pub const TOY_N: usize = 10_000;
pub const TOY_DIM: usize = 300;

pub const DESK_SOURCE_N: usize = 3000;
pub const DESK_TARGET_N: usize = 1000;

/// Uniform `[0, 10)` source and `N(7, 0.5²)` target, 10000 × 300 each.
pub fn toy_domains(seed: u64) -> Result<(SampleSet, SampleSet)> {
    let data = RngStream::new(seed, streams::DATA);
    let source = gen_uniform(TOY_N, TOY_DIM, 0.0, 10.0, data)?.with_tag("source");
    let target = gen_gaussian(TOY_N, TOY_DIM, 7.0, 0.5, data.sub(0))?.with_tag("target");
    Ok((source, target))
}

/// Fits `ŵ = p_target / p_source` on the source samples.
pub fn fit_source_weights(
    source: &SampleSet,
    target: &SampleSet,
    cfg: &KliepConfig,
    seed: u64,
) -> Result<(ImportanceModel, Vec<f64>)> {
    let model = fit(target, source, cfg, RngStream::new(seed, streams::KLIEP))?;
    let w = model.weights(source)?;
    Ok((model, w))
}

/// Outcome of one GAN in the toy comparison: either a trained run with its
/// generated-vs-target report, or the training error that stopped it.
#[derive(Debug, Clone)]
pub enum ToyArm {
    Trained { run: Box<GanRun>, generated: SampleSet, report: DistanceReport },
    Failed(String),
}

impl ToyArm {
    pub fn report(&self) -> Option<&DistanceReport> {
        match self {
            ToyArm::Trained { report, .. } => Some(report),
            ToyArm::Failed(_) => None,
        }
    }

    /// Wasserstein-1 of the generated set, `+∞` for a failed run.
    pub fn wasserstein(&self) -> f64 {
        self.report().map_or(f64::INFINITY, |r| r.wasserstein)
    }

    pub fn energy(&self) -> f64 {
        self.report().map_or(f64::INFINITY, |r| r.energy)
    }

    fn from_result(source: &SampleSet, target: &SampleSet, r: Result<GanRun>) -> Result<Self> {
        match r {
            Ok(run) => {
                let generated = run.generate(source)?;
                let report = report(&generated, target)?;
                Ok(ToyArm::Trained {
                    run: Box::new(run),
                    generated,
                    report,
                })
            }
            Err(e @ Error::Training { .. }) => Ok(ToyArm::Failed(e.to_string())),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub seed: u64,
    pub source: SampleSet,
    pub target: SampleSet,
    pub model: ImportanceModel,
    pub weights: Vec<f64>,
    pub baseline: DistanceReport,
    pub vanilla: ToyArm,
    pub kliep: ToyArm,
}

/// Weight summary: mean, min, max and effective sample size `(Σw)²/Σw²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub effective_sample_size: f64,
}

pub fn summarize_weights(w: &[f64]) -> WeightSummary {
    let sum: f64 = w.iter().sum();
    let sq: f64 = w.iter().map(|x| x * x).sum();
    WeightSummary {
        n: w.len(),
        mean: sum / w.len() as f64,
        min: w.iter().copied().fold(f64::INFINITY, f64::min),
        max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        effective_sample_size: if sq > 0.0 { sum * sum / sq } else { 0.0 },
    }
}

/// Source and target generation, `ŵ` fit, then vanilla and KLIEP-weighted
/// GANs trained with the same seed and deployed on the full source set.
pub fn repro_toy(seed: u64, kliep: &KliepConfig, gan: &GanConfig) -> Result<ToyOutcome> {
    let (source, target) = toy_domains(seed)?;
    run_toy(source, target, seed, kliep, gan)
}

pub fn run_toy(source: SampleSet, target: SampleSet, seed: u64, kliep: &KliepConfig, gan: &GanConfig) -> Result<ToyOutcome> {
    let baseline = report(&source, &target)?;
    let (model, weights) = fit_source_weights(&source, &target, kliep, seed)?;
    let vanilla = ToyArm::from_result(&source, &target, train(&source, &target, GanMode::Vanilla, None, gan, seed))?;
    let kliep_arm = ToyArm::from_result(
        &source,
        &target,
        train(&source, &target, GanMode::Kliep, Some(&weights), gan, seed),
    )?;
    Ok(ToyOutcome {
        seed,
        source,
        target,
        model,
        weights,
        baseline,
        vanilla,
        kliep: kliep_arm,
    })
}

fn two_modes(a: [f64; 2], b: [f64; 2], std: f64) -> [MixtureComponent; 2] {
    [
        MixtureComponent {
            weight: 0.5,
            mean: a.to_vec(),
            std,
        },
        MixtureComponent {
            weight: 0.5,
            mean: b.to_vec(),
            std,
        },
    ]
}

/// Two tight modes at `(0,0)` and `(4,0)`; the target is an independent draw
/// rotated by 45°.
pub fn rotation_domains(n: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
    let comps = two_modes([0.0, 0.0], [4.0, 0.0], 0.5);
    let data = RngStream::new(seed, streams::DATA);
    let source = gen_mixture(n, &comps, data)?.with_tag("source");
    let target = rotate_2d(&gen_mixture(n, &comps, data.sub(0))?, std::f64::consts::FRAC_PI_4)?.with_tag("target");
    Ok((source, target))
}

/// Overlapping source/target mixtures with 20% of the source replaced by a
/// far cluster. Returns `(contaminated source, clean inliers, target)`; the
/// inliers are the first rows of the contaminated source.
pub fn outlier_domains(n: usize, seed: u64) -> Result<(SampleSet, SampleSet, SampleSet)> {
    let comps = two_modes([-2.0, 0.0], [2.0, 0.0], 1.0);
    let far = [MixtureComponent {
        weight: 1.0,
        mean: vec![8.0, -8.0],
        std: 0.5,
    }];
    let n_out = n / 5;
    let data = RngStream::new(seed, streams::DATA);
    let inliers = gen_mixture(n - n_out, &comps, data.sub(1))?.with_tag("inliers");
    let outliers = gen_mixture(n_out, &far, data.sub(2))?;
    let source = inliers.concat(&outliers)?.with_tag("source");
    let target = rotate_2d(&gen_mixture(n, &comps, data.sub(0))?, std::f64::consts::FRAC_PI_4)?.with_tag("target");
    Ok((source, inliers, target))
}

/// Cohort ablation on the built-in 2-D domains drawn with `seed`, weights
/// fitted with the same seed, one training run per cohort.
pub fn desk_ablation(seed: u64, kliep: &KliepConfig, cfg: &AblationConfig) -> Result<AblationReport> {
    let (source, target) = desk_domains(DESK_SOURCE_N, DESK_TARGET_N, seed)?;
    let (_, weights) = fit_source_weights(&source, &target, kliep, seed)?;
    ablation(&source, &target, &weights, cfg, &[seed])
}
