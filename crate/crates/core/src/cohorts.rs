//! Importance cohorts: split a source set into equal-size groups ranked by
//! `ŵ`, train one model per group and compare how close each gets to the
//! target.

use serde::{Deserialize, Serialize};

use crate::adversarial::{train, GanConfig, GanMode};
use crate::dataio::{gen_gaussian, gen_mixture, MixtureComponent, RngStream, SampleSet};
use crate::error::{invalid, Result};
use crate::metrics::{report, DistanceReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSplit {
    /// Cohort index of every source sample, 0 = lowest weights.
    pub assignment: Vec<usize>,
    /// Largest weight in each cohort but the last.
    pub thresholds: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl CohortSplit {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Sample indices of cohort `c`, in original order.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == c)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `low`/`medium`/`high` for three cohorts, `cohort<i>` otherwise.
pub fn cohort_label(c: usize, k: usize) -> String {
    match (k, c) {
        (3, 0) => "low".into(),
        (3, 1) => "medium".into(),
        (3, 2) => "high".into(),
        _ => format!("cohort{c}"),
    }
}

/// Stable sort by `(weight, index)`, then contiguous blocks; the first
/// `n mod k` blocks get one extra sample.
pub fn split(weights: &[f64], k: usize) -> Result<CohortSplit> {
    let n = weights.len();
    if k < 2 {
        return Err(invalid!("need at least 2 cohorts, got {k}"));
    }
    if k > n {
        return Err(invalid!("cannot split {n} samples into {k} cohorts"));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(invalid!("weights must be finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    let sizes: Vec<usize> = (0..k).map(|c| n / k + usize::from(c < n % k)).collect();
    let mut assignment = vec![0; n];
    let mut thresholds = Vec::with_capacity(k - 1);
    let mut start = 0;
    for (c, &size) in sizes.iter().enumerate() {
        for &i in &order[start..start + size] {
            assignment[i] = c;
        }
        start += size;
        if c + 1 < k {
            thresholds.push(weights[order[start - 1]]);
        }
    }
    Ok(CohortSplit {
        assignment,
        thresholds,
        sizes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalOn {
    /// Every cohort model translates the full source set.
    Full,
    /// Each model translates only its own cohort.
    Cohort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub k: usize,
    pub mode: GanMode,
    pub eval_on: EvalOn,
    pub gan: GanConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            k: 3,
            mode: GanMode::Kliep,
            eval_on: EvalOn::Full,
            gan: GanConfig::small(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortResult {
    pub cohort: String,
    pub seed: u64,
    pub report: DistanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub thresholds: Vec<f64>,
    pub cohort_sizes: Vec<usize>,
    pub mean_weight: Vec<f64>,
    pub per_cohort: Vec<CohortResult>,
}

impl AblationReport {
    pub fn result(&self, cohort: &str, seed: u64) -> Option<&CohortResult> {
        self.per_cohort.iter().find(|r| r.cohort == cohort && r.seed == seed)
    }
}

/// Cohort weights rescaled to mean one so each cohort run satisfies the
/// importance invariant; relative weights inside the cohort are unchanged.
fn renormalized(weights: &[f64], members: &[usize]) -> Result<Vec<f64>> {
    let w: Vec<f64> = members.iter().map(|&i| weights[i]).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    if !(mean > 0.0) {
        return Err(invalid!("cohort has zero total weight"));
    }
    let mut w: Vec<f64> = w.into_iter().map(|x| x / mean).collect();
    // absorb the last rounding error so the mean is 1 to within 1e-9
    let drift = w.iter().sum::<f64>() / w.len() as f64 - 1.0;
    if drift.abs() > 1e-12 {
        w.iter_mut().for_each(|x| *x /= 1.0 + drift);
    }
    Ok(w)
}

/// Splits `source` by `weights`, trains one model per cohort and seed, and
/// reports generated-vs-target distances. Runs fan out over threads and are
/// merged in (seed, cohort) order.
pub fn ablation(
    source: &SampleSet,
    target: &SampleSet,
    weights: &[f64],
    cfg: &AblationConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    if weights.len() != source.n() {
        return Err(invalid!("{} weights for {} source samples", weights.len(), source.n()));
    }
    let cut = split(weights, cfg.k)?;
    let cohorts: Vec<(SampleSet, Vec<f64>)> = (0..cfg.k)
        .map(|c| {
            let m = cut.members(c);
            Ok((source.select(&m)?, renormalized(weights, &m)?))
        })
        .collect::<Result<_>>()?;
    let mean_weight = (0..cfg.k)
        .map(|c| {
            let m = cut.members(c);
            m.iter().map(|&i| weights[i]).sum::<f64>() / m.len() as f64
        })
        .collect();

    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| (0..cfg.k).map(move |c| (s, c))).collect();
    let results: Vec<Result<CohortResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(seed, c)| {
                let (set, w) = &cohorts[c];
                scope.spawn(move || {
                    let imp = (cfg.mode == GanMode::Kliep).then_some(w.as_slice());
                    let run = train(set, target, cfg.mode, imp, &cfg.gan, seed)?;
                    let evaluated = match cfg.eval_on {
                        EvalOn::Full => run.generate(source)?,
                        EvalOn::Cohort => run.generate(set)?,
                    };
                    Ok(CohortResult {
                        cohort: cohort_label(c, cfg.k),
                        seed,
                        report: report(&evaluated, target)?,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("cohort worker panicked")).collect()
    });
    Ok(AblationReport {
        thresholds: cut.thresholds,
        cohort_sizes: cut.sizes,
        mean_weight,
        per_cohort: results.into_iter().collect::<Result<_>>()?,
    })
}

/// The desk-scale ablation domains: a broad three-mode source and a target
/// concentrated on one of its modes.
pub fn desk_domains(n_source: usize, n_target: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
    let comps = [
        MixtureComponent {
            weight: 1.0 / 3.0,
            mean: vec![-4.0, 0.0],
            std: 1.0,
        },
        MixtureComponent {
            weight: 1.0 / 3.0,
            mean: vec![0.0, 0.0],
            std: 1.0,
        },
        MixtureComponent {
            weight: 1.0 / 3.0,
            mean: vec![4.0, 0.0],
            std: 1.0,
        },
    ];
    let data = RngStream::new(seed, crate::dataio::streams::DATA);
    let source = gen_mixture(n_source, &comps, data)?.with_tag("source");
    let target = gen_gaussian(n_target, 2, 0.0, 1.0, data.sub(0))?;
    let shifted = target.data().mapv(|v| v * 0.5) + &ndarray::array![4.0, 0.0];
    Ok((source, SampleSet::new(shifted, "target")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_tertiles() {
        let s = split(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!(s.assignment, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(s.thresholds, vec![2.0, 4.0]);
        let s = split(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], 3).unwrap();
        assert_eq!(s.members(0), vec![4, 5]);
        assert_eq!(s.members(2), vec![0, 1]);
    }

    #[test]
    fn ties_follow_index_order() {
        let s = split(&[1.0; 6], 3).unwrap();
        assert_eq!(s.assignment, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(s.sizes, vec![2, 2, 2]);
    }

    #[test]
    fn large_split_is_even() {
        let w: Vec<f64> = (0..24966).map(|i| ((i * 7919) % 1000) as f64).collect();
        assert_eq!(split(&w, 3).unwrap().sizes, vec![8322, 8322, 8322]);
    }

    #[test]
    fn extra_samples_go_to_low_cohorts() {
        assert_eq!(split(&[0.0; 8], 3).unwrap().sizes, vec![3, 3, 2]);
        assert_eq!(split(&[0.0; 7], 3).unwrap().sizes, vec![3, 2, 2]);
    }

    #[test]
    fn split_errors() {
        assert!(split(&[1.0, 2.0], 3).is_err());
        assert!(split(&[1.0, 2.0], 1).is_err());
        assert!(split(&[1.0, f64::NAN, 2.0], 3).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(cohort_label(0, 3), "low");
        assert_eq!(cohort_label(2, 3), "high");
        assert_eq!(cohort_label(1, 4), "cohort1");
    }

    #[test]
    fn renormalized_cohort_weights() {
        let w = [0.1, 0.2, 5.0, 7.0, 0.3];
        let r = renormalized(&w, &[2, 3]).unwrap();
        assert!((r.iter().sum::<f64>() / 2.0 - 1.0).abs() < 1e-12);
        assert!((r[1] / r[0] - 7.0 / 5.0).abs() < 1e-12);
        assert!(renormalized(&[0.0, 0.0], &[0, 1]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn partition_properties(seed in 0u64..300, n in 3usize..60, k in 2usize..6) {
            proptest::prop_assume!(k <= n);
            let mut s = RngStream::new(seed, 0).sampler();
            // coarse values so ties are common
            let w: Vec<f64> = (0..n).map(|_| (s.uniform() * 5.0).floor()).collect();
            let cut = split(&w, k).unwrap();
            proptest::prop_assert_eq!(cut.sizes.iter().sum::<usize>(), n);
            let (lo, hi) = (cut.sizes.iter().min().unwrap(), cut.sizes.iter().max().unwrap());
            proptest::prop_assert!(hi - lo <= 1);
            let mut prev_max = f64::NEG_INFINITY;
            let mut prev_mean = f64::NEG_INFINITY;
            for c in 0..k {
                let m = cut.members(c);
                proptest::prop_assert_eq!(m.len(), cut.sizes[c]);
                let vals: Vec<f64> = m.iter().map(|&i| w[i]).collect();
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                proptest::prop_assert!(min >= prev_max);
                proptest::prop_assert!(mean >= prev_mean);
                prev_max = max;
                prev_mean = mean;
            }
        }
    }

    #[test]
    fn ablation_report_shape() {
        let (s, t) = desk_domains(90, 60, 1).unwrap();
        let w: Vec<f64> = (0..90).map(|i| 0.5 + (i % 3) as f64 * 0.5).collect();
        let cfg = AblationConfig {
            gan: GanConfig {
                epochs: 1,
                batch_size: 30,
                ..GanConfig::small()
            },
            ..AblationConfig::default()
        };
        let r = ablation(&s, &t, &w, &cfg, &[4, 5]).unwrap();
        assert_eq!(r.cohort_sizes, vec![30, 30, 30]);
        assert_eq!(r.per_cohort.len(), 6);
        assert_eq!(r.per_cohort[0].cohort, "low");
        assert_eq!(r.per_cohort[3].seed, 5);
        assert!(r.mean_weight[0] <= r.mean_weight[1] && r.mean_weight[1] <= r.mean_weight[2]);
        let again = ablation(&s, &t, &w, &cfg, &[4, 5]).unwrap();
        assert_eq!(r, again);
        assert!(r.result("high", 4).is_some());
    }
}
