//! Distribution comparison on pooled coordinates.
//!
//! A sample set is reduced to scalars by flattening every coordinate of every
//! sample into one array. Both distances work on sorted copies: Wasserstein-1
//! integrates `|F_a − F_b|` between merged breakpoints and the energy
//! distance evaluates its mean absolute differences with prefix sums, so the
//! cost is `O(n log n)` instead of quadratic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataio::SampleSet;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub wasserstein: f64,
    pub energy: f64,
    pub n_pooled_a: usize,
    pub n_pooled_b: usize,
}

/// All `n·d` entries, row-major.
pub fn pool(set: &SampleSet) -> Vec<f64> {
    set.data().iter().copied().collect()
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(invalid!("distance needs nonempty samples"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("distance needs finite samples"));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// Mean and population standard deviation.
pub fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Empirical 1-Wasserstein distance between two scalar samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    Ok(wasserstein1_sorted(&a, &b))
}

fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        let total: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        return total / a.len() as f64;
    }
    // ∫ |F_a(x) − F_b(x)| dx over the merged breakpoints
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

/// `Σ_i Σ_j |a_i − b_j|` for sorted inputs.
fn cross_abs_sum(a: &[f64], b: &[f64]) -> f64 {
    let total_b: f64 = b.iter().sum();
    let mut below_sum = 0.0;
    let mut k = 0usize;
    let m = b.len() as f64;
    let mut acc = 0.0;
    for &x in a {
        while k < b.len() && b[k] <= x {
            below_sum += b[k];
            k += 1;
        }
        let kf = k as f64;
        acc += x * kf - below_sum + (total_b - below_sum) - x * (m - kf);
    }
    acc
}

/// Rooted energy distance `sqrt(2A − B − C)` with V-statistic means
/// `A = mean|a−b|`, `B = mean|a−a'|`, `C = mean|b−b'|`.
pub fn energy_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    Ok(energy_distance_sorted(&a, &b))
}

fn energy_distance_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let cross = cross_abs_sum(a, b) / (na * nb);
    let within_a = cross_abs_sum(a, a) / (na * na);
    let within_b = cross_abs_sum(b, b) / (nb * nb);
    (2.0 * cross - within_a - within_b).max(0.0).sqrt()
}

pub fn report_pooled(a: &[f64], b: &[f64]) -> Result<DistanceReport> {
    let sa = sorted(a)?;
    let sb = sorted(b)?;
    let (mu_a, sigma_a) = moments(a);
    let (mu_b, sigma_b) = moments(b);
    Ok(DistanceReport {
        mu_a,
        sigma_a,
        mu_b,
        sigma_b,
        wasserstein: wasserstein1_sorted(&sa, &sb),
        energy: energy_distance_sorted(&sa, &sb),
        n_pooled_a: a.len(),
        n_pooled_b: b.len(),
    })
}

pub fn report(a: &SampleSet, b: &SampleSet) -> Result<DistanceReport> {
    report_pooled(&pool(a), &pool(b))
}

/// Fixed-width histogram of several pooled series over their joint range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub series: Vec<HistogramSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSeries {
    pub label: String,
    pub counts: Vec<u64>,
    pub total: u64,
}

pub const DEFAULT_BINS: usize = 50;

pub fn histogram(series: &[(&str, &[f64])], bins: usize) -> Result<Histogram> {
    if bins == 0 || series.is_empty() || series.iter().any(|(_, v)| v.is_empty()) {
        return Err(invalid!("histogram needs bins >= 1 and nonempty series"));
    }
    let lo = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut hi = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(invalid!("histogram needs finite values"));
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let series = series
        .iter()
        .map(|(label, values)| {
            let mut counts = vec![0u64; bins];
            for &v in values.iter() {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            HistogramSeries {
                label: label.to_string(),
                counts,
                total: values.len() as u64,
            }
        })
        .collect();
    Ok(Histogram { lo, hi, bins, series })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b"];

impl Histogram {
    pub fn edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..=self.bins).map(|k| self.lo + w * k as f64).collect()
    }

    /// Overlaid step outlines of the normalized densities.
    pub fn to_svg(&self, title: &str) -> String {
        let (width, height, margin) = (720.0, 420.0, 48.0);
        let plot_w = width - 2.0 * margin;
        let plot_h = height - 2.0 * margin;
        let bin_w = (self.hi - self.lo) / self.bins as f64;
        let density = |s: &HistogramSeries, k: usize| s.counts[k] as f64 / (s.total as f64 * bin_w);
        let peak = self
            .series
            .iter()
            .flat_map(|s| (0..self.bins).map(move |k| density(s, k)))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let px = |k: usize| margin + plot_w * k as f64 / self.bins as f64;
        let py = |d: f64| margin + plot_h * (1.0 - d / peak);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            width / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{margin}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = margin + plot_h,
            x2 = margin + plot_w
        );
        for k in (0..=self.bins).step_by((self.bins / 5).max(1)) {
            let value = self.lo + bin_w * k as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.2}</text>"#,
                px(k),
                margin + plot_h + 16.0,
                value
            );
        }
        for (idx, s) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let mut path = format!("M{:.2},{:.2}", px(0), py(0.0));
            for k in 0..self.bins {
                let y = py(density(s, k));
                let _ = write!(path, " L{:.2},{:.2} L{:.2},{:.2}", px(k), y, px(k + 1), y);
            }
            let _ = write!(path, " L{:.2},{:.2}", px(self.bins), py(0.0));
            let _ = writeln!(
                svg,
                r#"<path d="{path}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="1.5"/>"#
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
                margin + plot_w - 150.0,
                margin + 16.0 * (idx as f64 + 1.0),
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Polyline chart of one or more series against their index (loss curves).
pub fn line_chart_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let (width, height, margin) = (720.0, 360.0, 48.0);
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let finite = series.iter().flat_map(|(_, v)| v.iter()).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (idx, (label, values)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| {
                format!(
                    "{:.2},{:.2}",
                    margin + plot_w * i as f64 / (len - 1) as f64,
                    margin + plot_h * (1.0 - (v - lo) / (hi - lo))
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            margin + plot_w - 150.0,
            margin + 16.0 * (idx as f64 + 1.0),
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gen_gaussian, gen_uniform, RngStream};
    use ndarray::array;
    use proptest::prelude::*;

    /// Quadratic reference for the energy distance.
    fn energy_brute(a: &[f64], b: &[f64]) -> f64 {
        let mean_abs = |x: &[f64], y: &[f64]| {
            x.iter().flat_map(|p| y.iter().map(move |q| (p - q).abs())).sum::<f64>()
                / (x.len() * y.len()) as f64
        };
        (2.0 * mean_abs(a, b) - mean_abs(a, a) - mean_abs(b, b)).max(0.0).sqrt()
    }

    /// Reference W1 via the quantile functions on a fine grid of levels.
    fn wasserstein_quantile(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        // exact: integrate over the merged set of CDF jump levels
        let mut levels: Vec<f64> = (1..=a.len())
            .map(|i| i as f64 / a.len() as f64)
            .chain((1..=b.len()).map(|j| j as f64 / b.len() as f64))
            .collect();
        levels.sort_by(f64::total_cmp);
        let q = |v: &[f64], t: f64| {
            let idx = ((t * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
            v[idx]
        };
        let mut prev = 0.0;
        let mut total = 0.0;
        for &t in &levels {
            if t > prev {
                let mid = 0.5 * (prev + t);
                total += (q(&a, mid) - q(&b, mid)).abs() * (t - prev);
                prev = t;
            }
        }
        total
    }

    #[test]
    fn pool_is_row_major() {
        let s = SampleSet::new(array![[1.0, 2.0], [3.0, 4.0]], "x").unwrap();
        assert_eq!(pool(&s), vec![1.0, 2.0, 3.0, 4.0]);
        let col = SampleSet::new(array![[5.0], [-1.0], [2.0]], "x").unwrap();
        assert_eq!(pool(&col), vec![5.0, -1.0, 2.0]);
    }

    #[test]
    fn point_masses() {
        assert_eq!(wasserstein1(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((energy_distance(&[0.0], &[1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let a = [0.3, -1.0, 2.5, 2.5];
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(wasserstein1(&[], &[1.0]).is_err());
        assert!(energy_distance(&[1.0], &[]).is_err());
    }

    #[test]
    fn unequal_lengths() {
        // {0,1} vs {0.5}: |F_a - F_b| = 1/2 on [0,1]
        assert!((wasserstein1(&[0.0, 1.0], &[0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((wasserstein1(&[0.0, 0.0, 3.0], &[1.0, 2.0]).unwrap() - wasserstein_quantile(&[0.0, 0.0, 3.0], &[1.0, 2.0])).abs() < 1e-12);
    }

    #[test]
    fn toy_report_matches_table() {
        let s = gen_uniform(1000, 300, 0.0, 10.0, RngStream::new(1, 0)).unwrap();
        let t = gen_gaussian(1000, 300, 7.0, 0.5, RngStream::new(2, 0)).unwrap();
        let r = report(&s, &t).unwrap();
        assert!((r.mu_a - 5.0).abs() < 0.02);
        assert!((r.mu_b - 7.0).abs() < 0.01);
        assert!((r.wasserstein - 2.56).abs() < 0.05, "w {}", r.wasserstein);
        assert!((r.energy - 1.39).abs() < 0.03, "e {}", r.energy);
        let rev = report(&t, &s).unwrap();
        assert_eq!(rev.wasserstein, r.wasserstein);
        assert!((rev.energy - r.energy).abs() < 1e-12);
        let same = report(&s, &s).unwrap();
        assert_eq!((same.wasserstein, same.energy), (0.0, 0.0));
        assert_eq!((same.mu_a, same.sigma_a), (same.mu_b, same.sigma_b));
    }

    #[test]
    fn histogram_counts_everything() {
        let a = [0.0, 0.1, 0.9, 1.0];
        let b = [0.5];
        let h = histogram(&[("a", &a), ("b", &b)], 2).unwrap();
        assert_eq!(h.series[0].counts, vec![2, 2]);
        assert_eq!(h.series[1].counts, vec![0, 1]);
        assert_eq!(h.edges(), vec![0.0, 0.5, 1.0]);
        let svg = h.to_svg("t");
        assert!(svg.starts_with("<svg") && svg.contains("<path"));
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-50.0f64..50.0, 1..40)
    }

    proptest! {
        #[test]
        fn energy_matches_brute_force(a in vec_strategy(), b in vec_strategy()) {
            let fast = energy_distance(&a, &b).unwrap();
            let slow = energy_brute(&a, &b);
            prop_assert!((fast - slow).abs() < 1e-6 * (1.0 + slow), "{fast} vs {slow}");
        }

        #[test]
        fn wasserstein_matches_quantile_oracle(a in vec_strategy(), b in vec_strategy()) {
            let fast = wasserstein1(&a, &b).unwrap();
            let slow = wasserstein_quantile(&a, &b);
            prop_assert!((fast - slow).abs() < 1e-9 * (1.0 + slow), "{fast} vs {slow}");
        }

        #[test]
        fn symmetric_and_nonnegative(a in vec_strategy(), b in vec_strategy()) {
            let w = wasserstein1(&a, &b).unwrap();
            prop_assert!(w >= 0.0);
            prop_assert!((w - wasserstein1(&b, &a).unwrap()).abs() < 1e-12 * (1.0 + w));
            let e = energy_distance(&a, &b).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert!((e - energy_distance(&b, &a).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn triangle_inequality(a in vec_strategy(), b in vec_strategy(), c in vec_strategy()) {
            let ab = wasserstein1(&a, &b).unwrap();
            let bc = wasserstein1(&b, &c).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn common_shift_leaves_wasserstein(a in vec_strategy(), b in vec_strategy(), k in -64i32..64) {
            // dyadic shift of dyadic-rounded samples keeps every difference exact
            let round = |v: &Vec<f64>| v.iter().map(|x| (x * 1024.0).round() / 1024.0).collect::<Vec<_>>();
            let (a, b) = (round(&a), round(&b));
            let c = k as f64 * 0.25;
            let shifted_a: Vec<f64> = a.iter().map(|x| x + c).collect();
            let shifted_b: Vec<f64> = b.iter().map(|x| x + c).collect();
            prop_assert_eq!(wasserstein1(&shifted_a, &shifted_b).unwrap(), wasserstein1(&a, &b).unwrap());
        }
    }

    #[test]
    fn subsample_stability() {
        let s = gen_uniform(1000, 300, 0.0, 10.0, RngStream::new(1, 0)).unwrap();
        let t = gen_gaussian(1000, 300, 7.0, 0.5, RngStream::new(2, 0)).unwrap();
        let full = report(&s, &t).unwrap();
        let idx = RngStream::new(3, 0).sampler().choose(1000, 100);
        let sub = report(&s.select(&idx).unwrap(), &t.select(&idx).unwrap()).unwrap();
        assert!((sub.wasserstein - full.wasserstein).abs() < 0.05 * full.wasserstein);
        assert!((sub.energy - full.energy).abs() < 0.05 * full.energy);
    }
}
