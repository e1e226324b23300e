//! Gaussian RBF basis functions, `exp(-‖x − c‖² / (2σ²))`.
//!
//! Squared distances accumulate coordinates strictly left to right so design
//! matrices are bit-reproducible.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::dataio::{RngStream, SampleSet};
use crate::error::{invalid, Result};

/// Kernel centers (one per row) sharing a common width.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    centers: Array2<f64>,
    sigma: f64,
}

impl KernelBasis {
    pub fn new(centers: Array2<f64>, sigma: f64) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(invalid!("kernel basis needs at least one center"));
        }
        check_sigma(sigma)?;
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("kernel centers must be finite"));
        }
        Ok(Self { centers, sigma })
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.centers.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid!("kernel width must be positive and finite, got {sigma}"))
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(c) {
        let t = a - b;
        acc += t * t;
    }
    acc
}

#[inline]
fn rbf_from_sq(sq: f64, sigma: f64) -> f64 {
    (-sq / (2.0 * sigma * sigma)).exp()
}

pub fn rbf(x: ArrayView1<'_, f64>, c: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    if x.len() != c.len() {
        return Err(invalid!("dimension mismatch: {} vs {}", x.len(), c.len()));
    }
    check_sigma(sigma)?;
    let sq = x.iter().zip(c.iter()).fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
    Ok(rbf_from_sq(sq, sigma))
}

/// `n × b` matrix of squared distances from each sample to each center.
pub fn squared_distances(samples: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if samples.ncols() != centers.ncols() {
        return Err(invalid!(
            "dimension mismatch: samples have d={}, centers have d={}",
            samples.ncols(),
            centers.ncols()
        ));
    }
    let samples = samples.as_standard_layout();
    let centers = centers.as_standard_layout();
    let mut out = Array2::zeros((samples.nrows(), centers.nrows()));
    for (x, mut out_row) in samples.rows().into_iter().zip(out.rows_mut()) {
        let x = x.as_slice().expect("standard layout");
        for (c, o) in centers.rows().into_iter().zip(out_row.iter_mut()) {
            *o = sq_dist(x, c.as_slice().expect("standard layout"));
        }
    }
    Ok(out)
}

/// Elementwise RBF of a squared-distance matrix.
pub fn kernel_from_sq(sq: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    check_sigma(sigma)?;
    Ok(sq.mapv(|s| rbf_from_sq(s, sigma)))
}

/// `A[j][l] = rbf(x_j, c_l, σ)`.
pub fn design_matrix(samples: &SampleSet, basis: &KernelBasis) -> Result<Array2<f64>> {
    design_matrix_view(samples.view(), basis)
}

pub fn design_matrix_view(samples: ArrayView2<'_, f64>, basis: &KernelBasis) -> Result<Array2<f64>> {
    let sq = squared_distances(samples, basis.centers.view())?;
    kernel_from_sq(&sq, basis.sigma)
}

/// Median Euclidean distance over all distinct pairs of the rows of `points`.
pub fn median_pairwise_distance(points: ArrayView2<'_, f64>) -> f64 {
    let points = points.as_standard_layout();
    let n = points.nrows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let xi = points.row(i);
        let xi = xi.as_slice().expect("standard layout");
        for j in (i + 1)..n {
            dists.push(sq_dist(xi, points.row(j).as_slice().expect("standard layout")).sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median heuristic on the union of two sets, each subsampled to at most
/// `max_per_set` rows.
pub fn median_heuristic(a: &SampleSet, b: &SampleSet, max_per_set: usize, rng: RngStream) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(invalid!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    let mut s = rng.sampler();
    let mut ia = s.choose(a.n(), max_per_set);
    let mut ib = s.choose(b.n(), max_per_set);
    ia.sort_unstable();
    ib.sort_unstable();
    let pooled = a.select(&ia)?.concat(&b.select(&ib)?)?;
    Ok(median_pairwise_distance(pooled.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    #[test]
    fn rbf_examples() {
        let x = array![1.0, -2.0, 0.5];
        assert_eq!(rbf(x.view(), x.view(), 0.7).unwrap(), 1.0);

        // distance sigma * sqrt(2) gives exp(-1)
        let sigma = 1.3;
        let c = array![0.0, 0.0];
        let p = array![sigma * 2f64.sqrt(), 0.0];
        let v = rbf(p.view(), c.view(), sigma).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);

        let v = rbf(array![0.0, 0.0].view(), array![3.0, 4.0].view(), 5.0).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn rbf_errors() {
        assert!(rbf(array![0.0].view(), array![0.0, 1.0].view(), 1.0).is_err());
        assert!(rbf(array![0.0].view(), array![0.0].view(), 0.0).is_err());
    }

    #[test]
    fn design_matrix_diagonal_is_one() {
        let pts = array![[0.0, 1.0], [2.0, -1.0], [5.0, 5.0]];
        let set = SampleSet::new(pts.clone(), "s").unwrap();
        let basis = KernelBasis::new(pts, 0.9).unwrap();
        let a = design_matrix(&set, &basis).unwrap();
        for i in 0..3 {
            assert_eq!(a[[i, i]], 1.0);
        }
        assert!(a.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn one_by_one_design_matrix() {
        let sigma = 0.25;
        let set = SampleSet::new(array![[sigma * 2f64.sqrt()]], "s").unwrap();
        let basis = KernelBasis::new(array![[0.0]], sigma).unwrap();
        let a = design_matrix(&set, &basis).unwrap();
        assert_eq!(a.dim(), (1, 1));
        assert!((a[[0, 0]] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn design_matrix_dimension_mismatch() {
        let set = SampleSet::new(array![[0.0, 1.0]], "s").unwrap();
        let basis = KernelBasis::new(array![[0.0]], 1.0).unwrap();
        assert!(design_matrix(&set, &basis).is_err());
    }

    #[test]
    fn median_of_pairs() {
        // pairwise distances 1, 2, 3
        let pts = array![[0.0], [1.0], [3.0]];
        assert_eq!(median_pairwise_distance(pts.view()), 2.0);
        // distances 1,2,3,1,2,1 -> sorted 1,1,1,2,2,3 -> 1.5
        let pts = array![[0.0], [1.0], [2.0], [3.0]];
        assert_eq!(median_pairwise_distance(pts.view()), 1.5);
    }

    proptest::proptest! {
        #[test]
        fn rows_follow_sample_permutation(seed in 0u64..500) {
            let mut s = RngStream::new(seed, 0).sampler();
            let data = Array2::from_shape_simple_fn((7, 3), || s.standard_normal());
            let centers = Array2::from_shape_simple_fn((4, 3), || s.standard_normal());
            let mut perm: Vec<usize> = (0..7).collect();
            s.shuffle(&mut perm);
            let basis = KernelBasis::new(centers, 1.1).unwrap();
            let set = SampleSet::new(data, "x").unwrap();
            let a = design_matrix(&set, &basis).unwrap();
            let ap = design_matrix(&set.select(&perm).unwrap(), &basis).unwrap();
            proptest::prop_assert_eq!(ap, a.select(Axis(0), &perm));
        }

        #[test]
        fn rbf_monotone(r1 in 0.01f64..5.0, dr in 0.01f64..5.0, s1 in 0.1f64..3.0, ds in 0.01f64..3.0) {
            let c = array![0.0, 0.0];
            let near = array![r1, 0.0];
            let far = array![r1 + dr, 0.0];
            let k_near = rbf(near.view(), c.view(), s1).unwrap();
            let k_far = rbf(far.view(), c.view(), s1).unwrap();
            proptest::prop_assert!(k_far < k_near || k_near == 0.0);
            let wider = rbf(near.view(), c.view(), s1 + ds).unwrap();
            proptest::prop_assert!(wider > k_near);
        }
    }
}
