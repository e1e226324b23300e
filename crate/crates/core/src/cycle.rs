//! Importance-weighted bidirectional adversarial training with a
//! cycle-consistency term.
//!
//! `g_r` translates source to target and is judged by `d_r`; `g_s` goes the
//! other way and is judged by `d_s`. Source samples carry `ŵ`, target samples
//! carry `ψ̂`:
//!
//! ```text
//! L_adv = E[ψ̂(x_r) log d_r(x_r)] + E[ŵ(x_s) log(1 − d_r(g_r(x_s)))]
//!       + E[ŵ(x_s) log d_s(x_s)] + E[ψ̂(x_r) log(1 − d_s(g_s(x_r)))]
//! L_cyc = E[ψ̂(x_r) ‖g_r(g_s(x_r)) − x_r‖₁] + E[ŵ(x_s) ‖g_s(g_r(x_s)) − x_s‖₁]
//! ```
//!
//! Generators minimize their adversarial terms plus `lambda_cyc · L_cyc`.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    at_batch, check_importance, discriminator_step, epoch_batches, generator_adversarial_grad, weighted_disc_loss_grad,
    GanConfig,
};
use crate::dataio::{streams, RngStream, SampleSet};
use crate::error::{invalid, Error, Result};
use crate::neural::{Gradients, MlpParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleConfig {
    #[serde(flatten)]
    pub gan: GanConfig,
    pub lambda_cyc: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            gan: GanConfig {
                epochs: 200,
                batch_size: 50,
                gen_lr: 1e-3,
                disc_lr: 4e-3,
                ..GanConfig::small()
            },
            lambda_cyc: 10.0,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cyc >= 0.0 && self.lambda_cyc.is_finite()) {
            return Err(invalid!("lambda_cyc must be finite and nonnegative, got {}", self.lambda_cyc));
        }
        self.gan.validate()
    }
}

#[derive(Debug, Clone)]
pub struct CycleSystem {
    pub g_r: MlpParams,
    pub g_s: MlpParams,
    pub d_r: MlpParams,
    pub d_s: MlpParams,
    pub w_source: Vec<f64>,
    pub w_target: Vec<f64>,
    pub lambda_cyc: f64,
}

impl CycleSystem {
    pub fn new(
        g_r: MlpParams,
        g_s: MlpParams,
        d_r: MlpParams,
        d_s: MlpParams,
        w_source: Vec<f64>,
        w_target: Vec<f64>,
        lambda_cyc: f64,
    ) -> Result<Self> {
        let d = g_r.input_dim();
        let dims_ok = g_r.output_dim() == d
            && g_s.input_dim() == d
            && g_s.output_dim() == d
            && d_r.input_dim() == d
            && d_s.input_dim() == d
            && d_r.output_dim() == 1
            && d_s.output_dim() == 1;
        if !dims_ok {
            return Err(invalid!("networks do not share a common dimension"));
        }
        check_importance(&w_source, w_source.len())?;
        check_importance(&w_target, w_target.len())?;
        if !(lambda_cyc >= 0.0 && lambda_cyc.is_finite()) {
            return Err(invalid!("lambda_cyc must be finite and nonnegative"));
        }
        Ok(Self {
            g_r,
            g_s,
            d_r,
            d_s,
            w_source,
            w_target,
            lambda_cyc,
        })
    }

    pub fn dim(&self) -> usize {
        self.g_r.input_dim()
    }
}

/// A paired minibatch: source rows with their `ŵ`, target rows with their `ψ̂`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub xs: ArrayView2<'a, f64>,
    pub ws: &'a [f64],
    pub xr: ArrayView2<'a, f64>,
    pub wr: &'a [f64],
}

impl Batch<'_> {
    fn check(&self, d: usize) -> Result<()> {
        if self.xs.nrows() == 0 || self.xr.nrows() == 0 {
            return Err(invalid!("empty batch"));
        }
        if self.xs.ncols() != d || self.xr.ncols() != d {
            return Err(invalid!(
                "batch dimensions {}/{} do not match the system dimension {d}",
                self.xs.ncols(),
                self.xr.ncols()
            ));
        }
        if self.ws.len() != self.xs.nrows() || self.wr.len() != self.xr.nrows() {
            return Err(invalid!("weights are not paired with batch rows"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleLoss {
    /// `E[ŵ ‖g_s(g_r(x_s)) − x_s‖₁]`
    pub source_term: f64,
    /// `E[ψ̂ ‖g_r(g_s(x_r)) − x_r‖₁]`
    pub target_term: f64,
}

impl CycleLoss {
    pub fn total(&self) -> f64 {
        self.source_term + self.target_term
    }
}

fn weighted_l1(rec: &Array2<f64>, x: ArrayView2<'_, f64>, w: &[f64]) -> f64 {
    let m = x.nrows() as f64;
    rec.rows()
        .into_iter()
        .zip(x.rows())
        .zip(w)
        .map(|((r, x), &w)| w * r.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum::<f64>()
        / m
}

/// Gradient of `scale · weighted_l1` with respect to the reconstruction.
fn weighted_l1_grad(rec: &Array2<f64>, x: ArrayView2<'_, f64>, w: &[f64], scale: f64) -> Array2<f64> {
    let m = x.nrows() as f64;
    let mut g = rec - &x;
    for (mut row, &w) in g.rows_mut().into_iter().zip(w) {
        let c = scale * w / m;
        row.mapv_inplace(|v| if v > 0.0 { c } else if v < 0.0 { -c } else { 0.0 });
    }
    g
}

pub fn cycle_loss(sys: &CycleSystem, batch: Batch<'_>) -> Result<CycleLoss> {
    batch.check(sys.dim())?;
    let rec_s = sys.g_s.predict(sys.g_r.predict(batch.xs)?.view())?;
    let rec_r = sys.g_r.predict(sys.g_s.predict(batch.xr)?.view())?;
    Ok(CycleLoss {
        source_term: weighted_l1(&rec_s, batch.xs, batch.ws),
        target_term: weighted_l1(&rec_r, batch.xr, batch.wr),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub adv_r: f64,
    pub adv_s: f64,
    pub cycle: CycleLoss,
    pub lambda_cyc: f64,
}

impl GeneratorLoss {
    /// `adv_r + adv_s + lambda_cyc · cycle`, the quantity both generators descend.
    pub fn total(&self) -> f64 {
        self.adv_r + self.adv_s + self.lambda_cyc * self.cycle.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullLoss {
    pub disc_r: f64,
    pub disc_s: f64,
    pub generator: GeneratorLoss,
}

fn col(p: &Array2<f64>) -> Vec<f64> {
    p.column(0).to_vec()
}

/// Every term of the objective on one batch, without updating anything.
pub fn full_loss(sys: &CycleSystem, batch: Batch<'_>, saturating: bool) -> Result<FullLoss> {
    batch.check(sys.dim())?;
    let fake_r = sys.g_r.predict(batch.xs)?;
    let fake_s = sys.g_s.predict(batch.xr)?;
    let (disc_r, _, _) = weighted_disc_loss_grad(
        &col(&sys.d_r.predict(batch.xr)?),
        batch.wr,
        &col(&sys.d_r.predict(fake_r.view())?),
        batch.ws,
    )?;
    let (disc_s, _, _) = weighted_disc_loss_grad(
        &col(&sys.d_s.predict(batch.xs)?),
        batch.ws,
        &col(&sys.d_s.predict(fake_s.view())?),
        batch.wr,
    )?;
    let (adv_r, _) = generator_adversarial_grad(&sys.d_r, fake_r.view(), batch.ws, saturating)?;
    let (adv_s, _) = generator_adversarial_grad(&sys.d_s, fake_s.view(), batch.wr, saturating)?;
    Ok(FullLoss {
        disc_r,
        disc_s,
        generator: GeneratorLoss {
            adv_r,
            adv_s,
            cycle: cycle_loss(sys, batch)?,
            lambda_cyc: sys.lambda_cyc,
        },
    })
}

/// Gradients of [`GeneratorLoss::total`] with respect to `g_r` and `g_s`,
/// both taken at the current parameters. The cycle term is skipped entirely
/// when `lambda_cyc` is zero.
pub fn generator_gradients(
    sys: &CycleSystem,
    batch: Batch<'_>,
    saturating: bool,
) -> Result<(GeneratorLoss, Gradients, Gradients)> {
    batch.check(sys.dim())?;
    let (fake_r, cache_r) = sys.g_r.forward(batch.xs)?;
    let (fake_s, cache_s) = sys.g_s.forward(batch.xr)?;
    let (adv_r, mut up_r) = generator_adversarial_grad(&sys.d_r, fake_r.view(), batch.ws, saturating)?;
    let (adv_s, mut up_s) = generator_adversarial_grad(&sys.d_s, fake_s.view(), batch.wr, saturating)?;
    let mut loss = GeneratorLoss {
        adv_r,
        adv_s,
        cycle: CycleLoss {
            source_term: 0.0,
            target_term: 0.0,
        },
        lambda_cyc: sys.lambda_cyc,
    };

    if sys.lambda_cyc == 0.0 {
        let gr = sys.g_r.backward(&cache_r, up_r.view())?;
        let gs = sys.g_s.backward(&cache_s, up_s.view())?;
        return Ok((loss, gr, gs));
    }

    let lambda = sys.lambda_cyc;
    // source -> target -> source
    let (rec_s, cache_rec_s) = sys.g_s.forward(fake_r.view())?;
    let g_rec_s = weighted_l1_grad(&rec_s, batch.xs, batch.ws, lambda);
    let via_s = sys.g_s.backward(&cache_rec_s, g_rec_s.view())?;
    // target -> source -> target
    let (rec_r, cache_rec_r) = sys.g_r.forward(fake_s.view())?;
    let g_rec_r = weighted_l1_grad(&rec_r, batch.xr, batch.wr, lambda);
    let via_r = sys.g_r.backward(&cache_rec_r, g_rec_r.view())?;

    loss.cycle = CycleLoss {
        source_term: weighted_l1(&rec_s, batch.xs, batch.ws),
        target_term: weighted_l1(&rec_r, batch.xr, batch.wr),
    };
    Zip::from(&mut up_r).and(&via_s.input).for_each(|u, &v| *u += v);
    Zip::from(&mut up_s).and(&via_r.input).for_each(|u, &v| *u += v);

    let mut gr = sys.g_r.backward(&cache_r, up_r.view())?;
    gr.accumulate(&via_r);
    let mut gs = sys.g_s.backward(&cache_s, up_s.view())?;
    gs.accumulate(&via_s);
    Ok((loss, gr, gs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEpochRecord {
    pub epoch: usize,
    pub disc_r: f64,
    pub disc_s: f64,
    pub adv_r: f64,
    pub adv_s: f64,
    pub cycle: f64,
    pub generator_total: f64,
}

#[derive(Debug, Clone)]
pub struct CycleRun {
    pub seed: u64,
    pub config: CycleConfig,
    pub system: CycleSystem,
    pub history: Vec<CycleEpochRecord>,
}

impl CycleRun {
    pub fn translate_source(&self, source: &SampleSet) -> Result<SampleSet> {
        crate::adversarial::translate(&self.system.g_r, source)
    }

    pub fn translate_target(&self, target: &SampleSet) -> Result<SampleSet> {
        crate::adversarial::translate(&self.system.g_s, target)
    }
}

fn step(sys: &mut CycleSystem, batch: Batch<'_>, cfg: &CycleConfig) -> Result<(f64, f64, GeneratorLoss)> {
    let disc_sgd = cfg.gan.disc_sgd();
    let fake_r = sys.g_r.predict(batch.xs)?;
    let fake_s = sys.g_s.predict(batch.xr)?;
    let (disc_r, _, _) = discriminator_step(&mut sys.d_r, batch.xr, fake_r.view(), Some(batch.wr), batch.ws, &disc_sgd)?;
    let (disc_s, _, _) = discriminator_step(&mut sys.d_s, batch.xs, fake_s.view(), Some(batch.ws), batch.wr, &disc_sgd)?;

    let (loss, gr, gs) = generator_gradients(sys, batch, cfg.gan.saturating)?;
    if !loss.total().is_finite() {
        return Err(Error::Domain(format!("non-finite generator loss {}", loss.total())));
    }
    let gen_sgd = cfg.gan.gen_sgd();
    sys.g_r.sgd_step(&gr, &gen_sgd)?;
    sys.g_s.sgd_step(&gs, &gen_sgd)?;
    Ok((disc_r, disc_s, loss))
}

/// Trains all four networks. `weights` is `(ŵ on source, ψ̂ on target)`;
/// `None` means all ones. `g_r`/`d_r` are drawn from `(seed, INIT)` and
/// `g_s`/`d_s` from its first substream.
pub fn train_cycle(
    source: &SampleSet,
    target: &SampleSet,
    weights: Option<(&[f64], &[f64])>,
    cfg: &CycleConfig,
    seed: u64,
) -> Result<CycleRun> {
    let init = RngStream::new(seed, streams::INIT);
    train_cycle_with_init(source, target, weights, cfg, seed, init, init.sub(1))
}

pub fn train_cycle_with_init(
    source: &SampleSet,
    target: &SampleSet,
    weights: Option<(&[f64], &[f64])>,
    cfg: &CycleConfig,
    seed: u64,
    init_r: RngStream,
    init_s: RngStream,
) -> Result<CycleRun> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(invalid!("source d={} differs from target d={}", source.dim(), target.dim()));
    }
    let (w_source, w_target) = match weights {
        Some((ws, wr)) => (ws.to_vec(), wr.to_vec()),
        None => (vec![1.0; source.n()], vec![1.0; target.n()]),
    };
    if w_source.len() != source.n() || w_target.len() != target.n() {
        return Err(invalid!("weight vectors do not match the sample counts"));
    }
    let d = source.dim();
    let g = &cfg.gan;
    let mut rng_r = init_r.sampler();
    let g_r = MlpParams::lecun_init(&g.generator, d, d, &mut rng_r)?;
    let d_r = MlpParams::lecun_init(&g.discriminator, d, 1, &mut rng_r)?;
    let mut rng_s = init_s.sampler();
    let g_s = MlpParams::lecun_init(&g.generator, d, d, &mut rng_s)?;
    let d_s = MlpParams::lecun_init(&g.discriminator, d, 1, &mut rng_s)?;
    let mut sys = CycleSystem::new(g_r, g_s, d_r, d_s, w_source, w_target, cfg.lambda_cyc)?;
    let mut shuffler = RngStream::new(seed, streams::SHUFFLE).sampler();

    let mut history = Vec::with_capacity(g.epochs);
    for epoch in 0..g.epochs {
        let plan = epoch_batches(source.n(), target.n(), g.batch_size, g.shuffle.then_some(&mut shuffler));
        let mut acc = [0.0; 6];
        for (b, (si, ti)) in plan.iter().enumerate() {
            let xs = source.data().select(Axis(0), si);
            let xr = target.data().select(Axis(0), ti);
            let ws: Vec<f64> = si.iter().map(|&i| sys.w_source[i]).collect();
            let wr: Vec<f64> = ti.iter().map(|&i| sys.w_target[i]).collect();
            let batch = Batch {
                xs: xs.view(),
                ws: &ws,
                xr: xr.view(),
                wr: &wr,
            };
            let (disc_r, disc_s, gl) = step(&mut sys, batch, cfg).map_err(at_batch(epoch, b))?;
            acc[0] += disc_r;
            acc[1] += disc_s;
            acc[2] += gl.adv_r;
            acc[3] += gl.adv_s;
            acc[4] += gl.cycle.total();
            acc[5] += gl.total();
        }
        let nb = plan.len() as f64;
        history.push(CycleEpochRecord {
            epoch,
            disc_r: acc[0] / nb,
            disc_s: acc[1] / nb,
            adv_r: acc[2] / nb,
            adv_s: acc[3] / nb,
            cycle: acc[4] / nb,
            generator_total: acc[5] / nb,
        });
    }
    Ok(CycleRun {
        seed,
        config: cfg.clone(),
        system: sys,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::{disc_loss, gen_loss, train_with_init, GanMode};
    use crate::dataio::{gen_gaussian, gen_mixture, rotate_2d, MixtureComponent};
    use crate::neural::{Activation, Architecture, Layer};
    use ndarray::{array, Array1};

    fn affine(w: Array2<f64>, b: Vec<f64>, act: Activation) -> MlpParams {
        MlpParams::new(vec![Layer { w, b: Array1::from(b), act }]).unwrap()
    }

    fn identity2() -> MlpParams {
        affine(array![[1.0, 0.0], [0.0, 1.0]], vec![0.0, 0.0], Activation::Linear)
    }

    fn shift2(c: f64) -> MlpParams {
        affine(array![[1.0, 0.0], [0.0, 1.0]], vec![c, c], Activation::Linear)
    }

    fn logistic2() -> MlpParams {
        affine(array![[0.3, -0.7]], vec![0.1], Activation::Sigmoid)
    }

    fn system(g_r: MlpParams, g_s: MlpParams, n: usize, lambda: f64) -> CycleSystem {
        CycleSystem::new(g_r, g_s, logistic2(), logistic2(), vec![1.0; n], vec![1.0; n], lambda).unwrap()
    }

    fn pts(seed: u64, n: usize) -> Array2<f64> {
        let mut s = RngStream::new(seed, 0).sampler();
        Array2::from_shape_simple_fn((n, 2), || s.standard_normal())
    }

    #[test]
    fn identity_generators_have_zero_cycle() {
        let sys = system(identity2(), identity2(), 4, 10.0);
        let (xs, xr) = (pts(1, 4), pts(2, 4));
        let w = [1.0; 4];
        let b = Batch { xs: xs.view(), ws: &w, xr: xr.view(), wr: &w };
        assert_eq!(cycle_loss(&sys, b).unwrap().total(), 0.0);
        let g = full_loss(&sys, b, false).unwrap().generator;
        assert_eq!(g.total(), g.adv_r + g.adv_s);
    }

    #[test]
    fn shift_by_one_costs_two() {
        let sys = system(shift2(0.5), shift2(0.5), 3, 1.0);
        let (xs, xr) = (pts(3, 3), pts(4, 3));
        let w = [1.0; 3];
        let c = cycle_loss(&sys, Batch { xs: xs.view(), ws: &w, xr: xr.view(), wr: &w }).unwrap();
        assert!((c.source_term - 2.0).abs() < 1e-12);
        let zero = [0.0; 3];
        let c = cycle_loss(&sys, Batch { xs: xs.view(), ws: &zero, xr: xr.view(), wr: &zero }).unwrap();
        assert_eq!(c.total(), 0.0);
    }

    #[test]
    fn batch_errors() {
        let sys = system(identity2(), identity2(), 2, 1.0);
        let xs = pts(1, 2);
        let x3 = Array2::zeros((2, 3));
        let w = [1.0; 2];
        assert!(cycle_loss(&sys, Batch { xs: xs.view(), ws: &w, xr: x3.view(), wr: &w }).is_err());
        assert!(cycle_loss(&sys, Batch { xs: xs.view(), ws: &w[..1], xr: xs.view(), wr: &w }).is_err());
    }

    #[test]
    fn unit_weights_no_cycle_matches_two_gans() {
        let sys = system(shift2(0.3), shift2(-0.2), 5, 0.0);
        let (xs, xr) = (pts(5, 5), pts(6, 5));
        let w = [1.0; 5];
        let full = full_loss(&sys, Batch { xs: xs.view(), ws: &w, xr: xr.view(), wr: &w }, false).unwrap();
        let p = |d: &MlpParams, x: &Array2<f64>| d.predict(x.view()).unwrap().column(0).to_vec();
        let fr = sys.g_r.predict(xs.view()).unwrap();
        let fs = sys.g_s.predict(xr.view()).unwrap();
        assert_eq!(full.disc_r, disc_loss(&p(&sys.d_r, &xr), &p(&sys.d_r, &fr), &w).unwrap());
        assert_eq!(full.disc_s, disc_loss(&p(&sys.d_s, &xs), &p(&sys.d_s, &fs), &w).unwrap());
        assert_eq!(full.generator.adv_r, gen_loss(&p(&sys.d_r, &fr), &w, false).unwrap());
    }

    fn random_system(seed: u64, lambda: f64, n: usize) -> CycleSystem {
        let mut s = RngStream::new(seed, 1).sampler();
        let g = Architecture::generator(vec![5, 4]);
        let d = Architecture::discriminator(vec![6]);
        let w = |k: u64| {
            let mut t = RngStream::new(seed + k, 7).sampler();
            (0..n).map(|_| 0.2 + t.uniform()).collect::<Vec<f64>>()
        };
        let norm = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.into_iter().map(|x| x / m).collect::<Vec<f64>>()
        };
        let (ws, wr) = (norm(w(1)), norm(w(2)));
        let mut net = |a: &Architecture, out| {
            let mut p = MlpParams::lecun_init(a, 2, out, &mut s).unwrap();
            let flat: Vec<f64> = p.to_flat().iter().map(|v| v + 0.1).collect();
            p.set_flat(&flat).unwrap();
            p
        };
        let (g_r, g_s, d_r, d_s) = (net(&g, 2), net(&g, 2), net(&d, 1), net(&d, 1));
        CycleSystem::new(g_r, g_s, d_r, d_s, ws, wr, lambda).unwrap()
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        for (seed, saturating) in [(11, false), (12, true)] {
            let n = 8;
            let sys = random_system(seed, 10.0, n);
            let (xs, xr) = (pts(seed + 100, n), pts(seed + 200, n));
            let (ws, wr) = (sys.w_source.clone(), sys.w_target.clone());
            let batch = Batch { xs: xs.view(), ws: &ws, xr: xr.view(), wr: &wr };
            let (_, gr, gs) = generator_gradients(&sys, batch, saturating).unwrap();
            let analytic: Vec<f64> = gr.to_flat().into_iter().chain(gs.to_flat()).collect();
            let nr = sys.g_r.num_params();
            let base: Vec<f64> = sys.g_r.to_flat().into_iter().chain(sys.g_s.to_flat()).collect();
            let loss_at = |flat: &[f64]| {
                let mut probe = sys.clone();
                probe.g_r.set_flat(&flat[..nr]).unwrap();
                probe.g_s.set_flat(&flat[nr..]).unwrap();
                full_loss(&probe, batch, saturating).unwrap().generator.total()
            };
            let h = 1e-5;
            let mut s = RngStream::new(seed, 9).sampler();
            for _ in 0..10 {
                let i = s.index(base.len());
                let mut p = base.clone();
                p[i] += h;
                let up = loss_at(&p);
                p[i] -= 2.0 * h;
                let down = loss_at(&p);
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-8);
                assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
            }
        }
    }

    fn small_cfg(lambda: f64) -> CycleConfig {
        CycleConfig {
            gan: GanConfig {
                epochs: 2,
                batch_size: 10,
                generator: Architecture::generator(vec![6]),
                discriminator: Architecture::discriminator(vec![6]),
                ..GanConfig::default()
            },
            lambda_cyc: lambda,
        }
    }

    fn domains(n: usize) -> (SampleSet, SampleSet) {
        let comps = [
            MixtureComponent { weight: 0.5, mean: vec![-2.0, 0.0], std: 0.5 },
            MixtureComponent { weight: 0.5, mean: vec![2.0, 0.0], std: 0.5 },
        ];
        let s = gen_mixture(n, &comps, RngStream::new(3, 0)).unwrap();
        let t = rotate_2d(&gen_mixture(n, &comps, RngStream::new(4, 0)).unwrap(), 1.0).unwrap();
        (s, t)
    }

    #[test]
    fn no_cycle_unit_weights_is_two_independent_gans() {
        let (s, t) = domains(30);
        let cfg = small_cfg(0.0);
        let run = train_cycle(&s, &t, None, &cfg, 8).unwrap();
        let init = RngStream::new(8, streams::INIT);
        let fwd = train_with_init(&s, &t, GanMode::Vanilla, None, &cfg.gan, 8, init).unwrap();
        let bwd = train_with_init(&t, &s, GanMode::Vanilla, None, &cfg.gan, 8, init.sub(1)).unwrap();
        assert_eq!(run.system.g_r, fwd.generator);
        assert_eq!(run.system.d_r, fwd.discriminator);
        assert_eq!(run.system.g_s, bwd.generator);
        assert_eq!(run.system.d_s, bwd.discriminator);
    }

    #[test]
    fn swapping_domains_swaps_roles() {
        let (s, t) = domains(30);
        let cfg = small_cfg(10.0);
        let ws: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 0.5 } else { 1.5 }).collect();
        let wr: Vec<f64> = (0..30).map(|i| if i % 3 == 0 { 2.0 } else { 0.5 }).collect();
        let a = RngStream::new(5, streams::INIT);
        let b = a.sub(1);
        let fwd = train_cycle_with_init(&s, &t, Some((&ws, &wr)), &cfg, 5, a, b).unwrap();
        let rev = train_cycle_with_init(&t, &s, Some((&wr, &ws)), &cfg, 5, b, a).unwrap();
        assert_eq!(fwd.system.g_r, rev.system.g_s);
        assert_eq!(fwd.system.g_s, rev.system.g_r);
        assert_eq!(fwd.system.d_r, rev.system.d_s);
        assert_eq!(fwd.system.d_s, rev.system.d_r);
    }

    #[test]
    fn lambda_zero_decouples_target_to_source() {
        // g_s only meets g_r through the cycle term, so a different g_r/d_r
        // initialization leaves g_s untouched exactly when lambda_cyc = 0
        let (s, t) = domains(30);
        let ws: Vec<f64> = (0..30).map(|i| if i < 15 { 0.5 } else { 1.5 }).collect();
        let ones = vec![1.0; 30];
        let init = RngStream::new(2, streams::INIT);
        let other = RngStream::new(99, streams::INIT);
        let run = |lambda: f64, init_r: RngStream| {
            train_cycle_with_init(&s, &t, Some((&ws, &ones)), &small_cfg(lambda), 2, init_r, init.sub(1))
                .unwrap()
                .system
        };
        assert_eq!(run(0.0, init).g_s, run(0.0, other).g_s);
        assert_ne!(run(10.0, init).g_s, run(10.0, other).g_s);
    }

    #[test]
    fn weights_must_have_unit_mean() {
        let (s, t) = domains(20);
        let bad = vec![2.0; 20];
        let ones = vec![1.0; 20];
        assert!(train_cycle(&s, &t, Some((&bad, &ones)), &small_cfg(1.0), 1).is_err());
        assert!(train_cycle(&s, &t, Some((&ones[..19], &ones)), &small_cfg(1.0), 1).is_err());
        let t3 = gen_gaussian(20, 3, 0.0, 1.0, RngStream::new(1, 0)).unwrap();
        assert!(train_cycle(&s, &t3, None, &small_cfg(1.0), 1).is_err());
    }

    #[test]
    fn history_has_one_entry_per_epoch() {
        let (s, t) = domains(25);
        let run = train_cycle(&s, &t, None, &small_cfg(10.0), 3).unwrap();
        assert_eq!(run.history.len(), 2);
        assert!(run.history.iter().all(|h| h.cycle >= 0.0 && h.generator_total.is_finite()));
        let g = run.translate_source(&s).unwrap();
        assert_eq!((g.n(), g.dim()), (25, 2));
    }
}
