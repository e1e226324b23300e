//! Toy GAN training with an optional per-sample importance weight on the
//! generated term of the discriminator objective:
//!
//! `E_t[log d(x_t)] + E_s[ŵ(x_s) · log(1 − d(g(x_s)))]`
//!
//! Weights are computed once before training and travel with their source
//! samples through batching. With `ŵ ≡ 1` this is the vanilla GAN.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::{streams, RngStream, SampleSet};
use crate::error::{invalid, Error, Result};
use crate::neural::{Activation, Architecture, MlpParams, SgdConfig};

/// Discriminator outputs are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanMode {
    Vanilla,
    Kliep,
}

impl std::fmt::Display for GanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GanMode::Vanilla => "vanilla",
            GanMode::Kliep => "kliep",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub shuffle: bool,
    /// Literal `E[w·log(1 − d(g(x)))]` generator objective instead of the
    /// non-saturating `−E[w·log d(g(x))]`.
    pub saturating: bool,
    pub generator: Architecture,
    pub discriminator: Architecture,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 200,
            gen_lr: 8e-3,
            disc_lr: 4e-3,
            shuffle: false,
            saturating: false,
            generator: Architecture::generator(vec![256, 256]),
            discriminator: Architecture::discriminator(vec![256, 128]),
        }
    }
}

impl GanConfig {
    /// The desk-scale template used for low-dimensional domains.
    pub fn small() -> Self {
        Self {
            generator: Architecture::generator(vec![64, 64]),
            discriminator: Architecture::discriminator(vec![64, 64]),
            ..Self::default()
        }
    }

    pub fn gen_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.gen_lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            shuffle: self.shuffle,
        }
    }

    pub fn disc_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.disc_lr,
            ..self.gen_sgd()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.discriminator.output_act != Activation::Sigmoid {
            return Err(invalid!("discriminator output activation must be sigmoid"));
        }
        self.gen_sgd().validate()?;
        self.disc_sgd().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

#[derive(Debug, Clone)]
pub struct GanRun {
    pub mode: GanMode,
    pub seed: u64,
    pub config: GanConfig,
    pub generator: MlpParams,
    pub discriminator: MlpParams,
    pub importance: Option<Vec<f64>>,
    pub history: Vec<EpochRecord>,
}

impl GanRun {
    /// Applies the trained generator to every row of `source`.
    pub fn generate(&self, source: &SampleSet) -> Result<SampleSet> {
        translate(&self.generator, source)
    }
}

/// Runs `net` over a sample set in chunks.
pub fn translate(net: &MlpParams, set: &SampleSet) -> Result<SampleSet> {
    let mut out = Array2::zeros((set.n(), net.output_dim()));
    let chunk = 1024;
    for (src, mut dst) in set
        .data()
        .axis_chunks_iter(Axis(0), chunk)
        .zip(out.axis_chunks_iter_mut(Axis(0), chunk))
    {
        dst.assign(&net.predict(src)?);
    }
    SampleSet::new(out, format!("g({})", set.tag()))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn check_weights(d_fake: &[f64], w_fake: &[f64]) -> Result<()> {
    if d_fake.len() != w_fake.len() {
        return Err(invalid!(
            "weight vector has {} entries for {} generated samples",
            w_fake.len(),
            d_fake.len()
        ));
    }
    if d_fake.is_empty() {
        return Err(invalid!("empty generated batch"));
    }
    Ok(())
}

/// `−[mean_j log d_real_j + mean_i w_i·log(1 − d_fake_i)]`.
pub fn disc_loss(d_real: &[f64], d_fake: &[f64], w_fake: &[f64]) -> Result<f64> {
    Ok(disc_loss_grad(d_real, d_fake, w_fake)?.0)
}

/// Loss plus its derivatives with respect to the discriminator logits
/// (`p = sigmoid(z)`). The floor only affects the reported value; gradients
/// are those of the unfloored loss so a saturated discriminator still passes
/// signal back.
pub fn disc_loss_grad(d_real: &[f64], d_fake: &[f64], w_fake: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_weights(d_fake, w_fake)?;
    if d_real.is_empty() {
        return Err(invalid!("empty real batch"));
    }
    let n = d_real.len() as f64;
    let m = d_fake.len() as f64;
    let real_term = d_real.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / n;
    let fake_term = d_fake
        .iter()
        .zip(w_fake)
        .map(|(&p, &w)| w * (1.0 - clamp_prob(p)).ln())
        .sum::<f64>()
        / m;
    let g_real = d_real.iter().map(|&p| -(1.0 - p) / n).collect();
    let g_fake = d_fake.iter().zip(w_fake).map(|(&p, &w)| w * p / m).collect();
    Ok((-(real_term + fake_term), g_real, g_fake))
}

/// Saturating: `mean w_i·log(1 − d_fake_i)`; non-saturating: `−mean w_i·log d_fake_i`.
pub fn gen_loss(d_fake: &[f64], w_fake: &[f64], saturating: bool) -> Result<f64> {
    Ok(gen_loss_grad(d_fake, w_fake, saturating)?.0)
}

/// Loss plus its derivatives with respect to the discriminator logits.
pub fn gen_loss_grad(d_fake: &[f64], w_fake: &[f64], saturating: bool) -> Result<(f64, Vec<f64>)> {
    check_weights(d_fake, w_fake)?;
    let m = d_fake.len() as f64;
    let pairs = d_fake.iter().zip(w_fake);
    if saturating {
        let loss = pairs.clone().map(|(&p, &w)| w * (1.0 - clamp_prob(p)).ln()).sum::<f64>() / m;
        let g = pairs.map(|(&p, &w)| -w * p / m).collect();
        Ok((loss, g))
    } else {
        let loss = -pairs.clone().map(|(&p, &w)| w * clamp_prob(p).ln()).sum::<f64>() / m;
        let g = pairs.map(|(&p, &w)| -w * (1.0 - p) / m).collect();
        Ok((loss, g))
    }
}

/// Checks the importance invariant: nonnegative, finite, mean one.
pub fn check_importance(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(invalid!("importance has {} entries for {n} source samples", weights.len()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid!("importance weights must be finite and nonnegative"));
    }
    let mean = weights.iter().sum::<f64>() / n as f64;
    if (mean - 1.0).abs() > 1e-9 {
        return Err(invalid!("importance weights must have mean 1 (±1e-9), got {mean}"));
    }
    Ok(())
}

/// Fixed batch plan for one epoch: source row indices and the target rows
/// paired with them. Target rows wrap around when the sets differ in size.
pub(crate) fn epoch_batches(
    n_source: usize,
    n_target: usize,
    batch_size: usize,
    shuffle: Option<&mut crate::dataio::Sampler>,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut src: Vec<usize> = (0..n_source).collect();
    let mut tgt: Vec<usize> = (0..n_target).collect();
    if let Some(s) = shuffle {
        s.shuffle(&mut src);
        s.shuffle(&mut tgt);
    }
    src.chunks(batch_size)
        .enumerate()
        .map(|(k, chunk)| {
            let start = k * batch_size;
            let t = (0..chunk.len()).map(|i| tgt[(start + i) % n_target]).collect();
            (chunk.to_vec(), t)
        })
        .collect()
}

fn column(values: &Array2<f64>) -> Vec<f64> {
    values.column(0).to_vec()
}

fn as_column(values: Vec<f64>) -> Array2<f64> {
    let n = values.len();
    Array2::from_shape_vec((n, 1), values).expect("column shape")
}

/// Losses and mean discriminator outputs of one alternating update.
pub(crate) struct StepStats {
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

/// One discriminator step on (real, fake) followed by one generator step.
pub(crate) fn discriminator_step(
    disc: &mut MlpParams,
    real: ArrayView2<'_, f64>,
    fake: ArrayView2<'_, f64>,
    w_real: Option<&[f64]>,
    w_fake: &[f64],
    sgd: &SgdConfig,
) -> Result<(f64, f64, f64)> {
    let (p_real, cache_real) = disc.forward(real)?;
    let (p_fake, cache_fake) = disc.forward(fake)?;
    let p_real_v = column(&p_real);
    let p_fake_v = column(&p_fake);
    let (loss, g_real, g_fake) = match w_real {
        None => disc_loss_grad(&p_real_v, &p_fake_v, w_fake)?,
        Some(wr) => weighted_disc_loss_grad(&p_real_v, wr, &p_fake_v, w_fake)?,
    };
    let mut grads = disc.backward_from_logits(&cache_real, as_column(g_real).view())?;
    grads.accumulate(&disc.backward_from_logits(&cache_fake, as_column(g_fake).view())?);
    if !loss.is_finite() {
        return Err(Error::Domain(format!("non-finite discriminator loss {loss}")));
    }
    disc.sgd_step(&grads, sgd)?;
    Ok((loss, mean(&p_real_v), mean(&p_fake_v)))
}

/// Discriminator loss with weights on both terms:
/// `−[mean w_r·log d_real + mean w_f·log(1 − d_fake)]`.
pub fn weighted_disc_loss_grad(
    d_real: &[f64],
    w_real: &[f64],
    d_fake: &[f64],
    w_fake: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_weights(d_real, w_real)?;
    let (_, _, g_fake) = disc_loss_grad(d_real, d_fake, w_fake)?;
    let n = d_real.len() as f64;
    let m = d_fake.len() as f64;
    let real_term = d_real
        .iter()
        .zip(w_real)
        .map(|(&p, &w)| w * clamp_prob(p).ln())
        .sum::<f64>()
        / n;
    let fake_term = d_fake
        .iter()
        .zip(w_fake)
        .map(|(&p, &w)| w * (1.0 - clamp_prob(p)).ln())
        .sum::<f64>()
        / m;
    let g_real = d_real.iter().zip(w_real).map(|(&p, &w)| -w * (1.0 - p) / n).collect();
    Ok((-(real_term + fake_term), g_real, g_fake))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Generator-side adversarial loss and the gradient it sends back to the
/// generator output, through a frozen discriminator.
pub(crate) fn generator_adversarial_grad(
    disc: &MlpParams,
    fake: ArrayView2<'_, f64>,
    w_fake: &[f64],
    saturating: bool,
) -> Result<(f64, Array2<f64>)> {
    let (p_fake, cache) = disc.forward(fake)?;
    let (loss, g) = gen_loss_grad(&column(&p_fake), w_fake, saturating)?;
    let d_fake_input = disc.backward_input_from_logits(&cache, as_column(g).view())?;
    Ok((loss, d_fake_input))
}

fn train_step(
    gen: &mut MlpParams,
    disc: &mut MlpParams,
    xs: ArrayView2<'_, f64>,
    xt: ArrayView2<'_, f64>,
    w: &[f64],
    cfg: &GanConfig,
) -> Result<StepStats> {
    let fake = gen.predict(xs)?;
    let (disc_loss, d_real, d_fake) = discriminator_step(disc, xt, fake.view(), None, w, &cfg.disc_sgd())?;

    let (fake, cache) = gen.forward(xs)?;
    let (gen_loss, upstream) = generator_adversarial_grad(disc, fake.view(), w, cfg.saturating)?;
    if !gen_loss.is_finite() {
        return Err(Error::Domain(format!("non-finite generator loss {gen_loss}")));
    }
    let grads = gen.backward(&cache, upstream.view())?;
    gen.sgd_step(&grads, &cfg.gen_sgd())?;
    Ok(StepStats {
        disc_loss,
        gen_loss,
        d_real,
        d_fake,
    })
}

pub(crate) fn at_batch(epoch: usize, batch: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Domain(message) | Error::InvalidArgument(message) => Error::Training { epoch, batch, message },
        other => other,
    }
}

/// Trains a generator `source → target` with initial weights drawn from `(seed, INIT)`.
pub fn train(
    source: &SampleSet,
    target: &SampleSet,
    mode: GanMode,
    importance: Option<&[f64]>,
    cfg: &GanConfig,
    seed: u64,
) -> Result<GanRun> {
    train_with_init(source, target, mode, importance, cfg, seed, RngStream::new(seed, streams::INIT))
}

/// As [`train`] with an explicit initialization stream. The generator is
/// drawn first, then the discriminator.
pub fn train_with_init(
    source: &SampleSet,
    target: &SampleSet,
    mode: GanMode,
    importance: Option<&[f64]>,
    cfg: &GanConfig,
    seed: u64,
    init: RngStream,
) -> Result<GanRun> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(invalid!("source d={} differs from target d={}", source.dim(), target.dim()));
    }
    let weights = match (mode, importance) {
        (GanMode::Kliep, Some(w)) => {
            check_importance(w, source.n())?;
            w.to_vec()
        }
        (GanMode::Kliep, None) => return Err(invalid!("kliep mode requires importance weights")),
        (GanMode::Vanilla, Some(_)) => return Err(invalid!("vanilla mode takes no importance weights")),
        (GanMode::Vanilla, None) => vec![1.0; source.n()],
    };
    let d = source.dim();
    let mut init_rng = init.sampler();
    let mut gen = MlpParams::lecun_init(&cfg.generator, d, d, &mut init_rng)?;
    let mut disc = MlpParams::lecun_init(&cfg.discriminator, d, 1, &mut init_rng)?;
    let mut shuffler = RngStream::new(seed, streams::SHUFFLE).sampler();

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plan = epoch_batches(source.n(), target.n(), cfg.batch_size, cfg.shuffle.then_some(&mut shuffler));
        let mut acc = [0.0; 4];
        for (batch, (si, ti)) in plan.iter().enumerate() {
            let xs = source.data().select(Axis(0), si);
            let xt = target.data().select(Axis(0), ti);
            let w: Vec<f64> = si.iter().map(|&i| weights[i]).collect();
            let stats = train_step(&mut gen, &mut disc, xs.view(), xt.view(), &w, cfg).map_err(at_batch(epoch, batch))?;
            acc[0] += stats.disc_loss;
            acc[1] += stats.gen_loss;
            acc[2] += stats.d_real;
            acc[3] += stats.d_fake;
        }
        let nb = plan.len() as f64;
        history.push(EpochRecord {
            epoch,
            disc_loss: acc[0] / nb,
            gen_loss: acc[1] / nb,
            d_real: acc[2] / nb,
            d_fake: acc[3] / nb,
        });
    }

    Ok(GanRun {
        mode,
        seed,
        config: cfg.clone(),
        generator: gen,
        discriminator: disc,
        importance: (mode == GanMode::Kliep).then_some(weights),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gen_gaussian, gen_uniform};
    use crate::neural::{Activation, Layer};
    use ndarray::{array, Array1};

    const LN_HALF: f64 = -std::f64::consts::LN_2;

    #[test]
    fn disc_loss_examples() {
        let l = disc_loss(&[0.5; 4], &[0.5; 3], &[1.0; 3]).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);

        let l = disc_loss(&[0.2, 0.7], &[0.9, 0.4], &[0.0, 0.0]).unwrap();
        let expected = -(0.2f64.ln() + 0.7f64.ln()) / 2.0;
        assert!((l - expected).abs() < 1e-15);

        let l = disc_loss(&[0.5], &[0.5], &[2.0]).unwrap();
        assert!((l + (LN_HALF + 2.0 * LN_HALF)).abs() < 1e-12);
        assert!((l - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn loss_weight_length_mismatch() {
        assert!(disc_loss(&[0.5], &[0.5, 0.5], &[1.0]).is_err());
        assert!(gen_loss(&[0.5, 0.5], &[1.0], false).is_err());
    }

    #[test]
    fn gen_loss_examples() {
        assert!((gen_loss(&[0.5], &[1.0], false).unwrap() - 0.6931).abs() < 1e-4);
        assert!((gen_loss(&[0.5], &[1.0], true).unwrap() + 0.6931).abs() < 1e-4);
        assert_eq!(gen_loss(&[0.3, 0.8], &[0.0, 0.0], false).unwrap(), 0.0);
        assert_eq!(gen_loss(&[0.3, 0.8], &[0.0, 0.0], true).unwrap(), 0.0);
    }

    #[test]
    fn losses_finite_at_the_edges() {
        for p in [0.0, 1e-300, 0.5, 1.0 - 1e-16, 1.0] {
            assert!(disc_loss(&[p], &[p], &[1.0]).unwrap().is_finite());
            assert!(gen_loss(&[p], &[1.0], false).unwrap().is_finite());
            assert!(gen_loss(&[p], &[1.0], true).unwrap().is_finite());
        }
    }

    #[test]
    fn unit_weights_reduce_to_unweighted() {
        let d_real = [0.3, 0.6, 0.9];
        let d_fake = [0.1, 0.45];
        let unweighted = -(d_real.iter().map(|p: &f64| p.ln()).sum::<f64>() / 3.0
            + d_fake.iter().map(|p: &f64| (1.0 - p).ln()).sum::<f64>() / 2.0);
        assert_eq!(disc_loss(&d_real, &d_fake, &[1.0, 1.0]).unwrap(), unweighted);
        let ns = -(d_fake.iter().map(|p: &f64| p.ln()).sum::<f64>() / 2.0);
        assert_eq!(gen_loss(&d_fake, &[1.0, 1.0], false).unwrap(), ns);
    }

    fn sig(z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| Activation::Sigmoid.apply(v)).collect()
    }

    fn bump(z: &[f64], i: usize, h: f64) -> Vec<f64> {
        let mut v = z.to_vec();
        v[i] += h;
        v
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let z_real = [-0.85, 0.49, 1.9];
        let z_fake = [-2.0, -0.2, 0.85];
        let w = [0.4, 1.7, 0.9];
        let h = 1e-5;
        let (_, gr, gf) = disc_loss_grad(&sig(&z_real), &sig(&z_fake), &w).unwrap();
        for i in 0..3 {
            let l = |zr: &[f64], zf: &[f64]| disc_loss(&sig(zr), &sig(zf), &w).unwrap();
            let fd = (l(&bump(&z_real, i, h), &z_fake) - l(&bump(&z_real, i, -h), &z_fake)) / (2.0 * h);
            assert!((fd - gr[i]).abs() < 1e-4 * fd.abs().max(1e-8));
            let fd = (l(&z_real, &bump(&z_fake, i, h)) - l(&z_real, &bump(&z_fake, i, -h))) / (2.0 * h);
            assert!((fd - gf[i]).abs() < 1e-4 * fd.abs().max(1e-8));
        }
        let wr = [1.3, 0.2, 0.8];
        let (_, gr, _) = weighted_disc_loss_grad(&sig(&z_real), &wr, &sig(&z_fake), &w).unwrap();
        for i in 0..3 {
            let l = |zr: &[f64]| weighted_disc_loss_grad(&sig(zr), &wr, &sig(&z_fake), &w).unwrap().0;
            let fd = (l(&bump(&z_real, i, h)) - l(&bump(&z_real, i, -h))) / (2.0 * h);
            assert!((fd - gr[i]).abs() < 1e-4 * fd.abs().max(1e-8));
        }
        for saturating in [false, true] {
            let (_, g) = gen_loss_grad(&sig(&z_fake), &w, saturating).unwrap();
            for i in 0..3 {
                let l = |zf: &[f64]| gen_loss(&sig(zf), &w, saturating).unwrap();
                let fd = (l(&bump(&z_fake, i, h)) - l(&bump(&z_fake, i, -h))) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-4 * fd.abs().max(1e-8));
            }
        }
    }

    #[test]
    fn saturated_discriminator_still_passes_gradient() {
        let (_, g) = gen_loss_grad(&[0.0], &[1.0], false).unwrap();
        assert_eq!(g, vec![-1.0]);
        let (l, _) = gen_loss_grad(&[0.0], &[1.0], false).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn weights_travel_with_samples() {
        // a fixed batch assignment gives the same weighted loss whatever the order inside the batch
        let p = [0.1, 0.5, 0.8, 0.33];
        let w = [0.2, 1.5, 0.7, 1.6];
        let base = disc_loss(&[0.6], &p, &w).unwrap();
        let perm = [2, 0, 3, 1];
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let wp: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        assert!((disc_loss(&[0.6], &pp, &wp).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn batch_plan_covers_source_once() {
        let plan = epoch_batches(7, 3, 3, None);
        assert_eq!(plan.len(), 3);
        assert_eq!(plan[0], (vec![0, 1, 2], vec![0, 1, 2]));
        assert_eq!(plan[1], (vec![3, 4, 5], vec![0, 1, 2]));
        assert_eq!(plan[2], (vec![6], vec![0]));
    }

    #[test]
    fn importance_invariant_checked() {
        assert!(check_importance(&[1.0, 1.0], 2).is_ok());
        assert!(check_importance(&[0.5, 1.0], 2).is_err());
        assert!(check_importance(&[-1.0, 3.0], 2).is_err());
        assert!(check_importance(&[1.0], 2).is_err());
    }

    fn tiny_config() -> GanConfig {
        GanConfig {
            epochs: 3,
            batch_size: 16,
            generator: Architecture::generator(vec![8]),
            discriminator: Architecture::discriminator(vec![8]),
            ..GanConfig::default()
        }
    }

    #[test]
    fn mode_argument_errors() {
        let s = gen_uniform(32, 2, 0.0, 1.0, RngStream::new(1, 0)).unwrap();
        let t = gen_gaussian(32, 2, 0.0, 1.0, RngStream::new(2, 0)).unwrap();
        let cfg = tiny_config();
        assert!(train(&s, &t, GanMode::Kliep, None, &cfg, 1).is_err());
        assert!(train(&s, &t, GanMode::Vanilla, Some(&[1.0; 32]), &cfg, 1).is_err());
        assert!(train(&s, &t, GanMode::Kliep, Some(&[1.0; 31]), &cfg, 1).is_err());
        let t3 = gen_gaussian(32, 3, 0.0, 1.0, RngStream::new(2, 0)).unwrap();
        assert!(train(&s, &t3, GanMode::Vanilla, None, &cfg, 1).is_err());
    }

    #[test]
    fn unit_importance_is_bit_identical_to_vanilla() {
        let s = gen_uniform(50, 3, 0.0, 10.0, RngStream::new(1, 0)).unwrap();
        let t = gen_gaussian(50, 3, 7.0, 0.5, RngStream::new(2, 0)).unwrap();
        let cfg = tiny_config();
        let a = train(&s, &t, GanMode::Vanilla, None, &cfg, 9).unwrap();
        let b = train(&s, &t, GanMode::Kliep, Some(&vec![1.0; 50]), &cfg, 9).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.discriminator, b.discriminator);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 3);
    }

    #[test]
    fn same_seed_same_parameters() {
        let s = gen_uniform(40, 2, 0.0, 10.0, RngStream::new(3, 0)).unwrap();
        let t = gen_gaussian(40, 2, 7.0, 0.5, RngStream::new(4, 0)).unwrap();
        let mut cfg = tiny_config();
        cfg.shuffle = true;
        let a = train(&s, &t, GanMode::Vanilla, None, &cfg, 5).unwrap();
        let b = train(&s, &t, GanMode::Vanilla, None, &cfg, 5).unwrap();
        assert_eq!(a.generator, b.generator);
        let c = train(&s, &t, GanMode::Vanilla, None, &cfg, 6).unwrap();
        assert_ne!(a.generator, c.generator);
    }

    #[test]
    fn non_finite_training_reports_location() {
        let s = gen_uniform(8, 1, 1e308, 1.7e308, RngStream::new(1, 0)).unwrap();
        let t = gen_gaussian(8, 1, 0.0, 1.0, RngStream::new(2, 0)).unwrap();
        let mut cfg = tiny_config();
        cfg.batch_size = 4;
        match train(&s, &t, GanMode::Vanilla, None, &cfg, 1) {
            Err(Error::Training { .. }) => {}
            other => panic!("expected training error, got {:?}", other.map(|r| r.history.len())),
        }
    }

    #[test]
    fn generator_gradient_through_discriminator() {
        // gen: 1 -> 1 linear, disc: 1 -> 1 sigmoid; loss = -w log sigmoid(a (u x + c) + b)
        let gen = MlpParams::new(vec![Layer { w: array![[0.8]], b: Array1::from(vec![0.1]), act: Activation::Linear }]).unwrap();
        let disc = MlpParams::new(vec![Layer { w: array![[1.3]], b: Array1::from(vec![-0.2]), act: Activation::Sigmoid }]).unwrap();
        let x = array![[0.5], [-1.0]];
        let w = [0.7, 1.3];
        let (fake, cache) = gen.forward(x.view()).unwrap();
        let (_, up) = generator_adversarial_grad(&disc, fake.view(), &w, false).unwrap();
        let g = gen.backward(&cache, up.view()).unwrap().to_flat();
        let loss_at = |u: f64, c: f64| {
            let p: Vec<f64> = x.column(0).iter().map(|&xi| Activation::Sigmoid.apply(1.3 * (u * xi + c) - 0.2)).collect();
            gen_loss(&p, &w, false).unwrap()
        };
        let h = 1e-6;
        let fd_u = (loss_at(0.8 + h, 0.1) - loss_at(0.8 - h, 0.1)) / (2.0 * h);
        let fd_c = (loss_at(0.8, 0.1 + h) - loss_at(0.8, 0.1 - h)) / (2.0 * h);
        assert!((fd_u - g[0]).abs() < 1e-7);
        assert!((fd_c - g[1]).abs() < 1e-7);
    }
}
