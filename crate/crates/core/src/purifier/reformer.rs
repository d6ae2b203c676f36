use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceVector;
use crate::error::{dim_err, Error, Result};
use crate::nncore::{
    stack, Activation, FitConfig, Loss, Matrix, Mlp, Mode, Optimizer, OptimizerConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    /// Number of classes; both the confidence width and the condition width.
    #[serde(default)]
    pub classes: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
    /// Weight of the label loss against the reconstruction loss.
    pub lambda: f64,
    /// Standard deviation of the latent noise, at training and inference time.
    pub sigma: f64,
    /// Weight of the latent prior penalty `0.5 * |z|^2`; off by default.
    #[serde(default)]
    pub kl_weight: f64,
    #[serde(flatten)]
    pub fit: FitConfig,
}

impl CvaeConfig {
    /// Untuned defaults: `lambda = 1`, `sigma = 0.1`.
    pub fn new(classes: usize, seed: u64) -> Self {
        Self {
            classes,
            encoder_hidden: vec![64, 128],
            latent_dim: 8,
            decoder_hidden: vec![128, 64],
            lambda: 1.0,
            sigma: 0.1,
            kl_weight: 0.0,
            fit: FitConfig {
                epochs: 100,
                batch_size: 64,
                optimizer: OptimizerConfig::adam(1e-3),
                schedule: Default::default(),
                weight_decay: 0.0,
                seed,
            },
        }
    }

    /// Settings for the small synthetic tasks: a weak classification term
    /// and wide latent noise, so members and non-members predicted as the
    /// same class are drawn toward the same output.
    pub fn desk(classes: usize, seed: u64) -> Self {
        Self {
            latent_dim: 4,
            lambda: 0.002,
            sigma: 4.0,
            ..Self::new(classes, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.classes < 2 {
            return Err(Error::Config("reformer needs at least two classes".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.sigma >= 0.0 && self.kl_weight >= 0.0) {
            return Err(Error::Config(
                "lambda, sigma and kl_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![2 * self.classes];
        s.extend(&self.encoder_hidden);
        s.push(self.latent_dim);
        s
    }

    fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent_dim + self.classes];
        s.extend(&self.decoder_hidden);
        s.push(self.classes);
        s
    }
}

/// How the latent code is perturbed before decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// No perturbation.
    Zero,
    /// Gaussian perturbation of scale sigma, drawn from a generator seeded
    /// by the confidence bytes and the given salt.
    Sample { salt: u64 },
}

/// Conditional autoencoder over confidence vectors. The encoder sees the
/// confidence concatenated with the one-hot predicted label and ends in tanh,
/// so latent codes live in `[-1, 1]` and sigma is measured against that box.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReformer {
    pub encoder: Mlp<f32>,
    pub decoder: Mlp<f32>,
    pub sigma: f64,
}

impl ConfidenceReformer {
    pub fn new(cfg: &CvaeConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = Mlp::new(
            stack(
                &cfg.encoder_sizes(),
                Activation::Relu,
                Activation::Tanh,
                false,
            ),
            cfg.fit.seed,
        )?;
        let decoder = Mlp::new(
            stack(
                &cfg.decoder_sizes(),
                Activation::Relu,
                Activation::Softmax,
                false,
            ),
            cfg.fit.seed.wrapping_add(1),
        )?;
        Ok(Self {
            encoder,
            decoder,
            sigma: cfg.sigma,
        })
    }

    pub fn from_parts(encoder: Mlp<f32>, decoder: Mlp<f32>, sigma: f64) -> Result<Self> {
        let k = decoder.output_dim();
        if encoder.input_dim() != 2 * k {
            return Err(dim_err(format!(
                "encoder takes {} inputs, expected {} for {k} classes",
                encoder.input_dim(),
                2 * k
            )));
        }
        if decoder.input_dim() != encoder.output_dim() + k {
            return Err(dim_err(
                "decoder input must be latent plus condition".to_string(),
            ));
        }
        Ok(Self {
            encoder,
            decoder,
            sigma,
        })
    }

    pub fn classes(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn check(&self, confs: &[ConfidenceVector]) -> Result<()> {
        let k = self.classes();
        match confs.iter().find(|c| c.len() != k) {
            Some(c) => Err(dim_err(format!(
                "confidence of length {}, reformer expects {k}",
                c.len()
            ))),
            None => Ok(()),
        }
    }

    /// Latent codes of `confs`, before any noise.
    pub fn encode(&self, confs: &[ConfidenceVector]) -> Result<Matrix<f32>> {
        self.check(confs)?;
        let (input, _) = encoder_input(confs, self.classes())?;
        self.encoder.predict(&input)
    }

    /// Latent codes after the perturbation selected by `mode`.
    pub fn latent(&self, confs: &[ConfidenceVector], mode: NoiseMode) -> Result<Matrix<f32>> {
        let mut z = self.encode(confs)?;
        if let NoiseMode::Sample { salt } = mode {
            let sigma = self.sigma as f32;
            for (row, c) in confs.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(c, salt));
                for v in z.row_mut(row) {
                    let e: f32 = rng.sample(StandardNormal);
                    *v += sigma * e;
                }
            }
        }
        Ok(z)
    }

    /// Reforms a batch; each row's noise depends only on that row, so the
    /// result equals row-by-row calls.
    pub fn reform_batch(
        &self,
        confs: &[ConfidenceVector],
        mode: NoiseMode,
    ) -> Result<Vec<ConfidenceVector>> {
        if confs.is_empty() {
            return Ok(Vec::new());
        }
        let z = self.latent(confs, mode)?;
        let labels: Vec<usize> = confs.iter().map(ConfidenceVector::argmax).collect();
        let cond = Matrix::one_hot(&labels, self.classes())?;
        let out = self.decoder.predict(&z.hconcat(&cond)?)?;
        out.row_iter().map(renormalize).collect()
    }

    pub fn reform(&self, c: &ConfidenceVector, mode: NoiseMode) -> Result<ConfidenceVector> {
        Ok(self.reform_batch(std::slice::from_ref(c), mode)?.remove(0))
    }
}

/// Widens an f32 softmax row and removes its rounding drift from the sum.
fn renormalize(row: &[f32]) -> Result<ConfidenceVector> {
    let mut v: Vec<f64> = row.iter().map(|&x| x as f64).collect();
    let s: f64 = v.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NonFinite("decoder output".into()));
    }
    v.iter_mut().for_each(|x| *x /= s);
    ConfidenceVector::new(v)
}

fn encoder_input(confs: &[ConfidenceVector], k: usize) -> Result<(Matrix<f32>, Vec<usize>)> {
    let labels: Vec<usize> = confs.iter().map(ConfidenceVector::argmax).collect();
    let c = Matrix::<f32>::from_f64_rows(confs)?;
    Ok((c.hconcat(&Matrix::one_hot(&labels, k)?)?, labels))
}

/// FNV-1a over the little-endian bytes of the confidence, mixed with a salt.
pub fn noise_seed(c: &ConfidenceVector, salt: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in salt
        .to_le_bytes()
        .into_iter()
        .chain(c.probs().iter().flat_map(|p| p.to_le_bytes()))
    {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Fits the reformer on reference confidences: each mini-batch minimizes
/// `mse(G(c|l), c) + lambda * ce(G(c|l), l)` with `l = argmax c`, with
/// fresh latent noise at every step. Returns the per-epoch mean loss.
pub fn train_reformer_on(
    confs: &[ConfidenceVector],
    cfg: &CvaeConfig,
) -> Result<(ConfidenceReformer, Vec<f64>)> {
    let mut g = ConfidenceReformer::new(cfg)?;
    if confs.is_empty() {
        return Err(Error::InsufficientData("no reference confidences".into()));
    }
    g.check(confs)?;
    let k = cfg.classes;
    let latent = cfg.latent_dim;
    let (enc_in, labels) = encoder_input(confs, k)?;
    let target = Matrix::<f32>::from_f64_rows(confs)?;
    let cond = Matrix::<f32>::one_hot(&labels, k)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.fit.seed);
    let mut opt_e = Optimizer::from_config(&cfg.fit.optimizer);
    let mut opt_d = Optimizer::from_config(&cfg.fit.optimizer);
    let base_lr = cfg.fit.optimizer.lr();
    let lambda = cfg.lambda as f32;
    let sigma = cfg.sigma as f32;
    let kl = cfg.kl_weight as f32;
    let mut order: Vec<usize> = (0..confs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.fit.epochs);

    for epoch in 0..cfg.fit.epochs {
        let lr = cfg.fit.schedule.lr_at(epoch, base_lr);
        opt_e.set_lr(lr);
        opt_d.set_lr(lr);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.fit.batch_size) {
            let q = chunk.len();
            let lb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let cb = target.select_rows(chunk);
            let etrace = g
                .encoder
                .forward_trace(&enc_in.select_rows(chunk), Mode::Train)?;
            let z = etrace.output();
            let mut zn = z.clone();
            for v in zn.data_mut() {
                let e: f32 = rng.sample(StandardNormal);
                *v += sigma * e;
            }
            let dtrace = g
                .decoder
                .forward_trace(&zn.hconcat(&cond.select_rows(chunk))?, Mode::Train)?;
            let loss = Loss::Composite {
                target: &cb,
                labels: &lb,
                lambda,
            };
            let (mut value, d_p) = loss.evaluate(dtrace.output())?;
            let (d_grads, d_in) = g.decoder.backprop(&dtrace, &d_p)?;
            let (mut d_z, _) = d_in.split_cols(latent)?;
            if kl > 0.0 {
                let scale = kl / q as f32;
                let mut prior = 0.0f32;
                for (dz, &zv) in d_z.data_mut().iter_mut().zip(z.data()) {
                    *dz += scale * zv;
                    prior += 0.5 * zv * zv;
                }
                value += scale * prior;
            }
            let (e_grads, _) = g.encoder.backprop(&etrace, &d_z)?;
            if !(d_grads.all_finite() && e_grads.all_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite reformer gradient in epoch {epoch}"
                )));
            }
            opt_d.apply(&mut g.decoder, &d_grads)?;
            opt_e.apply(&mut g.encoder, &e_grads)?;
            total += value as f64 * q as f64;
        }
        let mean = total / confs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence(format!(
                "reformer loss is {mean} in epoch {epoch}"
            )));
        }
        curve.push(mean);
    }
    Ok((g, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_confs(n: usize, k: usize, seed: u64) -> Vec<ConfidenceVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
                let m = logits.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f32> = logits.iter().map(|l| ((l - m) as f32).exp()).collect();
                let s: f32 = e.iter().sum();
                ConfidenceVector::new(e.iter().map(|&x| (x / s) as f64).collect()).unwrap()
            })
            .collect()
    }

    fn cfg(k: usize, lambda: f64, sigma: f64, epochs: usize) -> CvaeConfig {
        let mut c = CvaeConfig::new(k, 5);
        c.lambda = lambda;
        c.sigma = sigma;
        c.fit.epochs = epochs;
        c.fit.batch_size = 8;
        c.fit.optimizer = OptimizerConfig::adam(3e-3);
        c
    }

    #[test]
    fn over_capacity_fits_tiny_set() {
        let confs = random_confs(16, 4, 1);
        let (g, curve) = train_reformer_on(&confs, &cfg(4, 0.0, 0.0, 400)).unwrap();
        let out = g.reform_batch(&confs, NoiseMode::Zero).unwrap();
        let mse: f64 = confs
            .iter()
            .zip(&out)
            .map(|(a, b)| {
                a.probs()
                    .iter()
                    .zip(b.probs())
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    / 4.0
            })
            .sum::<f64>()
            / 16.0;
        assert!(
            mse < 1e-3,
            "mse {mse}, curve tail {:?}",
            &curve[curve.len() - 3..]
        );
    }

    #[test]
    fn heavy_label_loss_keeps_argmax() {
        let confs = random_confs(200, 5, 2);
        let (g, _) = train_reformer_on(&confs, &cfg(5, 50.0, 0.1, 30)).unwrap();
        let out = g
            .reform_batch(&confs, NoiseMode::Sample { salt: 9 })
            .unwrap();
        let kept = confs
            .iter()
            .zip(&out)
            .filter(|(a, b)| a.argmax() == b.argmax())
            .count();
        assert!(kept as f64 >= 0.99 * confs.len() as f64, "kept {kept}");
    }

    #[test]
    fn noise_modes() {
        let confs = random_confs(10, 3, 3);
        let g = ConfidenceReformer::new(&cfg(3, 1.0, 0.5, 1)).unwrap();
        let a = g.reform_batch(&confs, NoiseMode::Zero).unwrap();
        assert_eq!(a, g.reform_batch(&confs, NoiseMode::Zero).unwrap());
        let s1 = g
            .reform_batch(&confs, NoiseMode::Sample { salt: 1 })
            .unwrap();
        assert_eq!(
            s1,
            g.reform_batch(&confs, NoiseMode::Sample { salt: 1 })
                .unwrap()
        );
        for (i, c) in confs.iter().enumerate() {
            assert_eq!(g.reform(c, NoiseMode::Sample { salt: 1 }).unwrap(), s1[i]);
        }
        let quiet = ConfidenceReformer { sigma: 0.0, ..g };
        assert_eq!(
            quiet
                .reform_batch(&confs, NoiseMode::Sample { salt: 1 })
                .unwrap(),
            a
        );
    }

    #[test]
    fn rejects_wrong_width() {
        let g = ConfidenceReformer::new(&cfg(3, 1.0, 0.1, 1)).unwrap();
        assert!(g
            .reform(&ConfidenceVector::uniform(4), NoiseMode::Zero)
            .is_err());
        let confs = random_confs(4, 4, 0);
        assert!(train_reformer_on(&confs, &cfg(3, 1.0, 0.1, 1)).is_err());
    }

    #[test]
    fn seed_depends_on_every_byte() {
        let a = ConfidenceVector::new(vec![0.25, 0.75]).unwrap();
        let b = ConfidenceVector::new(vec![0.75, 0.25]).unwrap();
        assert_ne!(noise_seed(&a, 0), noise_seed(&b, 0));
        assert_ne!(noise_seed(&a, 0), noise_seed(&a, 1));
    }
}
