use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataPoint, Dataset};
use crate::error::{Error, Result};

/// Per-class feature generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Isotropic Gaussian clusters. Class means sit at distance `separation / 2`
    /// from the origin (antipodal when `k = 2`), noise has std `scale`.
    Gaussian { separation: f64, scale: f64 },
    /// Binary features. Class `c` turns feature `i` on with probability
    /// `sigmoid(contrast * u[c][i])`, `u ~ N(0, 1)`.
    Bernoulli { contrast: f64 },
}

/// A categorical attribute drawn independently of the label that scales the
/// class signal: group `g` multiplies the generator's signal by
/// `1 - spread * (s - 1 - g) / (s - 1)`, so group `s - 1` keeps full strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub s: usize,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub generator: Generator,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub sensitive: Option<SensitiveSpec>,
    /// Each point mixes its class parameters with those of one other random
    /// class, with weight drawn uniformly from `[0, blend]`.
    #[serde(default)]
    pub blend: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 20-class, 64 binary-feature task sized for a CPU run.
    pub fn purchase_like(n: usize, seed: u64) -> Self {
        Self {
            name: "purchase-like".into(),
            n,
            k: 20,
            d: 64,
            generator: Generator::Bernoulli { contrast: 1.0 },
            label_noise: 0.0,
            sensitive: None,
            blend: 0.0,
            seed,
        }
    }

    /// Continuous 20-class task whose points resemble a second class to a
    /// varying degree, so the confidence vector says more about a point than
    /// its class.
    pub fn blended_clusters(n: usize, seed: u64) -> Self {
        Self {
            name: "blended-clusters".into(),
            n,
            k: 20,
            d: 64,
            generator: Generator::Gaussian {
                separation: 12.0,
                scale: 0.3,
            },
            label_noise: 0.0,
            sensitive: None,
            blend: 0.6,
            seed,
        }
    }

    /// Binary task with a five-valued attribute that modulates the class signal.
    pub fn attribute_task(n: usize, seed: u64) -> Self {
        Self {
            name: "attribute".into(),
            n,
            k: 2,
            d: 16,
            generator: Generator::Gaussian {
                separation: 6.0,
                scale: 1.0,
            },
            label_noise: 0.0,
            sensitive: Some(SensitiveSpec { s: 5, spread: 1.0 }),
            blend: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.k
            )));
        }
        if self.d < 2 {
            return Err(Error::Config(format!(
                "need at least 2 features, got {}",
                self.d
            )));
        }
        if self.k > self.n {
            return Err(Error::Degenerate(format!(
                "{} classes for {} points",
                self.k, self.n
            )));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::Config(format!(
                "label noise {} outside [0, 1)",
                self.label_noise
            )));
        }
        match &self.generator {
            Generator::Gaussian { separation, scale } if !(*separation >= 0.0 && *scale > 0.0) => {
                return Err(Error::Config(
                    "gaussian generator needs separation >= 0 and scale > 0".into(),
                ))
            }
            Generator::Bernoulli { contrast } if !contrast.is_finite() => {
                return Err(Error::Config("bernoulli contrast must be finite".into()))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(Error::Config(format!(
                "blend {} outside [0, 1]",
                self.blend
            )));
        }
        if let Some(s) = &self.sensitive {
            if s.s < 2 || !(0.0..=1.0).contains(&s.spread) {
                return Err(Error::Config(
                    "sensitive attribute needs s >= 2 and spread in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Deterministic per seed. Generator components are balanced within one;
/// label noise then reassigns a fraction of labels to a different class.
pub fn synthesize(spec: &SynthSpec) -> Result<Dataset> {
    synthesize_with_components(spec).map(|(ds, _)| ds)
}

/// Like [`synthesize`], also returning each point's generator component.
pub fn synthesize_with_components(spec: &SynthSpec) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, d) = (spec.k, spec.d);

    // class parameters first so they depend only on the seed, k and d
    let class_params: Vec<Vec<f64>> = match spec.generator {
        Generator::Gaussian { separation, .. } => {
            let mut means = Vec::with_capacity(k);
            for c in 0..k {
                if k == 2 && c == 1 {
                    let m: Vec<f64> = means
                        .first()
                        .map(|m: &Vec<f64>| m.iter().map(|v| -v).collect())
                        .unwrap();
                    means.push(m);
                    continue;
                }
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                means.push(v.iter().map(|x| x / norm * separation / 2.0).collect());
            }
            means
        }
        Generator::Bernoulli { .. } => (0..k)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect(),
    };

    let mut components: Vec<usize> = (0..spec.n).map(|i| i % k).collect();
    components.shuffle(&mut rng);

    let mut points = Vec::with_capacity(spec.n);
    for &c in &components {
        let group = spec.sensitive.as_ref().map(|s| rng.random_range(0..s.s));
        let amplitude = match (&spec.sensitive, group) {
            (Some(s), Some(g)) => 1.0 - s.spread * (s.s - 1 - g) as f64 / (s.s - 1) as f64,
            _ => 1.0,
        };
        let mixed;
        let params = if spec.blend > 0.0 {
            let other = (c + rng.random_range(1..k)) % k;
            let w = rng.random::<f64>() * spec.blend;
            mixed = class_params[c]
                .iter()
                .zip(&class_params[other])
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect::<Vec<f64>>();
            &mixed
        } else {
            &class_params[c]
        };
        let features = match spec.generator {
            Generator::Gaussian { scale, .. } => {
                let noise = Normal::new(0.0, scale).expect("validated scale");
                params
                    .iter()
                    .map(|&m| amplitude * m + noise.sample(&mut rng))
                    .collect()
            }
            Generator::Bernoulli { contrast } => params
                .iter()
                .map(|&u| {
                    let p = 1.0 / (1.0 + (-contrast * amplitude * u).exp());
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        };
        let mut label = c;
        if spec.label_noise > 0.0 && rng.random::<f64>() < spec.label_noise {
            label = (c + rng.random_range(1..k)) % k;
        }
        points.push(DataPoint {
            features,
            label,
            sensitive: group,
        });
    }
    let ds = Dataset::new(
        spec.name.clone(),
        k,
        spec.sensitive.as_ref().map(|s| s.s),
        points,
    )?;
    Ok((ds, components))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(n: usize) -> SynthSpec {
        SynthSpec {
            name: "blobs".into(),
            n,
            k: 2,
            d: 2,
            generator: Generator::Gaussian {
                separation: 1.0,
                scale: 0.1,
            },
            label_noise: 0.0,
            sensitive: None,
            blend: 0.0,
            seed: 11,
        }
    }

    /// Perceptron run to convergence: an independent linear separability oracle.
    fn linearly_separable(ds: &Dataset) -> bool {
        let mut w = vec![0.0; ds.d + 1];
        for _ in 0..1000 {
            let mut mistakes = 0;
            for p in ds.points() {
                let y = if p.label == 1 { 1.0 } else { -1.0 };
                let s: f64 = w[0]
                    + p.features
                        .iter()
                        .zip(&w[1..])
                        .map(|(x, w)| x * w)
                        .sum::<f64>();
                if y * s <= 0.0 {
                    mistakes += 1;
                    w[0] += y;
                    for (wi, x) in w[1..].iter_mut().zip(&p.features) {
                        *wi += y * x;
                    }
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn separated_blobs_are_linearly_separable() {
        assert!(linearly_separable(&synthesize(&two_blobs(100)).unwrap()));
    }

    #[test]
    fn deterministic_and_balanced() {
        let spec = SynthSpec::purchase_like(203, 5);
        let a = synthesize(&spec).unwrap();
        assert_eq!(a, synthesize(&spec).unwrap());
        let mut counts = vec![0usize; spec.k];
        for p in a.points() {
            counts[p.label] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
        assert!(a
            .points()
            .iter()
            .all(|p| p.features.iter().all(|&v| v == 0.0 || v == 1.0)));
    }

    #[test]
    fn noise_free_labels_equal_components() {
        let (ds, comps) = synthesize_with_components(&SynthSpec::purchase_like(300, 8)).unwrap();
        assert_eq!(ds.labels(&ds.all_indices()), comps);

        let noisy = SynthSpec {
            label_noise: 0.3,
            ..SynthSpec::purchase_like(2000, 8)
        };
        let (ds, comps) = synthesize_with_components(&noisy).unwrap();
        let flipped = ds
            .points()
            .iter()
            .zip(&comps)
            .filter(|(p, &c)| p.label != c)
            .count();
        assert!((500..700).contains(&flipped), "{flipped}");
    }

    #[test]
    fn sensitive_attribute_is_attached() {
        let ds = synthesize(&SynthSpec::attribute_task(500, 2)).unwrap();
        assert_eq!(ds.s, Some(5));
        let groups = ds.sensitive(&ds.all_indices()).unwrap();
        for g in 0..5 {
            assert!(groups.iter().filter(|&&v| v == g).count() > 60);
        }
    }

    #[test]
    fn blended_points_lie_between_class_means() {
        // antipodal means +-m with |m| = 1 and almost no noise: a class-c
        // point is (1 - 2w) m_c with w in [0, 0.5]
        let spec = SynthSpec {
            d: 3,
            generator: Generator::Gaussian {
                separation: 2.0,
                scale: 1e-9,
            },
            blend: 0.5,
            ..two_blobs(400)
        };
        let ds = synthesize(&spec).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in 0..2 {
            let pts: Vec<&DataPoint> = ds.points().iter().filter(|p| p.label == c).collect();
            let anchor = pts
                .iter()
                .max_by(|a, b| norm(&a.features).total_cmp(&norm(&b.features)))
                .unwrap();
            assert!((norm(&anchor.features) - 1.0).abs() < 0.02);
            for p in &pts {
                let dot: f64 = p
                    .features
                    .iter()
                    .zip(&anchor.features)
                    .map(|(a, b)| a * b)
                    .sum();
                assert!(dot >= -1e-6 && norm(&p.features) <= 1.0 + 1e-6);
            }
            assert!(pts.iter().any(|p| norm(&p.features) < 0.2));
        }
        assert!(synthesize(&SynthSpec { blend: 1.5, ..spec }).is_err());
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(matches!(
            synthesize(&two_blobs(1)),
            Err(Error::Degenerate(_))
        ));
        assert!(synthesize(&SynthSpec {
            k: 1,
            ..two_blobs(10)
        })
        .is_err());
        assert!(synthesize(&SynthSpec {
            d: 1,
            ..two_blobs(10)
        })
        .is_err());
        assert!(synthesize(&SynthSpec {
            label_noise: 1.0,
            ..two_blobs(10)
        })
        .is_err());
    }
}
