use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::reformer::{train_reformer_on, ConfidenceReformer, CvaeConfig, NoiseMode};
use super::swapper::{
    build_index, compute_swap_rate, swap_label, KnnParams, PredictionIndex, SwapPlan,
};
use crate::confidence::ConfidenceVector;
use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::experiment::write_atomic;
use crate::nncore::format::{read_array, read_f32s, write_f32s};
use crate::nncore::{load_model, save_model, Matrix, Mlp};
use crate::target::{accuracy, predict_confidence_batch};

pub const INDEX_MAGIC: &[u8; 4] = b"PRFI";

/// Which parts of the defense are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Raw target confidences.
    None,
    /// Reformer only, no label swapping.
    Reformer,
    /// Reformer followed by the label swapper.
    Full,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::None, Arm::Reformer, Arm::Full];

    pub fn name(self) -> &'static str {
        match self {
            Arm::None => "none",
            Arm::Reformer => "reformer",
            Arm::Full => "full",
        }
    }

    pub fn flags(self) -> Flags {
        Flags {
            reformer_enabled: self != Arm::None,
            swapper_enabled: self == Arm::Full,
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Arm::None),
            "reformer" => Ok(Arm::Reformer),
            "full" => Ok(Arm::Full),
            other => Err(Error::Config(format!("unknown arm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub reformer_enabled: bool,
    pub swapper_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurifierConfig {
    pub cvae: CvaeConfig,
    #[serde(default)]
    pub knn: KnnParams,
    /// Seed of the swap-set draw.
    #[serde(default)]
    pub swap_seed: u64,
    /// Salt mixed into the per-query noise seed.
    #[serde(default)]
    pub noise_salt: u64,
}

impl PurifierConfig {
    pub fn new(classes: usize, seed: u64) -> Self {
        Self {
            cvae: CvaeConfig::new(classes, seed),
            knn: KnnParams::default(),
            swap_seed: seed ^ 0x5eed_5a9e,
            noise_salt: seed.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15,
        }
    }

    /// [`CvaeConfig::desk`] with the default index.
    pub fn desk(classes: usize, seed: u64) -> Self {
        Self {
            cvae: CvaeConfig::desk(classes, seed),
            ..Self::new(classes, seed)
        }
    }
}

/// A trained defense. Immutable after training; every method takes `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct PurifierBundle {
    pub reformer: ConfidenceReformer,
    pub index: PredictionIndex,
    pub swap_plan: SwapPlan,
    pub flags: Flags,
    pub noise_salt: u64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurifierReport {
    /// Unpurified target accuracy on the training rows; with `acc_test`,
    /// sets the swap rate.
    pub acc_train: f64,
    pub acc_test: f64,
    pub p_swap: f64,
    pub swap_set: usize,
    pub loss_curve: Vec<f64>,
    pub train_seconds: f64,
}

/// Trains the reformer on the reference partition's confidences, then fixes
/// the swap set from the training partition and indexes its confidences.
pub fn train_purifier(
    model: &Mlp<f32>,
    ds: &Dataset,
    splits: &Splits,
    cfg: &PurifierConfig,
) -> Result<(PurifierBundle, PurifierReport)> {
    train_purifier_on(model, ds, &splits.d1, &splits.d2, &splits.d3, cfg)
}

/// [`train_purifier`] over explicit training, reference and test rows.
pub fn train_purifier_on(
    model: &Mlp<f32>,
    ds: &Dataset,
    train: &[usize],
    reference: &[usize],
    test: &[usize],
    cfg: &PurifierConfig,
) -> Result<(PurifierBundle, PurifierReport)> {
    if cfg.cvae.classes != ds.k {
        return Err(Error::Dimension(format!(
            "reformer configured for {} classes, dataset has {}",
            cfg.cvae.classes, ds.k
        )));
    }
    let start = std::time::Instant::now();
    let reference = predict_confidence_batch(model, &ds.features(reference))?;
    let (reformer, curve) = train_reformer_on(&reference, &cfg.cvae)?;
    let acc_train = accuracy(model, ds, train)?;
    let acc_test = accuracy(model, ds, test)?;
    let p_swap = compute_swap_rate(acc_train, acc_test)?;
    let swap_plan = SwapPlan::select(train, p_swap, cfg.swap_seed)?;
    let index = build_index(model, ds, &swap_plan, cfg.knn)?;
    let report = PurifierReport {
        acc_train,
        acc_test,
        p_swap,
        swap_set: swap_plan.members.len(),
        loss_curve: curve,
        train_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((
        PurifierBundle {
            reformer,
            index,
            swap_plan,
            flags: Arm::Full.flags(),
            noise_salt: cfg.noise_salt,
            lambda: cfg.cvae.lambda,
        },
        report,
    ))
}

impl PurifierBundle {
    pub fn with_arm(&self, arm: Arm) -> Self {
        Self {
            flags: arm.flags(),
            ..self.clone()
        }
    }

    pub fn classes(&self) -> usize {
        self.reformer.classes()
    }

    /// Purified output for raw target confidences. A pure function of each
    /// input vector, so repeated queries return identical bytes.
    pub fn purify_confidences(&self, confs: &[ConfidenceVector]) -> Result<Vec<ConfidenceVector>> {
        let mut out = if self.flags.reformer_enabled {
            self.reformer.reform_batch(
                confs,
                NoiseMode::Sample {
                    salt: self.noise_salt,
                },
            )?
        } else {
            confs.to_vec()
        };
        if self.flags.swapper_enabled {
            for (c, p) in confs.iter().zip(out.iter_mut()) {
                if self.index.matches(c.probs())? {
                    *p = swap_label(p)?;
                }
            }
        }
        Ok(out)
    }

    pub fn purify_confidence(&self, c: &ConfidenceVector) -> Result<ConfidenceVector> {
        Ok(self.purify_confidences(std::slice::from_ref(c))?.remove(0))
    }

    /// Queries the target and purifies its answers.
    pub fn purify_batch(&self, model: &Mlp<f32>, x: &Matrix<f32>) -> Result<Vec<ConfidenceVector>> {
        self.purify_confidences(&predict_confidence_batch(model, x)?)
    }

    pub fn purify(&self, model: &Mlp<f32>, x: &[f64]) -> Result<ConfidenceVector> {
        Ok(self
            .purify_batch(model, &Matrix::from_f64_rows(&[x])?)?
            .remove(0))
    }

    /// Writes `encoder.prfm`, `decoder.prfm`, `index.prfi` and `bundle.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_model(&self.reformer.encoder, &dir.join("encoder.prfm"))?;
        save_model(&self.reformer.decoder, &dir.join("decoder.prfm"))?;
        let mut buf = Vec::new();
        write_index(&self.index, &mut buf)?;
        write_atomic(&dir.join("index.prfi"), &buf)?;
        let sidecar = Sidecar {
            swap_plan: self.swap_plan.clone(),
            flags: self.flags,
            knn: self.index.params,
            sigma: self.reformer.sigma,
            lambda: self.lambda,
            noise_salt: self.noise_salt,
        };
        write_atomic(
            &dir.join("bundle.json"),
            &serde_json::to_vec_pretty(&sidecar)?,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let side_path = dir.join("bundle.json");
        if !side_path.exists() {
            return Err(Error::MissingArtifact(side_path));
        }
        let side: Sidecar = serde_json::from_slice(&std::fs::read(&side_path)?)?;
        let reformer = ConfidenceReformer::from_parts(
            load_model(&dir.join("encoder.prfm"))?,
            load_model(&dir.join("decoder.prfm"))?,
            side.sigma,
        )?;
        let index_path = dir.join("index.prfi");
        if !index_path.exists() {
            return Err(Error::MissingArtifact(index_path));
        }
        let index = read_index(std::fs::File::open(&index_path)?, side.knn)?;
        if index.classes() != reformer.classes() {
            return Err(Error::Format(
                "index and reformer disagree on class count".into(),
            ));
        }
        Ok(Self {
            reformer,
            index,
            swap_plan: side.swap_plan,
            flags: side.flags,
            noise_salt: side.noise_salt,
            lambda: side.lambda,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    swap_plan: SwapPlan,
    flags: Flags,
    knn: KnnParams,
    sigma: f64,
    lambda: f64,
    noise_salt: u64,
}

/// `PRFI`, entry count u32, class count u32, then entries as f32 LE.
pub fn write_index<W: Write>(index: &PredictionIndex, mut w: W) -> Result<()> {
    w.write_all(INDEX_MAGIC)?;
    w.write_all(&(index.len() as u32).to_le_bytes())?;
    w.write_all(&(index.classes() as u32).to_le_bytes())?;
    for e in index.entries() {
        write_f32s(&mut w, e)?;
    }
    Ok(())
}

pub fn read_index<R: Read>(mut r: R, params: KnnParams) -> Result<PredictionIndex> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != INDEX_MAGIC {
        return Err(Error::Format(format!("bad index magic {magic:?}")));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let k = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let entries = (0..n)
        .map(|_| read_f32s::<f64, _>(&mut r, k))
        .collect::<Result<Vec<_>>>()?;
    PredictionIndex::new(k, entries, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synthesize, SplitPlan, SynthSpec};
    use crate::target::{train_target, ClassifierConfig};

    fn small_setup() -> (Dataset, Splits, Mlp<f32>) {
        let ds = synthesize(&SynthSpec::purchase_like(600, 4)).unwrap();
        let splits = split(
            &ds,
            &SplitPlan {
                d1: 200,
                d2: 200,
                d3: 200,
                attacker_members: 100,
                attacker_nonmembers: 100,
                seed: 1,
            },
        )
        .unwrap();
        let mut cfg = ClassifierConfig::desk_overfit(2);
        cfg.fit.epochs = 30;
        let (model, _) = train_target(&cfg, &ds, &splits.d1, &splits.d3).unwrap();
        (ds, splits, model)
    }

    fn small_purifier_cfg(k: usize) -> PurifierConfig {
        let mut cfg = PurifierConfig::new(k, 3);
        cfg.cvae.fit.epochs = 5;
        cfg
    }

    #[test]
    fn end_to_end_small() {
        let (ds, splits, model) = small_setup();
        let (bundle, report) =
            train_purifier(&model, &ds, &splits, &small_purifier_cfg(ds.k)).unwrap();
        assert_eq!(bundle.index.len(), report.swap_set);
        assert_eq!(
            report.swap_set,
            super::super::swapper::round_half_up(report.p_swap * 200.0)
        );
        // index entries are the raw confidences of the swap set
        let raw =
            predict_confidence_batch(&model, &ds.features(&bundle.swap_plan.members)).unwrap();
        for (e, c) in bundle.index.entries().iter().zip(&raw) {
            assert_eq!(&e[..], c.probs());
        }
        // swap-set rows change label (absent top-2 ties); everything is replayable
        let x = ds.features::<f32>(&bundle.swap_plan.members);
        let out = bundle.purify_batch(&model, &x).unwrap();
        for ((p, c), &row) in out.iter().zip(&raw).zip(&bundle.swap_plan.members) {
            let reformed = bundle.with_arm(Arm::Reformer).purify_confidence(c).unwrap();
            let (a, b) = reformed.top_two().unwrap();
            if reformed.probs()[a] != reformed.probs()[b] {
                assert_ne!(p.argmax(), reformed.argmax());
            }
            assert_eq!(p, &bundle.purify(&model, &ds.point(row).features).unwrap());
        }
        let none = bundle.with_arm(Arm::None).purify_batch(&model, &x).unwrap();
        assert_eq!(none, raw);
    }

    #[test]
    fn save_load_round_trip() {
        let (ds, splits, model) = small_setup();
        let (bundle, _) = train_purifier(&model, &ds, &splits, &small_purifier_cfg(ds.k)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = PurifierBundle::load(dir.path()).unwrap();
        let x = ds.features::<f32>(&splits.d3[..50]);
        assert_eq!(
            bundle.purify_batch(&model, &x).unwrap(),
            back.purify_batch(&model, &x).unwrap()
        );
        let bytes = std::fs::read(dir.path().join("index.prfi")).unwrap();
        assert_eq!(&bytes[..4], b"PRFI");
        assert_eq!(bytes.len(), 12 + 4 * bundle.index.len() * ds.k);
        std::fs::remove_file(dir.path().join("bundle.json")).unwrap();
        assert!(matches!(
            PurifierBundle::load(dir.path()),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn mismatched_class_count_rejected() {
        let (ds, splits, model) = small_setup();
        assert!(train_purifier(&model, &ds, &splits, &small_purifier_cfg(ds.k + 1)).is_err());
    }

    #[test]
    fn arm_parsing() {
        for arm in Arm::ALL {
            assert_eq!(arm.name().parse::<Arm>().unwrap(), arm);
        }
        assert!("both".parse::<Arm>().is_err());
    }
}
