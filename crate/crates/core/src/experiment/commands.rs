use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::*;
use super::write_atomic;
use crate::attacks::AttackKind;
use crate::data::{load_csv, save_csv, split, CsvSchema, Dataset, Splits};
use crate::error::{Error, Result};
use crate::eval::{
    assemble_report, efficiency, latent_scatter, write_scatter_csv, Efficiency, EvalReport,
    Measurement, ReportSpec,
};
use crate::nncore::{load_model, save_model, Mlp};
use crate::purifier::{train_purifier, Arm, NoiseMode, PurifierBundle, PurifierReport};
use crate::target::{predict_confidence_batch, train_target, TrainReport};

/// Environment variable holding the worker thread count for `attack`.
pub const THREADS_ENV: &str = "PURIFIER_THREADS";

/// Where every artifact of an experiment lives. Per-seed files embed the
/// seed; attack results sit in one directory per arm.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("data/dataset.csv")
    }

    pub fn dataset_meta(&self) -> PathBuf {
        self.root.join("data/dataset.json")
    }

    pub fn splits(&self, seed: u64) -> PathBuf {
        self.root.join(format!("data/splits-s{seed}.json"))
    }

    pub fn target_model(&self, seed: u64) -> PathBuf {
        self.root.join(format!("target/model-s{seed}.prfm"))
    }

    pub fn target_report(&self, seed: u64) -> PathBuf {
        self.root.join(format!("target/report-s{seed}.json"))
    }

    pub fn bundle(&self, seed: u64) -> PathBuf {
        self.root.join(format!("purifier/bundle-s{seed}"))
    }

    pub fn purifier_report(&self, seed: u64) -> PathBuf {
        self.root.join(format!("purifier/report-s{seed}.json"))
    }

    pub fn scatter(&self, seed: u64, noisy: bool) -> PathBuf {
        let mode = if noisy { "noisy" } else { "clean" };
        self.root
            .join(format!("purifier/scatter-{mode}-s{seed}.csv"))
    }

    pub fn attack(&self, arm: Arm, kind: AttackKind, seed: u64) -> PathBuf {
        self.root
            .join(format!("{}/{}-s{seed}.json", arm.name(), kind.name()))
    }

    pub fn diagnostics(&self, arm: Arm, seed: u64) -> PathBuf {
        self.root
            .join(format!("{}/diagnostics-s{seed}.json", arm.name()))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }
}

/// What a command wrote and what it found already in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub kept: Vec<PathBuf>,
}

impl Outcome {
    fn merge(&mut self, other: Outcome) {
        self.written.extend(other.written);
        self.kept.extend(other.kept);
    }
}

/// Name and schema of the stored rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub schema: CsvSchema,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    write_atomic(path, &v)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Whether `path` is already present; records it as kept if so.
fn present(path: &Path, out: &mut Outcome) -> bool {
    let there = path.exists();
    if there {
        out.kept.push(path.to_path_buf());
    }
    there
}

/// The stored rows, as later commands see them.
pub fn load_stored_dataset(layout: &Layout) -> Result<Dataset> {
    let meta: DatasetMeta = read_json(&layout.dataset_meta())?;
    let mut ds = load_csv(&layout.dataset(), &meta.schema)?;
    ds.name = meta.name;
    Ok(ds)
}

/// Writes the rows and one split manifest per seed.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Outcome> {
    let layout = Layout::new(&cfg.out);
    let mut out = Outcome::default();
    if !present(&layout.dataset_meta(), &mut out) {
        let ds = load_dataset(cfg)?;
        save_csv(&ds, &layout.dataset())?;
        let meta = DatasetMeta {
            name: ds.name.clone(),
            schema: CsvSchema {
                label_column: "label".into(),
                sensitive_column: ds.s.map(|_| "sensitive".into()),
                classes: Some(ds.k),
                sensitive_classes: ds.s,
            },
        };
        // the meta file marks the dataset complete, so it goes last
        write_json(&layout.dataset_meta(), &meta)?;
        out.written
            .extend([layout.dataset(), layout.dataset_meta()]);
    }
    let ds = load_stored_dataset(&layout)?;
    for &seed in &cfg.seeds {
        let path = layout.splits(seed);
        if !present(&path, &mut out) {
            split(&ds, &split_plan(cfg, seed))?.save_manifest(&path)?;
            out.written.push(path);
        }
    }
    Ok(out)
}

fn load_splits(layout: &Layout, ds: &Dataset, seed: u64) -> Result<Splits> {
    let splits = Splits::load_manifest(&layout.splits(seed))?;
    let max = splits
        .manifest()
        .values()
        .flat_map(|v| v.iter())
        .copied()
        .max()
        .unwrap_or(0);
    if max >= ds.len() {
        return Err(Error::Dimension(format!(
            "split row {max} beyond the {} stored rows",
            ds.len()
        )));
    }
    Ok(splits)
}

pub fn cmd_train_target(cfg: &ExperimentConfig) -> Result<Outcome> {
    let layout = Layout::new(&cfg.out);
    let ds = load_stored_dataset(&layout)?;
    let mut out = Outcome::default();
    for &seed in &cfg.seeds {
        let (model_path, report_path) = (layout.target_model(seed), layout.target_report(seed));
        if present(&report_path, &mut out) {
            continue;
        }
        let splits = load_splits(&layout, &ds, seed)?;
        let (model, report) = train_target(&target_config(cfg, seed), &ds, &splits.d1, &splits.d3)?;
        save_model(&model, &model_path)?;
        write_json(&report_path, &report)?;
        out.written.extend([model_path, report_path]);
    }
    Ok(out)
}

pub fn cmd_train_purifier(cfg: &ExperimentConfig) -> Result<Outcome> {
    let layout = Layout::new(&cfg.out);
    let ds = load_stored_dataset(&layout)?;
    let mut out = Outcome::default();
    for &seed in &cfg.seeds {
        let report_path = layout.purifier_report(seed);
        if present(&report_path, &mut out) {
            continue;
        }
        let splits = load_splits(&layout, &ds, seed)?;
        let target: Mlp<f32> = load_model(&layout.target_model(seed))?;
        let (bundle, report) =
            train_purifier(&target, &ds, &splits, &purifier_config(cfg, ds.k, seed))?;
        bundle.save(&layout.bundle(seed))?;
        write_json(&report_path, &report)?;
        out.written.extend([layout.bundle(seed), report_path]);
    }
    Ok(out)
}

/// Restricts `attack` to one arm and/or one attack.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Selection {
    pub arm: Option<Arm>,
    pub attack: Option<AttackKind>,
}

/// Thread count from [`THREADS_ENV`], or rayon's default when unset.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

struct SeedArtifacts {
    splits: Splits,
    target: Mlp<f32>,
    bundle: Option<PurifierBundle>,
}

fn load_seed(layout: &Layout, ds: &Dataset, seed: u64, need_bundle: bool) -> Result<SeedArtifacts> {
    let splits = load_splits(layout, ds, seed)?;
    let target = load_model(&layout.target_model(seed))?;
    let bundle = if need_bundle {
        Some(PurifierBundle::load(&layout.bundle(seed))?)
    } else {
        None
    };
    Ok(SeedArtifacts {
        splits,
        target,
        bundle,
    })
}

/// Runs every selected (seed, arm, attack) not already on disk. Independent
/// attacks run in parallel on a pool sized by [`THREADS_ENV`].
pub fn cmd_attack(cfg: &ExperimentConfig, sel: Selection) -> Result<Outcome> {
    let layout = Layout::new(&cfg.out);
    let ds = load_stored_dataset(&layout)?;
    let arms: Vec<Arm> = cfg
        .arms
        .iter()
        .copied()
        .filter(|a| sel.arm.is_none_or(|s| s == *a))
        .collect();
    let attacks: Vec<AttackKind> = cfg
        .attacks
        .iter()
        .copied()
        .filter(|k| sel.attack.is_none_or(|s| s == *k))
        .collect();
    if let Some(a) = sel.arm.filter(|a| !cfg.arms.contains(a)) {
        return Err(Error::Config(format!("arm {} is not configured", a.name())));
    }
    if let Some(k) = sel.attack.filter(|k| !cfg.attacks.contains(k)) {
        return Err(Error::Config(format!(
            "attack {} is not configured",
            k.name()
        )));
    }
    let mut out = Outcome::default();
    let mut seeds = Vec::new();
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        let pending: Vec<(Arm, AttackKind)> = arms
            .iter()
            .flat_map(|&a| attacks.iter().map(move |&k| (a, k)))
            .filter(|&(a, k)| !present(&layout.attack(a, k, seed), &mut out))
            .collect();
        if pending.is_empty() {
            continue;
        }
        let need_bundle = pending.iter().any(|&(a, _)| a != Arm::None);
        seeds.push(load_seed(&layout, &ds, seed, need_bundle)?);
        let slot = seeds.len() - 1;
        jobs.extend(pending.into_iter().map(|(a, k)| (slot, seed, a, k)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads_from_env()?)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let written: Vec<PathBuf> = pool.install(|| {
        jobs.par_iter()
            .map(|&(slot, seed, arm, kind)| {
                let a = &seeds[slot];
                let r = run_attack(
                    cfg,
                    &ds,
                    &a.splits,
                    &a.target,
                    a.bundle.as_ref(),
                    arm,
                    kind,
                    seed,
                )?;
                let path = layout.attack(arm, kind, seed);
                write_json(&path, &r)?;
                Ok(path)
            })
            .collect::<Result<_>>()
    })?;
    out.written.extend(written);
    Ok(out)
}

/// Training and answering times of one seed; informational only, so kept
/// out of the deterministic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTimings {
    pub seed: u64,
    pub target_train_seconds: f64,
    pub purifier_train_seconds: Option<f64>,
    /// Seconds to answer the test partition, per arm.
    pub answer_seconds: Vec<(Arm, f64)>,
    /// Purifier over target, for training and for answering with the full arm.
    pub efficiency: Option<Efficiency>,
    /// Attack wall clocks, by arm and attack name.
    pub attacks: Vec<(Arm, String, f64)>,
}

fn diagnostics_for(
    cfg: &ExperimentConfig,
    layout: &Layout,
    ds: &Dataset,
    seed: u64,
    out: &mut Outcome,
) -> Result<Vec<Measurement>> {
    let mut ms = Vec::new();
    let mut loaded: Option<SeedArtifacts> = None;
    for &arm in &cfg.arms {
        let path = layout.diagnostics(arm, seed);
        let diag: ArmDiagnostics = if present(&path, out) {
            read_json(&path)?
        } else {
            if loaded.is_none() {
                loaded = Some(load_seed(
                    layout,
                    ds,
                    seed,
                    cfg.arms.iter().any(|&a| a != Arm::None),
                )?);
            }
            let a = loaded.as_ref().expect("loaded above");
            let d = arm_diagnostics(
                ds,
                &a.splits,
                &a.target,
                a.bundle.as_ref(),
                arm,
                cfg.eval.bins,
            )?;
            write_json(&path, &d)?;
            out.written.push(path);
            d
        };
        ms.extend(diag.measurements(seed, arm));
    }
    Ok(ms)
}

fn write_scatter(layout: &Layout, ds: &Dataset, seed: u64, out: &mut Outcome) -> Result<()> {
    let paths = [layout.scatter(seed, false), layout.scatter(seed, true)];
    if paths.iter().all(|p| p.exists()) || !layout.bundle(seed).exists() {
        return Ok(());
    }
    let a = load_seed(layout, ds, seed, true)?;
    let bundle = a.bundle.as_ref().expect("bundle requested");
    let rows: Vec<usize> = a.splits.d1.iter().chain(&a.splits.d3).copied().collect();
    let is_member: Vec<bool> = rows
        .iter()
        .map(|&r| a.splits.is_member(r) == Some(true))
        .collect();
    let confs = predict_confidence_batch(&a.target, &ds.features(&rows))?;
    let labels = ds.labels(&rows);
    for (path, mode) in paths.iter().zip([
        NoiseMode::Zero,
        NoiseMode::Sample {
            salt: bundle.noise_salt,
        },
    ]) {
        if !present(path, out) {
            write_scatter_csv(
                &latent_scatter(&bundle.reformer, &confs, &labels, &is_member, mode)?,
                path,
            )?;
            out.written.push(path.clone());
        }
    }
    Ok(())
}

fn timings_for(
    cfg: &ExperimentConfig,
    layout: &Layout,
    ds: &Dataset,
    seed: u64,
) -> Result<SeedTimings> {
    let target: TrainReport = read_json(&layout.target_report(seed))?;
    let purifier: Option<PurifierReport> = read_json(&layout.purifier_report(seed)).ok();
    let a = load_seed(layout, ds, seed, purifier.is_some())?;
    let mut answer_seconds = Vec::new();
    for &arm in &cfg.arms {
        if arm != Arm::None && a.bundle.is_none() {
            continue;
        }
        let t = Instant::now();
        arm_outputs(ds, &a.target, a.bundle.as_ref(), arm, &a.splits.d3)?;
        answer_seconds.push((arm, t.elapsed().as_secs_f64()));
    }
    let answer = |arm| {
        answer_seconds
            .iter()
            .find(|(a, _)| *a == arm)
            .map(|(_, s)| *s)
    };
    let eff = match (&purifier, answer(Arm::None), answer(Arm::Full)) {
        (Some(p), Some(t0), Some(t1)) => {
            efficiency((target.train_seconds, t0), (p.train_seconds, t1)).ok()
        }
        _ => None,
    };
    let mut attacks = Vec::new();
    for &arm in &cfg.arms {
        for &k in &cfg.attacks {
            if let Ok(r) = read_json::<AttackOutcome>(&layout.attack(arm, k, seed)) {
                attacks.push((arm, k.name().to_string(), r.wall_clock()));
            }
        }
    }
    Ok(SeedTimings {
        seed,
        target_train_seconds: target.train_seconds,
        purifier_train_seconds: purifier.map(|p| p.train_seconds),
        answer_seconds,
        efficiency: eff,
        attacks,
    })
}

/// The table of every seed, arm and column present on disk. Cells whose
/// attack has not been run are marked absent.
pub fn build_report(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<EvalReport> {
    let layout = Layout::new(&cfg.out);
    let ds = load_stored_dataset(&layout)?;
    let mut ms = Vec::new();
    for &seed in &cfg.seeds {
        let target = layout.target_model(seed);
        if !target.exists() {
            return Err(Error::MissingArtifact(target));
        }
        ms.extend(diagnostics_for(cfg, &layout, &ds, seed, out)?);
        for &arm in &cfg.arms {
            for &k in &cfg.attacks {
                let path = layout.attack(arm, k, seed);
                if path.exists() {
                    ms.extend(read_json::<AttackOutcome>(&path)?.measurements(seed, arm));
                }
            }
        }
    }
    let spec = ReportSpec {
        experiment: cfg.name.clone(),
        dataset: ds.name.clone(),
        seeds: cfg.seeds.clone(),
        arms: cfg.arms.clone(),
        columns: report_columns(cfg),
    };
    assemble_report(&spec, &ms)
}

/// Writes `report.json`, `report.csv`, `timings.json` and, when enabled,
/// latent scatter files.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Outcome> {
    let layout = Layout::new(&cfg.out);
    let mut out = Outcome::default();
    if present(&layout.report(), &mut out) {
        return Ok(out);
    }
    let report = build_report(cfg, &mut out)?;
    let ds = load_stored_dataset(&layout)?;
    if cfg.eval.scatter {
        for &seed in &cfg.seeds {
            write_scatter(&layout, &ds, seed, &mut out)?;
        }
    }
    if !present(&layout.timings(), &mut out) {
        let timings = cfg
            .seeds
            .iter()
            .map(|&s| timings_for(cfg, &layout, &ds, s))
            .collect::<Result<Vec<_>>>()?;
        write_json(&layout.timings(), &timings)?;
        out.written.push(layout.timings());
    }
    // the JSON report goes last: its presence marks the run complete
    write_atomic(&layout.root.join("report.csv"), &report.to_csv()?)?;
    write_atomic(&layout.report(), &report.to_json()?)?;
    out.written
        .extend([layout.root.join("report.csv"), layout.report()]);
    Ok(out)
}

/// Every command in order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = cmd_synth(cfg)?;
    out.merge(cmd_train_target(cfg)?);
    if cfg.arms.iter().any(|&a| a != Arm::None) {
        out.merge(cmd_train_purifier(cfg)?);
    }
    out.merge(cmd_attack(cfg, Selection::default())?);
    out.merge(cmd_report(cfg)?);
    Ok(out)
}
