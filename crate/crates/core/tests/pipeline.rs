//! The command pipeline on a small purchase-like experiment, through the
//! library and through the binary.

use std::path::Path;
use std::process::Command;

use purifier::attacks::AttackKind;
use purifier::data::{SplitPlan, SynthSpec};
use purifier::eval::{Cell, EvalReport};
use purifier::experiment::{
    cmd_attack, cmd_report, cmd_synth, cmd_train_purifier, cmd_train_target, run_all, DataConfig,
    ExperimentConfig, Layout, Selection,
};
use purifier::purifier::Arm;
use purifier::Error;

fn small(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(out);
    cfg.name = "small".into();
    cfg.seeds = vec![7];
    cfg.data = DataConfig::Synth(SynthSpec::purchase_like(1200, 3));
    cfg.split = SplitPlan {
        d1: 400,
        d2: 400,
        d3: 400,
        attacker_members: 200,
        attacker_nonmembers: 200,
        seed: 0,
    };
    cfg.target.fit.epochs = 30;
    cfg.purifier.cvae.fit.epochs = 20;
    cfg.attack_model.epochs = 10;
    cfg
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn pipeline_is_complete_deterministic_and_resumable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg_a = small(a.path());
    run_all(&cfg_a).unwrap();

    let report: EvalReport =
        serde_json::from_slice(&std::fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 3);
    for arm in Arm::ALL {
        for col in [
            "acc_test",
            "nsh",
            "mlleaks",
            "adaptive",
            "blindmi",
            "gap",
            "transfer_auc",
            "inversion_error",
        ] {
            assert!(
                matches!(report.cell(7, arm, col), Cell::Value(v) if v.is_finite()),
                "{col} {arm:?}"
            );
        }
        assert_eq!(report.cell(7, arm, "boundary"), Cell::Absent);
    }
    assert_eq!(report.cell(7, Arm::None, "dispersion_ratio"), Cell::Absent);
    let layout = Layout::new(a.path());
    for p in [
        layout.scatter(7, false),
        layout.scatter(7, true),
        layout.timings(),
        layout.bundle(7).join("bundle.json"),
    ] {
        assert!(p.exists(), "{}", p.display());
    }

    // a second output directory, built step by step, matches byte for byte
    let cfg_b = small(b.path());
    cmd_synth(&cfg_b).unwrap();
    cmd_train_target(&cfg_b).unwrap();
    cmd_train_purifier(&cfg_b).unwrap();
    for kind in cfg_b.attacks.clone() {
        cmd_attack(
            &cfg_b,
            Selection {
                arm: None,
                attack: Some(kind),
            },
        )
        .unwrap();
    }
    cmd_report(&cfg_b).unwrap();
    for f in ["report.json", "report.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }

    // rerunning writes nothing and changes nothing
    let before = tree(a.path());
    let again = run_all(&cfg_a).unwrap();
    assert!(again.written.is_empty(), "{:?}", again.written);
    assert_eq!(tree(a.path()), before);
}

#[test]
fn attack_before_training_is_a_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    assert!(matches!(
        cmd_attack(&cfg, Selection::default()),
        Err(Error::MissingArtifact(_))
    ));
    cmd_synth(&cfg).unwrap();
    let err = cmd_attack(&cfg, Selection::default()).unwrap_err();
    assert!(
        matches!(&err, Error::MissingArtifact(p) if p.ends_with("target/model-s7.prfm")),
        "{err}"
    );
    assert!(matches!(
        cmd_train_purifier(&cfg),
        Err(Error::MissingArtifact(_))
    ));
    assert!(matches!(cmd_report(&cfg), Err(Error::MissingArtifact(_))));
}

#[test]
fn unconfigured_selection_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.attacks = vec![AttackKind::Gap];
    cmd_synth(&cfg).unwrap();
    let sel = Selection {
        arm: None,
        attack: Some(AttackKind::Nsh),
    };
    assert!(matches!(cmd_attack(&cfg, sel), Err(Error::Config(_))));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_purifier"))
}

#[test]
fn binary_reports_errors_as_json_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(&cfg_path, small(Path::new("out")).to_toml().unwrap()).unwrap();
    let run = |args: &[&str]| {
        let o = bin()
            .arg(args[0])
            .arg("--config")
            .arg(&cfg_path)
            .args(&args[1..])
            .output()
            .unwrap();
        (
            o.status.code(),
            String::from_utf8(o.stdout).unwrap(),
            String::from_utf8(o.stderr).unwrap(),
        )
    };

    let (code, _, err) = run(&["attack", "--arm", "none"]);
    assert_eq!(code, Some(Error::MissingArtifact("x".into()).code()));
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "missing_artifact");

    let (code, out, _) = run(&["synth"]);
    assert_eq!(code, Some(0));
    assert!(out.contains("data/dataset.csv"));
    assert!(dir.path().join("out/data/splits-s7.json").exists());

    let (code, out, _) = run(&["synth", "--seed-override", "9"]);
    assert_eq!(code, Some(0));
    assert!(out.contains("splits-s9.json"));

    std::fs::write(dir.path().join("bad.toml"), "name = [").unwrap();
    let o = bin()
        .args(["synth", "--config"])
        .arg(dir.path().join("bad.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(Error::Config(String::new()).code()));

    // the stored CSV serves as input to a second experiment
    let mut csv_cfg = small(Path::new("from-csv"));
    csv_cfg.data = DataConfig::Csv {
        path: dir.path().join("out/data/dataset.csv"),
        schema: Default::default(),
    };
    std::fs::write(dir.path().join("csv.toml"), csv_cfg.to_toml().unwrap()).unwrap();
    let o = bin()
        .args(["synth", "--config"])
        .arg(dir.path().join("csv.toml"))
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        std::fs::read(dir.path().join("out/data/dataset.csv")).unwrap(),
        std::fs::read(dir.path().join("from-csv/data/dataset.csv")).unwrap()
    );
}

#[test]
fn mismatched_artifacts_are_dimension_errors() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg_a = small(a.path());
    cmd_synth(&cfg_a).unwrap();
    cmd_train_target(&cfg_a).unwrap();

    // 16 features instead of 64, with the 64-feature target copied in
    let mut cfg_b = small(b.path());
    cfg_b.data = DataConfig::Synth(SynthSpec::attribute_task(1200, 3));
    cmd_synth(&cfg_b).unwrap();
    let (from, to) = (
        Layout::new(a.path()).target_model(7),
        Layout::new(b.path()).target_model(7),
    );
    std::fs::create_dir_all(to.parent().unwrap()).unwrap();
    std::fs::copy(from, to).unwrap();
    let sel = Selection {
        arm: Some(Arm::None),
        attack: Some(AttackKind::Gap),
    };
    let err = cmd_attack(&cfg_b, sel).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)), "{err}");
    let codes = [
        err.code(),
        Error::MissingArtifact("x".into()).code(),
        Error::Config(String::new()).code(),
    ];
    assert!(codes[0] != codes[1] && codes[1] != codes[2] && codes[0] != codes[2]);
}
