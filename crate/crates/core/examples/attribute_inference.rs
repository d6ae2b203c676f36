//! Infer a five-valued sensitive attribute from returned confidences.
//!
//!     cargo run --release --example attribute_inference

use purifier::attacks::AttackKind;
use purifier::data::{synthesize, SynthSpec};
use purifier::experiment::{run_attack, train_trial, AttackOutcome, DataConfig, ExperimentConfig};
use purifier::purifier::Arm;

fn main() -> purifier::Result<()> {
    let spec = SynthSpec::attribute_task(6000, 0);
    let ds = synthesize(&spec)?;
    let mut cfg = ExperimentConfig::desk("unused");
    cfg.data = DataConfig::Synth(spec);
    let trial = train_trial(&cfg, &ds, 1)?;
    for arm in Arm::ALL {
        let r = run_attack(
            &cfg,
            &ds,
            &trial.splits,
            &trial.target,
            trial.bundle(),
            arm,
            AttackKind::Attribute,
            1,
        )?;
        let AttackOutcome::Attribute(r) = r else {
            unreachable!()
        };
        println!(
            "{:<9} attack accuracy {:.4} (chance {:.2})",
            arm.name(),
            r.accuracy,
            r.chance
        );
    }
    Ok(())
}
