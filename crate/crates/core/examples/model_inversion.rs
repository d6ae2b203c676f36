//! Reconstruct inputs from returned confidences, with and without the purifier.
//!
//!     cargo run --release --example model_inversion

use purifier::attacks::AttackKind;
use purifier::data::{synthesize, SynthSpec};
use purifier::experiment::{
    inversion_rows, run_attack, train_trial, AttackOutcome, DataConfig, ExperimentConfig,
};
use purifier::purifier::Arm;

fn main() -> purifier::Result<()> {
    let spec = SynthSpec::blended_clusters(6000, 0);
    let ds = synthesize(&spec)?;
    let mut cfg = ExperimentConfig::desk("unused");
    cfg.data = DataConfig::Synth(spec);
    let trial = train_trial(&cfg, &ds, 1)?;
    let (train, test) = inversion_rows(&trial.splits, 1);
    println!(
        "inversion model: {} training rows, {} test rows",
        train.len(),
        test.len()
    );
    let mut errors = Vec::new();
    for arm in Arm::ALL {
        let r = run_attack(
            &cfg,
            &ds,
            &trial.splits,
            &trial.target,
            trial.bundle(),
            arm,
            AttackKind::Inversion,
            1,
        )?;
        let AttackOutcome::Inversion(r) = r else {
            unreachable!()
        };
        println!("{:<9} reconstruction mse {:.4}", arm.name(), r.error);
        errors.push(r.error);
    }
    println!("full / none error ratio {:.3}", errors[2] / errors[0]);
    Ok(())
}
