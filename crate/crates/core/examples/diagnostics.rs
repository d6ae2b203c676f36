//! Member/non-member histogram gaps, latent dispersion and scatter export.
//!
//!     cargo run --release --example diagnostics -- /tmp/scatter.csv

use purifier::data::{synthesize, SynthSpec};
use purifier::eval::{latent_scatter, write_scatter_csv};
use purifier::experiment::{arm_diagnostics, train_trial, ExperimentConfig};
use purifier::purifier::{Arm, NoiseMode};
use purifier::target::predict_confidence_batch;

fn main() -> purifier::Result<()> {
    let ds = synthesize(&SynthSpec::purchase_like(6000, 0))?;
    let cfg = ExperimentConfig::desk("unused");
    let trial = train_trial(&cfg, &ds, 1)?;
    println!(
        "{:<9} {:>8} {:>8} {:>8} {:>8} {:>10}",
        "arm", "conf max", "conf avg", "unc max", "unc avg", "dispersion"
    );
    for arm in Arm::ALL {
        let d = arm_diagnostics(
            &ds,
            &trial.splits,
            &trial.target,
            trial.bundle(),
            arm,
            cfg.eval.bins,
        )?;
        let g = d.gap_stats;
        let disp = d
            .dispersion_ratio
            .map_or("-".to_string(), |v| format!("{v:.1}"));
        println!(
            "{:<9} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10}",
            arm.name(),
            g.confidence.max,
            g.confidence.avg,
            g.uncertainty.max,
            g.uncertainty.avg,
            disp
        );
    }

    if let Some(path) = std::env::args().nth(1) {
        let bundle = trial.bundle().unwrap();
        let rows: Vec<usize> = trial.splits.d1[..500]
            .iter()
            .chain(&trial.splits.d3[..500])
            .copied()
            .collect();
        let is_member: Vec<bool> = (0..rows.len()).map(|i| i < 500).collect();
        let confs = predict_confidence_batch(&trial.target, &ds.features(&rows))?;
        let mode = NoiseMode::Sample {
            salt: bundle.noise_salt,
        };
        let points = latent_scatter(
            &bundle.reformer,
            &confs,
            &ds.labels(&rows),
            &is_member,
            mode,
        )?;
        write_scatter_csv(&points, path.as_ref())?;
        println!("wrote {} latent points to {path}", points.len());
    }
    Ok(())
}
