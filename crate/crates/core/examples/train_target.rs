//! Train the overfitting target classifier and save it in the binary model format.
//!
//!     cargo run --release --example train_target

use purifier::data::{split, synthesize, SplitPlan, SynthSpec};
use purifier::nncore::{load_model, save_model, Mlp};
use purifier::target::{accuracy, train_target, ClassifierConfig};

fn main() -> purifier::Result<()> {
    let ds = synthesize(&SynthSpec::purchase_like(6000, 0))?;
    let splits = split(&ds, &SplitPlan::desk(1))?;
    let cfg = ClassifierConfig::desk_overfit(2);
    let (model, report) = train_target(&cfg, &ds, &splits.d1, &splits.d3)?;
    let curve = &report.loss_curve;
    println!(
        "loss {:.3} -> {:.3} over {} epochs",
        curve[0],
        curve[curve.len() - 1],
        curve.len()
    );
    println!(
        "train accuracy {:.4}, test accuracy {:.4}, overfit gap met: {:?} ({:.1}s)",
        report.acc_train, report.acc_test, report.overfit_gap_met, report.train_seconds
    );

    let path = std::env::temp_dir().join("purifier-target.prfm");
    save_model(&model, &path)?;
    let back: Mlp<f32> = load_model(&path)?;
    println!(
        "reloaded from {}: test accuracy {:.4}",
        path.display(),
        accuracy(&back, &ds, &splits.d3)?
    );
    Ok(())
}
