//! Train the purifier behind a target and look at what each arm returns for a
//! swapped member, an ordinary member and a non-member.
//!
//!     cargo run --release --example purify

use purifier::data::{split, synthesize, SplitPlan, SynthSpec};
use purifier::purifier::{train_purifier, Arm, PurifierBundle, PurifierConfig};
use purifier::target::{predict_confidence, train_target, ClassifierConfig};
use purifier::ConfidenceVector;

fn top3(c: &ConfidenceVector) -> String {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c.probs()[b].total_cmp(&c.probs()[a]));
    idx[..3]
        .iter()
        .map(|&i| format!("{i}:{:.3}", c.probs()[i]))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> purifier::Result<()> {
    let ds = synthesize(&SynthSpec::purchase_like(6000, 0))?;
    let splits = split(&ds, &SplitPlan::desk(1))?;
    let (model, _) = train_target(
        &ClassifierConfig::desk_overfit(2),
        &ds,
        &splits.d1,
        &splits.d3,
    )?;
    let (bundle, report) = train_purifier(&model, &ds, &splits, &PurifierConfig::desk(ds.k, 3))?;
    println!(
        "target accuracy train {:.4} test {:.4} -> swap rate {:.4}, {} swapped members",
        report.acc_train, report.acc_test, report.p_swap, report.swap_set
    );

    let swapped = bundle.swap_plan.members[0];
    let ordinary = *splits
        .d1
        .iter()
        .find(|r| !bundle.swap_plan.members.contains(r))
        .unwrap();
    let outsider = splits.d3[0];
    for (what, row) in [
        ("swapped member", swapped),
        ("member", ordinary),
        ("non-member", outsider),
    ] {
        let x = &ds.point(row).features;
        println!("{what} (label {}):", ds.point(row).label);
        println!("  {:<9} {}", "raw", top3(&predict_confidence(&model, x)?));
        for arm in [Arm::Reformer, Arm::Full] {
            println!(
                "  {:<9} {}",
                arm.name(),
                top3(&bundle.with_arm(arm).purify(&model, x)?)
            );
        }
    }

    let dir = std::env::temp_dir().join("purifier-bundle");
    bundle.save(&dir)?;
    let back = PurifierBundle::load(&dir)?;
    let x = &ds.point(swapped).features;
    assert_eq!(back.purify(&model, x)?, bundle.purify(&model, x)?);
    println!(
        "bundle saved to {} and reloaded; answers unchanged",
        dir.display()
    );
    Ok(())
}
