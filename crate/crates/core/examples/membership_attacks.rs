//! Every membership attack against the undefended, reformer-only and full arms.
//!
//!     cargo run --release --example membership_attacks

use purifier::attacks::{
    run_membership, AttackContext, AttackKind, AttackModelConfig, DefenseRecipe, TargetOracle,
};
use purifier::data::{split, synthesize, SplitPlan, SynthSpec};
use purifier::purifier::{train_purifier, Arm, PurifierConfig};
use purifier::target::{train_target, ClassifierConfig};

fn main() -> purifier::Result<()> {
    let ds = synthesize(&SynthSpec::purchase_like(6000, 0))?;
    let splits = split(&ds, &SplitPlan::desk(1))?;
    let target_cfg = ClassifierConfig::desk_overfit(2);
    let (model, _) = train_target(&target_cfg, &ds, &splits.d1, &splits.d3)?;
    let purifier_cfg = PurifierConfig::desk(ds.k, 3);
    let (bundle, _) = train_purifier(&model, &ds, &splits, &purifier_cfg)?;
    // the adaptive attacker knows the recipe, not the trained weights
    let attacker_cfg = PurifierConfig::desk(ds.k, 99);
    let recipe = DefenseRecipe {
        config: &attacker_cfg,
        reference: &splits.d2,
    };
    let attack_model = AttackModelConfig::default();

    println!(
        "{:<9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>13}",
        "arm", "nsh", "mlleaks", "adaptive", "blindmi", "gap", "transfer auc"
    );
    for arm in Arm::ALL {
        let oracle = TargetOracle::new(&model, Some(&bundle), arm);
        let ctx =
            AttackContext::from_splits(&oracle, &ds, &splits, &target_cfg, &attack_model, arm, 10);
        let mut line = format!("{:<9}", arm.name());
        for kind in AttackKind::MEMBERSHIP {
            let r = run_membership(kind, &ctx, Some(&recipe))?;
            let width = if kind == AttackKind::Transfer { 14 } else { 9 };
            line += &format!("{:>width$.4}", r.headline());
        }
        println!("{line}");
    }
    Ok(())
}
