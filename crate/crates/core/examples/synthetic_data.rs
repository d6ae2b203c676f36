//! Generate the three synthetic tasks, split one of them and write it as CSV.
//!
//!     cargo run --release --example synthetic_data -- /tmp/purchase.csv

use purifier::data::{save_csv, split, synthesize, SplitPlan, SynthSpec};

fn main() -> purifier::Result<()> {
    for spec in [
        SynthSpec::purchase_like(6000, 0),
        SynthSpec::blended_clusters(6000, 0),
        SynthSpec::attribute_task(6000, 0),
    ] {
        let ds = synthesize(&spec)?;
        let mut per_class = vec![0usize; ds.k];
        for p in ds.points() {
            per_class[p.label] += 1;
        }
        println!(
            "{:<17} n={} d={} k={} sensitive={:?} smallest class={}",
            ds.name,
            ds.len(),
            ds.d,
            ds.k,
            ds.s,
            per_class.iter().min().unwrap()
        );
    }

    let ds = synthesize(&SynthSpec::purchase_like(6000, 0))?;
    let splits = split(&ds, &SplitPlan::desk(1))?;
    println!(
        "split: target train {}, defense reference {}, test {}, attacker {}+{}",
        splits.d1.len(),
        splits.d2.len(),
        splits.d3.len(),
        splits.attacker_members.len(),
        splits.attacker_nonmembers.len()
    );
    if let Some(path) = std::env::args().nth(1) {
        save_csv(&ds, path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
