//! Swap-set selection, exact nearest-neighbour matching and tolerance to
//! slightly perturbed member queries.
//!
//!     cargo run --release --example label_swap

use purifier::purifier::{compute_swap_rate, swap_label, KnnParams, PredictionIndex, SwapPlan};
use purifier::ConfidenceVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> purifier::Result<()> {
    let p_swap = compute_swap_rate(1.0, 0.8436)?;
    let plan = SwapPlan::select(&(0..2000).collect::<Vec<_>>(), p_swap, 7)?;
    println!(
        "train 1.0000 / test 0.8436 -> p_swap {p_swap:.4}, {} of 2000 members swapped",
        plan.members.len()
    );

    let c = ConfidenceVector::new(vec![0.05, 0.7, 0.2, 0.05])?;
    println!("{:?} swaps to {:?}", c.probs(), swap_label(&c)?.probs());

    // stored confidences of the swap set, here random points on the simplex
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let entries: Vec<Vec<f64>> = plan
        .members
        .iter()
        .map(|_| {
            let v: Vec<f64> = (0..20).map(|_| rng.random::<f64>().powi(4)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let index = PredictionIndex::new(20, entries.clone(), KnnParams { k_nn: 1, tau: 1e-3 })?;
    for scale in [0.0, 5e-4, 9e-4, 2e-3, 1e-2] {
        let hits = entries
            .iter()
            .filter(|e| {
                let mut q = (*e).clone();
                q[0] += scale / 2f64.sqrt();
                q[1] -= scale / 2f64.sqrt();
                index.matches(&q).unwrap()
            })
            .count();
        println!(
            "displacement {scale:.0e}: {hits}/{} members matched",
            entries.len()
        );
    }
    Ok(())
}
