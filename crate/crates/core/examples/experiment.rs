//! Run the desk experiment end to end through the same commands as the CLI,
//! for one seed, and print the resulting table.
//!
//!     cargo run --release --example experiment -- /tmp/desk-run

use std::path::Path;

use purifier::eval::{Cell, EvalReport};
use purifier::experiment::{run_all, ExperimentConfig};

fn main() -> purifier::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "runs/example".into());
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml");
    let mut cfg = ExperimentConfig::load(&config)?.with_seed(1);
    cfg.out = out.into();
    let done = run_all(&cfg)?;
    println!(
        "{} artifacts written, {} already present",
        done.written.len(),
        done.kept.len()
    );

    let report: EvalReport = serde_json::from_slice(&std::fs::read(cfg.out.join("report.json"))?)?;
    for row in &report.means {
        let cells: Vec<String> = report
            .columns
            .iter()
            .map(|c| match row.cells[c] {
                Cell::Value(v) => format!("{c}={v:.4}"),
                Cell::Absent => format!("{c}=absent"),
            })
            .collect();
        println!("{:<9} {}", row.arm.name(), cells.join(" "));
    }
    Ok(())
}
