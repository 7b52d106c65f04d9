//! Forget one label-flipped client and compare with retraining from scratch.
//!
//! cargo run --release --example client_unlearning -- [seed]

use fused::metrics::RunReport;
use fused::scenario::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fused::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = ScenarioConfig::desk(seed);
    cfg.relearn_rounds = 5;
    let out = run_scenario(&Scenario::Client { clients: vec![0] }, &cfg)?;
    println!("critical layers: {:?}", out.ranking.critical_layers());
    println!("participants: {:?}", out.fused.participants);
    println!("{}", RunReport::csv_header());
    for r in &out.reports {
        println!("{}", r.to_csv_row());
    }
    Ok(())
}
