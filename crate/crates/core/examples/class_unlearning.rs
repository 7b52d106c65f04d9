//! Forget one class across every client.

use fused::scenario::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fused::Result<()> {
    let class = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let out = run_scenario(&Scenario::Class { classes: vec![class] }, &ScenarioConfig::desk(0))?;
    for r in &out.reports {
        println!("{:<8} RA {:.3}  FA(class {class}) {:.3}  MIA {:.3}", r.method, r.ra, r.fa, r.mia);
    }
    Ok(())
}
