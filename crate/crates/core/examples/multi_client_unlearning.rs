//! Half of the clients are Byzantine label flippers; forget all of them.

use fused::scenario::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fused::Result<()> {
    let cfg = ScenarioConfig::desk(0);
    let flipped: Vec<usize> = (0..cfg.fed.n_clients / 2).collect();
    let out = run_scenario(&Scenario::Client { clients: flipped }, &cfg)?;
    for r in &out.reports {
        println!("{:<8} RA {:.3}  FA {:.3}  MIA {:.3}", r.method, r.ra, r.fa, r.mia);
    }
    Ok(())
}
