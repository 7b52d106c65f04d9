//! Poison 10% of the training data with a trigger on the last feature, then
//! forget the poisoned samples. FA here is the backdoor success rate.

use fused::scenario::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fused::Result<()> {
    let out = run_scenario(&Scenario::Sample, &ScenarioConfig::desk(0))?;
    for r in &out.reports {
        println!(
            "{:<8} RA {:.3}  backdoor {:.3}  0A {:.3}  PS {:.3}",
            r.method,
            r.ra,
            r.fa,
            r.zero_acc.unwrap_or(f64::NAN),
            r.precision_zero.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
