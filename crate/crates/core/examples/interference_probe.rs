//! Client 0 holds 90% of class 0 and all of class 1. After forgetting it,
//! class 1 should go (F-Acc), class 0 should mostly survive (C-Acc) and the
//! rest should be untouched (R-Acc).

use fused::scenario::{run_interference_probe, InterferenceSpec, ScenarioConfig};

fn main() -> fused::Result<()> {
    let out = run_interference_probe(&ScenarioConfig::desk(0), &InterferenceSpec::default())?;
    for (name, a) in [
        ("original", out.original),
        ("fused", out.fused),
        ("retrain", out.retrain),
        ("finetune", out.full_finetune),
    ] {
        println!("{name:<9} F-Acc {:.3}  C-Acc {:.3}  R-Acc {:.3}", a.f_acc, a.c_acc, a.r_acc);
    }
    Ok(())
}
