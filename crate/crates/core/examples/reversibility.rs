//! Unlearn, save both checkpoints, reload them and remove the adapters:
//! the restored model's logits equal the original's bit for bit.

use fused::adapter::{AdapterSet, UnlearnedModel};
use fused::model::LayeredModel;
use fused::numcore::Rng;
use fused::scenario::{probe_batch, run_scenario, Scenario, ScenarioConfig};

fn main() -> fused::Result<()> {
    let mut cfg = ScenarioConfig::desk(1);
    cfg.run_oracle = false;
    let out = run_scenario(&Scenario::Client { clients: vec![2] }, &cfg)?;
    let dir = std::env::temp_dir().join("fused-reversibility");
    std::fs::create_dir_all(&dir)?;
    out.original.save(&dir.join("original.fsdm"))?;
    out.fused.adapters().save(&dir.join("adapters.fsda"))?;

    let restored = UnlearnedModel::new(
        LayeredModel::load(&dir.join("original.fsdm"))?,
        AdapterSet::load(&dir.join("adapters.fsda"))?,
    )?;
    let x = probe_batch(&out.data.test, 256, &Rng::new(9));
    let before = out.original.forward(&x)?;
    let merged = restored.merged().forward(&x)?;
    let after = restored.remove_adapters().forward(&x)?;
    println!("merged vs original max diff: {:.3e}", merged.max_abs_diff(&before)?);
    println!("restored bit-identical: {}", after.bit_eq(&before));
    Ok(())
}
