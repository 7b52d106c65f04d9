//! Rank layers by parameter drift after one probe round.
//!
//! First on the desk model as-is, then with only one layer trainable during
//! the probe, where that layer must come out on top.

use fused::critical::identify_critical_layers;
use fused::numcore::Rng;
use fused::scenario::{prepare_data, Scenario, ScenarioConfig};
use fused::model::LayeredModel;

fn main() -> fused::Result<()> {
    let cfg = ScenarioConfig::desk(7);
    let rng = Rng::new(cfg.fed.seed);
    let data = prepare_data(&Scenario::Client { clients: vec![0] }, &cfg, &rng)?;
    let model = LayeredModel::new_mlp(&cfg.layer_sizes(), cfg.init_scale, &mut Rng::new(1))?;

    let mut probe = cfg.probe_config();
    probe.k = model.layer_count();
    let ranking = identify_critical_layers(&model, &data.shards, &probe, &rng)?;
    print!("{}", ranking.to_csv());

    for planted in 1..=model.layer_count() {
        probe.trainable = Some((1..=model.layer_count()).map(|l| l == planted).collect());
        let r = identify_critical_layers(&model, &data.shards, &probe, &rng)?;
        println!("only layer {planted} trainable -> ranked first: {}", r.critical_layers()[0]);
    }
    Ok(())
}
