//! Build sparse adapters for two layers, merge them, and compare what a
//! client uploads per round against a full model.

use fused::adapter::{merge, AdapterSet};
use fused::critical::DriftRanking;
use fused::model::LayeredModel;
use fused::numcore::Rng;

fn main() -> fused::Result<()> {
    let model = LayeredModel::new_mlp(&[16, 128, 128, 10], 1.0, &mut Rng::new(0))?;
    let ranking = DriftRanking::from_diffs(&[3.0, 9.0, 1.0], 2)?;
    for keep in [0.05, 0.1, 0.3] {
        let adapters = AdapterSet::for_ranking(&model, &ranking, keep, &Rng::new(1))?;
        let merged = merge(&model, &adapters)?;
        let critical: usize = ranking.critical_layers().iter().map(|&l| model.layer_param_count(l).unwrap()).sum();
        println!(
            "keep {keep:.2}: layers {:?}, kept {} of {critical}, zero-init merge identical: {}, upload {} B vs model {} B",
            adapters.layer_indices(),
            adapters.kept_count(),
            merged.bit_eq(&model),
            adapters.values_payload_len(),
            model.serialized_len(),
        );
    }
    Ok(())
}
