//! First-order account of knowledge overwriting: predicted vs measured
//! change of an old task's loss after one step on a new task, and the
//! masked-update expectation.

use fused::app::gradient_pair;
use fused::data::gen_synthetic;
use fused::federated::local_sgd;
use fused::model::LayeredModel;
use fused::numcore::Rng;
use fused::theory::{masked_expectation_check, measure_overwrite, TheoryProbe};

fn main() -> fused::Result<()> {
    let data = gen_synthetic(4, 8, 100, 0.5, &mut Rng::new(0))?;
    let old = data.filter(|_, y| y < 2);
    let new = data.filter(|_, y| y >= 2);
    let model = LayeredModel::new_mlp(&[8, 32, 4], 1.0, &mut Rng::new(1))?;
    let trained = local_sgd(&model, &old, 30, 0.1, 16, None, &mut Rng::new(2))?.model;
    for eta in [1e-1, 1e-2, 1e-3] {
        let m = measure_overwrite(&trained, &old, &new, eta)?;
        println!("eta {eta:.0e}: phi {:+.4}  predicted {:+.4e}  actual {:+.4e}", m.phi, m.predicted, m.actual);
    }

    let (g1, g2) = gradient_pair(200, -0.5, &mut Rng::new(3));
    for p in [0.1, 0.5, 1.0] {
        let probe = TheoryProbe::new(g1.clone(), g2.clone(), 0.01, p)?;
        let c = masked_expectation_check(&probe, 10_000, &mut Rng::new(4))?;
        println!("p {p:.1}: predicted {:+.5e}  empirical {:+.5e}  z {:.2}", c.predicted, c.empirical_mean, c.z_score);
    }
    Ok(())
}
