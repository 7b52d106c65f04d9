//! Loss-threshold membership inference on a model trained to memorize a
//! tiny, noisy training set, and on identical member/non-member sets.

use fused::data::{gen_synthetic, train_test_split};
use fused::federated::local_sgd;
use fused::metrics::mia_attack;
use fused::model::LayeredModel;
use fused::numcore::Rng;

fn main() -> fused::Result<()> {
    let ds = gen_synthetic(4, 8, 60, 2.0, &mut Rng::new(0))?;
    let (train, test) = train_test_split(&ds, 0.5, &mut Rng::new(1))?;
    let model = LayeredModel::new_mlp(&[8, 128, 4], 1.0, &mut Rng::new(2))?;
    let fit = local_sgd(&model, &train, 400, 0.05, 16, None, &mut Rng::new(3))?;
    let overfit = mia_attack(&fit.model, &train, &test)?;
    let same = mia_attack(&fit.model, &test, &test)?;
    println!("overfit model: attack accuracy {:.3} (threshold {:.4})", overfit.accuracy, overfit.threshold);
    println!("identical sets: attack accuracy {:.3}", same.accuracy);
    Ok(())
}
