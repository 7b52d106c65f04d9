//! Per-client class histograms for a few Dirichlet concentrations.

use fused::data::{dirichlet_partition, gen_synthetic};
use fused::numcore::Rng;

fn main() -> fused::Result<()> {
    let ds = gen_synthetic(5, 8, 100, 0.5, &mut Rng::new(0))?;
    for alpha in [0.1, 1.0, 100.0] {
        println!("alpha = {alpha}");
        for s in dirichlet_partition(&ds, 5, alpha, &mut Rng::new(1))? {
            println!("  client {}: {:?}", s.client_id, s.data.class_histogram());
        }
    }
    Ok(())
}
