//! Server storage of adapter-based unlearning vs replaying stored history.

use fused::federated::{storage_model, StorageMethod};

fn main() {
    let (model_units, adapter_units) = (5_898, 1_557);
    println!("clients rounds  fused  history-replay");
    for clients in [10u64, 50] {
        for rounds in [10u64, 50, 100, 200] {
            println!(
                "{clients:>7} {rounds:>6} {:>6} {:>15}",
                storage_model(StorageMethod::Fused, clients, rounds, model_units, adapter_units),
                storage_model(StorageMethod::HistoryReplay, clients, rounds, model_units, adapter_units),
            );
        }
    }
}
