//! Link prediction on the SBM: hold out 10% + 10% of edges, train on the rest
//! with resampled negatives, report test AUC.

use kang::model::Task;
use kang::train::{load_data, train, TaskData, TrainConfig};

fn main() -> kang::Result<()> {
    let mut config = TrainConfig::preset(Task::LinkPred);
    config.max_epochs = 200;
    config.patience = 50;
    let data = load_data(&config)?;
    if let TaskData::Link { split, .. } = &data {
        println!(
            "edges: {} train, {} val, {} test",
            split.train_pos.len(),
            split.val_pos.len(),
            split.test_pos.len()
        );
    }
    let h = train(&config, &data)?.history;
    println!(
        "best epoch {} (val AUC {:.3}), test AUC {:.3}",
        h.best_epoch, h.best_val, h.test_metric
    );
    Ok(())
}
