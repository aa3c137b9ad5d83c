//! Graph classification on a synthetic set of cycles with a chord versus
//! cycles with a hub, using mean pooling over node embeddings.

use kang::model::Task;
use kang::train::{load_data, train, TrainConfig};

fn main() -> kang::Result<()> {
    let mut config = TrainConfig::preset(Task::GraphCls);
    config.num_graphs = 100;
    config.max_epochs = 100;
    config.patience = 30;
    let data = load_data(&config)?;
    let h = train(&config, &data)?.history;
    println!(
        "epochs {}, best {}, val acc {:.3}, test acc {:.3}",
        h.records.len(),
        h.best_epoch,
        h.best_val,
        h.test_metric
    );
    Ok(())
}
