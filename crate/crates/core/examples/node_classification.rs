//! Node classification on a two-block stochastic block model.
//!
//! Trains the node-classification preset for up to 300 epochs and prints
//! the best validation epoch and its test accuracy.

use std::time::Instant;

use kang::model::Task;
use kang::train::{load_data, train, TrainConfig};

fn main() -> kang::Result<()> {
    let mut config = TrainConfig::preset(Task::NodeCls);
    config.max_epochs = 300;

    let data = load_data(&config)?;
    let start = Instant::now();
    let out = train(&config, &data)?;
    let h = &out.history;

    println!("parameters:      {}", out.model.count_parameters());
    println!("epochs run:      {}", h.records.len());
    println!("best epoch:      {} (val acc {:.3})", h.best_epoch, h.best_val);
    println!("test accuracy:   {:.3}", h.test_metric);
    println!("mean epoch time: {:.4} s", h.mean_epoch_time());
    println!("wall time:       {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
