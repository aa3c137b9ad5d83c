//! Tracks one activation of the first message block while training, printing
//! a coarse sample of the curve every 25 epochs.

use kang::model::Task;
use kang::train::{load_data, train_with_hook, TrainConfig};

fn main() -> kang::Result<()> {
    let mut c = TrainConfig::preset(Task::NodeCls);
    c.max_epochs = 100;
    c.patience = 100;
    let data = load_data(&c)?;
    train_with_hook(&c, &data, |epoch, model| {
        if epoch % 25 == 0 {
            let curve = model
                .layer("conv0.message")?
                .snapshot_activation(&model.store, 0, 0, -3.0, 3.0, 7)?;
            let values: Vec<String> = curve.iter().map(|(_, v)| format!("{v:+.3}")).collect();
            println!("epoch {epoch:>3}: {}", values.join(" "));
        }
        Ok(())
    })?;
    Ok(())
}
