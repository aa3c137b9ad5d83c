//! The control-point initialisation ablation on a harder SBM (feature shift
//! 0.5): evenly spaced vs Gaussian, trainable vs fixed.

use kang::model::Task;
use kang::train::experiments::ablate_init;
use kang::train::{load_data, TrainConfig};

fn main() -> kang::Result<()> {
    let mut c = TrainConfig::preset(Task::NodeCls);
    c.sbm_feature_shift = 0.5;
    c.max_epochs = 100;
    c.patience = 40;
    let data = load_data(&c)?;
    for r in ablate_init(&c, &data, &[0, 1, 2])? {
        println!("{:<4} {:.3} ± {:.3}", r.setting, r.mean, r.std);
    }
    Ok(())
}
