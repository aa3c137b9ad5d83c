//! Epoch time of RBF vs B-spline bases, and how it grows with the number of
//! control points.

use kang::model::Task;
use kang::train::experiments::{ablate_basis, sweep_knots};
use kang::train::{load_data, TrainConfig};

fn main() -> kang::Result<()> {
    let mut c = TrainConfig::preset(Task::NodeCls);
    c.max_epochs = 30;
    c.patience = 30;
    let data = load_data(&c)?;
    for r in ablate_basis(&c, &data, &[0])?
        .into_iter()
        .chain(sweep_knots(&c, &data, &[2, 4, 6, 8, 10], &[0])?)
    {
        println!("{:<26} {:.4}", r.setting, r.mean);
    }
    Ok(())
}
