//! Epoch time on growing node samples of a 1000-node SBM.

use kang::graph::generate_sbm;
use kang::model::Task;
use kang::train::experiments::scaling_experiment;
use kang::train::{sbm_config, TrainConfig};

fn main() -> kang::Result<()> {
    let mut c = TrainConfig::preset(Task::NodeCls);
    c.sbm_n_per_block = 500;
    c.sbm_p_in = 0.02;
    c.sbm_p_out = 0.002;
    let g = generate_sbm(&sbm_config(&c))?;
    for r in scaling_experiment(&c, &g, &[0.1, 0.25, 0.5, 1.0], 5)? {
        println!("{:>5} nodes  {:.4} s/epoch", r.nodes, r.mean_epoch_time_s);
    }
    Ok(())
}
