//! Dirichlet energy of the final embeddings against depth on Zachary's karate
//! club, with and without residual connections.

use kang::graph::karate_club;
use kang::model::Task;
use kang::train::experiments::oversmoothing_experiment;
use kang::train::TrainConfig;

fn main() -> kang::Result<()> {
    let mut c = TrainConfig::preset(Task::NodeCls);
    c.max_epochs = 150;
    c.patience = 50;
    let g = karate_club();
    for residual in [false, true] {
        for r in oversmoothing_experiment(&c, &g, &[2, 4, 8], residual, true, &[0])? {
            println!(
                "depth {}  residual {:<5}  energy {:>8.3}  test acc {:.3}",
                r.depth, r.residual, r.dirichlet_energy, r.test_metric
            );
        }
    }
    Ok(())
}
