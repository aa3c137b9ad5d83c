//! Writes a generated SBM in the node-csv layout, loads it back, and prints
//! a summary. Point `data_path` at such a directory with `dataset=node-csv`
//! to train on your own graph.

use kang::graph::{generate_sbm, load_node_csv, save_node_csv, SbmConfig};

fn main() -> kang::Result<()> {
    let dir = std::env::temp_dir().join("kang-data-io");
    let g = generate_sbm(&SbmConfig::default())?;
    save_node_csv(&g, &dir)?;
    let back = load_node_csv(&dir)?;
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    println!(
        "{}: {} nodes, {} directed edges, {} features, {} classes",
        dir.display(),
        back.num_nodes,
        back.edges.len(),
        back.feature_dim(),
        back.num_classes
    );
    println!(
        "masks: {} train / {} val / {} test",
        count(&back.train_mask),
        count(&back.val_mask),
        count(&back.test_mask)
    );
    println!(
        "round trip exact: {}",
        back.features == g.features && back.edges == g.edges && back.labels == g.labels
    );
    Ok(())
}
