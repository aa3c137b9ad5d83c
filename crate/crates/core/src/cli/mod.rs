//! The `kang` command line: config resolution, subcommand dispatch and file
//! outputs.
//!
//! Every subcommand resolves a [`TrainConfig`] from `--config` (a flat JSON
//! object), then `--set key=value` overrides, then `--seed`, and writes it to
//! `<out>/resolved-config.json`. Feeding that file back with `--config`
//! reproduces the run.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::error::{invalid, Result};
use crate::graph::{karate_club, load_node_csv};
use crate::model::{load_checkpoint, save_checkpoint, Task};
use crate::train::experiments::{
    ablate_basis, ablate_init, oversmoothing_experiment, scaling_experiment, sweep_grid, sweep_knots, write_rows,
};
use crate::train::{build_model, evaluate, load_data, train, train_with_hook, DatasetKind, TaskData, TrainConfig};

/// Reads the JSON object at `path` (if any) and layers `overrides` over it.
/// Unspecified keys come from the preset of the configured task.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let file = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            let v: Value = if text.trim().is_empty() {
                Value::Null
            } else {
                serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
            };
            Some(v)
        }
        None => None,
    };
    TrainConfig::resolve(file, overrides)
}

#[derive(Debug, Parser)]
#[command(name = "kang", version, about = "Kolmogorov-Arnold graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat JSON config; unspecified keys take the task preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Model seed (same as `--set seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $KANG_OUT, else ./kang-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Multi {
    #[command(flatten)]
    common: Common,
    /// Number of seeds; runs seeds `seed .. seed+N`.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train once; writes history.csv, checkpoint.json, resolved-config.json.
    Train(Common),
    /// Validation and test metric of a saved checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Control-point initialisation ablation (ET, E!T, G!T, GT).
    AblateInit(Multi),
    /// B-spline vs RBF accuracy and epoch time.
    AblateBasis(Multi),
    /// Accuracy and epoch time per number of control points.
    SweepKnots {
        #[command(flatten)]
        multi: Multi,
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
        knots: Vec<usize>,
    },
    /// Accuracy per grid range, given as `min:max` pairs.
    SweepGrid {
        #[command(flatten)]
        multi: Multi,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-1:1,-5:5,-15:20"
        )]
        grids: Vec<String>,
    },
    /// Dirichlet energy and accuracy against depth, with and without residuals.
    Oversmooth {
        #[command(flatten)]
        multi: Multi,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        depths: Vec<usize>,
        /// Measure freshly initialised models instead of trained ones.
        #[arg(long)]
        untrained: bool,
    },
    /// Epoch time on growing node samples of the dataset.
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
        ratios: Vec<f64>,
        /// Timed epochs per ratio.
        #[arg(long, default_value_t = 20)]
        repeats: usize,
    },
    /// Trains once and samples one learned activation every `--every` epochs.
    ExportSplines {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        every: usize,
        /// KAND block name, e.g. `input`, `conv0.message`, `head`.
        #[arg(long, default_value = "input")]
        layer: String,
        #[arg(long, default_value_t = 0)]
        feature: usize,
        #[arg(long, default_value_t = 0)]
        unit: usize,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 201)]
        steps: usize,
    },
    /// Parameter count and layer shapes of the configured model.
    Describe(Common),
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on a run error, 2 on a usage error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

struct Prepared {
    config: TrainConfig,
    out: PathBuf,
}

fn prepare(common: &Common) -> Result<Prepared> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = parse_config(common.config.as_deref(), &overrides)?;
    let out = match &common.out {
        Some(p) => p.clone(),
        None => std::env::var_os("KANG_OUT").map_or_else(|| PathBuf::from("kang-out"), PathBuf::from),
    };
    fs::create_dir_all(&out)?;
    let text = serde_json::to_string_pretty(&config)?;
    fs::write(out.join("resolved-config.json"), text + "\n")?;
    Ok(Prepared { config, out })
}

fn seed_list(c: &TrainConfig, n: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(invalid("--seeds must be at least 1"));
    }
    Ok((c.seed..c.seed + n).collect())
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(common) => {
            let p = prepare(&common)?;
            let data = load_data(&p.config)?;
            let out = train(&p.config, &data)?;
            let h = &out.history;
            h.write_csv(p.out.join("history.csv"), p.config.record_epoch_time)?;
            save_checkpoint(&out.model, p.out.join("checkpoint.json"))?;
            println!(
                "epochs {}  best epoch {}  val {:.4}  test {:.4}  mean epoch {:.4}s",
                h.records.len(),
                h.best_epoch,
                h.best_val,
                h.test_metric,
                h.mean_epoch_time()
            );
            report(&p.out);
        }
        Command::Eval { common, checkpoint } => {
            let p = prepare(&common)?;
            let path = checkpoint.unwrap_or_else(|| p.out.join("checkpoint.json"));
            let model = load_checkpoint(&path)?;
            let data = load_data(&p.config)?;
            let (val, test) = evaluate(&model, &data)?;
            println!("val {val:.4}  test {test:.4}");
        }
        Command::AblateInit(m) => {
            let p = prepare(&m.common)?;
            let data = load_data(&p.config)?;
            let rows = ablate_init(&p.config, &data, &seed_list(&p.config, m.seeds)?)?;
            for r in &rows {
                println!("{:<4} {:.4} ± {:.4}", r.setting, r.mean, r.std);
            }
            let path = p.out.join("ablate-init.csv");
            write_rows(&rows, &path)?;
            report(&path);
        }
        Command::AblateBasis(m) => {
            let p = prepare(&m.common)?;
            let data = load_data(&p.config)?;
            let rows = ablate_basis(&p.config, &data, &seed_list(&p.config, m.seeds)?)?;
            print_rows(&rows);
            let path = p.out.join("ablate-basis.csv");
            write_rows(&rows, &path)?;
            report(&path);
        }
        Command::SweepKnots { multi, knots } => {
            let p = prepare(&multi.common)?;
            let data = load_data(&p.config)?;
            let rows = sweep_knots(&p.config, &data, &knots, &seed_list(&p.config, multi.seeds)?)?;
            print_rows(&rows);
            let path = p.out.join("sweep-knots.csv");
            write_rows(&rows, &path)?;
            report(&path);
        }
        Command::SweepGrid { multi, grids } => {
            let p = prepare(&multi.common)?;
            let grids = grids.iter().map(|g| parse_grid(g)).collect::<Result<Vec<_>>>()?;
            let data = load_data(&p.config)?;
            let rows = sweep_grid(&p.config, &data, &grids, &seed_list(&p.config, multi.seeds)?)?;
            print_rows(&rows);
            let path = p.out.join("sweep-grid.csv");
            write_rows(&rows, &path)?;
            report(&path);
        }
        Command::Oversmooth {
            multi,
            depths,
            untrained,
        } => {
            let p = prepare(&multi.common)?;
            let g = node_graph(&p.config)?;
            let seeds = seed_list(&p.config, multi.seeds)?;
            let mut rows = oversmoothing_experiment(&p.config, &g, &depths, false, !untrained, &seeds)?;
            rows.extend(oversmoothing_experiment(
                &p.config, &g, &depths, true, !untrained, &seeds,
            )?);
            for r in &rows {
                println!(
                    "depth {:>2}  residual {:<5}  energy {:>10.4}  test {:.4}",
                    r.depth, r.residual, r.dirichlet_energy, r.test_metric
                );
            }
            let path = p.out.join("oversmooth.csv");
            write_rows(&rows, &path)?;
            report(&path);
        }
        Command::Scale {
            common,
            ratios,
            repeats,
        } => {
            let p = prepare(&common)?;
            let g = node_graph(&p.config)?;
            let rows = scaling_experiment(&p.config, &g, &ratios, repeats)?;
            for r in &rows {
                println!(
                    "ratio {:.2}  nodes {:>6}  epoch {:.5}s ± {:.5}",
                    r.ratio, r.nodes, r.mean_epoch_time_s, r.std_epoch_time_s
                );
            }
            let path = p.out.join("scale.csv");
            write_rows(&rows, &path)?;
            report(&path);
        }
        Command::ExportSplines {
            common,
            every,
            layer,
            feature,
            unit,
            lo,
            hi,
            steps,
        } => {
            if every == 0 {
                return Err(invalid("--every must be at least 1"));
            }
            let p = prepare(&common)?;
            let data = load_data(&p.config)?;
            // validate the probe before spending any training time
            let probe = build_model(&p.config, &data)?;
            probe
                .layer(&layer)?
                .snapshot_activation(&probe.store, feature, unit, lo, hi, steps)?;
            let dir = p.out.join("splines");
            fs::create_dir_all(&dir)?;
            let mut written = 0;
            train_with_hook(&p.config, &data, |epoch, model| {
                if epoch % every != 0 {
                    return Ok(());
                }
                let curve = model
                    .layer(&layer)?
                    .snapshot_activation(&model.store, feature, unit, lo, hi, steps)?;
                let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("epoch_{epoch:05}.csv")))?);
                writeln!(w, "epoch,t,value")?;
                for (t, v) in curve {
                    writeln!(w, "{epoch},{t},{v}")?;
                }
                w.flush()?;
                written += 1;
                Ok(())
            })?;
            println!("{written} snapshots of {layer}[{feature} -> {unit}]");
            report(&dir);
        }
        Command::Describe(common) => {
            let p = prepare(&common)?;
            let data = load_data(&p.config)?;
            let model = build_model(&p.config, &data)?;
            for l in model.kand_layers() {
                let n: usize = l
                    .param_ids()
                    .iter()
                    .map(|&id| model.store.get(id))
                    .filter(|p| p.trainable)
                    .map(|p| p.value.len())
                    .sum();
                println!("{:<16} {:>4} -> {:<4} {:>8} params", l.name, l.in_dim(), l.out_dim(), n);
            }
            println!("trainable parameters: {}", model.count_parameters());
        }
    }
    Ok(())
}

fn print_rows(rows: &[crate::train::experiments::AblationRow]) {
    for r in rows {
        println!("{:<28} {:.5} ± {:.5}", r.setting, r.mean, r.std);
    }
}

fn parse_grid(s: &str) -> Result<(f64, f64)> {
    let bad = || invalid(format!("grid `{s}` is not min:max"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

/// The single graph behind a node-level dataset.
fn node_graph(c: &TrainConfig) -> Result<crate::graph::Graph> {
    if c.task != Task::NodeCls {
        return Err(invalid("this experiment runs node classification; set task=node-cls"));
    }
    match c.dataset {
        DatasetKind::Karate => Ok(karate_club()),
        DatasetKind::NodeCsv => load_node_csv(c.data_path.clone().unwrap_or_default()),
        _ => match load_data(c)? {
            TaskData::Node(g) => Ok(g),
            _ => unreachable!("node-cls data is a single graph"),
        },
    }
}
