use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{symmetrize, Graph};
use crate::diffcore::Mat;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    /// A directory holding `edges.csv`, `features.csv`, `labels.csv` and
    /// optionally `masks.csv`.
    NodeCsv,
    /// One JSON array of `{"edges", "node_features", "label"}` objects.
    GraphJson,
}

#[derive(Clone, Debug)]
pub enum Dataset {
    Node(Graph),
    Graphs(Vec<Graph>),
}

pub fn load_graph(path: impl AsRef<Path>, format: GraphFormat) -> Result<Dataset> {
    match format {
        GraphFormat::NodeCsv => load_node_csv(path).map(Dataset::Node),
        GraphFormat::GraphJson => load_graph_json(path).map(Dataset::Graphs),
    }
}

/// Rows of a headerless CSV, each tagged with its 1-based line number.
fn read_rows(path: &Path) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => invalid(format!("cannot open {}: {e}", path.display())),
            _ => Error::Csv(e),
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn parse_cell<T: FromStr>(path: &Path, line: u64, cell: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    cell.parse().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("bad {what} `{cell}`: {e}"),
    })
}

fn parse_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads a node-classification graph from a directory of headerless CSVs.
/// Edges are symmetrised and de-duplicated. A missing `masks.csv` leaves
/// all masks false.
pub fn load_node_csv(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();

    let path = dir.join("features.csv");
    let rows = read_rows(&path)?;
    let Some((_, first)) = rows.first() else {
        return Err(invalid(format!("{} has no rows", path.display())));
    };
    let f = first.len();
    let mut data = Vec::with_capacity(rows.len() * f);
    for (line, row) in &rows {
        if row.len() != f {
            return Err(parse_error(
                &path,
                *line,
                format!("expected {f} features, found {}", row.len()),
            ));
        }
        for cell in row {
            data.push(parse_cell::<f64>(&path, *line, cell, "feature")?);
        }
    }
    let n = rows.len();
    let features = Mat::new(n, f, data)?;

    let path = dir.join("labels.csv");
    let mut labels = Vec::with_capacity(n);
    for (line, row) in read_rows(&path)? {
        if row.len() != 1 {
            return Err(parse_error(
                &path,
                line,
                format!("expected 1 label, found {} columns", row.len()),
            ));
        }
        labels.push(parse_cell::<usize>(&path, line, &row[0], "label")?);
    }
    if labels.len() != n {
        return Err(invalid(format!(
            "{} has {} rows but there are {n} nodes",
            path.display(),
            labels.len()
        )));
    }

    let path = dir.join("edges.csv");
    let mut edges = Vec::new();
    for (line, row) in read_rows(&path)? {
        if row.len() != 2 {
            return Err(parse_error(
                &path,
                line,
                format!("expected 2 columns, found {}", row.len()),
            ));
        }
        let u: usize = parse_cell(&path, line, &row[0], "node index")?;
        let v: usize = parse_cell(&path, line, &row[1], "node index")?;
        if u >= n || v >= n {
            return Err(parse_error(
                &path,
                line,
                format!("edge ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }

    let mut g = Graph::new(features, symmetrize(edges), labels)?;

    let path = dir.join("masks.csv");
    if path.exists() {
        let mut masks = [vec![], vec![], vec![]];
        for (line, row) in read_rows(&path)? {
            if row.len() != 3 {
                return Err(parse_error(
                    &path,
                    line,
                    format!("expected 3 columns, found {}", row.len()),
                ));
            }
            for (mask, cell) in masks.iter_mut().zip(&row) {
                mask.push(match cell.as_str() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(parse_error(
                            &path,
                            line,
                            format!("mask value must be 0 or 1, got `{other}`"),
                        ))
                    }
                });
            }
        }
        let [train, val, test] = masks;
        g.set_masks(train, val, test)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    } else {
        log::warn!(
            "{} not found; all masks are empty and splits must be supplied",
            path.display()
        );
    }
    Ok(g)
}

/// Writes `g` in the layout read by [`load_node_csv`].
pub fn save_node_csv(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut w = BufWriter::new(File::create(dir.join("features.csv"))?);
    for i in 0..g.num_nodes {
        let row: Vec<String> = g.features.row(i).iter().map(f64::to_string).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("labels.csv"))?);
    for l in &g.labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("edges.csv"))?);
    for (u, v) in &g.edges {
        writeln!(w, "{u},{v}")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("masks.csv"))?);
    for i in 0..g.num_nodes {
        let b = |m: &[bool]| m[i] as u8;
        writeln!(w, "{},{},{}", b(&g.train_mask), b(&g.val_mask), b(&g.test_mask))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonGraph {
    edges: Vec<[usize; 2]>,
    node_features: Vec<Vec<f64>>,
    label: usize,
}

/// Loads a list of labelled graphs; edges are symmetrised.
pub fn load_graph_json(path: impl AsRef<Path>) -> Result<Vec<Graph>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<JsonGraph> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let num_classes = raw.iter().map(|g| g.label + 1).max().unwrap_or(0);
    let mut graphs = Vec::with_capacity(raw.len());
    for (gi, jg) in raw.into_iter().enumerate() {
        let n = jg.node_features.len();
        let f = jg.node_features.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(invalid(format!("{}: graph {gi} has no nodes", path.display())));
        }
        if let Some(i) = jg.node_features.iter().position(|r| r.len() != f) {
            return Err(invalid(format!(
                "{}: graph {gi} node {i} has a ragged feature row",
                path.display()
            )));
        }
        if let Some([u, v]) = jg.edges.iter().find(|[u, v]| *u >= n || *v >= n) {
            return Err(invalid(format!(
                "{}: graph {gi} edge ({u}, {v}) out of range for {n} nodes",
                path.display()
            )));
        }
        let features = Mat::new(n, f, jg.node_features.into_iter().flatten().collect())?;
        let mut g = Graph::new(features, symmetrize(jg.edges.iter().map(|e| (e[0], e[1]))), Vec::new())?;
        g.graph_label = Some(jg.label);
        g.num_classes = num_classes;
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn save_graph_json(graphs: &[Graph], path: impl AsRef<Path>) -> Result<()> {
    let raw: Vec<JsonGraph> = graphs
        .iter()
        .map(|g| {
            Ok(JsonGraph {
                edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
                node_features: (0..g.num_nodes).map(|i| g.features.row(i).to_vec()).collect(),
                label: g.graph_label.ok_or_else(|| invalid("graph has no label"))?,
            })
        })
        .collect::<Result<_>>()?;
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &raw)?;
    Ok(())
}
