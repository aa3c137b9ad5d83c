//! KANGConv message passing and task-level models.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::diffcore::{DTensor, Mat, ParamStore, Session, Tape};
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::kand::{KandConfig, KandLayer};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    NodeCls,
    LinkPred,
    GraphCls,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub in_dim: usize,
    pub hidden: usize,
    /// Ignored for link prediction, which has no head.
    pub num_classes: usize,
    /// Input projection counts as one layer; `layers - 1` convolutions follow.
    pub layers: usize,
    pub dropout: f64,
    pub basis: BasisSpec,
    pub use_base_branch: bool,
    pub use_residual: bool,
    pub ln_affine: bool,
    pub seed: u64,
}

/// `h_u ← KAND(h_u + Σ_{v→u} KAND([h_u ‖ h_v]))`.
#[derive(Clone, Debug)]
pub struct KangConvLayer {
    pub message: KandLayer,
    pub update: KandLayer,
    pub dropout: f64,
}

impl KangConvLayer {
    /// `src`/`dst` are the endpoints of each directed edge; messages flow
    /// from source to destination.
    pub fn forward<'t>(&self, s: &Session<'t>, h: DTensor<'t>, src: &[usize], dst: &[usize]) -> Result<DTensor<'t>> {
        let n = h.rows();
        let pair = h.gather_rows(dst)?.concat_cols(&h.gather_rows(src)?)?;
        let messages = self.message.forward(s, pair)?;
        let aggregated = messages.segment_sum(dst, n)?;
        let out = self.update.forward(s, h.add(&aggregated)?)?;
        s.dropout(out, self.dropout)
    }
}

#[derive(Clone, Debug)]
pub struct KangModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub input_proj: KandLayer,
    pub convs: Vec<KangConvLayer>,
    /// Absent for link prediction, whose decoder is an inner product.
    pub head: Option<KandLayer>,
}

/// Graph tensors reused by every forward pass.
struct Batch {
    features: Mat,
    src: Vec<usize>,
    dst: Vec<usize>,
}

impl Batch {
    fn of(g: &Graph) -> Self {
        Self {
            features: g.features.clone(),
            src: g.sources(),
            dst: g.targets(),
        }
    }
}

impl KangModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.layers == 0 {
            return Err(invalid("a model needs at least one layer"));
        }
        if config.in_dim == 0 || config.hidden == 0 {
            return Err(invalid("input and hidden widths must be positive"));
        }
        if config.task != Task::LinkPred && config.num_classes < 2 {
            return Err(invalid(format!(
                "classification needs at least 2 classes, got {}",
                config.num_classes
            )));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(invalid(format!("dropout must lie in [0, 1), got {}", config.dropout)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let kand = |n, m, ln| KandConfig {
            in_dim: n,
            out_dim: m,
            basis: config.basis.clone(),
            use_base_branch: config.use_base_branch,
            apply_output_ln: ln,
            ln_affine: config.ln_affine,
        };
        let h = config.hidden;
        let input_proj = KandLayer::new(&mut store, "input", kand(config.in_dim, h, true), &mut rng)?;
        let convs = (0..config.layers - 1)
            .map(|l| {
                Ok(KangConvLayer {
                    message: KandLayer::new(&mut store, &format!("conv{l}.message"), kand(2 * h, h, true), &mut rng)?,
                    update: KandLayer::new(&mut store, &format!("conv{l}.update"), kand(h, h, true), &mut rng)?,
                    dropout: config.dropout,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = match config.task {
            Task::LinkPred => None,
            _ => Some(KandLayer::new(
                &mut store,
                "head",
                kand(h, config.num_classes, false),
                &mut rng,
            )?),
        };
        Ok(Self {
            config,
            store,
            input_proj,
            convs,
            head,
        })
    }

    /// Number of trainable scalars.
    pub fn count_parameters(&self) -> usize {
        self.store.trainable_count()
    }

    /// Every KAND block in forward order.
    pub fn kand_layers(&self) -> Vec<&KandLayer> {
        let mut out = vec![&self.input_proj];
        for c in &self.convs {
            out.push(&c.message);
            out.push(&c.update);
        }
        out.extend(self.head.as_ref());
        out
    }

    pub fn layer(&self, name: &str) -> Result<&KandLayer> {
        let layers = self.kand_layers();
        match layers.iter().find(|l| l.name == name) {
            Some(l) => Ok(l),
            None => {
                let names: Vec<&str> = layers.iter().map(|l| l.name.as_str()).collect();
                Err(invalid(format!("no layer `{name}`; layers are: {}", names.join(", "))))
            }
        }
    }

    fn embed_batch<'t>(&self, s: &Session<'t>, b: &Batch) -> Result<DTensor<'t>> {
        let x = s
            .tape()
            .constant(b.features.rows, b.features.cols, b.features.data.clone())?;
        let mut h = self.input_proj.forward(s, x)?;
        for conv in &self.convs {
            let out = conv.forward(s, h, &b.src, &b.dst)?;
            h = if self.config.use_residual { h.add(&out)? } else { out };
        }
        Ok(h)
    }

    /// Node embeddings after the last convolution.
    pub fn node_embeddings<'t>(&self, s: &Session<'t>, g: &Graph) -> Result<DTensor<'t>> {
        if g.feature_dim() != self.config.in_dim {
            return Err(invalid(format!(
                "graph has {} features, model expects {}",
                g.feature_dim(),
                self.config.in_dim
            )));
        }
        self.embed_batch(s, &Batch::of(g))
    }

    fn head(&self) -> Result<&KandLayer> {
        self.head
            .as_ref()
            .ok_or_else(|| invalid("link-prediction models have no classification head"))
    }

    /// Per-node logits, `N x C`.
    pub fn node_logits<'t>(&self, s: &Session<'t>, g: &Graph) -> Result<DTensor<'t>> {
        if self.config.task != Task::NodeCls {
            return Err(invalid(format!(
                "node classification on a {:?} model",
                self.config.task
            )));
        }
        let h = self.node_embeddings(s, g)?;
        self.head()?.forward(s, h)
    }

    /// Inner-product logits `⟨z_u, z_v⟩` for each pair, `P x 1`; the score is
    /// their sigmoid.
    pub fn link_logits<'t>(&self, s: &Session<'t>, g: &Graph, pairs: &[(usize, usize)]) -> Result<DTensor<'t>> {
        if self.config.task != Task::LinkPred {
            return Err(invalid(format!("link prediction on a {:?} model", self.config.task)));
        }
        if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u >= g.num_nodes || v >= g.num_nodes) {
            return Err(invalid(format!(
                "pair ({u}, {v}) out of range for {} nodes",
                g.num_nodes
            )));
        }
        let z = self.node_embeddings(s, g)?;
        pair_logits(z, pairs)
    }

    /// Scores `σ(⟨z_u, z_v⟩)` without recording gradients.
    pub fn link_scores(&self, g: &Graph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let s = Session::new(&tape, &self.store, false, 0);
        let logits = self.link_logits(&s, g, pairs)?.value();
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    /// Mean-pooled graph logits, `B x C`.
    pub fn graph_logits<'t>(&self, s: &Session<'t>, graphs: &[&Graph]) -> Result<DTensor<'t>> {
        if self.config.task != Task::GraphCls {
            return Err(invalid(format!(
                "graph classification on a {:?} model",
                self.config.task
            )));
        }
        if graphs.is_empty() {
            return Err(invalid("empty graph batch"));
        }
        let f = self.config.in_dim;
        let mut batch = Batch {
            features: Mat::zeros(0, f),
            src: Vec::new(),
            dst: Vec::new(),
        };
        let mut owner = Vec::new();
        for (b, g) in graphs.iter().enumerate() {
            if g.num_nodes == 0 {
                return Err(invalid(format!("graph {b} in the batch is empty")));
            }
            if g.feature_dim() != f {
                return Err(invalid(format!(
                    "graph {b} has {} features, model expects {f}",
                    g.feature_dim()
                )));
            }
            let offset = batch.features.rows;
            batch.features.data.extend_from_slice(&g.features.data);
            batch.features.rows += g.num_nodes;
            batch.src.extend(g.edges.iter().map(|e| e.0 + offset));
            batch.dst.extend(g.edges.iter().map(|e| e.1 + offset));
            owner.extend(std::iter::repeat_n(b, g.num_nodes));
        }
        let h = self.embed_batch(s, &batch)?;
        let d = h.cols();
        let inv: Vec<f64> = graphs
            .iter()
            .flat_map(|g| std::iter::repeat_n(1.0 / g.num_nodes as f64, d))
            .collect();
        let pooled = h
            .segment_sum(&owner, graphs.len())?
            .mul(&s.tape().constant(graphs.len(), d, inv)?)?;
        self.head()?.forward(s, pooled)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `⟨z_u, z_v⟩` for every pair, as a `P x 1` tensor.
pub fn pair_logits<'t>(z: DTensor<'t>, pairs: &[(usize, usize)]) -> Result<DTensor<'t>> {
    let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let prod = z.gather_rows(&us)?.mul(&z.gather_rows(&vs)?)?;
    prod.matmul(&z.tape().constant(z.cols(), 1, vec![1.0; z.cols()])?)
}

/// Mean binary cross-entropy of `σ(logits)` against `targets`, written as a
/// two-class softmax over `[0, logit]`.
pub fn binary_cross_entropy<'t>(logits: DTensor<'t>, targets: &[bool]) -> Result<DTensor<'t>> {
    let zeros = logits.tape().zeros(logits.rows(), 1);
    let classes: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    zeros
        .concat_cols(&logits)?
        .softmax_cross_entropy(&classes, &vec![true; targets.len()])
}
