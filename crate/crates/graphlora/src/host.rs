//! Toy decoder-only transformer with Graph-LoRA adapters on its query and
//! value weights and a two-class head.

use apsg::Label;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tensor_core::rng::{normal, seeded};
use tensor_core::{Checkpoint, ParamId, ParamStore, Tape, Tensor, Var};

use crate::adapter::GraphLoraAdapter;
use crate::config::{FusionMode, TrainConfig};
use crate::gnn::{GnnParams, GraphBatch};
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub adapter_q: GraphLoraAdapter,
    pub adapter_v: GraphLoraAdapter,
}

impl LayerParams {
    fn frozen(&self) -> [ParamId; 8] {
        [
            self.wq, self.wk, self.wv, self.wo, self.w1, self.b1, self.w2, self.b2,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub embed: ParamId,
    pub pos: ParamId,
    pub layers: Vec<LayerParams>,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub gnn: Option<GnnParams>,
}

pub struct ForwardOut {
    /// `1×2` class logits.
    pub logits: Var,
    /// Per-layer attention sublayer outputs (`n×d`), before the residual add.
    pub attention_outputs: Vec<Var>,
    pub graph_features: Option<Var>,
}

/// Exact ties go to Overfitting.
pub fn predict_label(probs: [f64; 2]) -> Label {
    if probs[0] > probs[1] {
        Label::Correct
    } else {
        Label::Overfitting
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamReport {
    /// Embedding, positional, attention and feed-forward parameters.
    pub host_parameters: usize,
    pub adapter_parameters: usize,
    /// Column-norm rows stored with the adapters; never updated.
    pub adapter_frozen_parameters: usize,
    pub gnn_parameters: usize,
    pub head_parameters: usize,
    /// Adapter + GNN + head.
    pub trainable_budget: usize,
    pub budget_ratio: f64,
    pub budget_limit: f64,
    pub within_budget: bool,
    /// Host tables that are also updated during training (embeddings and
    /// positional encodings), reported outside the budget.
    pub updated_host_tables: usize,
}

pub const BUDGET_LIMIT: f64 = 0.02;

impl Model {
    /// Fresh model; all randomness comes from `config.seed`.
    pub fn new(config: &TrainConfig) -> Result<Self, ModelError> {
        let h = &config.host;
        let d = h.d_model;
        let mut rng = seeded(config.seed);
        let mut store = ParamStore::new();
        let inv_sqrt = |n: usize| 1.0 / (n as f64).sqrt();
        let embed = store.add_row_sparse(
            "host/embed",
            normal(&mut rng, h.vocab_capacity, d, inv_sqrt(d)),
            true,
        )?;
        let pos = store.add("host/pos", normal(&mut rng, h.max_seq_len, d, 0.02), true)?;
        let mut frozen = Vec::with_capacity(h.layers);
        for l in 0..h.layers {
            let mut add = |n: &str, t: Tensor| store.add(format!("host/layer{l}/{n}"), t, false);
            frozen.push([
                add("wq", normal(&mut rng, d, d, inv_sqrt(d)))?,
                add("wk", normal(&mut rng, d, d, inv_sqrt(d)))?,
                add("wv", normal(&mut rng, d, d, inv_sqrt(d)))?,
                add("wo", normal(&mut rng, d, d, inv_sqrt(d)))?,
                add("ffn/w1", normal(&mut rng, d, h.ffn_width, inv_sqrt(d)))?,
                add("ffn/b1", Tensor::zeros(1, h.ffn_width))?,
                add(
                    "ffn/w2",
                    normal(&mut rng, h.ffn_width, d, inv_sqrt(h.ffn_width)),
                )?,
                add("ffn/b2", Tensor::zeros(1, d))?,
            ]);
        }
        let head_w = store.add("head/w", normal(&mut rng, d, 2, 0.02), true)?;
        let head_b = store.add("head/b", Tensor::zeros(1, 2), true)?;
        let gnn = match config.fusion {
            FusionMode::None => None,
            _ => Some(GnnParams::new(&mut store, &mut rng, d, h.gnn_hidden)?),
        };
        let mut layers = Vec::with_capacity(h.layers);
        for (l, [wq, wk, wv, wo, w1, b1, w2, b2]) in frozen.into_iter().enumerate() {
            let mut adapter = |target: &str, base| {
                GraphLoraAdapter::new(
                    &mut store,
                    &mut rng,
                    &format!("graph_lora/layer{l}/{target}"),
                    base,
                    h.rank,
                    h.adapter_heads,
                    config.fusion,
                    h.gnn_hidden,
                )
            };
            let adapter_q = adapter("q", wq)?;
            let adapter_v = adapter("v", wv)?;
            layers.push(LayerParams {
                wq,
                wk,
                wv,
                wo,
                w1,
                b1,
                w2,
                b2,
                adapter_q,
                adapter_v,
            });
        }
        Ok(Model {
            config: config.clone(),
            store,
            embed,
            pos,
            layers,
            head_w,
            head_b,
            gnn,
        })
    }

    /// Record a forward pass. With `use_adapters = false` the frozen host
    /// weights are used directly and no graph is consulted.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &[usize],
        graph: Option<&GraphBatch>,
        use_adapters: bool,
    ) -> Result<ForwardOut, ModelError> {
        let h = &self.config.host;
        let n = ids.len();
        if n == 0 {
            return Err(ModelError::EmptySequence);
        }
        if n > h.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: n,
                max: h.max_seq_len,
            });
        }
        let tok = tape.embed(self.embed, ids)?;
        let pos_all = tape.param(self.pos);
        let pos = tape.slice_rows(pos_all, 0, n)?;
        let mut x = tape.add(tok, pos)?;

        let graph_features = match (&self.gnn, use_adapters) {
            (Some(gnn), true) => {
                Some(gnn.forward(tape, self.embed, graph.ok_or(ModelError::MissingGraph)?)?)
            }
            _ => None,
        };

        let dh = h.d_model / h.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attention_outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let e = tape.layer_norm_rows(x);
            let (wq, wv) = if use_adapters {
                (
                    layer.adapter_q.weight(tape, e, graph_features)?,
                    layer.adapter_v.weight(tape, e, graph_features)?,
                )
            } else {
                (tape.param(layer.wq), tape.param(layer.wv))
            };
            let wk = tape.param(layer.wk);
            let q = tape.matmul(e, wq)?;
            let k = tape.matmul(e, wk)?;
            let v = tape.matmul(e, wv)?;
            let mut heads = Vec::with_capacity(h.heads);
            for i in 0..h.heads {
                let qh = tape.slice_cols(q, i * dh, dh)?;
                let kh = tape.slice_cols(k, i * dh, dh)?;
                let vh = tape.slice_cols(v, i * dh, dh)?;
                let s = tape.matmul_nt(qh, kh)?;
                let s = tape.scale(s, scale);
                let p = tape.softmax_rows(s, true)?;
                heads.push(tape.matmul(p, vh)?);
            }
            let cat = tape.concat_cols(&heads)?;
            let wo = tape.param(layer.wo);
            let attn = tape.matmul(cat, wo)?;
            attention_outputs.push(attn);
            x = tape.add(x, attn)?;

            let e2 = tape.layer_norm_rows(x);
            let (w1, b1, w2, b2) = (
                tape.param(layer.w1),
                tape.param(layer.b1),
                tape.param(layer.w2),
                tape.param(layer.b2),
            );
            let hid = tape.matmul(e2, w1)?;
            let hid = tape.add_row(hid, b1)?;
            let hid = tape.relu(hid);
            let out = tape.matmul(hid, w2)?;
            let out = tape.add_row(out, b2)?;
            x = tape.add(x, out)?;
        }
        let x = tape.layer_norm_rows(x);
        let last = tape.slice_rows(x, n - 1, 1)?;
        let hw = tape.param(self.head_w);
        let hb = tape.param(self.head_b);
        let logits = tape.matmul(last, hw)?;
        let logits = tape.add_row(logits, hb)?;
        Ok(ForwardOut {
            logits,
            attention_outputs,
            graph_features,
        })
    }

    /// `[P(Correct), P(Overfitting)]`.
    pub fn probabilities(
        &self,
        ids: &[usize],
        graph: Option<&GraphBatch>,
    ) -> Result<[f64; 2], ModelError> {
        self.probabilities_with(ids, graph, true)
    }

    pub fn probabilities_with(
        &self,
        ids: &[usize],
        graph: Option<&GraphBatch>,
        use_adapters: bool,
    ) -> Result<[f64; 2], ModelError> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, ids, graph, use_adapters)?;
        let p = tape.value(out.logits).softmax_rows(false)?;
        Ok([p.data[0], p.data[1]])
    }

    pub fn predict(&self, ids: &[usize], graph: Option<&GraphBatch>) -> Result<Label, ModelError> {
        Ok(predict_label(self.probabilities(ids, graph)?))
    }

    fn frozen_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.frozen()).collect()
    }

    /// SHA-256 over the names and little-endian bytes of every frozen host
    /// attention and feed-forward weight.
    pub fn frozen_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for id in self.frozen_ids() {
            let p = self.store.get(id);
            hasher.update(p.name.as_bytes());
            hasher.update([0u8]);
            for x in &p.value.data {
                hasher.update(x.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (_, p) in self.store.iter() {
            ck.push(p.name.clone(), p.value.clone());
        }
        ck
    }

    /// Rebuild the architecture from `config` and load every parameter from
    /// `ck` by name; extra tensors (such as optimizer state) are ignored.
    pub fn from_checkpoint(config: &TrainConfig, ck: &Checkpoint) -> Result<Self, ModelError> {
        let mut model = Model::new(config)?;
        let map = ck.to_map();
        let ids: Vec<(ParamId, String)> = model
            .store
            .iter()
            .map(|(id, p)| (id, p.name.clone()))
            .collect();
        for (id, name) in ids {
            let t = map
                .get(&name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != model.store.value(id).shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    model.store.value(id).shape()
                )));
            }
            *model.store.value_mut(id) = t.clone();
        }
        Ok(model)
    }

    fn size(&self, ids: impl IntoIterator<Item = ParamId>) -> usize {
        ids.into_iter().map(|id| self.store.value(id).len()).sum()
    }

    pub fn parameter_report(&self) -> ParamReport {
        let tables = self.size([self.embed, self.pos]);
        let host_parameters = tables + self.size(self.frozen_ids());
        let adapters: Vec<&GraphLoraAdapter> = self
            .layers
            .iter()
            .flat_map(|l| [&l.adapter_q, &l.adapter_v])
            .collect();
        let adapter_parameters = self.size(adapters.iter().flat_map(|a| a.trainable_ids()));
        let adapter_frozen_parameters = self.size(adapters.iter().map(|a| a.m));
        let gnn_parameters = self.gnn.map_or(0, |g| self.size(g.ids()));
        let head_parameters = self.size([self.head_w, self.head_b]);
        let trainable_budget = adapter_parameters + gnn_parameters + head_parameters;
        let budget_ratio = trainable_budget as f64 / host_parameters as f64;
        ParamReport {
            host_parameters,
            adapter_parameters,
            adapter_frozen_parameters,
            gnn_parameters,
            head_parameters,
            trainable_budget,
            budget_ratio,
            budget_limit: BUDGET_LIMIT,
            within_budget: budget_ratio <= BUDGET_LIMIT,
            updated_host_tables: tables,
        }
    }
}
