//! Graph-LoRA: a magnitude/direction split of a frozen weight with a low-rank
//! direction update whose rank-space gates come from attention between graph
//! features and sequence features.

use tensor_core::rng::{normal, Rng};
use tensor_core::svd::svd;
use tensor_core::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::config::FusionMode;
use crate::ModelError;

/// `(V_down, V_up)` with `V_down = U_r S_r^{1/2}` and `V_up = S_r^{1/2} X_rᵀ`.
pub fn init_pissa(w0: &Tensor, r: usize) -> Result<(Tensor, Tensor), ModelError> {
    let max = w0.rows.min(w0.cols);
    if r > max {
        return Err(ModelError::RankTooLarge { rank: r, max });
    }
    let f = svd(w0).map_err(ModelError::Svd)?;
    let mut down = f.u.columns(0, r);
    let mut up = f.x.columns(0, r).transpose();
    for (c, s) in f.s[..r].iter().enumerate() {
        let root = s.sqrt();
        for i in 0..down.rows {
            down.set(i, c, down.get(i, c) * root);
        }
        for j in 0..up.cols {
            up.set(c, j, up.get(c, j) * root);
        }
    }
    Ok((down, up))
}

/// Where the rank-space gate vector `a` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Multi-head attention with graph-node queries and sequence keys/values;
    /// `w_q` is `d_g×r`, `w_k`/`w_v` are `d×r` (heads are column blocks) and
    /// `w_o` is `r×r`.
    Attention {
        w_q: ParamId,
        w_k: ParamId,
        w_v: ParamId,
        w_o: ParamId,
    },
    /// Linear projection of `mean(E) ‖ mean(F_APSG)`.
    Weak { w: ParamId },
    /// A free trainable vector; no graph input.
    Free { a: ParamId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphLoraAdapter {
    /// The frozen host weight `W0`, which also serves as `V`.
    pub base: ParamId,
    /// Frozen column norms of `W0`.
    pub m: ParamId,
    pub delta_m: ParamId,
    pub v_down: ParamId,
    pub v_up: ParamId,
    pub fusion: Fusion,
    pub rank: usize,
    pub heads: usize,
}

pub struct FusionOutput {
    /// `1×r` gate row.
    pub a: Var,
    /// Per-head `g×n` score matrices (attention fusion only).
    pub attention_maps: Vec<Var>,
}

impl GraphLoraAdapter {
    /// Attach an adapter to the frozen weight `base` (`d×k`); parameters are
    /// registered under `prefix`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        base: ParamId,
        rank: usize,
        heads: usize,
        mode: FusionMode,
        graph_width: usize,
    ) -> Result<Self, ModelError> {
        if heads == 0 || !rank.is_multiple_of(heads) {
            return Err(ModelError::HeadSplit { rank, heads });
        }
        let w0 = store.value(base).clone();
        let (d, k) = w0.shape();
        let (down, up) = init_pissa(&w0, rank)?;
        let p = |n: &str| format!("{prefix}/{n}");
        let m = store.add(p("m"), w0.column_norms(), false)?;
        let delta_m = store.add(p("delta_m"), Tensor::zeros(1, k), true)?;
        let v_down = store.add(p("v_down"), down, true)?;
        let v_up = store.add(p("v_up"), up, true)?;
        let fusion = match mode {
            FusionMode::Attention => Fusion::Attention {
                w_q: store.add(
                    p("w_q"),
                    normal(rng, graph_width, rank, 1.0 / (graph_width as f64).sqrt()),
                    true,
                )?,
                w_k: store.add(
                    p("w_k"),
                    normal(rng, d, rank, 1.0 / (d as f64).sqrt()),
                    true,
                )?,
                w_v: store.add(
                    p("w_v"),
                    normal(rng, d, rank, 1.0 / (d as f64).sqrt()),
                    true,
                )?,
                w_o: store.add(p("w_o"), Tensor::zeros(rank, rank), true)?,
            },
            FusionMode::Weak => Fusion::Weak {
                w: store.add(p("w_weak"), Tensor::zeros(d + graph_width, rank), true)?,
            },
            FusionMode::None => Fusion::Free {
                a: store.add(p("a"), Tensor::zeros(1, rank), true)?,
            },
        };
        Ok(GraphLoraAdapter {
            base,
            m,
            delta_m,
            v_down,
            v_up,
            fusion,
            rank,
            heads,
        })
    }

    /// Trainable parameters owned by the adapter.
    pub fn trainable_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.delta_m, self.v_down, self.v_up];
        match self.fusion {
            Fusion::Attention { w_q, w_k, w_v, w_o } => ids.extend([w_q, w_k, w_v, w_o]),
            Fusion::Weak { w } => ids.push(w),
            Fusion::Free { a } => ids.push(a),
        }
        ids
    }

    /// Gate vector from sequence features `e` (`n×d`) and graph features `f`
    /// (`g×d_g`).
    pub fn fuse(
        &self,
        tape: &mut Tape,
        e: Var,
        f: Option<Var>,
    ) -> Result<FusionOutput, ModelError> {
        match self.fusion {
            Fusion::Free { a } => Ok(FusionOutput {
                a: tape.param(a),
                attention_maps: Vec::new(),
            }),
            Fusion::Weak { w } => {
                let f = f.ok_or(ModelError::MissingGraph)?;
                let a = fuse_weak(tape, e, f, w)?;
                Ok(FusionOutput {
                    a,
                    attention_maps: Vec::new(),
                })
            }
            Fusion::Attention { w_q, w_k, w_v, w_o } => {
                let f = f.ok_or(ModelError::MissingGraph)?;
                if tape.value(e).rows == 0 || tape.value(f).rows == 0 {
                    return Err(ModelError::EmptyFusionInput);
                }
                let (wq, wk, wv, wo) = (
                    tape.param(w_q),
                    tape.param(w_k),
                    tape.param(w_v),
                    tape.param(w_o),
                );
                let q = tape.matmul(f, wq)?;
                let k = tape.matmul(e, wk)?;
                let v = tape.matmul(e, wv)?;
                let rh = self.rank / self.heads;
                let scale = 1.0 / (rh as f64).sqrt();
                let mut maps = Vec::with_capacity(self.heads);
                let mut outs = Vec::with_capacity(self.heads);
                for h in 0..self.heads {
                    let qh = tape.slice_cols(q, h * rh, rh)?;
                    let kh = tape.slice_cols(k, h * rh, rh)?;
                    let vh = tape.slice_cols(v, h * rh, rh)?;
                    let scores = tape.matmul_nt(qh, kh)?;
                    let scores = tape.scale(scores, scale);
                    let p = tape.softmax_rows(scores, false)?;
                    outs.push(tape.matmul(p, vh)?);
                    maps.push(p);
                }
                let heads = tape.concat_cols(&outs)?;
                let projected = tape.matmul(heads, wo)?;
                Ok(FusionOutput {
                    a: tape.mean_rows(projected)?,
                    attention_maps: maps,
                })
            }
        }
    }

    /// `W' = (m + Δm) ⊙ colnormalize(V + V_down·diag(a)·V_up)`.
    pub fn compose_weight(&self, tape: &mut Tape, a: Var) -> Result<Var, ModelError> {
        let v = tape.param(self.base);
        let down = tape.param(self.v_down);
        let up = tape.param(self.v_up);
        let gated = tape.mul_row(down, a)?;
        let delta = tape.matmul(gated, up)?;
        let s = tape.add(v, delta)?;
        let norms = tape.column_norms(s);
        if let Some(column) = tape.value(norms).data.iter().position(|n| *n == 0.0) {
            return Err(ModelError::DegenerateColumn { column });
        }
        let m = tape.param(self.m);
        let dm = tape.param(self.delta_m);
        let mag = tape.add(m, dm)?;
        let factor = tape.div(mag, norms)?;
        Ok(tape.mul_row(s, factor)?)
    }

    /// Effective weight for one example.
    pub fn weight(&self, tape: &mut Tape, e: Var, f: Option<Var>) -> Result<Var, ModelError> {
        let out = self.fuse(tape, e, f)?;
        self.compose_weight(tape, out.a)
    }
}

/// `concat(mean_rows(E), mean_rows(F)) · W`.
pub fn fuse_weak(tape: &mut Tape, e: Var, f: Var, w: ParamId) -> Result<Var, ModelError> {
    let me = tape.mean_rows(e)?;
    let mf = tape.mean_rows(f)?;
    let x = tape.concat_cols(&[me, mf])?;
    let w = tape.param(w);
    Ok(tape.matmul(x, w)?)
}
