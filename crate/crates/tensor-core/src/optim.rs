//! Adam with a linear warm-up to a constant peak learning rate.

use std::collections::{BTreeMap, BTreeSet};

use crate::tape::{ParamGrads, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::TensorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, warmup_steps: u64) -> Self {
        AdamConfig {
            lr,
            warmup_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Learning rate used for 1-based step `t`.
    pub fn lr_at(&self, t: u64) -> f64 {
        if self.warmup_steps == 0 || t >= self.warmup_steps {
            self.lr
        } else {
            self.lr * t as f64 / self.warmup_steps as f64
        }
    }
}

/// Moment buffers. Row-sparse parameters keep buffers only for rows that have
/// ever received a gradient; untouched rows have zero moments, so skipping them
/// gives exactly the dense update.
/// First and second moments of each touched row of a row-sparse parameter.
type RowMoments = BTreeMap<usize, (Vec<f64>, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    dense: BTreeMap<ParamId, (Tensor, Tensor)>,
    rows: BTreeMap<ParamId, RowMoments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            dense: BTreeMap::new(),
            rows: BTreeMap::new(),
        }
    }

    fn update(
        cfg: &AdamConfig,
        lr: f64,
        t: u64,
        p: &mut [f64],
        g: Option<&[f64]>,
        m: &mut [f64],
        v: &mut [f64],
    ) {
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..p.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            p[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<(), TensorError> {
        for (id, g) in &grads.dense {
            let p = store.get(*id);
            if p.value.shape() != g.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    left: p.value.shape(),
                    right: g.shape(),
                });
            }
        }
        for (id, rows) in &grads.rows {
            let p = store.get(*id);
            for (r, g) in rows {
                if *r >= p.value.rows || g.len() != p.value.cols {
                    return Err(TensorError::ShapeMismatch {
                        op: "adam",
                        left: p.value.shape(),
                        right: (*r, g.len()),
                    });
                }
            }
        }
        self.step += 1;
        let t = self.step;
        let lr = self.config.lr_at(t);
        let cfg = self.config;
        let ids: Vec<ParamId> = store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            if store.get(id).row_sparse {
                let grad_rows = grads.rows.get(&id);
                let state = self.rows.entry(id).or_default();
                let mut touched: BTreeSet<usize> = state.keys().copied().collect();
                if let Some(gr) = grad_rows {
                    touched.extend(gr.keys().copied());
                }
                let value = store.value_mut(id);
                let cols = value.cols;
                for r in touched {
                    let g = grad_rows.and_then(|gr| gr.get(&r)).map(Vec::as_slice);
                    let (m, v) = state
                        .entry(r)
                        .or_insert_with(|| (vec![0.0; cols], vec![0.0; cols]));
                    Self::update(&cfg, lr, t, value.row_slice_mut(r), g, m, v);
                }
                if state.is_empty() {
                    self.rows.remove(&id);
                }
            } else {
                let g = grads.dense.get(&id);
                if g.is_none() && !self.dense.contains_key(&id) {
                    continue;
                }
                let value = store.value_mut(id);
                let (m, v) = self.dense.entry(id).or_insert_with(|| {
                    (
                        Tensor::zeros(value.rows, value.cols),
                        Tensor::zeros(value.rows, value.cols),
                    )
                });
                Self::update(
                    &cfg,
                    lr,
                    t,
                    &mut value.data,
                    g.map(|g| g.data.as_slice()),
                    &mut m.data,
                    &mut v.data,
                );
            }
        }
        Ok(())
    }

    /// Moment buffers as named tensors, for checkpointing.
    pub fn state_tensors(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = vec![("adam/step".to_string(), Tensor::scalar(self.step as f64))];
        for (id, (m, v)) in &self.dense {
            let name = &store.get(*id).name;
            out.push((format!("adam/m/{name}"), m.clone()));
            out.push((format!("adam/v/{name}"), v.clone()));
        }
        for (id, rows) in &self.rows {
            let name = &store.get(*id).name;
            let cols = store.value(*id).cols;
            let idx = Tensor::row(rows.keys().map(|&r| r as f64).collect());
            let mut m = Tensor::zeros(rows.len(), cols);
            let mut v = Tensor::zeros(rows.len(), cols);
            for (i, (mr, vr)) in rows.values().enumerate() {
                m.row_slice_mut(i).copy_from_slice(mr);
                v.row_slice_mut(i).copy_from_slice(vr);
            }
            out.push((format!("adam/rows/{name}"), idx));
            out.push((format!("adam/m/{name}"), m));
            out.push((format!("adam/v/{name}"), v));
        }
        out
    }

    /// Restore buffers written by [`Adam::state_tensors`].
    pub fn load_state(
        config: AdamConfig,
        store: &ParamStore,
        tensors: &BTreeMap<String, Tensor>,
    ) -> Result<Self, TensorError> {
        let mut adam = Adam::new(config);
        adam.step = tensors.get("adam/step").map_or(0, |t| t.item() as u64);
        for (id, p) in store.iter() {
            let (Some(m), Some(v)) = (
                tensors.get(&format!("adam/m/{}", p.name)),
                tensors.get(&format!("adam/v/{}", p.name)),
            ) else {
                continue;
            };
            if p.row_sparse {
                let idx = tensors
                    .get(&format!("adam/rows/{}", p.name))
                    .ok_or_else(|| {
                        TensorError::Checkpoint(format!("missing row index for {}", p.name))
                    })?;
                let rows = idx
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| {
                        (
                            r as usize,
                            (m.row_slice(i).to_vec(), v.row_slice(i).to_vec()),
                        )
                    })
                    .collect();
                adam.rows.insert(id, rows);
            } else {
                if m.shape() != p.value.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "adam state",
                        left: p.value.shape(),
                        right: m.shape(),
                    });
                }
                adam.dense.insert(id, (m.clone(), v.clone()));
            }
        }
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row(vec![1.0, 2.0]), true).unwrap();
        let mut adam = Adam::new(AdamConfig::new(0.1, 0));
        let mut g = ParamGrads::default();
        g.dense.insert(w, Tensor::zeros(1, 2));
        adam.step(&mut store, &g).unwrap();
        assert_eq!(store.value(w).data, vec![1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.0), true).unwrap();
        let mut adam = Adam::new(AdamConfig::new(1e-3, 0));
        let mut g = ParamGrads::default();
        g.dense.insert(w, Tensor::scalar(1.0));
        adam.step(&mut store, &g).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
        assert!((store.value(w).item() + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_decreases() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(1.0), true).unwrap();
        let mut adam = Adam::new(AdamConfig::new(0.01, 0));
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let grads = {
                let mut tape = Tape::new(&store);
                let xv = tape.param(x);
                let sq = tape.mul(xv, xv).unwrap();
                let loss = tape.value(sq).item();
                assert!(loss < prev);
                prev = loss;
                tape.backward(sq).unwrap().params
            };
            adam.step(&mut store, &grads).unwrap();
        }
    }

    #[test]
    fn warmup_is_linear_then_constant() {
        let c = AdamConfig::new(4e-5, 4);
        assert_eq!(c.lr_at(1), 1e-5);
        assert_eq!(c.lr_at(2), 2e-5);
        assert_eq!(c.lr_at(4), 4e-5);
        assert_eq!(c.lr_at(100), 4e-5);
    }

    #[test]
    fn row_sparse_matches_dense_adam() {
        let init = Tensor::from_vec(4, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let mut dense = ParamStore::new();
        let d = dense.add("e", init.clone(), true).unwrap();
        let mut sparse = ParamStore::new();
        let s = sparse.add_row_sparse("e", init, true).unwrap();
        let mut a1 = Adam::new(AdamConfig::new(0.05, 2));
        let mut a2 = Adam::new(AdamConfig::new(0.05, 2));
        for step in 0..6 {
            let row = [1usize, 3, 1, 0, 2, 3][step];
            let g = vec![0.5 - step as f64 * 0.2, 1.0];
            let mut gd = ParamGrads::default();
            let mut full = Tensor::zeros(4, 2);
            full.row_slice_mut(row).copy_from_slice(&g);
            gd.dense.insert(d, full);
            let mut gs = ParamGrads::default();
            gs.rows.entry(s).or_default().insert(row, g);
            a1.step(&mut dense, &gd).unwrap();
            a2.step(&mut sparse, &gs).unwrap();
        }
        assert_eq!(dense.value(d), sparse.value(s));
    }

    #[test]
    fn state_round_trip() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row(vec![1.0, 2.0]), true).unwrap();
        let e = store
            .add_row_sparse("e", Tensor::zeros(5, 2), true)
            .unwrap();
        let mut adam = Adam::new(AdamConfig::new(0.1, 0));
        let mut g = ParamGrads::default();
        g.dense.insert(w, Tensor::row(vec![0.3, -0.1]));
        g.rows.entry(e).or_default().insert(2, vec![1.0, 1.0]);
        adam.step(&mut store, &g).unwrap();
        let map: BTreeMap<String, Tensor> = adam.state_tensors(&store).into_iter().collect();
        let back = Adam::load_state(adam.config, &store, &map).unwrap();
        assert_eq!(back, adam);
    }
}
