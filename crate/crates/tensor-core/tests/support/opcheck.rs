//! Finite-difference checks for every differentiable tape operation over
//! randomly drawn shapes.

#![allow(dead_code)]

use rand::Rng as _;
use tensor_core::gradcheck::{check, check_params};
use tensor_core::rng::{normal, seeded, uniform, Rng};
use tensor_core::{ParamStore, Tape, Tensor, TensorError, Var};

/// Values bounded away from zero (for ReLU kinks and reciprocals).
fn away_from_zero(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let mut t = uniform(rng, rows, cols, lo, hi);
    for x in &mut t.data {
        if rng.random_bool(0.5) {
            *x = -*x;
        }
    }
    t
}

/// Reduce to a scalar with fixed random weights so every output entry matters.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var, TensorError> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(normal(&mut seeded(seed ^ 0x5eed), r, c, 1.0));
    let p = tape.mul(out, w)?;
    Ok(tape.sum_all(p))
}

type Case = (
    Vec<Tensor>,
    Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>>,
);

fn case(op: &str, seed: u64) -> Case {
    let mut rng = seeded(seed);
    let m = rng.random_range(1..=5);
    let n = rng.random_range(1..=5);
    let p = rng.random_range(1..=5);
    let mut g = |r, c| normal(&mut rng, r, c, 1.0);
    match op {
        "matmul" => (
            vec![g(m, n), g(n, p)],
            Box::new(|t, v| t.matmul(v[0], v[1])),
        ),
        "matmul_nt" => (
            vec![g(m, n), g(p, n)],
            Box::new(|t, v| t.matmul_nt(v[0], v[1])),
        ),
        "add" => (vec![g(m, n), g(m, n)], Box::new(|t, v| t.add(v[0], v[1]))),
        "sub" => (vec![g(m, n), g(m, n)], Box::new(|t, v| t.sub(v[0], v[1]))),
        "mul" => (vec![g(m, n), g(m, n)], Box::new(|t, v| t.mul(v[0], v[1]))),
        "div" => {
            let den = away_from_zero(&mut rng, m, n, 0.5, 2.0);
            (
                vec![normal(&mut rng, m, n, 1.0), den],
                Box::new(|t, v| t.div(v[0], v[1])),
            )
        }
        "add_row" => (
            vec![g(m, n), g(1, n)],
            Box::new(|t, v| t.add_row(v[0], v[1])),
        ),
        "mul_row" => (
            vec![g(m, n), g(1, n)],
            Box::new(|t, v| t.mul_row(v[0], v[1])),
        ),
        "scale" => (vec![g(m, n)], Box::new(|t, v| Ok(t.scale(v[0], -1.7)))),
        "relu" => (
            vec![away_from_zero(&mut rng, m, n, 0.1, 1.0)],
            Box::new(|t, v| Ok(t.relu(v[0]))),
        ),
        "softmax_rows" => (vec![g(m, n)], Box::new(|t, v| t.softmax_rows(v[0], false))),
        "softmax_rows_causal" => (vec![g(m, m)], Box::new(|t, v| t.softmax_rows(v[0], true))),
        "column_norms" => (vec![g(m, n)], Box::new(|t, v| Ok(t.column_norms(v[0])))),
        "recip" => (
            vec![away_from_zero(&mut rng, m, n, 0.5, 2.0)],
            Box::new(|t, v| Ok(t.recip(v[0]))),
        ),
        "concat_cols" => (
            vec![g(m, n), g(m, p)],
            Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]])),
        ),
        "slice_cols" => {
            let start = rng.random_range(0..n);
            let width = rng.random_range(1..=n - start);
            (
                vec![normal(&mut rng, m, n, 1.0)],
                Box::new(move |t, v| t.slice_cols(v[0], start, width)),
            )
        }
        "slice_rows" => {
            let start = rng.random_range(0..m);
            let count = rng.random_range(1..=m - start);
            (
                vec![normal(&mut rng, m, n, 1.0)],
                Box::new(move |t, v| t.slice_rows(v[0], start, count)),
            )
        }
        "transpose" => (vec![g(m, n)], Box::new(|t, v| Ok(t.transpose(v[0])))),
        "mean_rows" => (vec![g(m, n)], Box::new(|t, v| t.mean_rows(v[0]))),
        "sum_all" => (vec![g(m, n)], Box::new(|t, v| Ok(t.sum_all(v[0])))),
        "layer_norm_rows" => (
            vec![g(m, n.max(2))],
            Box::new(|t, v| Ok(t.layer_norm_rows(v[0]))),
        ),
        "cross_entropy" => {
            let target = rng.random_range(0..n);
            (
                vec![normal(&mut rng, 1, n, 2.0)],
                Box::new(move |t, v| t.cross_entropy(v[0], target)),
            )
        }
        other => panic!("unknown op {other}"),
    }
}

pub const INPUT_OPS: &[&str] = &[
    "matmul",
    "matmul_nt",
    "add",
    "sub",
    "mul",
    "div",
    "add_row",
    "mul_row",
    "scale",
    "relu",
    "softmax_rows",
    "softmax_rows_causal",
    "column_norms",
    "recip",
    "concat_cols",
    "slice_cols",
    "slice_rows",
    "transpose",
    "mean_rows",
    "sum_all",
    "layer_norm_rows",
    "cross_entropy",
];

pub const TABLE_OPS: &[&str] = &["embed", "gather_mean"];

/// Largest relative error of `op` over `shapes` random cases.
pub fn worst_error(op: &str, shapes: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..shapes {
        let seed = s * 7919 + op.len() as u64;
        let err = if TABLE_OPS.contains(&op) {
            table_case(op, seed)
        } else {
            let (inputs, f) = case(op, seed);
            check(&inputs, |t, v| {
                let out = f(t, v)?;
                weighted_sum(t, out, seed)
            })
            .unwrap()
        };
        worst = worst.max(err);
    }
    worst
}

fn table_case(op: &str, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let rows = rng.random_range(2..=8);
    let cols = rng.random_range(1..=5);
    let mut store = ParamStore::new();
    let id = store
        .add_row_sparse("table", normal(&mut rng, rows, cols, 1.0), true)
        .unwrap();
    let picks = |rng: &mut Rng| -> Vec<usize> {
        (0..rng.random_range(0..=4))
            .map(|_| rng.random_range(0..rows))
            .collect()
    };
    let groups: Vec<Vec<usize>> = (0..rng.random_range(1..=4))
        .map(|_| picks(&mut rng))
        .collect();
    let ids: Vec<usize> = groups.iter().flatten().copied().chain([0]).collect();
    let op = op.to_string();
    check_params(&store, &[id], |t| {
        let out = if op == "embed" {
            t.embed(id, &ids)?
        } else {
            t.gather_mean(id, &groups)?
        };
        weighted_sum(t, out, seed)
    })
    .unwrap()
}
