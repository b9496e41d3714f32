mod support;

use apsg::ingest::PatchRecord;
use graphlora::host::predict_label;
use graphlora::vocab::{build_prompt, PromptParts, Vocab, BOS, PATCH_MARK};
use graphlora::{FusionMode, Model, ModelError};
use proptest::prelude::*;
use rand::Rng as _;
use support::{long_record, random_graph, small_config};
use tensor_core::rng::seeded;
use tensor_core::{Tape, Tensor};

fn attention_rows(model: &Model, ids: &[usize], use_adapters: bool) -> Vec<Tensor> {
    let mut tape = Tape::new(&model.store);
    let out = model.forward(&mut tape, ids, None, use_adapters).unwrap();
    out.attention_outputs
        .iter()
        .map(|v| tape.value(*v).clone())
        .collect()
}

fn assert_causal(model: &Model, use_adapters: bool) {
    let vocab = model.config.host.vocab_capacity;
    let mut rng = seeded(11);
    for trial in 0..20 {
        let ids: Vec<usize> = (0..6).map(|_| rng.random_range(0..vocab)).collect();
        let base = attention_rows(model, &ids, use_adapters);
        for j in 0..6 {
            let mut changed = ids.clone();
            changed[j] = (ids[j] + 1 + rng.random_range(0..vocab - 1)) % vocab;
            let moved = attention_rows(model, &changed, use_adapters);
            for (layer, (a, b)) in base.iter().zip(&moved).enumerate() {
                for i in 0..j {
                    assert_eq!(
                        a.row_slice(i),
                        b.row_slice(i),
                        "trial {trial} layer {layer}: row {i} saw token {j}"
                    );
                }
                assert_ne!(
                    a.row_slice(j),
                    b.row_slice(j),
                    "trial {trial} layer {layer}: row {j} ignores itself"
                );
            }
        }
    }
}

#[test]
fn attention_is_causal_without_graph_modulation() {
    let plain = Model::new(&small_config(FusionMode::None)).unwrap();
    assert_causal(&plain, true);
    assert_causal(&plain, false);
    let graphed = Model::new(&small_config(FusionMode::Attention)).unwrap();
    assert_causal(&graphed, false);
}

#[test]
fn probabilities_sum_to_one() {
    for fusion in [FusionMode::Attention, FusionMode::Weak, FusionMode::None] {
        let mut config = small_config(fusion);
        config.seed = 5;
        let model = Model::new(&config).unwrap();
        let mut rng = seeded(3);
        for case in 0..50u64 {
            let n = rng.random_range(1..=config.host.max_seq_len);
            let ids: Vec<usize> = (0..n)
                .map(|_| rng.random_range(0..config.host.vocab_capacity))
                .collect();
            let g = random_graph(
                case,
                rng.random_range(1..6),
                rng.random_range(0..4),
                config.host.vocab_capacity,
            );
            let p = model.probabilities(&ids, Some(&g)).unwrap();
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9, "{p:?}");
            assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}

#[test]
fn sequence_length_limits() {
    let config = small_config(FusionMode::None);
    let model = Model::new(&config).unwrap();
    assert!(matches!(
        model.probabilities(&[], None),
        Err(ModelError::EmptySequence)
    ));
    let long = vec![BOS; config.host.max_seq_len + 1];
    assert!(matches!(
        model.probabilities(&long, None),
        Err(ModelError::SequenceTooLong { len: 25, max: 24 })
    ));
    let graphed = Model::new(&small_config(FusionMode::Attention)).unwrap();
    assert!(matches!(
        graphed.probabilities(&[BOS], None),
        Err(ModelError::MissingGraph)
    ));
}

fn vocab_for(r: &PatchRecord) -> Vocab {
    Vocab::build(std::slice::from_ref(r), 1000).unwrap()
}

/// Split a prompt at its two `<P>` markers.
fn segments(ids: &[usize]) -> (&[usize], &[usize], &[usize]) {
    let marks: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == PATCH_MARK)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(marks.len(), 2, "exactly two markers in {ids:?}");
    (
        &ids[..marks[0]],
        &ids[marks[0] + 1..marks[1]],
        &ids[marks[1] + 1..],
    )
}

#[test]
fn long_prompt_truncation_keeps_the_patch_window() {
    let record = long_record();
    let vocab = vocab_for(&record);
    let full = build_prompt(&record, &vocab, false, 1000).unwrap();
    assert_eq!(full.len(), 300);
    let (full_pre, full_patch, full_after) = segments(&full);
    let fixed = 17;
    let full_before = &full_pre[fixed..];
    assert_eq!(
        (full_before.len(), full_patch.len(), full_after.len()),
        (207, 7, 67)
    );

    for max in [300, 299, 256, 233, 100, 26, 25, 20, 19] {
        let cut = build_prompt(&record, &vocab, false, max).unwrap();
        assert_eq!(cut.len(), max.min(300), "max {max}");
        assert_eq!(
            &cut[..fixed],
            &full[..fixed],
            "BOS and instruction survive at max {max}"
        );
        let (pre, patch, after) = segments(&cut);
        let before = &pre[fixed..];
        assert!(
            full_before.ends_with(before),
            "before keeps its tail at max {max}"
        );
        assert!(
            full_patch.starts_with(patch),
            "patch keeps its head at max {max}"
        );
        assert!(
            full_after.starts_with(after),
            "after keeps its head at max {max}"
        );
        if before.len() < full_before.len() {
            assert!(
                after.is_empty(),
                "before is cut only once after is gone (max {max})"
            );
        }
        if patch.len() < full_patch.len() {
            assert!(
                before.is_empty(),
                "patch is cut only once before is gone (max {max})"
            );
        }
    }
    // The 300-token fixture against the default window of 256.
    let cut = build_prompt(&record, &vocab, false, 256).unwrap();
    let (_, patch, after) = segments(&cut);
    assert_eq!(patch, full_patch);
    assert_eq!(after.len(), 67 - 44);
}

#[test]
fn ground_truth_is_cut_last() {
    let record = long_record();
    let vocab = vocab_for(&record);
    let parts = PromptParts::from_record(&record, true).unwrap();
    assert_eq!(parts.ground_truth.len(), 7);
    let cut = build_prompt(&record, &vocab, true, 17 + 7 + 2).unwrap();
    assert_eq!(&cut[17..24], &vocab.ids(&parts.ground_truth)[..]);
    assert_eq!(&cut[24..], &[PATCH_MARK, PATCH_MARK]);
    let cut = build_prompt(&record, &vocab, true, 17 + 3 + 2).unwrap();
    assert_eq!(&cut[17..20], &vocab.ids(&parts.ground_truth[..3])[..]);
}

#[test]
fn prompts_are_deterministic() {
    let records = support::corpus("synthetic20.json");
    let vocab = Vocab::build(&records, 500).unwrap();
    for r in &records {
        let a = build_prompt(r, &vocab, true, 256).unwrap();
        let b = build_prompt(r, &vocab, true, 256).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], BOS);
        assert_eq!(a.iter().filter(|t| **t == PATCH_MARK).count(), 2);
    }
}

proptest! {
    #[test]
    fn argmax_ignores_positive_logit_scaling(a in -50.0f64..50.0, b in -50.0f64..50.0, c in 1e-3f64..1e3) {
        let probs = |s: f64| {
            let p = Tensor::from_rows(&[vec![a * s, b * s]]).unwrap().softmax_rows(false).unwrap();
            [p.data[0], p.data[1]]
        };
        prop_assert_eq!(predict_label(probs(1.0)), predict_label(probs(c)));
    }

    #[test]
    fn model_prediction_ignores_head_scaling(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut config = small_config(FusionMode::None);
        config.seed = seed;
        let model = Model::new(&config).unwrap();
        let mut scaled = model.clone();
        for id in [model.head_w, model.head_b] {
            let t = scaled.store.value_mut(id);
            for v in &mut t.data {
                *v *= c;
            }
        }
        let mut rng = seeded(seed);
        let ids: Vec<usize> = (0..8).map(|_| rng.random_range(0..64)).collect();
        prop_assert_eq!(model.predict(&ids, None).unwrap(), scaled.predict(&ids, None).unwrap());
    }
}
