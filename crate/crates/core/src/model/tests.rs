use super::*;
use crate::corpus::{batchify, Example, Pos, Token};
use crate::objective::{batch_objective, ConstraintConfig, ConstraintKind, SegmentTargets};

fn vocab(n: usize) -> Vocabulary {
    let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
    tokens.extend((0..n).map(|i| format!("t{i}")));
    Vocabulary::from_tokens(tokens)
}

fn tiny(task: Task, layers: usize) -> ModelConfig {
    ModelConfig {
        task,
        embedding_dim: 6,
        hidden_dim: 3,
        num_bilstm_layers: layers,
        classifier_hidden: Some(vec![5]),
        num_classes: 3,
        attention_score: AttentionScore::General,
    }
}

fn example(id: &str, task: Task, segs: &[&[usize]]) -> Example {
    Example {
        id: id.into(),
        task,
        segments: segs
            .iter()
            .map(|s| {
                s.iter()
                    .map(|i| Token::new(format!("t{i}"), format!("t{i}"), Pos::Noun))
                    .collect()
            })
            .collect(),
        label: 1,
        annotation: None,
    }
}

#[test]
fn embedding_conventions() {
    let v = vocab(3);
    let mut pre = PretrainedEmbeddings::new(6);
    pre.insert("t0", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        .unwrap();
    let net = Network::new(tiny(Task::Classification, 1), &v, Some(&pre), 4).unwrap();
    let e = net.embed(&[vec![PAD_ID, 2, 3]]).unwrap();
    assert_eq!(e[0][0], vec![0.0; 6]);
    assert_eq!(e[0][1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert!(e[0][2].iter().all(|x| x.abs() <= OOV_INIT_BOUND));
    let again = Network::new(tiny(Task::Classification, 1), &v, Some(&pre), 4).unwrap();
    assert_eq!(net.embedding, again.embedding);
    let other = Network::new(tiny(Task::Classification, 1), &v, Some(&pre), 5).unwrap();
    assert_ne!(net.embedding.row(3), other.embedding.row(3));

    let wrong = PretrainedEmbeddings::new(5);
    assert!(matches!(
        Network::new(tiny(Task::Classification, 1), &v, Some(&wrong), 4),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn single_token_sequence_summary() {
    let net = Network::new(tiny(Task::Classification, 1), &vocab(3), None, 1).unwrap();
    let emb = net.embed(&[vec![2]]).unwrap();
    let ctx = net.contextualize(&emb, &[vec![1]]).unwrap();
    assert_eq!(ctx[0].states.len(), 1);
    assert_eq!(ctx[0].summary, ctx[0].states[0]);
}

#[test]
fn padding_does_not_change_states() {
    let net = Network::new(tiny(Task::Classification, 2), &vocab(4), None, 1).unwrap();
    let plain = net
        .contextualize(&net.embed(&[vec![2, 3, 4]]).unwrap(), &[vec![1, 1, 1]])
        .unwrap();
    let padded = net
        .contextualize(
            &net.embed(&[vec![2, 3, 4, 0, 0]]).unwrap(),
            &[vec![1, 1, 1, 0, 0]],
        )
        .unwrap();
    for (a, b) in plain[0].states.iter().zip(&padded[0].states) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
    assert_eq!(plain[0].summary, padded[0].summary);
}

#[test]
fn deeper_stack_changes_output() {
    let v = vocab(4);
    let one = Network::new(tiny(Task::Classification, 1), &v, None, 1).unwrap();
    let three = Network::new(tiny(Task::Classification, 3), &v, None, 1).unwrap();
    let a = one.forward_example(&[&[2, 3, 4]]).unwrap();
    let b = three.forward_example(&[&[2, 3, 4]]).unwrap();
    assert_ne!(a.probs, b.probs);
    assert_eq!(three.dense.encoder.len(), 3);
}

#[test]
fn attention_uniform_on_identical_keys() {
    let w = Matrix {
        rows: 2,
        cols: 2,
        data: vec![1.0, 0.3, -0.2, 0.5],
    };
    let keys = vec![vec![0.4, -1.0]; 4];
    let out = attention(&[1.0, 2.0], &keys, &keys, &[1, 1, 1, 1], &w).unwrap();
    for a in &out.map {
        assert!((a - 0.25).abs() < 1e-12);
    }
}

#[test]
fn attention_shift_invariance() {
    // the second key component is constant 1, so moving the query's second
    // component shifts every score by the same amount
    let w = Matrix {
        rows: 2,
        cols: 2,
        data: vec![1.0, 0.0, 0.0, 1.0],
    };
    let keys = vec![vec![0.3, 1.0], vec![-1.2, 1.0], vec![2.0, 1.0]];
    let a = attention(&[0.7, 0.0], &keys, &keys, &[1, 1, 1], &w).unwrap();
    let b = attention(&[0.7, 1.5], &keys, &keys, &[1, 1, 1], &w).unwrap();
    for i in 0..3 {
        assert!((a.map[i] - b.map[i]).abs() < 1e-6);
        assert!((b.scores[i] - a.scores[i] - 1.5).abs() < 1e-12);
        assert!(a.sigmoid_map[i] != b.sigmoid_map[i]);
    }
}

#[test]
fn attention_single_position_and_masking() {
    let w = Matrix {
        rows: 2,
        cols: 2,
        data: vec![0.5, 0.1, 0.2, 0.3],
    };
    let v = vec![vec![0.3, -0.7]];
    let out = attention(&[1.0, 1.0], &v, &v, &[1], &w).unwrap();
    assert_eq!(out.map, vec![1.0]);
    assert_eq!(out.context, v[0]);

    let keys = vec![vec![0.3, -0.7], vec![1.0, 1.0], vec![9.0, 9.0]];
    let out = attention(&[1.0, 1.0], &keys, &keys, &[1, 1, 0], &w).unwrap();
    assert_eq!(out.map[2], 0.0);
    assert_eq!(out.sigmoid_map[2], 0.0);
    assert_eq!(out.scores[2], f64::NEG_INFINITY);
    assert!((out.map.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(out.sigmoid_map[..2].iter().all(|&b| b > 0.0 && b < 1.0));

    assert!(attention(&[1.0, 1.0], &keys, &keys, &[0, 0, 0], &w).is_err());
    assert!(attention(&[1.0, 1.0], &keys, &keys[..2], &[1, 1, 1], &w).is_err());
}

#[test]
fn classification_batch_forward() {
    let v = vocab(6);
    let net = Network::new(tiny(Task::Classification, 1), &v, None, 3).unwrap();
    let short = example("a", Task::Classification, &[&[0, 1]]);
    let long = example("b", Task::Classification, &[&[2, 3, 4, 5]]);
    let batch = &batchify(&[short.clone(), long], &v, None, 2)[0];
    let (probs, atts) = net.forward_classification(batch).unwrap();
    for p in &probs {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(atts[0].map.len(), 4);
    assert_eq!(&atts[0].map[2..], &[0.0, 0.0]);
    let alone = &batchify(&[short], &v, None, 1)[0];
    let (p_alone, a_alone) = net.forward_classification(alone).unwrap();
    for (x, y) in p_alone[0].iter().zip(&probs[0]) {
        assert!((x - y).abs() <= 1e-6);
    }
    assert_eq!(a_alone[0].real_map(), atts[0].real_map());
    assert!(net.forward_nli(batch).is_err());
}

#[test]
fn nli_swap_symmetry() {
    let v = vocab(6);
    let net = Network::new(tiny(Task::Nli, 1), &v, None, 3).unwrap();
    let fwd = net.forward_example(&[&[2, 3, 4], &[5, 6]]).unwrap();
    let swapped = net.forward_example(&[&[5, 6], &[2, 3, 4]]).unwrap();
    assert_eq!(fwd.attentions[0].map, swapped.attentions[1].map);
    assert_eq!(fwd.attentions[1].map, swapped.attentions[0].map);
    for a in &fwd.attentions {
        assert!((a.map.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let one = net.forward_example(&[&[2], &[5, 6]]).unwrap();
    assert_eq!(one.attentions[0].map, vec![1.0]);
}

/// Loss of a single example, recomputed from scratch.
fn loss_of(
    net: &Network,
    segs: &[&[u32]],
    label: usize,
    targets: &[SegmentTargets<'_>],
    cfg: &ConstraintConfig,
) -> f64 {
    let out = net.forward_example(segs).unwrap();
    batch_objective(&[out], &[label], &[targets.to_vec()], cfg)
        .unwrap()
        .breakdown
        .total
}

#[test]
fn gradients_match_finite_differences() {
    let v = vocab(5);
    let ann0: Vec<u8> = vec![0, 1, 1, 0];
    let ann1: Vec<u8> = vec![1, 0, 0];
    let heur0 = vec![0.1, 0.4, 0.5, 0.0];
    let heur1 = vec![0.2, 0.3, 0.5];
    for task in [Task::Classification, Task::Nli] {
        for kind in [
            ConstraintKind::Entropy,
            ConstraintKind::Supervised,
            ConstraintKind::SemiSupervised,
        ] {
            let net = Network::new(tiny(task, 2), &v, None, 11).unwrap();
            let cfg = ConstraintConfig::new(kind, 0.7);
            let segs: Vec<&[u32]> = match task {
                Task::Classification => vec![&[2, 3, 4, 6]],
                Task::Nli => vec![&[2, 3, 4, 6], &[5, 2, 3]],
            };
            let targets: Vec<SegmentTargets> = [(&ann0, &heur0), (&ann1, &heur1)]
                .iter()
                .take(segs.len())
                .map(|(a, h)| SegmentTargets {
                    annotation: Some(a.as_slice()),
                    heuristic: Some(h.as_slice()),
                })
                .collect();
            let (out, cache) = net.forward_example_cached(&segs).unwrap();
            let obj = batch_objective(&[out], &[2], std::slice::from_ref(&targets), &cfg).unwrap();
            let mut grads = Gradients::zeros_like(&net.dense);
            net.backward_example(&cache, &obj.d_logits[0], &obj.d_scores[0], &mut grads);

            let h = 1e-6;
            let mut probe = net.clone();
            let n_tensors = probe.dense.tensors().len();
            for t in 0..n_tensors {
                let len = probe.dense.tensors()[t].len();
                for i in (0..len).step_by(3) {
                    let orig = probe.dense.tensors()[t][i];
                    probe.dense.tensors_mut()[t][i] = orig + h;
                    let up = loss_of(&probe, &segs, 2, &targets, &cfg);
                    probe.dense.tensors_mut()[t][i] = orig - h;
                    let down = loss_of(&probe, &segs, 2, &targets, &cfg);
                    probe.dense.tensors_mut()[t][i] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.dense.tensors()[t][i];
                    let rel =
                        (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                    assert!(
                        rel <= 1e-3,
                        "{task:?}/{kind:?} {}[{i}]: analytic {analytic} numeric {numeric}",
                        net.dense.tensor_names()[t]
                    );
                }
            }
            for (&id, row) in &grads.embedding {
                for (j, &analytic) in row.iter().enumerate() {
                    let orig = probe.embedding.row(id as usize)[j];
                    probe.embedding.row_mut(id as usize)[j] = orig + h;
                    let up = loss_of(&probe, &segs, 2, &targets, &cfg);
                    probe.embedding.row_mut(id as usize)[j] = orig - h;
                    let down = loss_of(&probe, &segs, 2, &targets, &cfg);
                    probe.embedding.row_mut(id as usize)[j] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let rel =
                        (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                    assert!(rel <= 1e-3, "embedding[{id}][{j}]: {analytic} vs {numeric}");
                }
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let v = vocab(5);
    let net = Network::new(tiny(Task::Nli, 2), &v, None, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.bin");
    save_checkpoint(&p, &net, &v, serde_json::json!({"note": "x"})).unwrap();
    let ck = load_checkpoint(&p).unwrap();
    assert_eq!(ck.network, net);
    assert_eq!(ck.vocabulary, v);
    assert_eq!(ck.vocab_hash, v.hash());
    assert_eq!(ck.experiment["note"], "x");

    std::fs::write(&p, b"garbage").unwrap();
    assert!(load_checkpoint(&p).is_err());
}
