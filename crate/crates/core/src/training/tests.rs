use super::*;
use crate::autodiff::gradcheck::check_params;
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape};
use crate::scenegen::{generate_dataset, DatasetManifest, GenConfig, SceneSample};
use crate::Exec;
use std::sync::OnceLock;

fn data() -> &'static (DatasetManifest, Vec<SceneSample>) {
    static D: OnceLock<(DatasetManifest, Vec<SceneSample>)> = OnceLock::new();
    D.get_or_init(|| generate_dataset(4, 77, &GenConfig { points_per_branch: 600, ..GenConfig::default() }, Exec::Serial).unwrap())
}

fn few_points(s: &SceneSample, seed: u64) -> ScenePoints {
    let mut rng = train_rng(seed, TrainStream::Points, 0, 0);
    sample_training_points(s, true, 6, 6, &mut rng).unwrap()
}

#[test]
fn default_weights() {
    let w = LossWeights::default();
    assert_eq!((w.jh, w.beta, w.theta, w.to, w.rec_h, w.rec_o), (5e-1, 5e-7, 5e-5, 5e-1, 5e-1, 5e-1));
}

#[test]
fn hand_loss_examples() {
    let w = LossWeights::default();
    let gt: Vec<[f64; 3]> = (0..21).map(|i| [i as f64 * 0.1, 0.2, -0.1]).collect();
    let zero = hand_loss(&gt, &gt, &[0.0; 48], &[0.0; 10], &w);
    assert_eq!(zero.l_hand, 0.0);
    let off: Vec<[f64; 3]> = gt.iter().map(|p| [p[0] + 0.03, p[1] - 0.01, p[2]]).collect();
    let off2: Vec<[f64; 3]> = gt.iter().map(|p| [p[0] + 0.06, p[1] - 0.02, p[2]]).collect();
    let a = hand_loss(&off, &gt, &[0.0; 48], &[0.0; 10], &w).l_jh;
    let b = hand_loss(&off2, &gt, &[0.0; 48], &[0.0; 10], &w).l_jh;
    assert!((b - 4.0 * a).abs() < 1e-15);
    assert!((a - 0.001).abs() < 1e-15);
}

#[test]
fn object_and_recon_examples() {
    let w = LossWeights::default();
    assert_eq!(object_loss([0.3, 0.2, 0.1], [0.3, 0.2, 0.1], &w), 0.0);
    assert!((object_loss([0.1, 0.0, 0.0], [0.0; 3], &w) - 5e-3).abs() < 1e-15);
    let gt = [0.1, -0.2, 0.3, 0.0];
    let pred: Vec<f64> = gt.iter().map(|v| v + 0.2).collect();
    let (h, o, total) = recon_loss(Some((&pred, &gt)), None, &w).unwrap();
    assert!((h - 0.1).abs() < 1e-15 && o == 0.0 && total == h);
    assert_eq!(recon_loss(Some((&gt, &gt)), Some((&gt, &gt)), &w).unwrap(), (0.0, 0.0, 0.0));
    assert!(recon_loss(Some((&[], &[])), None, &w).is_err());
}

#[test]
fn tape_losses_match_values() {
    let (m, s) = data();
    let t = m.normalized_template();
    let w = LossWeights::default();
    let sample = &s[0];
    let mut p = sample.hand;
    p.theta[7] += 0.2;
    p.beta[2] = 0.5;
    let pred_joints = crate::handkin::forward_kinematics(&p, &t).joints;
    let v = hand_loss(&pred_joints, &sample.joints, &p.theta, &p.beta, &w);
    let mut tape = Tape::new();
    let th = tape.leaf(crate::autodiff::Tensor::row(&p.theta));
    let be = tape.leaf(crate::autodiff::Tensor::row(&p.beta));
    let j = crate::handkin::forward_kinematics_tape(&mut tape, th, be, &t).unwrap();
    let jh = joint_loss_tape(&mut tape, j, &sample.joints).unwrap();
    let bl = beta_loss_tape(&mut tape, be).unwrap();
    let tl = theta_loss_tape(&mut tape, th).unwrap();
    assert!((tape.value(jh).item() - v.l_jh).abs() < 1e-12);
    assert!((tape.value(bl).item() - v.l_beta).abs() < 1e-12);
    assert!((tape.value(tl).item() - v.l_theta).abs() < 1e-12);
    let to = tape.leaf(crate::autodiff::Tensor::row(&[0.1, 0.0, 0.0]));
    let lt = translation_loss_tape(&mut tape, to, [0.0; 3]).unwrap();
    assert!((w.to * tape.value(lt).item() - 5e-3).abs() < 1e-15);
}

#[test]
fn total_equals_sum_of_parts() {
    let (m, s) = data();
    let t = m.normalized_template();
    for (i, v) in ModelVariant::ALL.iter().enumerate() {
        let model = Model::new(*v, 32, m.heatmap, 1.0, 1.0, i as u64).unwrap();
        let pts = few_points(&s[i % s.len()], i as u64);
        let mut tape = Tape::new();
        let (loss, r) = model.scene_loss(&mut tape, &model.store, &s[i % s.len()], &pts, &t, &LossConfig::default()).unwrap();
        let total = tape.value(loss).item();
        assert!((total - r.total).abs() < 1e-12, "{v}");
        assert!((r.total - (r.l_hand + r.l_obj + r.l_rec)).abs() < 1e-12);
        assert_eq!(r.l_hand == 0.0, !v.has_hand_head(), "{v}");
        assert_eq!(r.l_to == 0.0, !v.has_object_head(), "{v}");
        assert_eq!(r.l_rec_o == 0.0, !v.has_object(), "{v}");
    }
}

fn fd_entries(model: &Model) -> Vec<(String, usize)> {
    let mut e = vec![("sdf_h.l4.bias".to_string(), 0), ("sdf_h.l0.weight".to_string(), 256 * 512 + 3), ("encoder.l1.bias".to_string(), 5)];
    if model.variant.has_hand_head() {
        // global rotation, a finger rotation and a shape coefficient
        e.extend([0, 1, 2, 10, 50].map(|i| ("hand_head.l1.bias".to_string(), i)));
    }
    if model.variant.has_object_head() {
        e.extend([0, 100, 2000].map(|i| ("heatmap_head.l1.bias".to_string(), i)));
    }
    if model.variant.has_object() {
        e.push(("sdf_o.l3.bias".to_string(), 7));
    }
    e
}

#[test]
fn scene_loss_matches_finite_differences() {
    let (m, s) = data();
    let t = m.normalized_template();
    for v in [ModelVariant::C, ModelVariant::G, ModelVariant::GStar] {
        let model = Model::new(v, 32, m.heatmap, 1.0, 1.0, 3).unwrap();
        let sample = &s[1];
        let pts = few_points(sample, 5);
        let err = check_params(&model.store, &fd_entries(&model), 1e-6, |tape, store| {
            Ok(model.scene_loss(tape, store, sample, &pts, &t, &LossConfig::default())?.0)
        })
        .unwrap();
        assert!(err < 1e-3, "{v}: {err}");
    }
}

#[test]
fn zero_weight_terms_contribute_nothing() {
    let (m, s) = data();
    let t = m.normalized_template();
    let model = Model::new(ModelVariant::G, 32, m.heatmap, 1.0, 1.0, 9).unwrap();
    let pts = few_points(&s[2], 1);
    let grads = |w: LossWeights| {
        let cfg = LossConfig { weights: w, ..LossConfig::default() };
        let mut tape = Tape::new();
        let (l, _) = model.scene_loss(&mut tape, &model.store, &s[2], &pts, &t, &cfg).unwrap();
        tape.backward(l).unwrap().for_store(&model.store)
    };
    let base = LossWeights { jh: 0.0, beta: 0.0, theta: 0.0, to: 0.0, rec_h: 0.0, rec_o: 0.0 };
    // with every weight zero all gradients vanish exactly
    assert!(grads(base).iter().all(|g| g.data().iter().all(|v| *v == 0.0)));
    // adding a zero-weight term on top of an active one changes nothing
    let only_rec = LossWeights { rec_h: 0.5, ..base };
    let g1 = grads(only_rec);
    let g2 = grads(LossWeights { jh: 0.0, to: 0.0, rec_h: 0.5, ..LossWeights::default() });
    let hand_idx = model.store.index_of("hand_head.l1.bias").unwrap();
    // the hand head only receives gradient through the pose terms and the
    // canonical frame; with the pose weights at zero that leaves only the
    // (tiny) shape/rotation regularizers
    assert!(g2[hand_idx].data().iter().zip(g1[hand_idx].data()).any(|(a, b)| a != b));
    let g3 = grads(LossWeights { beta: 0.0, theta: 0.0, ..LossWeights { jh: 0.0, to: 0.0, rec_h: 0.5, ..base } });
    for (a, b) in g1.iter().zip(&g3) {
        assert_eq!(a.data(), b.data());
    }
    // the zero-weight gradient also agrees with finite differences
    let cfg = LossConfig { weights: LossWeights { jh: 0.0, ..LossWeights::default() }, ..LossConfig::default() };
    let err = check_params(&model.store, &fd_entries(&model), 1e-6, |tape, store| {
        Ok(model.scene_loss(tape, store, &s[2], &pts, &t, &cfg)?.0)
    })
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn single_step_descends() {
    let (m, s) = data();
    let t = m.normalized_template();
    let sample = &s[0];
    let pts = few_points(sample, 2);
    let cfg = LossConfig::default();
    let mut ok = 0;
    for seed in 0..100 {
        let mut model = Model::new(ModelVariant::G, 32, m.heatmap, 0.5, 0.5, 1000 + seed).unwrap();
        let mut tape = Tape::new();
        let (l, r0) = model.scene_loss(&mut tape, &model.store, sample, &pts, &t, &cfg).unwrap();
        let g = tape.backward(l).unwrap().for_store(&model.store);
        let mut st = AdamState::for_params(model.store.values());
        adam_step(model.store.values_mut(), &g, &mut st, &AdamConfig { lr: 1e-7, ..AdamConfig::default() }).unwrap();
        let mut tape = Tape::no_grad();
        let (_, r1) = model.scene_loss(&mut tape, &model.store, sample, &pts, &t, &cfg).unwrap();
        if r1.total < r0.total {
            ok += 1;
        }
    }
    assert!(ok >= 95, "{ok}/100");
}

#[test]
fn variants_share_point_draws() {
    let (m, s) = data();
    let t = m.normalized_template();
    let cfg = TrainConfig { n_pos: 20, n_neg: 20, seed: 4, ..TrainConfig::default() };
    for step in 0..5 {
        for slot in 0..3 {
            let (sa, pa) = prepare_scene(&s[slot], ModelVariant::A, &cfg, &t, step, slot).unwrap();
            let (sc, pc) = prepare_scene(&s[slot], ModelVariant::C, &cfg, &t, step, slot).unwrap();
            let (_, pd) = prepare_scene(&s[slot], ModelVariant::D, &cfg, &t, step, slot).unwrap();
            assert_eq!(sa, sc);
            assert_eq!(pa, pc);
            assert_eq!(pa.hand, pd.hand);
        }
    }
}

#[test]
fn point_draws() {
    let (_, s) = data();
    let mut rng = train_rng(1, TrainStream::Points, 0, 0);
    let p = sample_training_points(&s[0], true, 50, 40, &mut rng).unwrap();
    for b in [&p.hand, p.object.as_ref().unwrap()] {
        assert_eq!(b.points.len(), 90);
        assert!(b.sdf[..40].iter().all(|d| *d < 0.0));
        assert!(b.sdf[40..].iter().all(|d| *d >= 0.0));
        let mut uniq = b.points.clone();
        uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        uniq.dedup();
        assert_eq!(uniq.len(), 90, "drawn without replacement");
    }
    let mut rng = train_rng(1, TrainStream::Points, 0, 0);
    assert_eq!(sample_training_points(&s[0], true, 50, 40, &mut rng).unwrap(), p);
    let mut rng = train_rng(1, TrainStream::Points, 0, 0);
    let err = sample_training_points(&s[0], false, 10_000, 1, &mut rng).unwrap_err();
    assert!(matches!(err, TrainError::Points { need_pos: 10_000, .. }));
}

#[test]
fn short_training_run_is_deterministic() {
    let (m, s) = data();
    let cfg = TrainConfig { max_steps: 3, batch_size: 2, n_pos: 16, n_neg: 16, log_every: 1, ..TrainConfig::default() };
    let a = train(m, &s[..3], ModelVariant::G, &cfg, Exec::Serial, None).unwrap();
    let b = train(m, &s[..3], ModelVariant::G, &cfg, Exec::available(), None).unwrap();
    assert_eq!(a.steps, 3);
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let ck = a.model.to_checkpoint(&[]);
    let back = Model::from_checkpoint(&crate::autodiff::Checkpoint::from_bytes(&ck.to_bytes()).unwrap()).unwrap();
    assert_eq!(back, a.model);
}

#[test]
fn divergence_names_the_step() {
    let (m, s) = data();
    let mut bad = s[0].clone();
    for v in bad.hand_points.sdf.iter_mut() {
        *v = if *v < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let cfg = TrainConfig { max_steps: 2, batch_size: 1, n_pos: 4, n_neg: 4, ..TrainConfig::default() };
    let err = train(m, &[bad], ModelVariant::A, &cfg, Exec::Serial, None).unwrap_err();
    assert!(matches!(err, TrainError::Diverged { step: 0 }), "{err}");
    assert!(err.to_string().contains("step 0"));
}

#[test]
fn variant_names() {
    for v in ModelVariant::ALL {
        assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
    }
    let e = "h".parse::<ModelVariant>().unwrap_err();
    assert!(e.contains("{a,b,c,c_star,d,e,f,g,g_star}"), "{e}");
    assert!(!ModelVariant::CStar.has_hand_head() && ModelVariant::CStar.hand_frame() == Frame::GroundTruth);
    assert!(!ModelVariant::A.has_object() && ModelVariant::D.has_object());
}

#[test]
fn run_config_text() {
    let c = RunConfig::default();
    let text = c.to_text();
    assert_eq!(RunConfig::parse(&text).unwrap(), c);
    let c2 = RunConfig::parse("# comment\nvariant = c_star\ntrain.lr = 0.001\ngen.object_kinds = sphere, box\n").unwrap();
    assert_eq!(c2.variant, ModelVariant::CStar);
    assert_eq!(c2.train.lr, 0.001);
    assert_eq!(c2.gen.object_kinds, vec!["sphere".to_string(), "box".to_string()]);
    assert!(RunConfig::parse("train.lrr = 1").unwrap_err().to_string().contains("unknown key"));
    assert!(RunConfig::parse("seed = 1\nseed = 2").unwrap_err().to_string().contains("twice"));
    assert!(RunConfig::parse("train.batch_size = 0").is_err());
    assert_eq!(RunConfig::key_names().len(), text.lines().count());
}
