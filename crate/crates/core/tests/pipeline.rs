use motenc::data::{
    extract_window, make_window_pairs, normalize_recording, synth_dataset, synth_generate, window_frames, SynthAction,
    WindowIndex,
};
use motenc::eval::{evaluate_horizons, persistence_baseline, EvalOptions, PersistenceBaseline};
use motenc::model::{build, ArchKind, ArchitectureSpec, Checkpoint};
use motenc::train::{train_te, TrainConfig};
use motenc::SeededRng;
use proptest::prelude::*;

fn small_ste() -> ArchitectureSpec {
    let mut s = ArchitectureSpec::new(ArchKind::Ste);
    s.delta_t = 8;
    s.outer_width = 40;
    s.bottleneck = 10;
    s
}

#[test]
fn train_save_load_evaluate() {
    let recs: Vec<_> = synth_dataset(&[SynthAction::Walk, SynthAction::Squat], 2, 3.0, 30, 4)
        .unwrap()
        .iter()
        .map(|r| normalize_recording(r).unwrap())
        .collect();
    let spec = small_ste();
    let pairs = WindowIndex::new(recs.clone(), spec.delta_t, 1).unwrap();
    let mut net = build(&spec, Some(&mut SeededRng::new(1))).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let report = train_te(&mut net, &pairs, &cfg).unwrap();
    let losses = &report.loss_history;
    assert_eq!(losses.len(), 40);
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::new(net.clone(), report.meta(&cfg)).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.network, net);
    assert_eq!(back.meta.epoch, 40);

    let horizons = [66.7, 200.0];
    let opts = EvalOptions::default();
    let model = evaluate_horizons(&back.network, &recs, &horizons, &opts).unwrap();
    let hold = evaluate_horizons(
        &PersistenceBaseline {
            delta_t: 8,
            num_joints: 24,
        },
        &recs,
        &horizons,
        &opts,
    )
    .unwrap();
    assert_eq!(model.samples, hold.samples);
    assert_eq!(model.horizons, hold.horizons);
    assert!(model.mean_error.iter().all(|e| e.is_finite() && *e > 0.0));
}

#[test]
fn persistence_repeats_the_last_frame() {
    let rec = synth_generate(SynthAction::Turn, 1.0, 30, &mut SeededRng::new(2)).unwrap();
    let w = extract_window(&rec, 5, 6).unwrap();
    let held = window_frames(&persistence_baseline(&w).unwrap()).unwrap();
    let last = rec.frame(10);
    for s in 0..6 {
        assert_eq!(held.row(s), last);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn windows_tile_the_recording(seed in 0u64..1000, dt in 1usize..12, extra in 0usize..20) {
        let frames = 2 * dt + extra;
        let fps = 30;
        let rec = synth_generate(SynthAction::Box, frames as f64 / fps as f64, fps, &mut SeededRng::new(seed)).unwrap();
        prop_assume!(rec.num_frames() == frames);
        let pairs = make_window_pairs(&rec, dt);
        prop_assert_eq!(pairs.len(), extra + 1);
        for p in &pairs {
            let input = window_frames(&p.input).unwrap();
            let target = window_frames(&p.target).unwrap();
            for s in 0..dt {
                prop_assert_eq!(input.row(s), rec.frame(p.t + 1 - dt + s));
                prop_assert_eq!(target.row(s), rec.frame(p.t + 1 + s));
            }
        }
    }

    #[test]
    fn normalisation_is_idempotent(seed in 0u64..1000, action in 0usize..5) {
        let rec = synth_generate(SynthAction::ALL[action], 1.5, 30, &mut SeededRng::new(seed)).unwrap();
        let once = normalize_recording(&rec).unwrap();
        let twice = normalize_recording(&once).unwrap();
        prop_assert_eq!(once.frames.data(), twice.frames.data());
    }
}
