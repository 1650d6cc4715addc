use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use motenc::data::{load_motion_file, save_motion_file, MotionRecording, SkeletonSchema};
use motenc::model::{build, ArchKind, ArchitectureSpec, Checkpoint, CheckpointMeta, HierarchySpec};
use motenc::Tensor;
use tempfile::TempDir;

fn motenc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motenc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        text(&out.stdout),
        text(&out.stderr)
    );
    text(&out.stdout)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"
[arch]
kind = "ste"
delta_t = 5
outer_width = 12
bottleneck = 4
[train]
epochs = 2
"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

fn synth_into(dir: &Path, action: &str, count: &str, seed: &str) {
    ok(&motenc(&[
        "synth",
        "--action",
        action,
        "--count",
        count,
        "--duration",
        "2",
        "--seed",
        seed,
        "--out",
        s(dir),
    ]));
}

/// Constant recording; after normalisation every coordinate is zero.
fn still(dir: &Path, name: &str, frames: usize, fps: u32) -> PathBuf {
    let rec = MotionRecording::new(
        SkeletonSchema::default(),
        fps,
        Tensor::full(&[frames, 3, 24], 0.4),
        Some("still".into()),
        "s",
        name,
    )
    .unwrap();
    let p = dir.join(format!("{name}.motion"));
    save_motion_file(&rec, &p).unwrap();
    p
}

/// Untrained encoder with all weights zero: predicts exactly zero.
fn zero_checkpoint(dir: &Path, spec: &ArchitectureSpec) -> PathBuf {
    let p = dir.join("zero.ckpt");
    Checkpoint::new(build(spec, None).unwrap(), CheckpointMeta::default())
        .save(&p)
        .unwrap();
    p
}

#[test]
fn synth_writes_labelled_files_deterministically() {
    let d = TempDir::new().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    synth_into(&a, "walk", "3", "5");
    synth_into(&b, "walk", "3", "5");
    let files: Vec<PathBuf> = {
        let mut v: Vec<_> = fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "motion"))
            .collect();
        v.sort();
        v
    };
    assert_eq!(files.len(), 3);
    for f in &files {
        assert_eq!(load_motion_file(f).unwrap().label.as_deref(), Some("walk"));
        let twin = b.join(f.file_name().unwrap());
        assert_eq!(fs::read(f).unwrap(), fs::read(twin).unwrap());
    }
    let manifest = fs::read_to_string(a.join("synth.manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5") && manifest.contains("config_hash"));
}

#[test]
fn synth_rejects_unknown_actions_with_a_hint() {
    let d = TempDir::new().unwrap();
    let out = motenc(&["synth", "--action", "juggle", "--out", s(d.path())]);
    assert_eq!(code(&out), 2);
    let err = text(&out.stderr);
    assert!(err.contains("juggle") && err.contains("--help"), "{err}");
}

#[test]
fn train_echoes_recipe_and_is_deterministic() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("data");
    synth_into(&data, "walk", "1", "1");
    let cfg = tiny_config(d.path());
    let run = |out: &Path| {
        motenc(&[
            "train",
            "-c",
            s(&cfg),
            "--data",
            s(&data),
            "--out",
            s(out),
            "--seed",
            "3",
        ])
    };
    let (o1, o2) = (d.path().join("r1"), d.path().join("r2"));
    let stdout = ok(&run(&o1));
    assert!(stdout.contains("lr=0.01 momentum=0.9 decay=0.0005"), "{stdout}");
    assert!(stdout.contains("epoch=0 loss="), "{stdout}");
    assert!(stdout.contains("epoch=1 loss="), "{stdout}");
    ok(&run(&o2));
    assert_eq!(
        fs::read(o1.join("model.ckpt")).unwrap(),
        fs::read(o2.join("model.ckpt")).unwrap()
    );
    let log = fs::read_to_string(o1.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log
        .lines()
        .all(|l| l.starts_with("epoch=") && l.contains(" dropout=") && l.contains(" lr=")));
    let ck = Checkpoint::load(o1.join("model.ckpt")).unwrap();
    assert_eq!(ck.meta.seed, 3);
    assert_eq!(ck.meta.epoch, 2);
    assert_eq!(ck.meta.config_hash.as_ref().unwrap().len(), 16);
    assert!(stdout.contains(ck.meta.config_hash.as_ref().unwrap()));

    // fine-tuning records its origin
    let o3 = d.path().join("r3");
    let ckpt = o1.join("model.ckpt");
    ok(&motenc(&[
        "train",
        "-c",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&o3),
        "--finetune",
        s(&ckpt),
    ]));
    let ft = Checkpoint::load(o3.join("model.ckpt")).unwrap();
    assert!(ft.meta.finetuned_from.unwrap().starts_with("S-TE epoch=2 seed=3"));
}

#[test]
fn train_warns_on_large_batches_but_runs() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("data");
    synth_into(&data, "wave", "1", "2");
    let cfg = tiny_config(d.path());
    let out = motenc(&[
        "train",
        "-c",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(d.path()),
        "--batch",
        "1000",
    ]);
    ok(&out);
    let err = text(&out.stderr);
    assert!(err.contains("1000") && err.contains("300"), "{err}");
}

#[test]
fn train_config_errors_are_reported_together() {
    let d = TempDir::new().unwrap();
    let missing = d.path().join("nowhere");
    let out = motenc(&[
        "train",
        "--data",
        s(&missing),
        "--momentum",
        "1.5",
        "--out",
        s(d.path()),
    ]);
    assert_eq!(code(&out), 2);
    let err = text(&out.stderr);
    assert!(err.contains("nowhere") && err.contains("momentum"), "{err}");

    let bad = d.path().join("bad.toml");
    fs::write(&bad, "[train]\nlearning_rat = 1\n").unwrap();
    assert_eq!(code(&motenc(&["train", "-c", s(&bad)])), 2);
}

#[test]
fn diverging_training_exits_with_numeric_failure() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("data");
    synth_into(&data, "box", "1", "1");
    let cfg = tiny_config(d.path());
    let out = motenc(&[
        "train",
        "-c",
        s(&cfg),
        "--data",
        s(&data),
        "--lr",
        "1e12",
        "--epochs",
        "20",
        "--out",
        s(d.path()),
    ]);
    assert_eq!(code(&out), 4, "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("loss became"));
}

#[test]
fn eval_with_default_horizons_on_an_exact_fixture() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("data");
    fs::create_dir(&data).unwrap();
    still(&data, "a", 220, 60);
    still(&data, "b", 230, 60);
    let ckpt = zero_checkpoint(d.path(), &ArchitectureSpec::new(ArchKind::Hte));
    let out_dir = d.path().join("ev");
    let stdout = ok(&motenc(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--out",
        s(&out_dir),
    ]));
    let header: Vec<&str> = stdout.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(
        header,
        ["model", "80ms", "160ms", "320ms", "560ms", "1000ms", "1600ms"],
        "{stdout}"
    );
    let csv = fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "horizon_ms,frame_idx,mean_error,n");
    assert_eq!(rows[1], "80,5,0.0,52");
    assert_eq!(rows[6], "1600,96,0.0,52");
    assert!(fs::read_to_string(out_dir.join("eval.txt"))
        .unwrap()
        .contains("config="));

    let masked = ok(&motenc(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--out",
        s(&out_dir),
        "--mask-limb",
        "left_leg",
        "--baseline",
    ]));
    assert!(
        masked.contains("H-TE (no left_leg)") && masked.contains("persistence"),
        "{masked}"
    );
    let bad = motenc(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--mask-limb",
        "tail",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn eval_refuses_a_mismatched_skeleton() {
    let d = TempDir::new().unwrap();
    let data = still(d.path(), "a", 40, 30);
    let mut spec = ArchitectureSpec::new(ArchKind::Ste);
    spec.num_joints = 5;
    spec.delta_t = 5;
    spec.outer_width = 20;
    spec.bottleneck = 4;
    spec.hierarchy = HierarchySpec::single_limb(5);
    let ckpt = zero_checkpoint(d.path(), &spec);
    let out = motenc(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--out",
        s(d.path()),
    ]);
    assert_eq!(code(&out), 2, "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("joints"));
    let missing = motenc(&["eval", "--checkpoint", s(&d.path().join("no.ckpt")), "--data", s(&data)]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn classify_trains_reports_and_refuses_overlap() {
    let d = TempDir::new().unwrap();
    let (train, test) = (d.path().join("train"), d.path().join("test"));
    synth_into(&train, "walk,wave", "2", "1");
    synth_into(&test, "walk,wave", "1", "9");
    let ckpt = zero_checkpoint(d.path(), &ArchitectureSpec::new(ArchKind::Hte));
    fs::rename(&ckpt, d.path().join("te.ckpt")).unwrap();
    let te = d.path().join("te.ckpt");
    // 2 s at 30 fps is 60 frames, shorter than one 100-frame window
    let short = motenc(&[
        "classify",
        "--te",
        s(&te),
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--out",
        s(d.path()),
    ]);
    assert_eq!(code(&short), 3, "{}", text(&short.stderr));

    let (train, test) = (d.path().join("train60"), d.path().join("test60"));
    for (dir, seed) in [(&train, "1"), (&test, "9")] {
        ok(&motenc(&[
            "synth",
            "--action",
            "walk,wave",
            "--count",
            "1",
            "--duration",
            "4",
            "--fps",
            "60",
            "--seed",
            seed,
            "--out",
            s(dir),
        ]));
    }
    let out_dir = d.path().join("cls");
    let stdout = ok(&motenc(&[
        "classify",
        "--te",
        s(&te),
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--tap",
        "middle",
        "--epochs",
        "2",
        "--feature-stride",
        "10",
        "--out",
        s(&out_dir),
    ]));
    assert!(stdout.contains("features=100"), "{stdout}");
    assert!(stdout.contains("classification rate"), "{stdout}");
    let table = fs::read_to_string(out_dir.join("confusion.txt")).unwrap();
    assert!(table.contains("walk") && table.contains("wave") && table.contains("rate"));
    assert_eq!(
        fs::read_to_string(out_dir.join("confusion.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    // a stored classifier is reused
    let clf = out_dir.join("classifier.ckpt");
    let again = ok(&motenc(&[
        "classify",
        "--te",
        s(&te),
        "--clf",
        s(&clf),
        "--test",
        s(&test),
        "--out",
        s(&out_dir),
    ]));
    assert!(again.contains("classification rate"));

    let overlap = motenc(&[
        "classify",
        "--te",
        s(&te),
        "--train",
        s(&train),
        "--test",
        s(&train),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&overlap), 2);
    assert!(text(&overlap.stderr).contains("overlap"));
}

#[test]
fn sta_writes_qualifying_units_only() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("data");
    synth_into(&data, "walk", "1", "1");
    let mut spec = ArchitectureSpec::new(ArchKind::Ste);
    spec.delta_t = 10;
    let ckpt = zero_checkpoint(d.path(), &spec);
    let out = d.path().join("sta");
    // a zero network's sigmoid units sit at exactly 0.5
    let none = ok(&motenc(&[
        "sta",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--units",
        "0,1",
        "--out",
        s(&out),
    ]));
    assert!(none.contains("lower[0]: no window above 0.8; not written"), "{none}");
    assert!(!out.join("sta_lower_0.motion").exists());
    let some = ok(&motenc(&[
        "sta",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--units",
        "3",
        "--threshold",
        "0.4",
        "--out",
        s(&out),
    ]));
    assert!(some.contains("count=51"), "{some}");
    let rec = load_motion_file(out.join("sta_lower_3.motion")).unwrap();
    assert_eq!(rec.num_frames(), 10);
    let linear = motenc(&[
        "sta",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--layer",
        "bottleneck",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&linear), 2);
}

#[test]
fn predict_windows_and_rollouts() {
    let d = TempDir::new().unwrap();
    let data = d.path().join("data");
    synth_into(&data, "walk", "1", "1");
    let input = fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "motion"))
        .unwrap();
    let mut spec = ArchitectureSpec::new(ArchKind::Cte);
    spec.delta_t = 20;
    spec.conv = vec![motenc::model::ConvBranchSpec { filters: 2, width: 5 }];
    let ckpt = zero_checkpoint(d.path(), &spec);
    let out = d.path().join("pred");
    let first = ok(&motenc(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--at",
        "19",
        "--out",
        s(&out),
    ]));
    assert!(first.contains("\t20 frames"), "{first}");
    let early = motenc(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--at",
        "18",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&early), 2);
    let roll = ok(&motenc(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--rollout",
        "3",
        "--out",
        s(&out),
    ]));
    assert!(roll.contains("\t60 frames"), "{roll}");
    let written = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "motion")
        .count();
    assert_eq!(written, 2);

    let lat = ok(&motenc(&[
        "latent",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--tap",
        "lower",
        "--out",
        s(&out),
    ]));
    assert!(lat.contains("41 steps"), "{lat}");
}

#[test]
fn help_lists_recipe_defaults() {
    let help = text(&motenc(&["train", "--help"]).stdout);
    for want in ["0.01", "0.9", "0.0005", "--pretrain", "--finetune", "--arch"] {
        assert!(help.contains(want), "{want} missing from:\n{help}");
    }
    let help = text(&motenc(&["eval", "--help"]).stdout);
    assert!(help.contains("80,160,320,560,1000,1600"));
    let help = text(&motenc(&["sta", "--help"]).stdout);
    assert!(help.contains("0.8"));
}
