use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use motenc::data::{
    downsample, extract_window, list_motion_files, load_motion_file, normalize_recording, save_motion_file,
    synth_dataset, window_frames, MotionRecording, PairSet, SkeletonSchema, WindowIndex,
};
use motenc::eval::{
    check_disjoint, class_index, class_names, evaluate_classification, evaluate_horizons, labeled_features,
    latent_trajectory, sequence_windows, spike_triggered_averages, ClassifyOptions, EvalOptions, PersistenceBaseline,
};
use motenc::model::{build, ArchitectureSpec, Checkpoint, CheckpointMeta, HierarchySpec, Network};
use motenc::train::{finetune_checkpoint, pretrain_layerwise, train_classifier_with, train_te_with, OptimizerState};
use motenc::{Error, Result, SeededRng, Tensor};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{fail_if, path_problems, RunConfig};
use crate::{ClassifyArgs, Common, EvalArgs, LatentArgs, PredictArgs, StaArgs, SynthArgs, TrainArgs};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    Ok(cfg.out_dir.clone())
}

/// Config file, then the flags shared by every command.
fn prepare(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    cfg.resolve_seed();
    Ok(cfg)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, command: &str, hash: &str, seed: u64, outputs: &[PathBuf]) -> Result<()> {
    let m = Manifest {
        command,
        config_hash: hash,
        seed,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = dir.join(format!("{command}.manifest.json"));
    write_file(
        &path,
        serde_json::to_string_pretty(&m).expect("manifest serialises") + "\n",
    )
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            files.extend(list_motion_files(p)?);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

/// Loads, re-schemas, resamples and normalises every recording under `paths`.
fn load_recordings(paths: &[PathBuf], cfg: &RunConfig) -> Result<Vec<MotionRecording>> {
    let schema: Option<SkeletonSchema> = match &cfg.data.schema {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                line: e.line(),
                msg: e.to_string(),
            })?)
        }
        None => None,
    };
    let files = expand(paths)?;
    if files.is_empty() {
        return Err(Error::Data("no motion files found".into()));
    }
    let mut recs = Vec::with_capacity(files.len());
    for f in files {
        let mut r = load_motion_file(&f)?;
        if let Some(s) = &schema {
            if s.joint_names() != r.schema.joint_names() {
                return Err(Error::Data(format!(
                    "{}: joint names differ from the schema file",
                    f.display()
                )));
            }
            r.schema = s.clone();
        }
        if let Some(fps) = cfg.data.fps {
            r = downsample(&r, fps)?;
        }
        recs.push(normalize_recording(&r)?);
    }
    let first = &recs[0];
    if let Some(r) = recs.iter().find(|r| r.schema != first.schema || r.fps != first.fps) {
        return Err(Error::Data(format!(
            "{} differs from {} in skeleton or frame rate",
            r.trial, first.trial
        )));
    }
    Ok(recs)
}

fn load_encoder(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
    }
    let ckpt = Checkpoint::load(path)?;
    if !ckpt.network.kind().is_temporal_encoder() {
        return Err(Error::Config(format!(
            "{} holds a {}, not a temporal encoder",
            path.display(),
            ckpt.network.kind()
        )));
    }
    Ok(ckpt)
}

fn check_compatible(net: &Network, recs: &[MotionRecording]) -> Result<()> {
    let spec = net.spec();
    let r = &recs[0];
    if r.num_joints() != spec.num_joints {
        return Err(Error::Config(format!(
            "checkpoint expects {} joints, data has {}",
            spec.num_joints,
            r.num_joints()
        )));
    }
    if spec.kind == motenc::model::ArchKind::Hte && r.schema.hierarchy().limbs != spec.hierarchy.limbs {
        return Err(Error::Config(
            "data skeleton hierarchy differs from the checkpoint's".into(),
        ));
    }
    Ok(())
}

/// Takes joint count and body tree from the data, keeping configured widths.
fn fit_arch_to_schema(arch: &mut ArchitectureSpec, schema: &SkeletonSchema) {
    let h = schema.hierarchy();
    arch.num_joints = schema.num_joints();
    arch.hierarchy = HierarchySpec {
        num_joints: h.num_joints,
        limbs: h.limbs.clone(),
        groups: h.groups.clone(),
        ..arch.hierarchy.clone()
    };
}

fn hash_of(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("serialisable");
    Sha256::digest(&bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let cfg = prepare(&a.common)?;
    let seed = cfg.seed();
    let mut actions = Vec::new();
    for set in &a.action {
        for act in &set.0 {
            if !actions.contains(act) {
                actions.push(*act);
            }
        }
    }
    #[derive(Serialize)]
    struct Params<'a> {
        actions: Vec<&'a str>,
        count: usize,
        duration: f64,
        fps: u32,
        seed: u64,
        binary: bool,
    }
    let hash = hash_of(&Params {
        actions: actions.iter().map(|a| a.name()).collect(),
        count: a.count,
        duration: a.duration,
        fps: a.fps,
        seed,
        binary: a.binary,
    });
    let recs = synth_dataset(&actions, a.count, a.duration, a.fps, seed)?;
    let dir = out_dir(&cfg)?;
    let ext = if a.binary { "mrec" } else { "motion" };
    let mut outputs = Vec::new();
    for (i, r) in recs.iter().enumerate() {
        let label = r.label.as_deref().unwrap_or("unlabelled");
        let path = dir.join(format!("{label}_{:03}.{ext}", i % a.count.max(1)));
        save_motion_file(r, &path)?;
        println!("{}\t{label}\t{} frames\t{} fps", path.display(), r.num_frames(), r.fps);
        outputs.push(path);
    }
    write_manifest(&dir, "synth", &hash, seed, &outputs)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = prepare(&a.common)?;
    if let Some(k) = a.arch {
        cfg.arch.kind = k;
    }
    if !a.data.is_empty() {
        cfg.data.paths = a.data.clone();
    }
    let t = &mut cfg.train;
    a.epochs.inspect(|v| t.epochs = *v);
    a.lr.inspect(|v| t.learning_rate = *v);
    a.momentum.inspect(|v| t.momentum = *v);
    a.decay.inspect(|v| t.weight_decay = *v);
    a.batch.inspect(|v| t.batch_size = *v);
    if a.pretrain {
        t.pretrain = true;
    }
    a.stride.inspect(|v| cfg.data.stride = *v);
    let mut problems = cfg.training_problems();
    if let Some(f) = &a.finetune {
        if !f.exists() {
            problems.push(format!("--finetune: {} does not exist", f.display()));
        }
    }
    fail_if(problems)?;

    let recs = load_recordings(&cfg.data.paths, &cfg)?;
    let base = a.finetune.as_deref().map(load_encoder).transpose()?;
    match &base {
        Some(b) => {
            check_compatible(&b.network, &recs)?;
            cfg.arch = b.network.spec().clone();
        }
        None => fit_arch_to_schema(&mut cfg.arch, &recs[0].schema),
    }
    cfg.arch.validate()?;
    let hash = cfg.hash();
    let seed = cfg.seed();
    let tc = cfg.train.clone();
    println!(
        "arch={} lr={} momentum={} decay={} batch={} epochs={} seed={seed} config={hash}",
        cfg.arch.kind, tc.learning_rate, tc.momentum, tc.weight_decay, tc.batch_size, tc.epochs
    );
    let pairs = WindowIndex::new(recs, cfg.arch.delta_t, cfg.data.stride)?;
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "no recording is long enough for a window pair ({} frames needed)",
            2 * cfg.arch.delta_t
        )));
    }
    println!("pairs={} skipped_recordings={}", pairs.len(), pairs.skipped());

    let dir = out_dir(&cfg)?;
    let log_path = a.log.clone().unwrap_or_else(|| dir.join("train.log"));
    let mut log = File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
    let mut log_err = None;
    let mut emit = |line: String| {
        println!("{line}");
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
    };

    let ckpt = match &base {
        Some(b) => {
            let (mut ck, _) = finetune_checkpoint(b, &pairs, &tc, &mut |s| emit(s.to_string()))?;
            ck.meta.config_hash = Some(hash.clone());
            ck
        }
        None => {
            let mut net = build(&cfg.arch, Some(&mut SeededRng::new(seed)))?;
            if tc.pretrain {
                pretrain_layerwise(&mut net, &pairs, &tc, &mut |k, s| {
                    emit(format!("pretrain stage={k} {s}"))
                })?;
            }
            let mut state = OptimizerState::new(&net);
            let report = train_te_with(&mut net, &pairs, &tc, &mut state, &mut |s| emit(s.to_string()))?;
            let mut meta = report.meta(&tc);
            meta.config_hash = Some(hash.clone());
            Checkpoint::new(net, meta)
        }
    };
    if let Some(e) = log_err {
        return Err(io_err(&log_path, e));
    }
    let ckpt_path = dir.join("model.ckpt");
    ckpt.save(&ckpt_path)?;
    let cfg_path = dir.join("config.toml");
    write_file(&cfg_path, cfg.to_toml())?;
    println!("wrote {}", ckpt_path.display());
    write_manifest(&dir, "train", &hash, seed, &[ckpt_path, log_path, cfg_path])
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = prepare(&a.common)?;
    if !a.data.is_empty() {
        cfg.data.paths = a.data.clone();
    }
    if let Some(h) = &a.horizons {
        cfg.eval.horizons_ms = h.clone();
    }
    if a.mask_limb.is_some() {
        cfg.eval.mask_limb = a.mask_limb.clone();
    }
    a.stride.inspect(|v| cfg.eval.stride = *v);
    a.threads.inspect(|v| cfg.eval.threads = *v);
    fail_if(path_problems("data.paths", &cfg.data.paths))?;
    let ckpt = load_encoder(&a.checkpoint)?;
    let net = &ckpt.network;
    let recs = load_recordings(&cfg.data.paths, &cfg)?;
    check_compatible(net, &recs)?;
    if let Some(l) = &cfg.eval.mask_limb {
        recs[0].schema.limb_joints(l)?;
    }
    let hash = cfg.hash();
    let opts = EvalOptions {
        mask_limb: cfg.eval.mask_limb.clone(),
        stride: cfg.eval.stride,
        threads: cfg.eval.threads.max(1),
        ..EvalOptions::default()
    };
    let mut reports = Vec::new();
    if a.baseline {
        let p = PersistenceBaseline {
            delta_t: net.spec().delta_t,
            num_joints: net.spec().num_joints,
        };
        reports.push(("baseline", evaluate_horizons(&p, &recs, &cfg.eval.horizons_ms, &opts)?));
    }
    reports.push(("eval", evaluate_horizons(net, &recs, &cfg.eval.horizons_ms, &opts)?));

    let dir = out_dir(&cfg)?;
    let mut table = String::new();
    let mut outputs = Vec::new();
    for (name, r) in &reports {
        table.push_str(&r.to_table());
        let csv = dir.join(format!("{name}.csv"));
        write_file(&csv, r.to_csv())?;
        outputs.push(csv);
    }
    table.push_str(&format!(
        "# checkpoint={} config={hash} seed={}\n",
        a.checkpoint.display(),
        cfg.seed()
    ));
    print!("{table}");
    let txt = dir.join("eval.txt");
    write_file(&txt, &table)?;
    outputs.push(txt);
    write_manifest(&dir, "eval", &hash, cfg.seed(), &outputs)
}

pub fn classify(a: ClassifyArgs) -> Result<()> {
    let mut cfg = prepare(&a.common)?;
    if !a.train.is_empty() {
        cfg.data.paths = a.train.clone();
    }
    if !a.test.is_empty() {
        cfg.data.test_paths = a.test.clone();
    }
    let c = &mut cfg.classify;
    a.tap.inspect(|v| c.tap = *v);
    a.window_seconds.inspect(|v| c.window_seconds = *v);
    a.aggregation.inspect(|v| c.aggregation = *v);
    a.epochs.inspect(|v| c.train.epochs = *v);
    a.feature_stride.inspect(|v| c.feature_stride = *v);
    let mut problems = path_problems("data.test_paths", &cfg.data.test_paths);
    if a.clf.is_none() {
        problems.extend(path_problems("data.paths", &cfg.data.paths));
        if let Err(e) = cfg.classify.train.validate() {
            problems.push(e.to_string());
        }
    }
    if cfg.classify.feature_stride == 0 {
        problems.push("classify.feature_stride must be at least 1".into());
    }
    fail_if(problems)?;

    let te = load_encoder(&a.te)?.network;
    let tap = cfg.classify.tap;
    let width = te
        .tap_width(tap)
        .ok_or_else(|| Error::Config(format!("encoder has no {tap} tap")))?;
    let test = load_recordings(&cfg.data.test_paths, &cfg)?;
    check_compatible(&te, &test)?;
    let hash = cfg.hash();
    let seed = cfg.seed();
    let dir = out_dir(&cfg)?;
    let mut outputs = Vec::new();

    let (clf, classes) = match &a.clf {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("classifier {} does not exist", p.display())));
            }
            let ck = Checkpoint::load(p)?;
            if ck.meta.classes.is_empty() {
                return Err(Error::Config(format!("{} stores no class names", p.display())));
            }
            if ck.network.input_width() != width {
                return Err(Error::Config(format!(
                    "classifier takes {} features, {tap} tap gives {width}",
                    ck.network.input_width()
                )));
            }
            (ck.network, ck.meta.classes)
        }
        None => {
            let train = load_recordings(&cfg.data.paths, &cfg)?;
            check_compatible(&te, &train)?;
            check_disjoint(&train, &test)?;
            let classes = class_names(&train)?;
            for r in &test {
                class_index(&classes, r)?;
            }
            let (x, y) = labeled_features(&te, &train, &classes, tap, cfg.classify.feature_stride)?;
            let mut spec = ArchitectureSpec::classifier(width, classes.len());
            spec.classifier.hidden = cfg.classify.hidden.clone();
            let mut clf = build(&spec, Some(&mut SeededRng::new(seed)))?;
            let tc = &cfg.classify.train;
            println!(
                "classifier samples={} features={width} classes={}",
                y.len(),
                classes.len()
            );
            let mut state = OptimizerState::new(&clf);
            let report = train_classifier_with(&mut clf, &x, &y, tc, &mut state, &mut |s| println!("classifier {s}"))?;
            let meta = CheckpointMeta {
                config_hash: Some(hash.clone()),
                classes: classes.clone(),
                ..report.meta(tc)
            };
            let path = dir.join("classifier.ckpt");
            Checkpoint::new(clf.clone(), meta).save(&path)?;
            outputs.push(path);
            (clf, classes)
        }
    };

    let opts = ClassifyOptions {
        window_seconds: cfg.classify.window_seconds,
        aggregation: cfg.classify.aggregation,
    };
    let cm = evaluate_classification(&clf, &te, &test, &classes, tap, &opts)?;
    let mut text = cm.to_table();
    text.push_str(&format!(
        "# tap={tap} features={width} window_seconds={} aggregation={} config={hash} seed={seed}\n",
        opts.window_seconds, opts.aggregation
    ));
    print!("{text}");
    let txt = dir.join("confusion.txt");
    write_file(&txt, &text)?;
    let csv = dir.join("confusion.csv");
    write_file(&csv, cm.to_csv())?;
    outputs.extend([txt, csv]);
    write_manifest(&dir, "classify", &hash, seed, &outputs)
}

pub fn sta(a: StaArgs) -> Result<()> {
    let mut cfg = prepare(&a.common)?;
    if !a.data.is_empty() {
        cfg.data.paths = a.data.clone();
    }
    let s = &mut cfg.sta;
    if let Some(l) = &a.layer {
        s.layer = l.clone();
    }
    if let Some(u) = &a.units {
        s.units = u.clone();
    }
    a.threshold.inspect(|v| s.threshold = *v);
    a.stride.inspect(|v| s.stride = *v);
    fail_if(path_problems("data.paths", &cfg.data.paths))?;
    let net = load_encoder(&a.checkpoint)?.network;
    let recs = load_recordings(&cfg.data.paths, &cfg)?;
    check_compatible(&net, &recs)?;
    let hash = cfg.hash();
    let s = &cfg.sta;
    let dt = net.spec().delta_t;

    // accumulate activity-weighted sums one recording at a time
    let d = net.input_width();
    let mut sums = vec![vec![0.0; d]; s.units.len()];
    let mut weights = vec![0.0; s.units.len()];
    let mut counts = vec![0usize; s.units.len()];
    for r in &recs {
        let windows = match sequence_windows(r, dt, f64::INFINITY, s.stride) {
            Ok(w) => w,
            Err(Error::Eval(_)) => continue,
            Err(e) => return Err(e),
        };
        for (k, res) in spike_triggered_averages(&net, &windows, &s.layer, &s.units, s.threshold)?
            .into_iter()
            .enumerate()
        {
            if let Some(avg) = res.average {
                sums[k]
                    .iter_mut()
                    .zip(avg.data())
                    .for_each(|(a, v)| *a += v * res.total_activity);
                weights[k] += res.total_activity;
                counts[k] += res.count;
            }
        }
    }
    let dir = out_dir(&cfg)?;
    let mut outputs = Vec::new();
    for (k, &unit) in s.units.iter().enumerate() {
        if counts[k] == 0 {
            println!("{}[{unit}]: no window above {}; not written", s.layer, s.threshold);
            continue;
        }
        let avg: Vec<f64> = sums[k].iter().map(|v| v / weights[k]).collect();
        let window = Tensor::new(&[3, net.spec().num_joints, dt], avg)?;
        let rec = MotionRecording::new(
            recs[0].schema.clone(),
            recs[0].fps,
            window_frames(&window)?,
            None,
            format!("sta-{hash}"),
            format!("{}_{unit}", s.layer),
        )?;
        let path = dir.join(format!("sta_{}_{unit}.motion", s.layer));
        save_motion_file(&rec, &path)?;
        println!("{}\tcount={}\tthreshold={}", path.display(), counts[k], s.threshold);
        outputs.push(path);
    }
    write_manifest(&dir, "sta", &hash, cfg.seed(), &outputs)
}

fn load_single(path: &Path, cfg: &RunConfig) -> Result<MotionRecording> {
    if !path.exists() {
        return Err(Error::Config(format!("input {} does not exist", path.display())));
    }
    Ok(load_recordings(&[path.to_path_buf()], cfg)?.remove(0))
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let cfg = prepare(&a.common)?;
    let net = load_encoder(&a.checkpoint)?.network;
    let rec = load_single(&a.input, &cfg)?;
    check_compatible(&net, std::slice::from_ref(&rec))?;
    let dt = net.spec().delta_t;
    let t_max = rec.num_frames() - 1;
    let at = a.at.unwrap_or(t_max);
    if at + 1 < dt || at > t_max {
        return Err(Error::Param(format!(
            "--at {at} needs frames {}..={at}; the recording has 0..={t_max}",
            at as i64 + 1 - dt as i64
        )));
    }
    if a.rollout == 0 {
        return Err(Error::Param("--rollout must be at least 1".into()));
    }
    let mut window = extract_window(&rec, at + 1 - dt, dt)?;
    let mut frames = Vec::with_capacity(a.rollout * window.len());
    for _ in 0..a.rollout {
        window = net.predict_window(&window)?;
        frames.extend_from_slice(window_frames(&window)?.data());
    }
    let j = rec.num_joints();
    let out = MotionRecording::new(
        rec.schema.clone(),
        rec.fps,
        Tensor::new(&[a.rollout * dt, 3, j], frames)?,
        rec.label.clone(),
        rec.subject.clone(),
        format!("{}-pred-t{at}", rec.trial),
    )?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("{}_pred_t{at}.motion", rec.trial));
    save_motion_file(&out, &path)?;
    println!("{}\t{} frames", path.display(), out.num_frames());
    #[derive(Serialize)]
    struct Params<'a> {
        run: &'a str,
        input: String,
        at: usize,
        rollout: usize,
    }
    let hash = hash_of(&Params {
        run: &cfg.hash(),
        input: a.input.display().to_string(),
        at,
        rollout: a.rollout,
    });
    write_manifest(&dir, "predict", &hash, cfg.seed(), &[path])
}

pub fn latent(a: LatentArgs) -> Result<()> {
    let cfg = prepare(&a.common)?;
    let net = load_encoder(&a.checkpoint)?.network;
    let rec = load_single(&a.input, &cfg)?;
    check_compatible(&net, std::slice::from_ref(&rec))?;
    let tr = latent_trajectory(&net, &rec, a.tap, a.components)?;
    let hash = cfg.hash();
    let mut s = format!(
        "# method={} tap={} rank={} explained={:?} total_variance={:?} config={hash} seed={}\nstep",
        tr.method,
        tr.tap,
        tr.rank,
        tr.explained_variance,
        tr.total_variance,
        cfg.seed()
    );
    for c in 0..a.components {
        s.push_str(&format!(",pc{}", c + 1));
    }
    s.push('\n');
    let dt = net.spec().delta_t;
    for i in 0..tr.points.rows() {
        s.push_str(&(i + dt - 1).to_string());
        for v in tr.points.row(i) {
            s.push_str(&format!(",{v:?}"));
        }
        s.push('\n');
    }
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("latent_{}_{}.csv", rec.trial, a.tap));
    write_file(&path, s)?;
    println!("{}\t{} steps", path.display(), tr.points.rows());
    write_manifest(&dir, "latent", &hash, cfg.seed(), &[path])
}
