use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use repsense_core::imu::read_recording;
use repsense_core::metrics::{build_pairs, instability, SegmentLabel};
use repsense_core::plot::energy_overlay_svg;
use repsense_core::segmentation::{energy, segment_recording, split};
use repsense_core::synth::{generate_corpus, Manifest, MANIFEST_FILE};
use repsense_core::{CutSet, Exercise, ImuRecording, MetricKind};
use repsense_model::{argmax, slide, Checkpoint};
use repsense_train::{class_labels, cross_validate, run_fold, split_dataset, Dataset, EvalReport};
use sha2::{Digest, Sha256};

use crate::args::{EvalArgs, LabelArgs, PairsArgs, PlotArgs, RecordingMeta, ScoreArgs, SegmentArgs, SynthArgs, TrainArgs};
use crate::config::Settings;
use crate::exit::UsageError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn out_dir(settings: &Settings) -> Result<&Path> {
    let dir = settings.out_dir.as_path();
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_recording(path: &Path, meta: &RecordingMeta) -> Result<ImuRecording> {
    Ok(read_recording(path, Some((&meta.subject, meta.exercise)))?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn synth(settings: &Settings, args: &SynthArgs) -> Result<()> {
    let mut spec = settings.synth.clone();
    if let Some(e) = args.exercise {
        spec.exercise = e;
    }
    if let Some(n) = args.subjects {
        spec.n_subjects = n;
    }
    if let Some(n) = args.per_cell {
        spec.per_cell = n;
    }
    if let Some(levels) = &args.tremor_levels {
        spec.tremor_levels = levels.clone();
    }
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    spec.validate()?;
    let corpus = generate_corpus(&spec)?;
    let dir = out_dir(settings)?;
    let manifest = corpus.write(dir)?;
    let bytes = std::fs::read(&manifest).with_context(|| format!("cannot read back {}", manifest.display()))?;
    println!(
        "wrote {} recordings of {} for {} subjects to {}",
        corpus.items.len(),
        spec.exercise,
        spec.n_subjects,
        dir.display()
    );
    println!("manifest sha256 {}", sha256_hex(&bytes));
    Ok(())
}

pub fn segment(settings: &Settings, args: &SegmentArgs) -> Result<()> {
    let mut cfg = settings.segmentation.clone();
    if let Some(w) = &args.weights {
        cfg.weights = [w[0], w[1], w[2]];
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if args.expected_reps.is_some() {
        cfg.expected_reps = args.expected_reps;
    }
    if let Some(g) = args.min_gap {
        cfg.min_gap = g;
    }
    cfg.validate()?;
    let rec = load_recording(&args.input, &args.meta)?;
    let (e, cuts) = segment_recording(&rec, &cfg)?;
    let dir = out_dir(settings)?;
    let cuts_path = dir.join(format!("{}.cuts.json", rec.id));
    cuts.save(&cuts_path)?;
    if args.energy {
        write(&dir.join(format!("{}.energy.csv", rec.id)), e.to_csv())?;
    }
    if args.plot {
        let svg = energy_overlay_svg(&rec.signal(), &e, &cuts, &format!("{} energy and cuts", rec.id));
        write(&dir.join(format!("{}.energy.svg", rec.id)), svg)?;
    }
    println!("{}: {} cuts, {} segments -> {}", rec.id, cuts.len(), cuts.len() + 1, cuts_path.display());
    Ok(())
}

pub fn label(settings: &Settings, args: &LabelArgs) -> Result<()> {
    let rec = load_recording(&args.input, &args.meta)?;
    let dir_of_input = args.input.parent().unwrap_or(Path::new("."));

    let cuts_path = args
        .cuts
        .clone()
        .unwrap_or_else(|| dir_of_input.join(format!("{}.cuts.json", rec.id)));
    let cuts = if cuts_path.exists() {
        CutSet::load(&cuts_path)?
    } else if args.cuts.is_some() {
        return Err(UsageError(format!("cut file {} does not exist", cuts_path.display())).into());
    } else {
        warn!("no cut file for {}; labelling the whole recording as one segment", rec.id);
        CutSet::empty(rec.id.clone())
    };

    let manifest_path = args.manifest.clone().unwrap_or_else(|| dir_of_input.join(MANIFEST_FILE));
    let manifest_rom = if manifest_path.exists() {
        let m = Manifest::load(&manifest_path)?;
        let rom = m.by_recording().get(rec.id.as_str()).map(|e| e.rom_degrees as f64);
        if rom.is_none() {
            warn!("{} is not listed in {}", rec.id, manifest_path.display());
        }
        rom
    } else if args.manifest.is_some() {
        return Err(UsageError(format!("manifest {} does not exist", manifest_path.display())).into());
    } else {
        None
    };
    let rom = args.rom.or(manifest_rom).ok_or_else(|| {
        UsageError(format!("no range-of-motion annotation for {}: pass --rom or a manifest listing it", rec.id))
    })?;

    let mut labels = Vec::new();
    for seg in split(&rec, &cuts)? {
        labels.push(SegmentLabel {
            instability: instability(&seg.signal, &settings.metrics)?,
            segment_id: seg.id,
            rom_degrees: Some(rom),
            reps: seg.reps,
        });
    }
    let path = out_dir(settings)?.join(format!("{}.labels.json", rec.id));
    write(&path, serde_json::to_string_pretty(&labels)? + "\n")?;
    for l in &labels {
        println!("{}\trom {:.0}\tinstability {:.4}\treps {}", l.segment_id, rom, l.instability, l.reps);
    }
    println!("{} segments labelled -> {}", labels.len(), path.display());
    Ok(())
}

pub fn pairs(settings: &Settings, args: &PairsArgs) -> Result<()> {
    let ds = Dataset::from_dir(&args.corpus, settings.metrics)?;
    let metrics = if args.metric.is_empty() {
        MetricKind::ALL.to_vec()
    } else {
        args.metric.clone()
    };
    let dir = out_dir(settings)?;
    for metric in metrics {
        let pairs = build_pairs(&ds.segments, metric, &settings.metrics)?;
        let mut csv = String::from("signal_id,anchor_id,subject_id,metric,label\n");
        for p in &pairs {
            let _ = writeln!(csv, "{},{},{},{},{}", p.signal_id, p.anchor_id, p.subject_id, p.metric, p.label);
        }
        let path = dir.join(format!("pairs_{metric}.csv"));
        write(&path, csv)?;
        println!("{metric}: {} pairs over {} segments -> {}", pairs.len(), ds.len(), path.display());
    }
    Ok(())
}

pub fn train(settings: &Settings, args: &TrainArgs) -> Result<()> {
    let mut cfg = settings.train.clone();
    if let Some(m) = args.metric {
        cfg.metric = m;
    }
    let ds = Dataset::from_dir(&args.corpus, settings.metrics)?;
    let plan = split_dataset(&ds, args.split, settings.seed)?;
    let fold = match &args.fold {
        None => &plan.folds[0],
        Some(name) => plan.folds.iter().find(|f| &f.name == name).ok_or_else(|| {
            let names: Vec<&str> = plan.folds.iter().map(|f| f.name.as_str()).collect();
            UsageError(format!("no fold named {name:?}; folds are {}", names.join(", ")))
        })?,
    };
    info!("training {} on fold {} ({} train, {} val, {} test segments)", cfg.metric, fold.name, fold.train.len(), fold.val.len(), fold.test.len());
    let (report, outcome) = run_fold(&ds, fold, &settings.model, &cfg)?;

    let dir = out_dir(settings)?;
    let bytes = outcome.checkpoint().to_bytes()?;
    let ckpt = dir.join("model.ckpt");
    write(&ckpt, &bytes)?;
    write(&dir.join("history.json"), serde_json::to_string_pretty(&outcome.history)? + "\n")?;
    write(&dir.join("split.json"), plan.to_json()? + "\n")?;
    write(&dir.join("fold_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "{} {}: test mse {:.4} mae {:.4} r2 {:.4} accuracy {:.3} (best epoch {} of {})",
        fold.name, cfg.metric, report.scores.mse, report.scores.mae, report.scores.r2, report.accuracy, report.best_epoch, report.epochs_run
    );
    println!("checkpoint {} sha256 {}", ckpt.display(), sha256_hex(&bytes));
    Ok(())
}

pub fn eval(settings: &Settings, args: &EvalArgs) -> Result<()> {
    let metrics = if args.metric.is_empty() {
        vec![MetricKind::Rom, MetricKind::Stability]
    } else {
        args.metric.clone()
    };
    let ds = Dataset::from_dir(&args.corpus, settings.metrics)?;
    let plan = split_dataset(&ds, args.split, settings.seed)?;
    let mut report: Option<EvalReport> = None;
    for metric in metrics {
        let cfg = repsense_train::TrainConfig {
            metric,
            ..settings.train.clone()
        };
        info!("{metric}: {} folds on {} threads", plan.folds.len(), args.jobs);
        let r = cross_validate(&ds, &plan, &settings.model, &cfg, args.jobs)?;
        match report.as_mut() {
            None => report = Some(r),
            Some(acc) => acc.merge(r)?,
        }
    }
    let report = report.expect("at least one metric");

    let dir = out_dir(settings)?;
    write(&dir.join("report.json"), report.to_json()? + "\n")?;
    write(&dir.join("report.csv"), report.to_csv())?;
    write(&dir.join("split.json"), plan.to_json()? + "\n")?;
    for m in &report.metrics {
        if let Some(csv) = report.confusion_csv(m.metric) {
            write(&dir.join(format!("confusion_{}.csv", m.metric)), csv)?;
        }
        if let Some(svg) = report.confusion_svg(m.metric) {
            write(&dir.join(format!("confusion_{}.svg", m.metric)), svg)?;
        }
        println!(
            "{} {} {}: mse {:.4} mae {:.4} r2 {:.4} ± {:.4}, accuracy {:.3} over {} folds",
            report.exercise,
            report.split,
            m.metric,
            m.mse,
            m.mae,
            m.r2,
            m.r2_std,
            m.accuracy,
            report.folds.iter().filter(|f| f.metric == m.metric).count()
        );
    }
    println!("report written to {}", dir.display());
    Ok(())
}

pub fn score(settings: &Settings, args: &ScoreArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let exercise = ckpt.exercise.unwrap_or(Exercise::ShoulderAbduction);
    let meta = RecordingMeta {
        exercise,
        subject: "unknown".into(),
    };
    let mut windows = Vec::with_capacity(2);
    for path in [&args.signal, &args.anchor] {
        let rec = load_recording(path, &meta)?;
        if rec.exercise != exercise {
            warn!("{} is {} but the checkpoint was trained on {exercise}", path.display(), rec.exercise);
        }
        let signal = ckpt.scaler.apply(&rec.signal());
        windows.push(slide(&signal, &ckpt.model.cfg).with_context(|| format!("cannot window {}", path.display()))?);
    }
    let s = ckpt.model.similarity(&windows[0], &windows[1])?;
    println!("similarity {s:.6}");
    if args.classify {
        let probs = ckpt.model.classify(&windows[0])?;
        let k = argmax(&probs);
        let metric = ckpt.metric.unwrap_or(MetricKind::Rom);
        let names = class_labels(exercise, metric, &settings.metrics);
        let name = names.get(k).cloned().unwrap_or_else(|| format!("class {k}"));
        println!("{metric} class {name} (p = {:.3})", probs[k]);
    }
    Ok(())
}

pub fn plot(settings: &Settings, args: &PlotArgs) -> Result<()> {
    let dir = out_dir(settings)?;
    if let Some(path) = &args.report {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let report: EvalReport = serde_json::from_str(&text).with_context(|| format!("{} is not an evaluation report", path.display()))?;
        for m in &report.metrics {
            let out = dir.join(format!("{}_confusion_{}.svg", stem(path), m.metric));
            write(&out, report.confusion_svg(m.metric).expect("metric is in the report"))?;
            println!("{}", out.display());
        }
        return Ok(());
    }
    let input = args.input.as_ref().expect("clap requires input or --report");
    let rec = load_recording(input, &args.meta)?;
    let cfg = &settings.segmentation;
    let (e, cuts) = match &args.cuts {
        Some(p) => (energy(&rec.signal(), cfg)?, CutSet::load(p)?),
        None => segment_recording(&rec, cfg)?,
    };
    let out: PathBuf = dir.join(format!("{}.energy.svg", rec.id));
    write(&out, energy_overlay_svg(&rec.signal(), &e, &cuts, &format!("{} energy and cuts", rec.id)))?;
    println!("{}", out.display());
    Ok(())
}
