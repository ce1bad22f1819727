use repsense_core::metrics::{instability, MetricConfig};
use repsense_core::segmentation::{segment_recording, split, SegmentationConfig};
use repsense_core::synth::{generate, generate_corpus, CorpusSpec, SubjectProfile, SynthSpec};
use repsense_core::{Exercise, SAMPLE_RATE_HZ};

fn ten_rep_spec(exercise: Exercise, seed: u64) -> SynthSpec {
    let classes = exercise.rom_classes();
    SynthSpec {
        exercise,
        rom_degrees: classes[seed as usize % classes.len()],
        tremor_level: 0.0,
        reps: 10,
        profile: SubjectProfile::sample(format!("s{seed}"), seed),
        replicate: 0,
    }
}

#[test]
fn energy_cuts_recover_true_boundaries() {
    for exercise in Exercise::ALL {
        for seed in 0..4 {
            let (rec, truth, _) = generate(&ten_rep_spec(exercise, seed)).unwrap();
            let (_, cuts) = segment_recording(&rec, &SegmentationConfig::default()).unwrap();
            assert_eq!(cuts.len(), 9, "{exercise} seed {seed}: {:?} vs {:?}", cuts.cuts, truth.cuts);
            for (c, t) in cuts.cuts.iter().zip(&truth.cuts) {
                assert!(c.abs_diff(*t) <= 25, "{exercise} seed {seed}: cut {c} vs {t}");
            }
            let segs = split(&rec, &cuts).unwrap();
            assert_eq!(segs.len(), 10);
        }
    }
}

#[test]
fn expected_reps_forces_cut_count() {
    let (rec, _, _) = generate(&ten_rep_spec(Exercise::ShoulderAbduction, 3)).unwrap();
    let cfg = SegmentationConfig {
        expected_reps: Some(10),
        ..Default::default()
    };
    let (_, cuts) = segment_recording(&rec, &cfg).unwrap();
    assert_eq!(cuts.len(), 9);
}

#[test]
fn clean_moderate_segment_is_stable() {
    let spec = SynthSpec {
        exercise: Exercise::ShoulderAbduction,
        rom_degrees: 60,
        tremor_level: 0.0,
        reps: 1,
        profile: SubjectProfile::sample("s0", 5),
        replicate: 0,
    };
    let (rec, _, label) = generate(&spec).unwrap();
    assert!(label.instability < 0.1, "{}", label.instability);
    let shaky = SynthSpec { tremor_level: 1.0, ..spec };
    let (_, _, shaky_label) = generate(&shaky).unwrap();
    assert!(shaky_label.instability > label.instability);
    assert_eq!(instability(&rec.signal(), &MetricConfig::default()).unwrap(), label.instability);
}

#[test]
fn clean_rom_classes_are_separable_by_gyro_integral() {
    let corpus = generate_corpus(&CorpusSpec {
        tremor_levels: vec![0.0],
        per_cell: 4,
        ..CorpusSpec::default()
    })
    .unwrap();
    let feature = |i: usize| {
        let rec = &corpus.items[i].recording;
        rec.samples
            .iter()
            .map(|s| (s.gyro[0].powi(2) + s.gyro[1].powi(2) + s.gyro[2].powi(2)).sqrt() / SAMPLE_RATE_HZ)
            .sum::<f64>()
    };
    let classes = Exercise::ShoulderAbduction.rom_classes();
    let mut centroids = vec![(0.0, 0usize); classes.len()];
    for i in 0..corpus.items.len() {
        let c = corpus.items[i].label.rom.index;
        centroids[c].0 += feature(i);
        centroids[c].1 += 1;
    }
    let centroids: Vec<f64> = centroids.iter().map(|(s, n)| s / *n as f64).collect();
    let correct = (0..corpus.items.len())
        .filter(|&i| {
            let f = feature(i);
            let best = (0..centroids.len())
                .min_by(|&a, &b| (f - centroids[a]).abs().total_cmp(&(f - centroids[b]).abs()))
                .unwrap();
            best == corpus.items[i].label.rom.index
        })
        .count();
    let acc = correct as f64 / corpus.items.len() as f64;
    assert!(acc >= 0.95, "nearest-centroid accuracy {acc}");
}
