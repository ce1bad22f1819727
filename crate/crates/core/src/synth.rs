//! Synthetic wrist IMU recordings of shoulder exercises.
//!
//! The forearm is modelled as a rigid body rotating about a fixed axis `n`
//! (sensor frame) by an angle θ(t) that follows a raised cosine
//! `θ = rom/2 · (1 − cos ωt)` for every repetition. With `u0` the gravity
//! direction at rest and `ρ` the lever arm from the rotation centre to the
//! sensor:
//!
//! ```text
//! accel = g·Rot(n, −θ)·u0 + θ̈·(n × ρ) − θ̇²·ρ
//! gyro  = θ̇·n
//! ```
//!
//! Tremor is a sum of random 8–12 Hz sinusoids added to every channel.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{write_recording, Exercise, ImuRecording, ImuSample, SAMPLE_RATE_HZ, STANDARD_GRAVITY};
use crate::metrics::{instability, MetricConfig, QualityLabel, RomClass};
use crate::segmentation::CutSet;

/// Tremor RMS per channel at `tremor_level == 1`, in channel units.
pub const TREMOR_GAIN: f64 = 10.0;
pub const TREMOR_BAND_HZ: (f64, f64) = (8.0, 12.0);
const TREMOR_COMPONENTS: usize = 6;

pub const TEMPO_RANGE: (f64, f64) = (1.5, 4.0);
pub const ARM_SCALE_RANGE: (f64, f64) = (0.8, 1.2);
pub const JITTER_RANGE: (f64, f64) = (0.0, 0.1);

/// splitmix64 finaliser, used to derive independent child seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(parent), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub arm_length_scale: f64,
    /// Seconds per repetition.
    pub tempo: f64,
    /// Maximum relative deviation of a repetition's amplitude from the target.
    pub amplitude_jitter: f64,
    pub rng_seed: u64,
}

impl SubjectProfile {
    /// Draws a profile uniformly from the allowed ranges.
    pub fn sample(subject_id: impl Into<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            subject_id: subject_id.into(),
            arm_length_scale: rng.gen_range(ARM_SCALE_RANGE.0..ARM_SCALE_RANGE.1),
            tempo: rng.gen_range(TEMPO_RANGE.0..TEMPO_RANGE.1),
            amplitude_jitter: rng.gen_range(JITTER_RANGE.0..JITTER_RANGE.1),
            rng_seed: rng.gen(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
        if !within(self.arm_length_scale, ARM_SCALE_RANGE) {
            return Err(Error::param(format!("arm_length_scale {} outside [0.8, 1.2]", self.arm_length_scale)));
        }
        if !within(self.tempo, TEMPO_RANGE) {
            return Err(Error::param(format!("tempo {} outside [1.5, 4.0] s", self.tempo)));
        }
        if !within(self.amplitude_jitter, JITTER_RANGE) {
            return Err(Error::param(format!("amplitude_jitter {} outside [0, 0.1]", self.amplitude_jitter)));
        }
        Ok(())
    }

    pub fn samples_per_rep(&self) -> usize {
        (self.tempo * SAMPLE_RATE_HZ).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub exercise: Exercise,
    pub rom_degrees: u32,
    pub tremor_level: f64,
    pub reps: usize,
    pub profile: SubjectProfile,
    /// Distinguishes repeated recordings of the same cell. The tremor
    /// pattern depends on this but not on `tremor_level`, so a level sweep
    /// scales one fixed disturbance.
    #[serde(default)]
    pub replicate: u32,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if !self.exercise.rom_classes().contains(&self.rom_degrees) {
            return Err(Error::param(format!(
                "{}° is not a legal class for {}: {:?}",
                self.rom_degrees,
                self.exercise,
                self.exercise.rom_classes()
            )));
        }
        if !(0.0..=1.0).contains(&self.tremor_level) {
            return Err(Error::param(format!("tremor_level {} outside [0, 1]", self.tremor_level)));
        }
        if self.reps < 1 {
            return Err(Error::param("reps must be at least 1"));
        }
        Ok(())
    }

    pub fn recording_id(&self) -> String {
        format!(
            "{}_{}_r{:03}_t{:03}_{}",
            self.profile.subject_id,
            self.exercise.code(),
            self.rom_degrees,
            (self.tremor_level * 100.0).round() as u32,
            self.replicate
        )
    }

    fn seed(&self) -> u64 {
        derive_seed(
            self.profile.rng_seed,
            &[self.exercise as u64, self.rom_degrees as u64, self.replicate as u64],
        )
    }
}

type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: Vec3) -> Vec3 {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Rodrigues rotation of `v` about unit axis `n` by `angle`.
fn rotate(n: Vec3, angle: f64, v: Vec3) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let k = cross(n, v);
    let d = dot(n, v) * (1.0 - c);
    [
        v[0] * c + k[0] * s + n[0] * d,
        v[1] * c + k[1] * s + n[1] * d,
        v[2] * c + k[2] * s + n[2] * d,
    ]
}

/// Rotation axis, resting gravity direction and unit lever arm for an
/// exercise, in the sensor frame.
fn mount(exercise: Exercise) -> (Vec3, Vec3, Vec3) {
    let d = std::f64::consts::FRAC_1_SQRT_2;
    match exercise {
        Exercise::ShoulderAbduction => ([0.0, 0.0, 1.0], [-d, d, 0.0], [0.6, 0.0, 0.0]),
        Exercise::ForwardFlexion => ([0.0, 1.0, 0.0], normalize([-d, 0.2, -d]), [0.6, 0.0, 0.0]),
        Exercise::ExternalRotation => {
            // The forearm turns about the (vertical) upper arm, so gravity
            // stays on the rotation axis and only the short lever arm moves.
            let n = normalize([-0.3, 0.45, 0.84]);
            let x = [1.0, 0.0, 0.0];
            let along = dot(x, n);
            let perp = normalize([x[0] - along * n[0], x[1] - along * n[1], x[2] - along * n[2]]);
            (n, n, [0.3 * perp[0], 0.3 * perp[1], 0.3 * perp[2]])
        }
    }
}

/// Unit-RMS band-limited noise for one channel.
fn tremor_channel(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let norm = (TREMOR_COMPONENTS as f64 / 2.0).sqrt();
    for _ in 0..TREMOR_COMPONENTS {
        let f = rng.gen_range(TREMOR_BAND_HZ.0..TREMOR_BAND_HZ.1);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let w = std::f64::consts::TAU * f / SAMPLE_RATE_HZ;
        for (i, v) in out.iter_mut().enumerate() {
            *v += (w * i as f64 + phase).sin() / norm;
        }
    }
    out
}

/// Angle, rate and angular acceleration of every sample, before tremor.
pub fn trajectory(spec: &SynthSpec) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed());
    let per_rep = spec.profile.samples_per_rep();
    let period = per_rep as f64 / SAMPLE_RATE_HZ;
    let w = std::f64::consts::TAU / period;
    let rom = (spec.rom_degrees as f64).to_radians();
    let mut out = Vec::with_capacity(per_rep * spec.reps);
    for _ in 0..spec.reps {
        let jitter = spec.profile.amplitude_jitter * (2.0 * rng.gen::<f64>() - 1.0);
        let half = rom * (1.0 + jitter) / 2.0;
        for i in 0..per_rep {
            let t = i as f64 / SAMPLE_RATE_HZ;
            let (s, c) = (w * t).sin_cos();
            out.push((half * (1.0 - c), half * w * s, half * w * w * c));
        }
    }
    out
}

/// Produces a recording, its true repetition boundaries and its label.
pub fn generate(spec: &SynthSpec) -> Result<(ImuRecording, CutSet, QualityLabel)> {
    spec.validate()?;
    let (n, u0, lever) = mount(spec.exercise);
    let rho = lever.map(|v| v * spec.profile.arm_length_scale);
    let tangent = cross(n, rho);
    let traj = trajectory(spec);
    let len = traj.len();

    let mut tremor_rng = ChaCha8Rng::seed_from_u64(spec.seed());
    tremor_rng.set_stream(1);
    let amp = spec.tremor_level * TREMOR_GAIN;
    let noise: Vec<Vec<f64>> = (0..6).map(|_| tremor_channel(len, &mut tremor_rng)).collect();

    let samples = traj
        .iter()
        .enumerate()
        .map(|(i, &(theta, rate, accel))| {
            let grav = rotate(n, -theta, u0);
            let mut a = [0.0; 3];
            let mut g = [0.0; 3];
            for k in 0..3 {
                a[k] = STANDARD_GRAVITY * grav[k] + accel * tangent[k] - rate * rate * rho[k] + amp * noise[k][i];
                g[k] = rate * n[k] + amp * noise[k + 3][i];
            }
            ImuSample {
                t: i as f64 / SAMPLE_RATE_HZ,
                accel: a,
                gyro: g,
            }
        })
        .collect();

    let rec = ImuRecording::new(spec.recording_id(), spec.profile.subject_id.clone(), spec.exercise, samples)?;
    let per_rep = spec.profile.samples_per_rep();
    let cuts = CutSet::auto(rec.id.clone(), (1..spec.reps).map(|k| k * per_rep).collect());
    let label = QualityLabel {
        rom: RomClass::from_degrees(spec.exercise, spec.rom_degrees as f64)?,
        instability: instability(&rec.signal(), &MetricConfig::default())?,
        reps: spec.reps as u32,
    };
    Ok((rec, cuts, label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub exercise: Exercise,
    pub n_subjects: usize,
    pub per_cell: usize,
    pub tremor_levels: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            exercise: Exercise::ShoulderAbduction,
            n_subjects: 10,
            per_cell: 2,
            tremor_levels: vec![0.0, 0.5, 1.0],
            reps: 1,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::param("a corpus needs at least 2 subjects"));
        }
        if self.per_cell < 1 {
            return Err(Error::param("per_cell must be at least 1"));
        }
        if self.tremor_levels.is_empty() || self.tremor_levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::param("tremor levels must be a non-empty list within [0, 1]"));
        }
        if self.reps < 1 {
            return Err(Error::param("reps must be at least 1"));
        }
        Ok(())
    }

    pub fn profiles(&self) -> Vec<SubjectProfile> {
        (0..self.n_subjects)
            .map(|s| SubjectProfile::sample(format!("s{s:02}"), derive_seed(self.seed, &[s as u64])))
            .collect()
    }

    pub fn recording_count(&self) -> usize {
        self.n_subjects * self.exercise.num_rom_classes() * self.tremor_levels.len() * self.per_cell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub subject_id: String,
    pub exercise: Exercise,
    /// Paths relative to the manifest's directory.
    pub csv: PathBuf,
    pub cuts: PathBuf,
    pub rom_degrees: u32,
    pub tremor_level: f64,
    pub reps: usize,
    pub instability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub subjects: Vec<SubjectProfile>,
    pub recordings: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn by_recording(&self) -> BTreeMap<&str, &ManifestEntry> {
        self.recordings.iter().map(|e| (e.recording_id.as_str(), e)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub spec: SynthSpec,
    pub recording: ImuRecording,
    pub cuts: CutSet,
    pub label: QualityLabel,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub subjects: Vec<SubjectProfile>,
    pub items: Vec<CorpusItem>,
}

/// Every subject × ROM class × tremor level × replicate, in that order.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let subjects = spec.profiles();
    let mut items = Vec::with_capacity(spec.recording_count());
    for profile in &subjects {
        for &rom in spec.exercise.rom_classes() {
            for &level in &spec.tremor_levels {
                for replicate in 0..spec.per_cell {
                    let s = SynthSpec {
                        exercise: spec.exercise,
                        rom_degrees: rom,
                        tremor_level: level,
                        reps: spec.reps,
                        profile: profile.clone(),
                        replicate: replicate as u32,
                    };
                    let (recording, cuts, label) = generate(&s)?;
                    items.push(CorpusItem {
                        spec: s,
                        recording,
                        cuts,
                        label,
                    });
                }
            }
        }
    }
    Ok(Corpus {
        spec: spec.clone(),
        subjects,
        items,
    })
}

impl Corpus {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            spec: self.spec.clone(),
            subjects: self.subjects.clone(),
            recordings: self
                .items
                .iter()
                .map(|it| ManifestEntry {
                    recording_id: it.recording.id.clone(),
                    subject_id: it.recording.subject_id.clone(),
                    exercise: it.recording.exercise,
                    csv: PathBuf::from(format!("{}.csv", it.recording.id)),
                    cuts: PathBuf::from(format!("{}.cuts.json", it.recording.id)),
                    rom_degrees: it.spec.rom_degrees,
                    tremor_level: it.spec.tremor_level,
                    reps: it.spec.reps,
                    instability: it.label.instability,
                })
                .collect(),
        }
    }

    /// Writes every recording (CSV + sidecar), its true cuts and
    /// `manifest.json` into `dir`. Returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for (item, entry) in self.items.iter().zip(&manifest.recordings) {
            write_recording(dir, &item.recording)?;
            item.cuts.save(&dir.join(&entry.cuts))?;
        }
        let path = dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::instability;

    fn profile(tempo: f64) -> SubjectProfile {
        SubjectProfile {
            subject_id: "s00".into(),
            arm_length_scale: 1.0,
            tempo,
            amplitude_jitter: 0.0,
            rng_seed: 11,
        }
    }

    fn spec(exercise: Exercise, rom: u32, tremor: f64, reps: usize) -> SynthSpec {
        SynthSpec {
            exercise,
            rom_degrees: rom,
            tremor_level: tremor,
            reps,
            profile: profile(2.0),
            replicate: 0,
        }
    }

    #[test]
    fn single_clean_rep_closes_the_angle() {
        for ex in Exercise::ALL {
            let rom = ex.rom_classes()[1];
            let (rec, cuts, label) = generate(&spec(ex, rom, 0.0, 1)).unwrap();
            assert!(cuts.is_empty());
            assert_eq!(label.reps, 1);
            let n = mount(ex).0;
            let angle: f64 = rec.samples.iter().map(|s| dot(s.gyro, n) / SAMPLE_RATE_HZ).sum();
            assert!(angle.abs() < 1e-3, "{ex}: {angle}");
        }
    }

    #[test]
    fn peak_rate_scales_with_rom() {
        let peak = |rom| {
            let (rec, _, _) = generate(&spec(Exercise::ShoulderAbduction, rom, 0.0, 1)).unwrap();
            rec.samples.iter().map(|s| s.gyro[2].abs()).fold(0.0, f64::max)
        };
        let ratio = peak(150) / peak(30);
        assert!((ratio - 5.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn boundaries_fall_on_tempo_multiples() {
        let s = spec(Exercise::ForwardFlexion, 90, 0.3, 10);
        let (rec, cuts, _) = generate(&s).unwrap();
        assert_eq!(rec.len(), 10 * 100);
        assert_eq!(cuts.cuts, (1..10).map(|k| k * 100).collect::<Vec<_>>());
    }

    #[test]
    fn resting_gravity_has_standard_magnitude() {
        for ex in Exercise::ALL {
            let s = spec(ex, ex.rom_classes()[0], 0.0, 1);
            let (rec, _, _) = generate(&s).unwrap();
            // at t = 0, θ̇ = 0 and only the tangential term adds to gravity
            let (n, _, lever) = mount(ex);
            let tangent = cross(n, lever);
            let theta_dd = trajectory(&s)[0].2;
            let a = rec.samples[0].accel;
            let a: Vec3 = std::array::from_fn(|k| a[k] - theta_dd * tangent[k]);
            let g = dot(a, a).sqrt();
            assert!((g - STANDARD_GRAVITY).abs() < 1e-9, "{ex}: {g}");
        }
    }

    #[test]
    fn tremor_sweep_is_monotone() {
        let cfg = MetricConfig::default();
        let scores: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&l| {
                let (rec, _, _) = generate(&spec(Exercise::ShoulderAbduction, 90, l, 1)).unwrap();
                instability(&rec.signal(), &cfg).unwrap()
            })
            .collect();
        assert!(scores.windows(2).all(|w| w[1] > w[0]), "{scores:?}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&spec(Exercise::ExternalRotation, 60, 0.0, 1)).is_err());
        assert!(generate(&spec(Exercise::ShoulderAbduction, 60, 1.5, 1)).is_err());
        assert!(generate(&spec(Exercise::ShoulderAbduction, 60, 0.0, 0)).is_err());
        let mut s = spec(Exercise::ShoulderAbduction, 60, 0.0, 1);
        s.profile.tempo = 5.0;
        assert!(generate(&s).is_err());
        assert!(CorpusSpec {
            n_subjects: 1,
            ..CorpusSpec::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn profiles_are_seeded_and_in_range() {
        let spec = CorpusSpec::default();
        let a = spec.profiles();
        assert_eq!(a, spec.profiles());
        for p in &a {
            p.validate().unwrap();
        }
        let mut tempos: Vec<f64> = a.iter().map(|p| p.tempo).collect();
        tempos.sort_by(f64::total_cmp);
        tempos.dedup();
        assert_eq!(tempos.len(), a.len());
    }

    #[test]
    fn corpus_count_and_determinism() {
        let spec = CorpusSpec {
            n_subjects: 2,
            per_cell: 1,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.items.len(), 2 * 5 * 3);
        assert_eq!(spec.recording_count(), 30);
        assert_eq!(
            CorpusSpec {
                n_subjects: 10,
                ..CorpusSpec::default()
            }
            .recording_count(),
            300
        );

        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        corpus.write(d1.path()).unwrap();
        generate_corpus(&spec).unwrap().write(d2.path()).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        assert_eq!(files.len(), 30 * 3 + 1);
        for f in files {
            let a = std::fs::read(d1.path().join(&f)).unwrap();
            let b = std::fs::read(d2.path().join(&f)).unwrap();
            assert!(a == b, "{f:?} differs");
        }
        let m = Manifest::load(&d1.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m, corpus.manifest());
    }
}
