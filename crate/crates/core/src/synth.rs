//! Synthetic cohorts with planted, sex-dependent coherence.
//!
//! Every channel carries independent white Gaussian noise. Each plant adds
//! one band-limited, unit-variance source to both channels of a pair with a
//! gain chosen by the subject's sex, which makes the pair coherent inside
//! the plant's band and nowhere else. Because the source is band-limited by
//! an exact spectral mask, its in-band power is known analytically, and so
//! is the coherence the estimator should measure.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Meta};
use crate::error::{Error, Result};
use crate::ingest::{self, Cohort, CohortEntry, Montage, Recording, Sex};
use crate::seed;
use crate::spectrum::{hann, Band, BandScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plant {
    pub pair: (String, String),
    pub band: String,
    pub coupling_female: f64,
    pub coupling_male: f64,
}

impl Plant {
    pub fn new(a: &str, b: &str, band: &str, female: f64, male: f64) -> Self {
        Plant {
            pair: (a.into(), b.into()),
            band: band.into(),
            coupling_female: female,
            coupling_male: male,
        }
    }

    pub fn coupling(&self, sex: Sex) -> f64 {
        match sex {
            Sex::F => self.coupling_female,
            Sex::M => self.coupling_male,
        }
    }

    /// Name of the connectivity feature this plant drives.
    pub fn feature_name(&self, montage: &Montage) -> String {
        let (ia, ib) = (
            montage.index_of(&self.pair.0).unwrap_or(usize::MAX),
            montage.index_of(&self.pair.1).unwrap_or(usize::MAX),
        );
        let (a, b) = if ia < ib {
            (&self.pair.0, &self.pair.1)
        } else {
            (&self.pair.1, &self.pair.0)
        };
        format!("{a}-{b}:{}", self.band)
    }
}

/// Six effects on channel-disjoint pairs within each band, led by frontal
/// gamma and beta pairs.
pub fn default_plants() -> Vec<Plant> {
    vec![
        Plant::new("Fp1", "Fz", "gamma", 1.0, 0.0),
        Plant::new("F7", "F8", "beta", 1.0, 0.0),
        Plant::new("Fz", "C4", "beta", 1.0, 0.0),
        Plant::new("Fz", "C4", "delta", 1.0, 0.0),
        Plant::new("T7", "T8", "alpha", 1.0, 0.0),
        Plant::new("O1", "O2", "theta", 1.0, 0.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_female: usize,
    pub n_male: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub montage: Montage,
    pub bands: BandScheme,
    pub plants: Vec<Plant>,
    pub noise_std: f64,
    /// Between-subject spread of plant gains: each subject's gain is
    /// `max(0, coupling + coupling_sd * z)` with `z` standard normal.
    /// Zero gives every subject of a sex the same gain.
    pub coupling_sd: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_female: 150,
            n_male: 91,
            duration_s: 305.0,
            sample_rate: ingest::DEFAULT_SAMPLE_RATE,
            montage: Montage::standard(),
            bands: BandScheme::standard(),
            plants: default_plants(),
            noise_std: 4.0,
            coupling_sd: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidPlant(format!("noise_std must be positive, got {}", self.noise_std)));
        }
        if !(self.coupling_sd >= 0.0 && self.coupling_sd.is_finite()) {
            return Err(Error::InvalidPlant(format!("coupling_sd must be >= 0, got {}", self.coupling_sd)));
        }
        if !(self.sample_rate > 0.0 && self.duration_s > 0.0) {
            return Err(Error::InvalidPlant("sample rate and duration must be positive".into()));
        }
        for p in &self.plants {
            let (a, b) = (self.montage.index_of(&p.pair.0), self.montage.index_of(&p.pair.1));
            match (a, b) {
                (Some(a), Some(b)) if a != b => {}
                _ => {
                    return Err(Error::InvalidPlant(format!(
                        "pair {}-{} is not two distinct montage channels",
                        p.pair.0, p.pair.1
                    )))
                }
            }
            let band = self
                .bands
                .index_of(&p.band)
                .map(|k| &self.bands.bands()[k])
                .ok_or_else(|| Error::InvalidPlant(format!("unknown band `{}`", p.band)))?;
            if band.high > self.sample_rate / 2.0 {
                return Err(Error::InvalidPlant(format!("band `{}` exceeds Nyquist", p.band)));
            }
            for c in [p.coupling_female, p.coupling_male] {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::InvalidPlant(format!("coupling {c} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.n_female + self.n_male
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate).round() as usize
    }

    pub fn sex_of(&self, index: usize) -> Sex {
        if index < self.n_female {
            Sex::F
        } else {
            Sex::M
        }
    }

    pub fn subject_id(&self, index: usize) -> String {
        let width = self.n_subjects().to_string().len().max(3);
        format!("sub-{:0width$}", index + 1)
    }

    fn band(&self, name: &str) -> &Band {
        let k = self.bands.index_of(name).expect("validated band");
        &self.bands.bands()[k]
    }

    /// Gains of every plant for subject `index`.
    pub fn gains(&self, index: usize) -> Vec<f64> {
        let mut rng = seed::rng(subject_seed(self.seed, index));
        let sex = self.sex_of(index);
        self.plants
            .iter()
            .map(|p| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (p.coupling(sex) + self.coupling_sd * z).max(0.0)
            })
            .collect()
    }
}

fn subject_seed(seed: u64, index: usize) -> u64 {
    seed::derive(seed::derive_str(seed, "synth"), index as u64)
}

fn gaussian(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            std * z
        })
        .collect()
}

/// Unit-variance noise restricted by an exact spectral mask to `[low, high]`.
/// The DC component is always removed.
pub fn band_limited_source(rng: &mut impl Rng, n: usize, rate: f64, low: f64, high: f64) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = gaussian(rng, n, 1.0)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * rate / n as f64;
        if !(f > 0.0 && f >= low && f <= high) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { var.sqrt().recip() } else { 0.0 };
    x.into_iter().map(|v| (v - mean) * scale).collect()
}

/// Generate subject `index` of `spec` in memory.
pub fn generate_subject(spec: &SynthSpec, index: usize) -> Result<Recording> {
    let gains = spec.gains(index);
    // Distinct stream from the gain draws.
    let mut rng = seed::rng(seed::derive(subject_seed(spec.seed, index), 1));
    let n = spec.n_samples();
    let p = spec.montage.len();
    let mut channels: Vec<Vec<f64>> = (0..p).map(|_| gaussian(&mut rng, n, spec.noise_std)).collect();
    for (plant, gain) in spec.plants.iter().zip(gains) {
        let band = spec.band(&plant.band);
        let source = band_limited_source(&mut rng, n, spec.sample_rate, band.low, band.high);
        if gain == 0.0 {
            continue;
        }
        for name in [&plant.pair.0, &plant.pair.1] {
            let ch = spec.montage.index_of(name).expect("validated channel");
            for (x, s) in channels[ch].iter_mut().zip(&source) {
                *x += gain * s;
            }
        }
    }
    Recording::from_channels(spec.subject_id(index), Some(spec.sex_of(index)), spec.sample_rate, channels)
}

/// Every subject of `spec`, in index order.
pub fn generate_in_memory(spec: &SynthSpec) -> Result<Vec<Recording>> {
    spec.validate()?;
    (0..spec.n_subjects())
        .into_par_iter()
        .map(|i| generate_subject(spec, i))
        .collect()
}

/// Write recordings, `manifest.csv` and `synth_spec.json` under `out_dir`.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<Cohort> {
    spec.validate()?;
    let rec_dir = out_dir.join("recordings");
    fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let rows: Vec<(String, Sex, String)> = (0..spec.n_subjects())
        .into_par_iter()
        .map(|i| {
            let rec = generate_subject(spec, i)?;
            let rel = format!("recordings/{}.csv", rec.subject_id);
            ingest::write_recording(&out_dir.join(&rel), &rec, &spec.montage)?;
            Ok((rec.subject_id, spec.sex_of(i), rel))
        })
        .collect::<Result<_>>()?;
    let manifest = out_dir.join("manifest.csv");
    ingest::write_manifest(&manifest, &rows)?;
    artifact::write_json(&out_dir.join("synth_spec.json"), &Meta::new("synth", spec), spec)?;
    Cohort::new(
        rows.into_iter()
            .map(|(subject_id, sex, rel)| CohortEntry {
                subject_id,
                sex,
                path: out_dir.join(rel),
            })
            .collect(),
        spec.montage.clone(),
    )
}

/// Independent white noise on every channel; handy for baselines and tests.
pub fn white_noise_recording(id: &str, channels: usize, rate: f64, seconds: f64, seed: u64) -> Recording {
    let mut rng = seed::rng(seed);
    let n = (seconds * rate).round() as usize;
    let data = (0..channels).map(|_| gaussian(&mut rng, n, 1.0)).collect();
    Recording::from_channels(id, None, rate, data).expect("equal-length channels")
}

/// Coherence of two channels sharing a source with gains `a` and `b` over
/// independent noise of in-band power `noise_power` each:
/// `a b S / sqrt((N + a^2 S)(N + b^2 S))`.
pub fn predicted_coherence_gains(a: f64, b: f64, noise_power: f64, source_power: f64) -> Result<f64> {
    if a < 0.0 || b < 0.0 {
        return Err(Error::NegativeInput("coupling"));
    }
    if noise_power < 0.0 || source_power < 0.0 {
        return Err(Error::NegativeInput("power"));
    }
    if a == 0.0 || b == 0.0 || source_power == 0.0 {
        return Ok(0.0);
    }
    if a.is_infinite() && b.is_infinite() {
        return Ok(1.0);
    }
    let (sa, sb) = (a * a * source_power, b * b * source_power);
    let c = a * b * source_power / ((noise_power + sa) * (noise_power + sb)).sqrt();
    Ok(if c.is_nan() { 1.0 } else { c.min(1.0) })
}

/// Symmetric-gain case: `a^2 S / (N + a^2 S)`.
pub fn predicted_coherence(coupling: f64, noise_power: f64, source_power: f64) -> Result<f64> {
    predicted_coherence_gains(coupling, coupling, noise_power, source_power)
}

/// Periodic-Hann spectral kernel `|W(f)|^2` at frequency offset `df`.
struct HannKernel {
    len: usize,
    rate: f64,
}

impl HannKernel {
    fn dirichlet(&self, omega: f64) -> Complex64 {
        let l = self.len as f64;
        let phase = Complex64::from_polar(1.0, -omega * (l - 1.0) / 2.0);
        let half = (omega / 2.0).sin();
        if half.abs() < 1e-12 {
            return phase * l;
        }
        phase * ((omega * l / 2.0).sin() / half)
    }

    fn at(&self, df: f64) -> f64 {
        let omega = 2.0 * PI * df / self.rate;
        let step = 2.0 * PI / self.len as f64;
        let h = self.dirichlet(omega) * 0.5
            - self.dirichlet(omega - step) * 0.25
            - self.dirichlet(omega + step) * 0.25;
        h.norm_sqr()
    }

    /// `integral over [low, high] of K(f - v) + K(f + v) dv` by Simpson's rule.
    fn band_mass(&self, f: f64, low: f64, high: f64) -> f64 {
        let bin = self.rate / self.len as f64;
        let mut n = (((high - low) / bin) * 128.0).ceil() as usize;
        n += n % 2;
        let h = (high - low) / n as f64;
        let g = |v: f64| self.at(f - v) + self.at(f + v);
        let mut acc = g(low) + g(high);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(low + i as f64 * h);
        }
        acc * h / 3.0
    }
}

/// Expected band-mean coherence of a plant at gain `gain`, as measured by the
/// per-epoch Hann estimator with `epoch_len`-sample epochs.
///
/// Per bin, the expected source and noise powers are the true spectra seen
/// through the window kernel; the closed-form coherence of each bin is then
/// averaged over the band's bins. Leakage from other plants is ignored.
pub fn predicted_band_coherence(
    spec: &SynthSpec,
    band: &str,
    gain: f64,
    epoch_len: usize,
) -> Result<f64> {
    let k = spec
        .bands
        .index_of(band)
        .ok_or_else(|| Error::InvalidPlant(format!("unknown band `{band}`")))?;
    let b = &spec.bands.bands()[k];
    let bin_hz = spec.sample_rate / epoch_len as f64;
    let bins = &spec.bands.bins(bin_hz, epoch_len / 2 + 1)?[k];
    let kernel = HannKernel {
        len: epoch_len,
        rate: spec.sample_rate,
    };
    // White noise has expected per-bin power sigma^2 * sum(w^2).
    let window_energy: f64 = hann(epoch_len).iter().map(|w| w * w).sum();
    let noise_power = spec.noise_std.powi(2) * window_energy;
    // A unit-variance source has two-sided density 1 / (2 W) on +-[low, high].
    let density = 1.0 / (2.0 * (b.high - b.low));
    let mut total = 0.0;
    for &bin in bins {
        let f = bin as f64 * bin_hz;
        let source_power = density * kernel.band_mass(f, b.low, b.high);
        total += predicted_coherence(gain, noise_power, source_power)?;
    }
    Ok(total / bins.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(predicted_coherence(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((predicted_coherence(1.0, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((predicted_coherence(1e9, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(predicted_coherence(f64::INFINITY, 1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(predicted_coherence(-1.0, 1.0, 1.0), Err(Error::NegativeInput(_))));
        assert!(matches!(predicted_coherence(1.0, -1.0, 1.0), Err(Error::NegativeInput(_))));
        // asymmetric: a=1, b=2, S=N=1 -> 2 / sqrt(2 * 5)
        let c = predicted_coherence_gains(1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((c - 2.0 / 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kernel_mass_matches_window_energy() {
        // integral of K over one period equals rate * sum(w^2)
        let k = HannKernel { len: 500, rate: 250.0 };
        let mass = k.band_mass(0.0, 0.0, 125.0);
        let energy: f64 = hann(500).iter().map(|w| w * w).sum();
        assert!((mass / (250.0 * energy) - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn interior_bins_match_flat_closed_form() {
        // Away from band edges the kernel sees a flat spectrum, so the band
        // prediction approaches the closed form with S/N = rate / (2 W sigma^2).
        let mut spec = SynthSpec::default();
        let w: f64 = 17.0;
        spec.noise_std = (250.0 / (2.0 * w)).sqrt();
        let c = predicted_band_coherence(&spec, "beta", 1.0, 500).unwrap();
        assert!(c < 0.5 && c > 0.47, "{c}");
    }

    #[test]
    fn source_is_band_limited_and_unit_variance() {
        let mut rng = seed::rng(4);
        let s = band_limited_source(&mut rng, 10_000, 250.0, 8.0, 13.0);
        let var = s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        assert!((var - 1.0).abs() < 1e-9);
        let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::<f64>::new().plan_fft_forward(10_000).process(&mut buf);
        for (k, c) in buf.iter().enumerate().take(5001) {
            let f = k as f64 * 250.0 / 10_000.0;
            if !(8.0..=13.0).contains(&f) {
                assert!(c.norm() < 1e-6, "leak at {f} Hz");
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let spec = SynthSpec {
            n_female: 2,
            n_male: 2,
            duration_s: 20.0,
            seed: 5,
            ..SynthSpec::default()
        };
        let all = generate_in_memory(&spec).unwrap();
        assert_eq!(all[3], generate_subject(&spec, 3).unwrap());
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].sex, Some(Sex::F));
        assert_eq!(all[3].sex, Some(Sex::M));
        assert_eq!(all[0].subject_id, "sub-001");
        assert_ne!(all[0], all[1]);
    }

    #[test]
    fn invalid_plants_rejected() {
        let mut spec = SynthSpec::default();
        spec.plants = vec![Plant::new("Fp1", "Fp1", "gamma", 1.0, 0.0)];
        assert!(matches!(spec.validate(), Err(Error::InvalidPlant(_))));
        spec.plants = vec![Plant::new("Fp1", "Xx", "gamma", 1.0, 0.0)];
        assert!(matches!(spec.validate(), Err(Error::InvalidPlant(_))));
        spec.plants = vec![Plant::new("Fp1", "Fz", "kappa", 1.0, 0.0)];
        assert!(matches!(spec.validate(), Err(Error::InvalidPlant(_))));
        spec.plants = vec![Plant::new("Fp1", "Fz", "gamma", -1.0, 0.0)];
        assert!(matches!(spec.validate(), Err(Error::InvalidPlant(_))));
    }

    #[test]
    fn default_spec_counts() {
        let spec = SynthSpec::default();
        assert_eq!((spec.n_female, spec.n_male), (150, 91));
        assert_eq!(spec.n_subjects(), 241);
        assert_eq!(spec.subject_id(240), "sub-241");
        spec.validate().unwrap();
    }

    #[test]
    fn plant_feature_name_uses_montage_order() {
        let p = Plant::new("C4", "Fz", "beta", 1.0, 0.0);
        assert_eq!(p.feature_name(&Montage::standard()), "Fz-C4:beta");
    }

    #[test]
    fn measured_band_coherence_matches_oracle() {
        use crate::ingest::{epoch, EpochParams};
        use crate::spectrum::{band_average, coherence, epoch_spectra};
        for noise_std in [2.0, 4.0, 8.0] {
            let spec = SynthSpec {
                n_female: 3,
                n_male: 0,
                noise_std,
                seed: 17,
                ..SynthSpec::default()
            };
            let names = crate::spectrum::connectivity_names(&spec.montage, &spec.bands);
            let mut measured = vec![0.0; spec.plants.len()];
            for rec in generate_in_memory(&spec).unwrap() {
                let e = epoch(&rec, &EpochParams::default()).unwrap();
                assert_eq!(e.n_epochs(), 150);
                let v = band_average(&coherence(&epoch_spectra(&e).unwrap()).unwrap(), &spec.bands).unwrap();
                for (m, p) in measured.iter_mut().zip(&spec.plants) {
                    let idx = names.iter().position(|n| *n == p.feature_name(&spec.montage)).unwrap();
                    *m += v[idx] / 3.0;
                }
            }
            for (m, p) in measured.iter().zip(&spec.plants) {
                let pred = predicted_band_coherence(&spec, &p.band, 1.0, 500).unwrap();
                eprintln!("sigma {noise_std} {} measured {m:.4} predicted {pred:.4}", p.band);
                assert!((m - pred).abs() < 0.05, "{} {m} vs {pred}", p.band);
            }
        }
    }
}
