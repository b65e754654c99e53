//! Per-epoch spectra, magnitude coherence, and band summaries.
//!
//! The estimator is a single-segment Hann periodogram per epoch, averaged
//! across epochs. For channels `x`, `y` and frequency bin `f`:
//!
//! ```text
//! C(f) = | mean_e X_e(f) conj(Y_e(f)) | / sqrt( mean_e |X_e(f)|^2 * mean_e |Y_e(f)|^2 )
//! ```
//!
//! Coefficients are kept unscaled; any constant scaling cancels in `C`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{channel_pairs, EpochSet, Montage};

/// One-sided DFT coefficients, `E x P x B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraSet {
    pub subject_id: String,
    pub sample_rate: f64,
    pub bin_hz: f64,
    n_epochs: usize,
    n_channels: usize,
    n_bins: usize,
    coeffs: Vec<Complex64>,
}

impl SpectraSet {
    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn get(&self, epoch: usize, channel: usize) -> &[Complex64] {
        let start = (epoch * self.n_channels + channel) * self.n_bins;
        &self.coeffs[start..start + self.n_bins]
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    /// Epochs `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SpectraSet {
        let stride = self.n_channels * self.n_bins;
        SpectraSet {
            subject_id: self.subject_id.clone(),
            sample_rate: self.sample_rate,
            bin_hz: self.bin_hz,
            n_epochs: range.len(),
            n_channels: self.n_channels,
            n_bins: self.n_bins,
            coeffs: self.coeffs[range.start * stride..range.end * stride].to_vec(),
        }
    }
}

/// Periodic Hann window of length `len`.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Demean, Hann-window and transform every epoch of every channel.
pub fn epoch_spectra(epochs: &EpochSet) -> Result<SpectraSet> {
    let len = epochs.epoch_len();
    if len % 2 != 0 {
        return Err(Error::OddEpochLength(len));
    }
    if epochs.n_epochs() == 0 {
        return Err(Error::EmptyInput("epoch set"));
    }
    let n_bins = len / 2 + 1;
    let window = hann(len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let (e_n, p) = (epochs.n_epochs(), epochs.n_channels());
    let mut coeffs = Vec::with_capacity(e_n * p * n_bins);
    for e in 0..e_n {
        for ch in 0..p {
            let x = epochs.get(e, ch);
            let mean = x.iter().sum::<f64>() / len as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(x).zip(&window) {
                *b = Complex64::new((v - mean) * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            coeffs.extend_from_slice(&buf[..n_bins]);
        }
    }
    Ok(SpectraSet {
        subject_id: epochs.subject_id.clone(),
        sample_rate: epochs.sample_rate,
        bin_hz: epochs.sample_rate / len as f64,
        n_epochs: e_n,
        n_channels: p,
        n_bins,
        coeffs,
    })
}

/// A `(pair, bin)` where at least one channel had zero epoch-averaged power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroPowerBin {
    pub pair: usize,
    pub bin: usize,
}

/// Coherence per channel pair (`i < j`, lexicographic) and frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceTensor {
    pub pairs: Vec<(usize, usize)>,
    pub bin_hz: f64,
    pub n_bins: usize,
    values: Vec<f64>,
    pub zero_power: Vec<ZeroPowerBin>,
}

impl CoherenceTensor {
    /// Build from explicit values, `pairs.len() * n_bins` long, pair-major.
    pub fn from_values(
        pairs: Vec<(usize, usize)>,
        bin_hz: f64,
        n_bins: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != pairs.len() * n_bins {
            return Err(Error::LengthMismatch(values.len(), pairs.len() * n_bins));
        }
        Ok(CoherenceTensor {
            pairs,
            bin_hz,
            n_bins,
            values,
            zero_power: Vec::new(),
        })
    }

    pub fn pair(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.n_bins..(idx + 1) * self.n_bins]
    }

    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pairs.iter().position(|&p| p == (a, b))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

const BOUND_SLACK: f64 = 1e-9;

/// Per-channel epoch-averaged power, `P x B`.
fn mean_auto_power(spectra: &SpectraSet) -> Vec<f64> {
    let (e_n, p, b_n) = (spectra.n_epochs, spectra.n_channels, spectra.n_bins);
    let mut power = vec![0.0; p * b_n];
    for ch in 0..p {
        let acc = &mut power[ch * b_n..(ch + 1) * b_n];
        for e in 0..e_n {
            for (a, x) in acc.iter_mut().zip(spectra.get(e, ch)) {
                *a += x.norm_sqr();
            }
        }
        for a in acc.iter_mut() {
            *a /= e_n as f64;
        }
    }
    power
}

/// Epoch-averaged magnitude coherence for every channel pair.
pub fn coherence(spectra: &SpectraSet) -> Result<CoherenceTensor> {
    let e_n = spectra.n_epochs;
    if e_n < 2 {
        return Err(Error::SingleEpoch(e_n));
    }
    let (p, b_n) = (spectra.n_channels, spectra.n_bins);
    let power = mean_auto_power(spectra);
    let pairs = channel_pairs(p);
    let mut values = vec![0.0; pairs.len() * b_n];
    let mut zero_power = Vec::new();
    let mut cross = vec![Complex64::new(0.0, 0.0); b_n];

    for (pi, &(i, j)) in pairs.iter().enumerate() {
        cross.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for e in 0..e_n {
            let (x, y) = (spectra.get(e, i), spectra.get(e, j));
            for ((c, a), b) in cross.iter_mut().zip(x).zip(y) {
                *c += a * b.conj();
            }
        }
        let out = &mut values[pi * b_n..(pi + 1) * b_n];
        for (bin, (o, c)) in out.iter_mut().zip(&cross).enumerate() {
            let denom = power[i * b_n + bin] * power[j * b_n + bin];
            if denom <= 0.0 {
                zero_power.push(ZeroPowerBin { pair: pi, bin });
                *o = 0.0;
                continue;
            }
            let v = (c.norm() / e_n as f64) / denom.sqrt();
            debug_assert!(
                (-BOUND_SLACK..=1.0 + BOUND_SLACK).contains(&v),
                "coherence {v} out of bounds"
            );
            *o = v.clamp(0.0, 1.0);
        }
    }
    Ok(CoherenceTensor {
        pairs,
        bin_hz: spectra.bin_hz,
        n_bins: b_n,
        values,
        zero_power,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

/// Ordered, non-overlapping frequency bands.
///
/// Each band is half-open `[low, high)` except the last, which is closed.
/// The DC bin never belongs to any band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Band>", into = "Vec<Band>")]
pub struct BandScheme {
    bands: Vec<Band>,
}

impl BandScheme {
    pub fn new(bands: Vec<Band>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidBands("no bands".into()));
        }
        for (k, b) in bands.iter().enumerate() {
            if b.name.is_empty() || b.name.contains([',', ':']) {
                return Err(Error::InvalidBands(format!("bad band name `{}`", b.name)));
            }
            if !(b.low >= 0.0 && b.high > b.low) {
                return Err(Error::InvalidBands(format!(
                    "band `{}` has bad edges [{}, {}]",
                    b.name, b.low, b.high
                )));
            }
            if k > 0 && b.low < bands[k - 1].high {
                return Err(Error::InvalidBands(format!(
                    "band `{}` overlaps or precedes `{}`",
                    b.name,
                    bands[k - 1].name
                )));
            }
            if bands[..k].iter().any(|o| o.name == b.name) {
                return Err(Error::InvalidBands(format!("duplicate band `{}`", b.name)));
            }
        }
        Ok(BandScheme { bands })
    }

    pub fn standard() -> Self {
        let band = |name: &str, low, high| Band {
            name: name.into(),
            low,
            high,
        };
        BandScheme {
            bands: vec![
                band("delta", 0.0, 4.0),
                band("theta", 4.0, 8.0),
                band("alpha", 8.0, 13.0),
                band("beta", 13.0, 30.0),
                band("gamma", 30.0, 45.0),
            ],
        }
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.name == name)
    }

    /// Whether frequency `f` belongs to band `k`.
    pub fn contains(&self, k: usize, f: f64) -> bool {
        let b = &self.bands[k];
        if f <= 0.0 {
            return false;
        }
        let last = k + 1 == self.bands.len();
        f >= b.low && (f < b.high || (last && f <= b.high))
    }

    /// Bin indices of each band for a spectrum with `n_bins` bins spaced `bin_hz`.
    pub fn bins(&self, bin_hz: f64, n_bins: usize) -> Result<Vec<Vec<usize>>> {
        self.bands
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let bins: Vec<usize> = (1..n_bins)
                    .filter(|&i| self.contains(k, i as f64 * bin_hz))
                    .collect();
                if bins.is_empty() {
                    Err(Error::EmptyBand(b.name.clone()))
                } else {
                    Ok(bins)
                }
            })
            .collect()
    }
}

impl Default for BandScheme {
    fn default() -> Self {
        BandScheme::standard()
    }
}

impl TryFrom<Vec<Band>> for BandScheme {
    type Error = Error;
    fn try_from(v: Vec<Band>) -> Result<Self> {
        BandScheme::new(v)
    }
}

impl From<BandScheme> for Vec<Band> {
    fn from(s: BandScheme) -> Self {
        s.bands
    }
}

/// Names of band-averaged connectivity features: band-major, then pair.
pub fn connectivity_names(montage: &Montage, scheme: &BandScheme) -> Vec<String> {
    let ch = montage.channels();
    let pairs = montage.pairs();
    scheme
        .bands()
        .iter()
        .flat_map(|b| {
            pairs
                .iter()
                .map(move |&(i, j)| format!("{}-{}:{}", ch[i], ch[j], b.name))
        })
        .collect()
}

/// Names of band-power features: band-major, then channel.
pub fn band_power_names(montage: &Montage, scheme: &BandScheme) -> Vec<String> {
    scheme
        .bands()
        .iter()
        .flat_map(|b| montage.channels().iter().map(move |c| format!("{c}:{}", b.name)))
        .collect()
}

/// Incremental mean; exact for constant input.
fn running_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (k, v) in values.enumerate() {
        mean += (v - mean) / (k + 1) as f64;
    }
    mean
}

/// Mean coherence within each band, band-major then pair order.
pub fn band_average(coh: &CoherenceTensor, scheme: &BandScheme) -> Result<Vec<f64>> {
    let band_bins = scheme.bins(coh.bin_hz, coh.n_bins)?;
    let mut out = Vec::with_capacity(band_bins.len() * coh.pairs.len());
    for bins in &band_bins {
        for p in 0..coh.pairs.len() {
            let row = coh.pair(p);
            out.push(running_mean(bins.iter().map(|&b| row[b])));
        }
    }
    Ok(out)
}

/// `log(1 + mean power)` per channel and band, band-major then channel.
pub fn band_power(spectra: &SpectraSet, scheme: &BandScheme) -> Result<Vec<f64>> {
    let band_bins = scheme.bins(spectra.bin_hz, spectra.n_bins)?;
    let power = mean_auto_power(spectra);
    let b_n = spectra.n_bins;
    let mut out = Vec::with_capacity(band_bins.len() * spectra.n_channels);
    for bins in &band_bins {
        for ch in 0..spectra.n_channels {
            let row = &power[ch * b_n..(ch + 1) * b_n];
            out.push(running_mean(bins.iter().map(|&b| row[b])).ln_1p());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{epoch, EpochParams, Recording};
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, s: u64) -> Vec<f64> {
        let mut rng = seed::rng(s);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn spectra_of(channels: Vec<Vec<f64>>, rate: f64) -> SpectraSet {
        let rec = Recording::from_channels("t", None, rate, channels).unwrap();
        let params = EpochParams {
            epoch_seconds: 2.0,
            discard_seconds: 0.0,
        };
        epoch_spectra(&epoch(&rec, &params).unwrap()).unwrap()
    }

    #[test]
    fn standard_band_bin_counts() {
        // Enumerated by hand from the half-open edges at 0.5 Hz spacing:
        // delta 0.5..3.5, theta 4.0..7.5, alpha 8.0..12.5, beta 13.0..29.5, gamma 30.0..45.0.
        let bins = BandScheme::standard().bins(0.5, 251).unwrap();
        let counts: Vec<usize> = bins.iter().map(Vec::len).collect();
        assert_eq!(counts, vec![7, 8, 10, 34, 31]);
        assert_eq!(bins[0][0], 1);
        assert_eq!(*bins[4].last().unwrap(), 90);
    }

    #[test]
    fn empty_band_detected() {
        let scheme = BandScheme::new(vec![Band {
            name: "narrow".into(),
            low: 10.1,
            high: 10.2,
        }])
        .unwrap();
        assert!(matches!(scheme.bins(0.5, 251), Err(Error::EmptyBand(_))));
    }

    #[test]
    fn overlapping_bands_rejected() {
        let b = |n: &str, l, h| Band {
            name: n.into(),
            low: l,
            high: h,
        };
        assert!(BandScheme::new(vec![b("a", 0.0, 5.0), b("b", 4.0, 8.0)]).is_err());
        assert!(BandScheme::new(vec![b("a", 0.0, 5.0), b("a", 5.0, 8.0)]).is_err());
    }

    #[test]
    fn odd_epoch_length_rejected() {
        let rec = Recording::from_channels("t", None, 100.0, vec![vec![0.0; 300], vec![0.0; 300]])
            .unwrap();
        let params = EpochParams {
            epoch_seconds: 0.99,
            discard_seconds: 0.0,
        };
        let e = epoch(&rec, &params).unwrap();
        assert!(matches!(epoch_spectra(&e), Err(Error::OddEpochLength(99))));
    }

    #[test]
    fn constant_signal_has_no_energy() {
        let s = spectra_of(vec![vec![3.7; 1000], vec![-1.0; 1000]], 250.0);
        for e in 0..s.n_epochs() {
            for ch in 0..2 {
                assert!(s.get(e, ch).iter().all(|c| c.norm() < 1e-9));
            }
        }
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let x: Vec<f64> = (0..1000)
            .map(|t| (2.0 * PI * 10.0 * t as f64 / 250.0).sin())
            .collect();
        let s = spectra_of(vec![x.clone(), x], 250.0);
        let mags: Vec<f64> = s.get(0, 0).iter().map(|c| c.norm()).collect();
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 20);
        // Hann leakage reaches only the immediate neighbors.
        assert!(mags[19] > 0.4 * mags[20] && mags[21] > 0.4 * mags[20]);
        assert!(mags[23] < 1e-6 * mags[20]);
    }

    #[test]
    fn one_sided_parseval() {
        let x = noise(500, 11);
        let s = spectra_of(vec![x.clone(), x.clone()], 250.0);
        let mean = x.iter().sum::<f64>() / 500.0;
        let w = hann(500);
        let time_energy: f64 = x.iter().zip(&w).map(|(v, w)| ((v - mean) * w).powi(2)).sum();
        let c = s.get(0, 0);
        let last = c.len() - 1;
        let freq_energy = (c[0].norm_sqr()
            + 2.0 * c[1..last].iter().map(|z| z.norm_sqr()).sum::<f64>()
            + c[last].norm_sqr())
            / 500.0;
        assert!((freq_energy - time_energy).abs() / time_energy < 1e-6);
    }

    #[test]
    fn identical_and_scaled_channels_are_fully_coherent() {
        let x = noise(5000, 3);
        let y: Vec<f64> = x.iter().map(|v| -2.5 * v).collect();
        let s = spectra_of(vec![x.clone(), x, y], 250.0);
        let coh = coherence(&s).unwrap();
        for p in 0..coh.pairs.len() {
            for &v in &coh.pair(p)[1..] {
                assert!((v - 1.0).abs() < 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn single_epoch_rejected() {
        let s = spectra_of(vec![noise(500, 1), noise(500, 2)], 250.0);
        assert!(matches!(coherence(&s), Err(Error::SingleEpoch(1))));
    }

    #[test]
    fn flat_channel_yields_zero_with_warning() {
        let s = spectra_of(vec![noise(2000, 1), vec![0.0; 2000]], 250.0);
        let coh = coherence(&s).unwrap();
        assert!(coh.pair(0).iter().all(|&v| v == 0.0));
        assert_eq!(coh.zero_power.len(), 251);
    }

    #[test]
    fn independent_noise_baseline() {
        // Mean of |C| for independent channels is Gamma(E)Gamma(3/2)/Gamma(E+1/2),
        // 0.0935 at E = 90; a 100-seed Monte Carlo put the per-recording spread of
        // the across-bin mean at sd 0.0031.
        let s = spectra_of(vec![noise(45_000, 21), noise(45_000, 22)], 250.0);
        let coh = coherence(&s).unwrap();
        let mean = coh.pair(0)[1..].iter().sum::<f64>() / 250.0;
        assert!((mean - 0.0935).abs() < 0.013, "{mean}");
        assert!(mean < 0.15);
    }

    #[test]
    fn band_average_of_constant_tensor() {
        let m = Montage::standard();
        let pairs = m.pairs();
        let coh = CoherenceTensor::from_values(pairs.clone(), 0.5, 251, vec![0.5; 171 * 251]).unwrap();
        let v = band_average(&coh, &BandScheme::standard()).unwrap();
        assert_eq!(v.len(), 855);
        assert!(v.iter().all(|&x| x == 0.5));
        assert_eq!(connectivity_names(&m, &BandScheme::standard()).len(), 855);
        assert_eq!(band_power_names(&m, &BandScheme::standard()).len(), 95);
    }

    #[test]
    fn band_average_reproduces_per_band_constants() {
        let scheme = BandScheme::standard();
        let consts = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut values = vec![0.9; 251];
        for (k, c) in consts.iter().enumerate() {
            for b in 1..251 {
                if scheme.contains(k, b as f64 * 0.5) {
                    values[b] = *c;
                }
            }
        }
        let coh = CoherenceTensor::from_values(vec![(0, 1)], 0.5, 251, values).unwrap();
        assert_eq!(band_average(&coh, &scheme).unwrap(), consts.to_vec());
    }

    #[test]
    fn names_are_band_major() {
        let m = Montage::new(["A", "B", "C"]).unwrap();
        let scheme = BandScheme::standard();
        let names = connectivity_names(&m, &scheme);
        assert_eq!(&names[..4], &["A-B:delta", "A-C:delta", "B-C:delta", "A-B:theta"]);
        assert_eq!(&band_power_names(&m, &scheme)[..4], &["A:delta", "B:delta", "C:delta", "A:theta"]);
    }

    #[test]
    fn band_power_localizes_alpha_and_zero_channel() {
        let x: Vec<f64> = (0..5000)
            .map(|t| (2.0 * PI * 10.0 * t as f64 / 250.0).sin())
            .collect();
        let s = spectra_of(vec![x, vec![0.0; 5000]], 250.0);
        let bp = band_power(&s, &BandScheme::standard()).unwrap();
        // layout: band-major, 2 channels
        let alpha = bp[2 * 2];
        for band in [0, 1, 3, 4] {
            assert!(alpha > bp[band * 2]);
        }
        for band in 0..5 {
            assert_eq!(bp[band * 2 + 1], 0.0);
        }
    }

    #[test]
    fn coherence_symmetric_under_channel_swap() {
        let a = noise(5000, 5);
        let b: Vec<f64> = a.iter().zip(noise(5000, 6)).map(|(x, y)| x + y).collect();
        let c1 = coherence(&spectra_of(vec![a.clone(), b.clone()], 250.0)).unwrap();
        let c2 = coherence(&spectra_of(vec![b, a], 250.0)).unwrap();
        assert_eq!(c1.pair(0), c2.pair(0));
    }
}
