//! Cohort manifests, recording files, and fixed-length epoching.
//!
//! A cohort manifest is a CSV with header `subject_id,sex,path`. Paths are
//! resolved relative to the manifest's directory. A recording file is a CSV
//! whose first row names the channels, optionally followed by a `#rate=<Hz>`
//! metadata row, then one row of decimal samples per time point.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 250.0;

/// The 19-channel 10-20 montage, in acquisition order.
pub const STANDARD_19: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8", "P7", "P3", "Pz",
    "P4", "P8", "O1", "O2",
];

/// Ordered, duplicate-free list of channel names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Montage {
    channels: Vec<String>,
}

impl Montage {
    pub fn new<S: Into<String>>(channels: impl IntoIterator<Item = S>) -> Result<Self> {
        let channels: Vec<String> = channels.into_iter().map(Into::into).collect();
        if channels.len() < 2 {
            return Err(Error::InvalidMontage(format!(
                "need at least 2 channels, got {}",
                channels.len()
            )));
        }
        let mut seen = HashSet::new();
        for ch in &channels {
            if ch.is_empty() || ch.contains([',', ':', '-']) {
                return Err(Error::InvalidMontage(format!("bad channel name `{ch}`")));
            }
            if !seen.insert(ch.as_str()) {
                return Err(Error::InvalidMontage(format!("duplicate channel `{ch}`")));
            }
        }
        Ok(Montage { channels })
    }

    pub fn standard() -> Self {
        Montage {
            channels: STANDARD_19.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// All channel pairs `(i, j)` with `i < j`, lexicographic.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        channel_pairs(self.len())
    }
}

impl Default for Montage {
    fn default() -> Self {
        Montage::standard()
    }
}

impl TryFrom<Vec<String>> for Montage {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Montage::new(v)
    }
}

impl From<Montage> for Vec<String> {
    fn from(m: Montage) -> Self {
        m.channels
    }
}

pub fn channel_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            pairs.push((i, j));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

impl Sex {
    /// Binary class label: female is the positive class.
    pub fn label(self) -> u8 {
        match self {
            Sex::F => 1,
            Sex::M => 0,
        }
    }

    pub fn from_label(label: u8) -> Option<Sex> {
        match label {
            1 => Some(Sex::F),
            0 => Some(Sex::M),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::F => "F",
            Sex::M => "M",
        })
    }
}

/// One subject's multichannel signal, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub sex: Option<Sex>,
    pub sample_rate: f64,
    n_channels: usize,
    n_samples: usize,
    data: Vec<f64>,
}

impl Recording {
    /// Build from per-channel sample vectors, which must share one length.
    pub fn from_channels(
        subject_id: impl Into<String>,
        sex: Option<Sex>,
        sample_rate: f64,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidEpoching(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let n_channels = channels.len();
        let n_samples = channels.first().map_or(0, Vec::len);
        if let Some(bad) = channels.iter().position(|c| c.len() != n_samples) {
            return Err(Error::ChannelMismatch(format!(
                "channel {bad} has {} samples, channel 0 has {n_samples}",
                channels[bad].len()
            )));
        }
        let data = channels.into_iter().flatten().collect();
        Ok(Recording {
            subject_id,
            sex,
            sample_rate,
            n_channels,
            n_samples,
            data,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn duration_seconds(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortEntry {
    pub subject_id: String,
    pub sex: Sex,
    pub path: PathBuf,
}

/// A validated manifest. Recordings are read lazily.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub entries: Vec<CohortEntry>,
    pub montage: Montage,
}

impl Cohort {
    pub fn new(entries: Vec<CohortEntry>, montage: Montage) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(Error::DuplicateSubject(e.subject_id.clone()));
            }
        }
        Ok(Cohort { entries, montage })
    }

    /// `(females, males)`.
    pub fn counts(&self) -> (usize, usize) {
        let f = self.entries.iter().filter(|e| e.sex == Sex::F).count();
        (f, self.entries.len() - f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose ids are in `ids`, in manifest order.
    pub fn subset(&self, ids: &HashSet<&str>) -> Cohort {
        Cohort {
            entries: self
                .entries
                .iter()
                .filter(|e| ids.contains(e.subject_id.as_str()))
                .cloned()
                .collect(),
            montage: self.montage.clone(),
        }
    }

    pub fn load_entry(&self, entry: &CohortEntry, expected_rate: f64) -> Result<Recording> {
        let mut rec = load_recording(&entry.path, &self.montage, expected_rate)?;
        rec.subject_id = entry.subject_id.clone();
        rec.sex = Some(entry.sex);
        Ok(rec)
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    subject_id: String,
    sex: String,
    path: String,
}

/// Read and validate a cohort manifest. Recording files are not opened.
pub fn load_cohort(manifest_path: &Path, montage: Montage) -> Result<Cohort> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["subject_id", "sex", "path"] {
        return Err(Error::MalformedArtifact {
            path: manifest_path.to_path_buf(),
            msg: format!("expected header `subject_id,sex,path`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row?;
        let sex = match row.sex.as_str() {
            "F" => Sex::F,
            "M" => Sex::M,
            _ => {
                return Err(Error::BadSexLabel {
                    subject: row.subject_id,
                    label: row.sex,
                })
            }
        };
        entries.push(CohortEntry {
            path: base.join(&row.path),
            subject_id: row.subject_id,
            sex,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyManifest(manifest_path.to_path_buf()));
    }
    Cohort::new(entries, montage)
}

pub fn write_manifest(path: &Path, entries: &[(String, Sex, String)]) -> Result<()> {
    let mut out = String::from("subject_id,sex,path\n");
    for (id, sex, p) in entries {
        out.push_str(&format!("{id},{sex},{p}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load one recording file, reordering channels to montage order.
///
/// The header must name exactly the montage channels, in any order.
pub fn load_recording(path: &Path, montage: &Montage, expected_rate: f64) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

    let (_, header) = lines.next().ok_or_else(|| Error::MalformedArtifact {
        path: path.to_path_buf(),
        msg: "empty recording file".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();

    let mut column_of = vec![usize::MAX; montage.len()];
    let mut seen = HashSet::new();
    for (col, name) in names.iter().enumerate() {
        if !seen.insert(*name) {
            return Err(Error::ChannelMismatch(format!("duplicate column `{name}`")));
        }
        match montage.index_of(name) {
            Some(idx) => column_of[idx] = col,
            None => return Err(Error::ChannelMismatch(format!("unexpected channel `{name}`"))),
        }
    }
    let missing: Vec<&str> = montage
        .channels()
        .iter()
        .zip(&column_of)
        .filter(|(_, c)| **c == usize::MAX)
        .map(|(n, _)| n.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::ChannelMismatch(format!("missing channel(s) {}", missing.join(", "))));
    }

    let mut sample_rate = DEFAULT_SAMPLE_RATE;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut first_data = true;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if first_data {
            first_data = false;
            if let Some(rate) = line.trim().strip_prefix("#rate=") {
                sample_rate = rate.trim().parse().map_err(|_| Error::MalformedArtifact {
                    path: path.to_path_buf(),
                    msg: format!("bad rate row `{line}`"),
                })?;
                continue;
            }
        }
        let mut n = 0;
        for (col, field) in line.split(',').enumerate() {
            if col >= columns.len() {
                return Err(Error::MalformedArtifact {
                    path: path.to_path_buf(),
                    msg: format!("line {line_no} has more than {} fields", columns.len()),
                });
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericSample {
                line: line_no,
                column: col + 1,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericSample {
                    line: line_no,
                    column: col + 1,
                    value: field.to_string(),
                });
            }
            columns[col].push(v);
            n += 1;
        }
        if n != columns.len() {
            return Err(Error::MalformedArtifact {
                path: path.to_path_buf(),
                msg: format!("line {line_no} has {n} fields, expected {}", columns.len()),
            });
        }
    }
    if (sample_rate - expected_rate).abs() > 1e-9 {
        return Err(Error::RateMismatch {
            expected: expected_rate,
            found: sample_rate,
        });
    }

    let mut by_montage: Vec<Vec<f64>> = Vec::with_capacity(montage.len());
    let mut columns: Vec<Option<Vec<f64>>> = columns.into_iter().map(Some).collect();
    for &col in &column_of {
        by_montage.push(columns[col].take().expect("column used once"));
    }
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Recording::from_channels(subject_id, None, sample_rate, by_montage)
}

/// Write a recording in the format [`load_recording`] reads.
pub fn write_recording(path: &Path, rec: &Recording, montage: &Montage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", montage.channels().join(",")).map_err(io)?;
    writeln!(w, "#rate={}", rec.sample_rate).map_err(io)?;
    let mut line = String::with_capacity(rec.n_channels * 10);
    for t in 0..rec.n_samples {
        line.clear();
        for ch in 0..rec.n_channels {
            if ch > 0 {
                line.push(',');
            }
            // 5 decimals is far below the noise floor of any generated signal.
            line.push_str(&format!("{:.5}", rec.channel(ch)[t]));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochParams {
    #[serde(default = "default_epoch_seconds")]
    pub epoch_seconds: f64,
    #[serde(default = "default_discard_seconds")]
    pub discard_seconds: f64,
}

fn default_epoch_seconds() -> f64 {
    2.0
}

fn default_discard_seconds() -> f64 {
    5.0
}

impl Default for EpochParams {
    fn default() -> Self {
        EpochParams {
            epoch_seconds: default_epoch_seconds(),
            discard_seconds: default_discard_seconds(),
        }
    }
}

impl EpochParams {
    /// `(discard samples, epoch length)`; both must be whole sample counts.
    pub fn sample_counts(&self, sample_rate: f64) -> Result<(usize, usize)> {
        let whole = |secs: f64, what: &str| -> Result<usize> {
            let n = secs * sample_rate;
            if !(n >= 0.0) || (n - n.round()).abs() > 1e-9 {
                return Err(Error::InvalidEpoching(format!(
                    "{what} of {secs} s is not a whole number of samples at {sample_rate} Hz"
                )));
            }
            Ok(n.round() as usize)
        };
        let discard = whole(self.discard_seconds, "discard")?;
        let len = whole(self.epoch_seconds, "epoch length")?;
        if len == 0 {
            return Err(Error::InvalidEpoching("epoch length is zero".into()));
        }
        Ok((discard, len))
    }
}

/// Consecutive, non-overlapping epochs of one subject: `E x P x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub subject_id: String,
    pub sample_rate: f64,
    n_epochs: usize,
    n_channels: usize,
    epoch_len: usize,
    data: Vec<f64>,
}

impl EpochSet {
    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn epoch_len(&self) -> usize {
        self.epoch_len
    }

    pub fn get(&self, epoch: usize, channel: usize) -> &[f64] {
        let start = (epoch * self.n_channels + channel) * self.epoch_len;
        &self.data[start..start + self.epoch_len]
    }

    /// Epochs `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> EpochSet {
        let stride = self.n_channels * self.epoch_len;
        EpochSet {
            subject_id: self.subject_id.clone(),
            sample_rate: self.sample_rate,
            n_epochs: range.len(),
            n_channels: self.n_channels,
            epoch_len: self.epoch_len,
            data: self.data[range.start * stride..range.end * stride].to_vec(),
        }
    }
}

/// Drop the first `discard_seconds`, then cut the rest into whole epochs.
/// A trailing partial epoch is dropped.
pub fn epoch(recording: &Recording, params: &EpochParams) -> Result<EpochSet> {
    let (discard, len) = params.sample_counts(recording.sample_rate)?;
    let n = recording.n_samples();
    if n < discard + len {
        return Err(Error::TooShort {
            subject: recording.subject_id.clone(),
            samples: n,
            needed: discard + len,
        });
    }
    let n_epochs = (n - discard) / len;
    let p = recording.n_channels();
    let mut data = Vec::with_capacity(n_epochs * p * len);
    for e in 0..n_epochs {
        let start = discard + e * len;
        for ch in 0..p {
            data.extend_from_slice(&recording.channel(ch)[start..start + len]);
        }
    }
    Ok(EpochSet {
        subject_id: recording.subject_id.clone(),
        sample_rate: recording.sample_rate,
        n_epochs,
        n_channels: p,
        epoch_len: len,
        data,
    })
}
