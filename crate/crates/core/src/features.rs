//! Feature tables: section-augmented training rows and whole-recording
//! evaluation rows.
//!
//! Extraction happens once per subject into a [`FeatureStore`] holding every
//! consecutive section block plus the evaluation row. Training tables for any
//! subject subset are then drawn from the store, so repeated trials never
//! recompute spectra.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Meta};
use crate::error::{Error, Result};
use crate::ingest::{epoch, Cohort, EpochParams, Montage, Recording, Sex};
use crate::seed;
use crate::selection::FeatureSubset;
use crate::spectrum::{
    band_average, band_power, band_power_names, coherence, connectivity_names, epoch_spectra,
    BandScheme, SpectraSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Connectivity,
    BandPower,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Connectivity => "connectivity",
            FeatureKind::BandPower => "band_power",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "connectivity" => Ok(FeatureKind::Connectivity),
            "band_power" | "bandpower" => Ok(FeatureKind::BandPower),
            other => Err(Error::BadArgs(format!("unknown feature kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quotas {
    pub sections_per_female: usize,
    pub sections_per_male: usize,
    pub section_epochs: usize,
}

impl Default for Quotas {
    fn default() -> Self {
        Quotas {
            sections_per_female: 5,
            sections_per_male: 8,
            section_epochs: 15,
        }
    }
}

impl Quotas {
    pub fn validate(&self) -> Result<()> {
        if self.sections_per_female == 0 || self.sections_per_male == 0 || self.section_epochs < 2 {
            return Err(Error::ConfigInvalid(format!(
                "quotas must be positive and sections need at least 2 epochs: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn for_sex(&self, sex: Sex) -> usize {
        match sex {
            Sex::F => self.sections_per_female,
            Sex::M => self.sections_per_male,
        }
    }
}

/// Which section blocks a subject contributes when it has more than its quota.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionPolicy {
    #[default]
    Random,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    pub section_id: usize,
    /// 1 = female, 0 = male.
    pub label: u8,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(schema: Vec<String>, rows: Vec<FeatureRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if r.values.len() != schema.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row ({}, {}) has {} values for {} columns",
                    r.subject_id,
                    r.section_id,
                    r.values.len(),
                    schema.len()
                )));
            }
            if r.label > 1 {
                return Err(Error::SchemaMismatch(format!("label {} is not 0/1", r.label)));
            }
            if !seen.insert((r.subject_id.as_str(), r.section_id)) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate row ({}, {})",
                    r.subject_id, r.section_id
                )));
            }
        }
        Ok(FeatureTable { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn subject_ids(&self) -> HashSet<&str> {
        self.rows.iter().map(|r| r.subject_id.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s == name)
    }

    /// Reduce and reorder columns to `subset`.
    pub fn project(&self, subset: &FeatureSubset) -> Result<FeatureTable> {
        let idx: Vec<usize> = subset
            .names()
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::UnknownFeature(n.clone())))
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                subject_id: r.subject_id.clone(),
                section_id: r.section_id,
                label: r.label,
                values: idx.iter().map(|&i| r.values[i]).collect(),
            })
            .collect();
        Ok(FeatureTable {
            schema: subset.names().to_vec(),
            rows,
        })
    }

    /// Write as CSV: optional `#` metadata line, then
    /// `subject_id,section_id,label,<features...>`.
    pub fn write_csv(&self, path: &Path, header: Option<&str>) -> Result<()> {
        let mut out = Vec::new();
        if let Some(h) = header {
            writeln!(out, "{h}").expect("in-memory write");
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut head = vec!["subject_id".to_string(), "section_id".into(), "label".into()];
            head.extend(self.schema.iter().cloned());
            w.write_record(&head)?;
            for r in &self.rows {
                let mut rec = vec![r.subject_id.clone(), r.section_id.to_string(), r.label.to_string()];
                rec.extend(r.values.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let malformed = |msg: String| Error::MalformedArtifact {
            path: path.to_path_buf(),
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "subject_id" || &headers[1] != "section_id" || &headers[2] != "label" {
            return Err(malformed("expected `subject_id,section_id,label,...` header".into()));
        }
        let schema: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| malformed(format!("row {}: bad {what}", i + 1));
            let section_id = rec[1].parse().map_err(|_| parse_err("section_id"))?;
            let label = rec[2].parse().map_err(|_| parse_err("label"))?;
            let values = rec
                .iter()
                .skip(3)
                .map(|v| v.parse::<f64>().map_err(|_| parse_err("value")))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                subject_id: rec[0].to_string(),
                section_id,
                label,
                values,
            });
        }
        FeatureTable::new(schema, rows)
    }
}

/// Everything extraction needs besides the recordings themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractParams {
    pub epoching: EpochParams,
    pub scheme: BandScheme,
    pub section_epochs: usize,
    pub eval_epochs: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            epoching: EpochParams::default(),
            scheme: BandScheme::standard(),
            section_epochs: Quotas::default().section_epochs,
            eval_epochs: 90,
        }
    }
}

/// One subject's extracted features for one feature kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    pub subject_id: String,
    pub sex: Sex,
    /// Consecutive section blocks, in temporal order.
    pub sections: Vec<Vec<f64>>,
    /// Whole-recording row from the first `eval_epochs_used` epochs.
    pub eval: Option<Vec<f64>>,
    pub eval_epochs_used: usize,
}

/// Extracted features of a whole cohort, sorted by subject id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub kind: FeatureKind,
    pub schema: Vec<String>,
    pub subjects: Vec<SubjectFeatures>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub subject_id: String,
    pub wanted: usize,
    pub got: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject_id: String,
    pub reason: String,
}

/// Warnings gathered while building tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub shortfalls: Vec<Shortfall>,
    pub excluded: Vec<Exclusion>,
    /// Evaluation subjects with fewer epochs than requested.
    pub short_eval: Vec<String>,
}

fn block_features(
    spectra: &SpectraSet,
    range: std::ops::Range<usize>,
    scheme: &BandScheme,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let part = spectra.slice(range);
    let conn = band_average(&coherence(&part)?, scheme)?;
    let power = band_power(&part, scheme)?;
    Ok((conn, power))
}

/// Connectivity and band-power features of one recording.
pub fn subject_features(
    rec: &Recording,
    sex: Sex,
    params: &ExtractParams,
) -> Result<(SubjectFeatures, SubjectFeatures)> {
    let epochs = epoch(rec, &params.epoching)?;
    let spectra = epoch_spectra(&epochs)?;
    let n = spectra.n_epochs();
    let s = params.section_epochs;

    let mut conn_sections = Vec::new();
    let mut power_sections = Vec::new();
    for b in 0..n / s {
        let (c, p) = block_features(&spectra, b * s..(b + 1) * s, &params.scheme)?;
        conn_sections.push(c);
        power_sections.push(p);
    }
    let (eval_used, conn_eval, power_eval) = if n >= s {
        let used = n.min(params.eval_epochs);
        let (c, p) = block_features(&spectra, 0..used, &params.scheme)?;
        (used, Some(c), Some(p))
    } else {
        (0, None, None)
    };
    let make = |sections, eval| SubjectFeatures {
        subject_id: rec.subject_id.clone(),
        sex,
        sections,
        eval,
        eval_epochs_used: eval_used,
    };
    Ok((make(conn_sections, conn_eval), make(power_sections, power_eval)))
}

/// Both feature stores of a cohort plus extraction warnings.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub connectivity: FeatureStore,
    pub band_power: FeatureStore,
    pub report: TableReport,
}

impl Extraction {
    pub fn store(&self, kind: FeatureKind) -> &FeatureStore {
        match kind {
            FeatureKind::Connectivity => &self.connectivity,
            FeatureKind::BandPower => &self.band_power,
        }
    }
}

/// Extract features from in-memory recordings (each must carry a sex).
pub fn extract_recordings(
    recordings: &[Recording],
    montage: &Montage,
    params: &ExtractParams,
) -> Result<Extraction> {
    let per_subject: Vec<(SubjectFeatures, SubjectFeatures)> = recordings
        .par_iter()
        .map(|rec| {
            let sex = rec.sex.ok_or_else(|| Error::BadSexLabel {
                subject: rec.subject_id.clone(),
                label: String::new(),
            })?;
            subject_features(rec, sex, params)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(per_subject, montage, params))
}

/// Load every recording of `cohort` and extract its features.
pub fn extract_cohort(cohort: &Cohort, sample_rate: f64, params: &ExtractParams) -> Result<Extraction> {
    let per_subject: Vec<(SubjectFeatures, SubjectFeatures)> = cohort
        .entries
        .par_iter()
        .map(|entry| {
            let rec = cohort.load_entry(entry, sample_rate)?;
            subject_features(&rec, entry.sex, params)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(per_subject, &cohort.montage, params))
}

fn assemble(
    per_subject: Vec<(SubjectFeatures, SubjectFeatures)>,
    montage: &Montage,
    params: &ExtractParams,
) -> Extraction {
    let mut report = TableReport::default();
    let (mut conn, mut power): (Vec<_>, Vec<_>) = per_subject.into_iter().unzip();
    conn.sort_by(|a: &SubjectFeatures, b| a.subject_id.cmp(&b.subject_id));
    power.sort_by(|a: &SubjectFeatures, b| a.subject_id.cmp(&b.subject_id));
    for s in &conn {
        if s.sections.is_empty() {
            report.excluded.push(Exclusion {
                subject_id: s.subject_id.clone(),
                reason: format!("fewer than {} epochs", params.section_epochs),
            });
        } else if s.eval_epochs_used < params.eval_epochs {
            report.short_eval.push(s.subject_id.clone());
        }
    }
    Extraction {
        connectivity: FeatureStore {
            kind: FeatureKind::Connectivity,
            schema: connectivity_names(montage, &params.scheme),
            subjects: conn,
        },
        band_power: FeatureStore {
            kind: FeatureKind::BandPower,
            schema: band_power_names(montage, &params.scheme),
            subjects: power,
        },
        report,
    }
}

/// Indices of the section blocks a subject contributes.
pub fn choose_sections(
    available: usize,
    quota: usize,
    policy: SectionPolicy,
    seed: u64,
    subject_id: &str,
) -> Vec<usize> {
    let take = quota.min(available);
    let mut chosen = match policy {
        SectionPolicy::Head => (0..take).collect(),
        SectionPolicy::Random => {
            let mut rng = seed::rng(seed::derive_str(seed, subject_id));
            index::sample(&mut rng, available, take).into_vec()
        }
    };
    chosen.sort_unstable();
    chosen
}

impl FeatureStore {
    pub fn subject(&self, id: &str) -> Option<&SubjectFeatures> {
        self.subjects
            .binary_search_by(|s| s.subject_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.subjects[i])
    }

    pub fn counts(&self) -> (usize, usize) {
        let f = self.subjects.iter().filter(|s| s.sex == Sex::F).count();
        (f, self.subjects.len() - f)
    }

    /// Keep only the given columns, in `subset` order.
    pub fn project(&self, subset: &FeatureSubset) -> Result<FeatureStore> {
        let idx: Vec<usize> = subset
            .names()
            .iter()
            .map(|n| {
                self.schema
                    .iter()
                    .position(|s| s == n)
                    .ok_or_else(|| Error::UnknownFeature(n.clone()))
            })
            .collect::<Result<_>>()?;
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Ok(FeatureStore {
            kind: self.kind,
            schema: subset.names().to_vec(),
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectFeatures {
                    subject_id: s.subject_id.clone(),
                    sex: s.sex,
                    sections: s.sections.iter().map(pick).collect(),
                    eval: s.eval.as_ref().map(pick),
                    eval_epochs_used: s.eval_epochs_used,
                })
                .collect(),
        })
    }

    /// Section-augmented training rows for the subjects in `ids`.
    ///
    /// Each subject contributes `min(quota, available)` section blocks.
    /// Rows are ordered by `(subject_id, section_id)`.
    pub fn training_table(
        &self,
        ids: &HashSet<&str>,
        quotas: &Quotas,
        policy: SectionPolicy,
        seed: u64,
    ) -> Result<(FeatureTable, TableReport)> {
        let mut report = TableReport::default();
        let mut rows = Vec::new();
        for s in self.subjects.iter().filter(|s| ids.contains(s.subject_id.as_str())) {
            if s.sections.is_empty() {
                report.excluded.push(Exclusion {
                    subject_id: s.subject_id.clone(),
                    reason: "no full section".into(),
                });
                continue;
            }
            let quota = quotas.for_sex(s.sex);
            let chosen = choose_sections(s.sections.len(), quota, policy, seed, &s.subject_id);
            if chosen.len() < quota {
                report.shortfalls.push(Shortfall {
                    subject_id: s.subject_id.clone(),
                    wanted: quota,
                    got: chosen.len(),
                });
            }
            for b in chosen {
                rows.push(FeatureRow {
                    subject_id: s.subject_id.clone(),
                    section_id: b,
                    label: s.sex.label(),
                    values: s.sections[b].clone(),
                });
            }
        }
        if rows.is_empty() {
            return Err(Error::NoSections);
        }
        Ok((FeatureTable::new(self.schema.clone(), rows)?, report))
    }

    /// One unsplit evaluation row per subject in `ids`.
    pub fn eval_table(&self, ids: &HashSet<&str>, eval_epochs: usize) -> (FeatureTable, TableReport) {
        let mut report = TableReport::default();
        let mut rows = Vec::new();
        for s in self.subjects.iter().filter(|s| ids.contains(s.subject_id.as_str())) {
            match &s.eval {
                Some(v) => {
                    if s.eval_epochs_used < eval_epochs {
                        report.short_eval.push(s.subject_id.clone());
                    }
                    rows.push(FeatureRow {
                        subject_id: s.subject_id.clone(),
                        section_id: 0,
                        label: s.sex.label(),
                        values: v.clone(),
                    });
                }
                None => report.excluded.push(Exclusion {
                    subject_id: s.subject_id.clone(),
                    reason: "too few epochs for evaluation".into(),
                }),
            }
        }
        let table = FeatureTable {
            schema: self.schema.clone(),
            rows,
        };
        (table, report)
    }

    pub fn all_ids(&self) -> HashSet<&str> {
        self.subjects.iter().map(|s| s.subject_id.as_str()).collect()
    }

    /// Every section block of every subject, as a table.
    pub fn sections_table(&self) -> FeatureTable {
        let rows = self
            .subjects
            .iter()
            .flat_map(|s| {
                s.sections.iter().enumerate().map(move |(b, v)| FeatureRow {
                    subject_id: s.subject_id.clone(),
                    section_id: b,
                    label: s.sex.label(),
                    values: v.clone(),
                })
            })
            .collect();
        FeatureTable {
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Persist as `<dir>/<kind>_sections.csv` and `<dir>/<kind>_eval.csv`.
    pub fn write(&self, dir: &Path, meta: &Meta) -> Result<()> {
        let (sections, eval) = store_paths(dir, self.kind);
        let header = meta.comment_line();
        self.sections_table().write_csv(&sections, Some(&header))?;
        let (eval_table, _) = self.eval_table(&self.all_ids(), 0);
        eval_table.write_csv(&eval, Some(&header))?;
        let used: BTreeMap<&str, usize> = self
            .subjects
            .iter()
            .map(|s| (s.subject_id.as_str(), s.eval_epochs_used))
            .collect();
        artifact::write_json(&dir.join(format!("{}_eval_epochs.json", self.kind.as_str())), meta, &used)
    }

    pub fn read(dir: &Path, kind: FeatureKind) -> Result<FeatureStore> {
        let (sections_path, eval_path) = store_paths(dir, kind);
        let sections = FeatureTable::read_csv(&sections_path)?;
        let eval = FeatureTable::read_csv(&eval_path)?;
        if sections.schema != eval.schema {
            return Err(Error::SchemaMismatch(format!(
                "{} and {} disagree",
                sections_path.display(),
                eval_path.display()
            )));
        }
        let used_path = dir.join(format!("{}_eval_epochs.json", kind.as_str()));
        let used: BTreeMap<String, usize> = artifact::read_json(&used_path)?;

        let mut by_id: BTreeMap<String, SubjectFeatures> = BTreeMap::new();
        for row in &sections.rows {
            let s = store_entry(&mut by_id, row, &used, &sections_path)?;
            if row.section_id != s.sections.len() {
                return Err(Error::MalformedArtifact {
                    path: sections_path.clone(),
                    msg: format!("subject {} sections out of order", row.subject_id),
                });
            }
            s.sections.push(row.values.clone());
        }
        for row in &eval.rows {
            store_entry(&mut by_id, row, &used, &eval_path)?.eval = Some(row.values.clone());
        }
        Ok(FeatureStore {
            kind,
            schema: sections.schema,
            subjects: by_id.into_values().collect(),
        })
    }
}

fn store_entry<'a>(
    by_id: &'a mut BTreeMap<String, SubjectFeatures>,
    row: &FeatureRow,
    used: &BTreeMap<String, usize>,
    path: &Path,
) -> Result<&'a mut SubjectFeatures> {
    let sex = Sex::from_label(row.label).ok_or_else(|| Error::MalformedArtifact {
        path: path.to_path_buf(),
        msg: format!("bad label {}", row.label),
    })?;
    let s = by_id.entry(row.subject_id.clone()).or_insert_with(|| SubjectFeatures {
        subject_id: row.subject_id.clone(),
        sex,
        sections: Vec::new(),
        eval: None,
        eval_epochs_used: used.get(&row.subject_id).copied().unwrap_or(0),
    });
    if s.sex != sex {
        return Err(Error::MalformedArtifact {
            path: path.to_path_buf(),
            msg: format!("subject {} has conflicting labels", row.subject_id),
        });
    }
    Ok(s)
}

fn store_paths(dir: &Path, kind: FeatureKind) -> (std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("{}_sections.csv", kind.as_str())),
        dir.join(format!("{}_eval.csv", kind.as_str())),
    )
}

/// Augmented training table straight from recordings.
pub fn build_training_table(
    cohort: &Cohort,
    sample_rate: f64,
    params: &ExtractParams,
    quotas: &Quotas,
    policy: SectionPolicy,
    seed: u64,
    kind: FeatureKind,
) -> Result<(FeatureTable, TableReport)> {
    let ex = extract_cohort(cohort, sample_rate, params)?;
    let store = ex.store(kind);
    let (table, mut report) = store.training_table(&store.all_ids(), quotas, policy, seed)?;
    report.excluded.extend(ex.report.excluded);
    Ok((table, report))
}

/// One evaluation row per subject straight from recordings.
pub fn build_eval_table(
    cohort: &Cohort,
    sample_rate: f64,
    params: &ExtractParams,
    kind: FeatureKind,
) -> Result<(FeatureTable, TableReport)> {
    let ex = extract_cohort(cohort, sample_rate, params)?;
    let store = ex.store(kind);
    Ok(store.eval_table(&store.all_ids(), params.eval_epochs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::white_noise_recording;

    fn params() -> ExtractParams {
        ExtractParams::default()
    }

    fn rec(id: &str, sex: Sex, seconds: f64, montage: &Montage, s: u64) -> Recording {
        let mut r = white_noise_recording(id, montage.len(), 250.0, seconds, s);
        r.sex = Some(sex);
        r
    }

    fn small_montage() -> Montage {
        Montage::new(["A", "B", "C"]).unwrap()
    }

    #[test]
    fn quota_arithmetic() {
        let m = small_montage();
        let recs: Vec<Recording> = (0..20)
            .map(|i| {
                let sex = if i < 10 { Sex::F } else { Sex::M };
                rec(&format!("s{i:02}"), sex, 305.0, &m, i as u64)
            })
            .collect();
        let ex = extract_recordings(&recs, &m, &params()).unwrap();
        let store = &ex.connectivity;
        assert_eq!(store.schema.len(), 15);
        assert!(store.subjects.iter().all(|s| s.sections.len() == 10));
        let (t, rep) = store
            .training_table(&store.all_ids(), &Quotas::default(), SectionPolicy::Random, 3)
            .unwrap();
        assert_eq!(t.len(), 130);
        assert!(rep.shortfalls.is_empty());
        // rows sorted by (subject, section)
        let keys: Vec<(String, usize)> = t.rows.iter().map(|r| (r.subject_id.clone(), r.section_id)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn shortfall_uses_what_exists() {
        let m = small_montage();
        // 5 s discard + 3 sections of 30 s + change
        let recs = vec![rec("f", Sex::F, 100.0, &m, 1), rec("m", Sex::M, 305.0, &m, 2)];
        let ex = extract_recordings(&recs, &m, &params()).unwrap();
        let store = &ex.connectivity;
        let (t, rep) = store
            .training_table(&store.all_ids(), &Quotas::default(), SectionPolicy::Random, 0)
            .unwrap();
        assert_eq!(t.rows.iter().filter(|r| r.subject_id == "f").count(), 3);
        assert_eq!(rep.shortfalls, vec![Shortfall { subject_id: "f".into(), wanted: 5, got: 3 }]);
    }

    #[test]
    fn eval_rows_use_leading_epochs() {
        let m = small_montage();
        let recs = vec![
            rec("long", Sex::F, 245.0, &m, 1), // 120 epochs
            rec("short", Sex::M, 85.0, &m, 2), // 40 epochs
            rec("tiny", Sex::M, 30.0, &m, 3),  // 12 epochs
        ];
        let ex = extract_recordings(&recs, &m, &params()).unwrap();
        let store = &ex.connectivity;
        assert_eq!(store.subject("long").unwrap().eval_epochs_used, 90);
        assert_eq!(store.subject("short").unwrap().eval_epochs_used, 40);
        let (t, rep) = store.eval_table(&store.all_ids(), 90);
        assert_eq!(t.len(), 2);
        assert_eq!(rep.short_eval, vec!["short".to_string()]);
        assert_eq!(rep.excluded.len(), 1);

        // The eval row equals the band-averaged coherence over epochs 0..90.
        let e = epoch(&recs[0], &EpochParams::default()).unwrap();
        let sp = epoch_spectra(&e.slice(0..90)).unwrap();
        let direct = band_average(&coherence(&sp).unwrap(), &BandScheme::standard()).unwrap();
        assert_eq!(store.subject("long").unwrap().eval.as_ref().unwrap(), &direct);
    }

    #[test]
    fn section_rows_round_trip_through_spectrum_ops() {
        let m = small_montage();
        let recs = vec![rec("a", Sex::F, 305.0, &m, 9), rec("b", Sex::M, 305.0, &m, 10)];
        let ex = extract_recordings(&recs, &m, &params()).unwrap();
        let store = &ex.band_power;
        let (t, _) = store
            .training_table(&store.all_ids(), &Quotas::default(), SectionPolicy::Random, 42)
            .unwrap();
        let e = epoch(&recs[1], &EpochParams::default()).unwrap();
        for row in t.rows.iter().filter(|r| r.subject_id == "b") {
            let s = row.section_id * 15;
            let sp = epoch_spectra(&e.slice(s..s + 15)).unwrap();
            assert_eq!(row.values, band_power(&sp, &BandScheme::standard()).unwrap());
        }
    }

    #[test]
    fn section_choice_is_order_independent_and_seeded() {
        let a = choose_sections(10, 5, SectionPolicy::Random, 7, "sub-1");
        assert_eq!(a, choose_sections(10, 5, SectionPolicy::Random, 7, "sub-1"));
        assert_eq!(a.len(), 5);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(choose_sections(10, 5, SectionPolicy::Head, 7, "x"), vec![0, 1, 2, 3, 4]);
        assert_eq!(choose_sections(3, 8, SectionPolicy::Random, 7, "x"), vec![0, 1, 2]);
    }

    #[test]
    fn project_reorders_and_rejects_unknown() {
        let t = FeatureTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![FeatureRow {
                subject_id: "s".into(),
                section_id: 0,
                label: 1,
                values: vec![1.0, 2.0, 3.0],
            }],
        )
        .unwrap();
        let p = t.project(&FeatureSubset::new(vec!["c".into(), "a".into()]).unwrap()).unwrap();
        assert_eq!(p.schema, vec!["c", "a"]);
        assert_eq!(p.rows[0].values, vec![3.0, 1.0]);
        let full = FeatureSubset::new(t.schema.clone()).unwrap();
        assert_eq!(t.project(&full).unwrap(), t);
        let bad = FeatureSubset::new(vec!["zz".into()]).unwrap();
        assert!(matches!(t.project(&bad), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn table_rejects_ragged_and_duplicate_rows() {
        let row = |s: usize, n: usize| FeatureRow {
            subject_id: "s".into(),
            section_id: s,
            label: 0,
            values: vec![0.0; n],
        };
        assert!(FeatureTable::new(vec!["a".into()], vec![row(0, 2)]).is_err());
        assert!(FeatureTable::new(vec!["a".into()], vec![row(0, 1), row(0, 1)]).is_err());
    }

    #[test]
    fn store_csv_round_trip() {
        let m = small_montage();
        let recs = vec![rec("a", Sex::F, 125.0, &m, 1), rec("b", Sex::M, 95.0, &m, 2)];
        let ex = extract_recordings(&recs, &m, &params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ex.connectivity.write(dir.path(), &Meta::new("test", &())).unwrap();
        let back = FeatureStore::read(dir.path(), FeatureKind::Connectivity).unwrap();
        assert_eq!(back, ex.connectivity);
    }
}
