//! Decision-level data model, file ingestion and validation.
//!
//! The unit of data is a thresholded genuine-comparison decision: 1 when the
//! matcher wrongly declared a non-match, 0 otherwise. Decisions are stored
//! pre-thresholded; score thresholding happens upstream of this tool. The
//! model assumes a stationary matching process with a fixed threshold within
//! each group — the file format cannot verify that, so it is a documented
//! assumption, not a check.
//!
//! Datasets are immutable after construction and safe to share read-only
//! across workers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Canonical CSV header, also the default column names for ingestion.
pub const CSV_HEADER: [&str; 4] = ["subject_id", "group_id", "attempt_index", "decision"];

/// Maps the canonical columns onto the column names of an input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub subject: String,
    pub group: String,
    pub attempt: String,
    pub decision: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            subject: CSV_HEADER[0].to_string(),
            group: CSV_HEADER[1].to_string(),
            attempt: CSV_HEADER[2].to_string(),
            decision: CSV_HEADER[3].to_string(),
        }
    }
}

/// One thresholded genuine-comparison outcome for one subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub subject_id: String,
    pub group_id: String,
    /// 1-based attempt number within the subject.
    pub attempt_index: u32,
    /// 1 = declared non-match (an error on genuine data), 0 = match.
    pub decision: u8,
}

/// A subject together with its ordered decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectDecisions {
    subject_id: String,
    decisions: Vec<u8>,
}

impl SubjectDecisions {
    pub fn new(subject_id: impl Into<String>, decisions: Vec<u8>) -> Result<Self> {
        let subject_id = subject_id.into();
        if decisions.is_empty() {
            return Err(AuditError::Invalid(format!(
                "subject {subject_id} has no decisions"
            )));
        }
        if let Some(bad) = decisions.iter().find(|&&d| d > 1) {
            return Err(AuditError::Invalid(format!(
                "subject {subject_id} has non-binary decision {bad}"
            )));
        }
        Ok(Self {
            subject_id,
            decisions,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn decisions(&self) -> &[u8] {
        &self.decisions
    }

    /// Number of attempts for this subject.
    pub fn attempts(&self) -> u64 {
        self.decisions.len() as u64
    }

    /// Number of false non-match decisions for this subject.
    pub fn errors(&self) -> u64 {
        self.decisions.iter().map(|&d| d as u64).sum()
    }
}

/// All decisions for one demographic group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupDataset {
    group_id: String,
    subjects: Vec<SubjectDecisions>,
}

impl GroupDataset {
    pub fn new(group_id: impl Into<String>, subjects: Vec<SubjectDecisions>) -> Result<Self> {
        let group_id = group_id.into();
        if subjects.is_empty() {
            return Err(AuditError::EmptyDataset(format!(
                "group {group_id} has no subjects"
            )));
        }
        Ok(Self { group_id, subjects })
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn subjects(&self) -> &[SubjectDecisions] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> u64 {
        self.subjects.len() as u64
    }

    /// Total decision count for the group.
    pub fn decision_count(&self) -> u64 {
        self.subjects.iter().map(|s| s.attempts()).sum()
    }

    /// Total error count for the group.
    pub fn error_count(&self) -> u64 {
        self.subjects.iter().map(|s| s.errors()).sum()
    }
}

/// A multi-group study: the input to every test in this crate.
///
/// `provenance` is free-text metadata (source file, threshold note). It is
/// not persisted by the CSV writer and is excluded from equality, so the
/// round-trip law `ingest(write(d)) == d` holds for canonical datasets.
#[derive(Debug, Clone)]
pub struct StudyDataset {
    groups: Vec<GroupDataset>,
    pub provenance: String,
}

impl PartialEq for StudyDataset {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups
    }
}

impl StudyDataset {
    /// Builds a study from per-group datasets. Group ids must be distinct
    /// and no subject id may appear in two groups. Single-group studies are
    /// representable; the tests themselves require two or more groups.
    pub fn new(groups: Vec<GroupDataset>, provenance: impl Into<String>) -> Result<Self> {
        if groups.is_empty() {
            return Err(AuditError::EmptyDataset("study has no groups".into()));
        }
        let mut seen_groups: HashMap<&str, ()> = HashMap::new();
        for g in &groups {
            if seen_groups.insert(g.group_id(), ()).is_some() {
                return Err(AuditError::Invalid(format!(
                    "duplicate group id {}",
                    g.group_id()
                )));
            }
        }
        let mut subject_group: HashMap<&str, &str> = HashMap::new();
        for g in &groups {
            for s in g.subjects() {
                match subject_group.insert(s.subject_id(), g.group_id()) {
                    None => {}
                    Some(first) if first != g.group_id() => {
                        return Err(AuditError::CrossGroupSubject {
                            subject_id: s.subject_id().to_string(),
                            first_group: first.to_string(),
                            second_group: g.group_id().to_string(),
                        });
                    }
                    Some(_) => {
                        return Err(AuditError::Invalid(format!(
                            "duplicate subject {} in group {}",
                            s.subject_id(),
                            g.group_id()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            groups,
            provenance: provenance.into(),
        })
    }

    pub fn groups(&self) -> &[GroupDataset] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Total decision count across all groups.
    pub fn decision_count(&self) -> u64 {
        self.groups.iter().map(|g| g.decision_count()).sum()
    }

    /// Sorts groups, subjects within groups, and nothing else — decisions
    /// stay in attempt order. No estimator depends on any of these orders;
    /// the canonical sort exists only so that output files are reproducible.
    pub fn canonicalized(mut self) -> Self {
        for g in &mut self.groups {
            g.subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        }
        self.groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
        self
    }

    /// Flattens to row records in canonical order.
    pub fn to_records(&self) -> Vec<DecisionRecord> {
        let canonical = self.clone().canonicalized();
        let mut records = Vec::with_capacity(canonical.decision_count() as usize);
        for g in canonical.groups() {
            for s in g.subjects() {
                for (j, &d) in s.decisions().iter().enumerate() {
                    records.push(DecisionRecord {
                        subject_id: s.subject_id().to_string(),
                        group_id: g.group_id().to_string(),
                        attempt_index: (j + 1) as u32,
                        decision: d,
                    });
                }
            }
        }
        records
    }
}

/// Accumulates validated rows into a study. Shared by the CSV and JSON readers.
#[derive(Default)]
struct StudyBuilder {
    // Insertion-ordered (group, subject) -> (attempt_index, decision) rows.
    group_order: Vec<String>,
    subjects_per_group: HashMap<String, Vec<String>>,
    rows: HashMap<(String, String), Vec<(u32, u8)>>,
    subject_group: HashMap<String, String>,
}

impl StudyBuilder {
    fn push(&mut self, row_number: u64, rec: DecisionRecord) -> Result<()> {
        if rec.decision > 1 {
            return Err(AuditError::MalformedRow {
                row: row_number,
                message: format!("decision must be 0 or 1, got {}", rec.decision),
            });
        }
        if rec.attempt_index == 0 {
            return Err(AuditError::MalformedRow {
                row: row_number,
                message: "attempt_index must be >= 1".into(),
            });
        }
        if rec.subject_id.is_empty() || rec.group_id.is_empty() {
            return Err(AuditError::MalformedRow {
                row: row_number,
                message: "empty subject_id or group_id".into(),
            });
        }
        match self.subject_group.get(&rec.subject_id) {
            None => {
                self.subject_group
                    .insert(rec.subject_id.clone(), rec.group_id.clone());
            }
            Some(g) if *g != rec.group_id => {
                return Err(AuditError::CrossGroupSubject {
                    subject_id: rec.subject_id,
                    first_group: g.clone(),
                    second_group: rec.group_id,
                });
            }
            Some(_) => {}
        }
        if !self.subjects_per_group.contains_key(&rec.group_id) {
            self.group_order.push(rec.group_id.clone());
        }
        let subjects = self
            .subjects_per_group
            .entry(rec.group_id.clone())
            .or_default();
        let key = (rec.group_id, rec.subject_id);
        let attempts = self.rows.entry(key.clone()).or_insert_with(|| {
            subjects.push(key.1.clone());
            Vec::new()
        });
        if attempts.iter().any(|&(a, _)| a == rec.attempt_index) {
            return Err(AuditError::MalformedRow {
                row: row_number,
                message: format!(
                    "duplicate attempt {} for subject {} in group {}",
                    rec.attempt_index, key.1, key.0
                ),
            });
        }
        attempts.push((rec.attempt_index, rec.decision));
        Ok(())
    }

    fn finish(mut self, provenance: String) -> Result<StudyDataset> {
        if self.group_order.is_empty() {
            return Err(AuditError::EmptyDataset(
                "no data rows in input".to_string(),
            ));
        }
        let mut groups = Vec::with_capacity(self.group_order.len());
        for group_id in &self.group_order {
            let mut subjects = Vec::new();
            for subject_id in &self.subjects_per_group[group_id] {
                let mut attempts = self
                    .rows
                    .remove(&(group_id.clone(), subject_id.clone()))
                    .expect("builder row bookkeeping");
                attempts.sort_by_key(|&(a, _)| a);
                let decisions = attempts.into_iter().map(|(_, d)| d).collect();
                subjects.push(SubjectDecisions::new(subject_id.clone(), decisions)?);
            }
            groups.push(GroupDataset::new(group_id.clone(), subjects)?);
        }
        StudyDataset::new(groups, provenance)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AuditError {
    AuditError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> AuditError {
    AuditError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a decision CSV into a validated study.
///
/// Rows may arrive in any order; decisions are regrouped per subject in
/// attempt order. Every invariant (binary decisions, unique
/// (subject, group, attempt), one group per subject) is enforced, with
/// errors naming the offending data row or subject.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<StudyDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            AuditError::Invalid(format!("missing column {name:?} in {}", path.display()))
        })
    };
    let subject_col = col(&schema.subject)?;
    let group_col = col(&schema.group)?;
    let attempt_col = col(&schema.attempt)?;
    let decision_col = col(&schema.decision)?;

    let mut builder = StudyBuilder::default();
    let mut row_number = 0u64;
    for record in reader.records() {
        row_number += 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let field = |idx: usize, name: &str| -> Result<&str> {
            match record.get(idx) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(AuditError::MalformedRow {
                    row: row_number,
                    message: format!("missing field {name}"),
                }),
            }
        };
        let attempt_index: u32 =
            field(attempt_col, &schema.attempt)?
                .parse()
                .map_err(|_| AuditError::MalformedRow {
                    row: row_number,
                    message: format!(
                        "attempt {:?} is not a positive integer",
                        record.get(attempt_col).unwrap_or("")
                    ),
                })?;
        let decision_text = field(decision_col, &schema.decision)?;
        let decision: u8 = match decision_text {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(AuditError::MalformedRow {
                    row: row_number,
                    message: format!("decision must be 0 or 1, got {other:?}"),
                })
            }
        };
        builder.push(
            row_number,
            DecisionRecord {
                subject_id: field(subject_col, &schema.subject)?.to_string(),
                group_id: field(group_col, &schema.group)?.to_string(),
                attempt_index,
                decision,
            },
        )?;
    }
    builder.finish(path.display().to_string())
}

/// Writes the canonical CSV form: fixed header, rows sorted by group,
/// subject, attempt. `ingest_csv` on the output reproduces the dataset.
pub fn write_csv(dataset: &StudyDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for rec in dataset.to_records() {
        writer
            .write_record([
                rec.subject_id.as_str(),
                rec.group_id.as_str(),
                &rec.attempt_index.to_string(),
                &rec.decision.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// JSON mirror of the CSV format: same field names, one record per decision.
#[derive(Debug, Serialize, Deserialize)]
struct StudyJson {
    provenance: String,
    records: Vec<DecisionRecord>,
}

pub fn write_json(dataset: &StudyDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = StudyJson {
        provenance: dataset.provenance.clone(),
        records: dataset.to_records(),
    };
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn ingest_json(path: impl AsRef<Path>) -> Result<StudyDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let doc: StudyJson = serde_json::from_reader(BufReader::new(file))?;
    let mut builder = StudyBuilder::default();
    for (i, rec) in doc.records.into_iter().enumerate() {
        builder.push(i as u64 + 1, rec)?;
    }
    builder.finish(doc.provenance)
}
