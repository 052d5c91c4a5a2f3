//! VGRF recordings: identity types, PhysioNet text parsing and the synthetic
//! fixture generator.
//!
//! A PhysioNet gait-in-Parkinson's file carries 19 whitespace separated numeric
//! columns per line: time in seconds, eight left-foot sensors, eight
//! right-foot sensors, then the total left and right force. The file stem
//! encodes study, group, subject number and walk number, e.g. `GaPt03_01`.

mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::NUM_CHANNELS;

pub use synth::{synthesize_dataset, SyntheticSpec};

/// Sample rate of the public dataset.
pub const SOURCE_RATE_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Study {
    Ga,
    Ju,
    Si,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Pt,
    Co,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Pd,
    Control,
}

impl Label {
    pub fn of_group(group: Group) -> Self {
        match group {
            Group::Pt => Label::Pd,
            Group::Co => Label::Control,
        }
    }

    /// Binary target with PD as the positive class.
    pub fn target(self) -> f32 {
        match self {
            Label::Pd => 1.0,
            Label::Control => 0.0,
        }
    }

    pub fn is_pd(self) -> bool {
        self == Label::Pd
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Label::Pd => "PD",
            Label::Control => "Control",
        })
    }
}

/// Subject identity, rendered as `<study><group><NN>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubjectId {
    pub study: Study,
    pub group: Group,
    pub number: u32,
}

impl SubjectId {
    pub fn new(study: Study, group: Group, number: u32) -> Self {
        assert!(number > 0, "subject numbers start at 1");
        Self {
            study,
            group,
            number,
        }
    }

    pub fn label(&self) -> Label {
        Label::of_group(self.group)
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:?}{:02}", self.study, self.group, self.number)
    }
}

impl FromStr for SubjectId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::MalformedFilename(s.to_string());
        if s.len() != 6 || !s.is_ascii() {
            return Err(bad());
        }
        let study = match &s[0..2] {
            "Ga" => Study::Ga,
            "Ju" => Study::Ju,
            "Si" => Study::Si,
            _ => return Err(bad()),
        };
        let group = match &s[2..4] {
            "Pt" => Group::Pt,
            "Co" => Group::Co,
            _ => return Err(bad()),
        };
        let number = parse_two_digits(&s[4..6]).ok_or_else(bad)?;
        if number == 0 {
            return Err(bad());
        }
        Ok(SubjectId::new(study, group, number))
    }
}

fn parse_two_digits(s: &str) -> Option<u32> {
    if s.len() == 2 && s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

/// Identity of one walk: (subject, walk index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordingKey {
    pub subject: SubjectId,
    pub walk: u32,
}

impl fmt::Display for RecordingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{:02}", self.subject, self.walk)
    }
}

/// Parses a file stem such as `GaPt03_01`.
pub fn parse_stem(stem: &str) -> Result<RecordingKey> {
    let bad = || Error::MalformedFilename(stem.to_string());
    let (subject, walk) = stem.split_once('_').ok_or_else(bad)?;
    let subject: SubjectId = subject.parse().map_err(|_| bad())?;
    let walk = parse_two_digits(walk).filter(|&w| w > 0).ok_or_else(bad)?;
    Ok(RecordingKey { subject, walk })
}

/// One subject walk: 18 synchronized VGRF channels in newtons.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: SubjectId,
    pub walk_index: u32,
    pub label: Label,
    pub sample_rate_hz: f64,
    /// `NUM_CHANNELS` rows of equal length.
    pub channels: Vec<Vec<f64>>,
    pub timestamps: Vec<f64>,
}

impl Recording {
    /// Builds a recording and checks its invariants. The label is derived
    /// from the subject's group.
    pub fn new(
        key: RecordingKey,
        sample_rate_hz: f64,
        channels: Vec<Vec<f64>>,
        timestamps: Vec<f64>,
    ) -> Result<Self> {
        let rec = Recording {
            subject: key.subject,
            walk_index: key.walk,
            label: key.subject.label(),
            sample_rate_hz,
            channels,
            timestamps,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Builds a recording on a uniform time grid starting at zero.
    pub fn uniform(key: RecordingKey, sample_rate_hz: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        let timestamps = (0..n).map(|i| i as f64 / sample_rate_hz).collect();
        Self::new(key, sample_rate_hz, channels, timestamps)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Error::InvalidRecording(format!("{}: {msg}", self.key()));
        if self.walk_index == 0 {
            return Err(invalid("walk index must be positive".into()));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(invalid(format!("bad sample rate {}", self.sample_rate_hz)));
        }
        if self.channels.len() != NUM_CHANNELS {
            return Err(invalid(format!(
                "expected {NUM_CHANNELS} channels, got {}",
                self.channels.len()
            )));
        }
        let n = self.channels[0].len();
        if n == 0 {
            return Err(invalid("no samples".into()));
        }
        if let Some(c) = self.channels.iter().position(|ch| ch.len() != n) {
            return Err(invalid(format!("channel {c} length differs from channel 0")));
        }
        if self.timestamps.len() != n {
            return Err(invalid("timestamp count differs from sample count".into()));
        }
        if self.label != self.subject.label() {
            return Err(invalid("label disagrees with subject group".into()));
        }
        if let Some(i) = timestamp_violation(&self.timestamps, self.sample_rate_hz) {
            return Err(invalid(format!("irregular timestamp at sample {i}")));
        }
        Ok(())
    }

    pub fn key(&self) -> RecordingKey {
        RecordingKey {
            subject: self.subject,
            walk: self.walk_index,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Replaces the channel data, keeping identity. Timestamps are rebuilt on
    /// a uniform grid at `sample_rate_hz`.
    pub fn with_channels(&self, channels: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        let t0 = self.timestamps.first().copied().unwrap_or(0.0);
        let n = channels.first().map_or(0, Vec::len);
        let timestamps = (0..n).map(|i| t0 + i as f64 / sample_rate_hz).collect();
        let rec = Recording {
            subject: self.subject,
            walk_index: self.walk_index,
            label: self.label,
            sample_rate_hz,
            channels,
            timestamps,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Writes the recording in the PhysioNet column layout. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for n in 0..self.len() {
            write!(out, "{}", self.timestamps[n])?;
            for ch in &self.channels {
                write!(out, "\t{}", ch[n])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("{}.txt", self.key())
    }
}

/// Returns the index of the first sample whose spacing from its predecessor
/// is not within half a period of the nominal spacing.
fn timestamp_violation(ts: &[f64], rate: f64) -> Option<usize> {
    let period = 1.0 / rate;
    ts.windows(2)
        .position(|w| {
            let dt = w[1] - w[0];
            !(dt > 0.0 && (dt - period).abs() <= 0.5 * period)
        })
        .map(|i| i + 1)
}

/// Parses one PhysioNet VGRF file. `path` supplies the file stem and is used
/// in error messages; `contents` is the file text.
pub fn parse_recording_file(path: &Path, contents: &str) -> Result<Recording> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::MalformedFilename(path.display().to_string()))?;
    let key = parse_stem(stem)?;

    let mut timestamps = Vec::new();
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); NUM_CHANNELS];
    let mut row_lines = Vec::new();
    for (lineno, line) in contents.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row_err = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason,
        };
        let mut fields = line.split_ascii_whitespace();
        let mut values = [0.0f64; NUM_CHANNELS + 1];
        let mut count = 0;
        for field in fields.by_ref() {
            if count == values.len() {
                count += 1;
                break;
            }
            values[count] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| row_err(format!("non-numeric field `{field}`")))?;
            count += 1;
        }
        let count = count + fields.count();
        if count != NUM_CHANNELS + 1 {
            return Err(row_err(format!(
                "expected {} fields, found {count}",
                NUM_CHANNELS + 1
            )));
        }
        timestamps.push(values[0]);
        for (ch, v) in channels.iter_mut().zip(&values[1..]) {
            ch.push(*v);
        }
        row_lines.push(lineno + 1);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    if let Some(i) = timestamp_violation(&timestamps, SOURCE_RATE_HZ) {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: row_lines[i],
            reason: "timestamps not increasing at 100 Hz".into(),
        });
    }
    Recording::new(key, SOURCE_RATE_HZ, channels, timestamps)
}

/// A collection of recordings keyed uniquely by (subject, walk).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
    pub provenance: String,
}

impl Dataset {
    /// Sorts by (subject, walk) and rejects duplicate keys.
    pub fn new(mut recordings: Vec<Recording>, provenance: impl Into<String>) -> Result<Self> {
        recordings.sort_by_key(Recording::key);
        if let Some(w) = recordings.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::DuplicateRecording(w[0].key().to_string()));
        }
        Ok(Self {
            recordings,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    /// Sorted subject list with labels.
    pub fn subjects(&self) -> Vec<(SubjectId, Label)> {
        self.by_subject()
            .keys()
            .map(|s| (*s, s.label()))
            .collect()
    }

    /// Recording indices grouped by subject.
    pub fn by_subject(&self) -> BTreeMap<SubjectId, Vec<usize>> {
        let mut map: BTreeMap<SubjectId, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.recordings.iter().enumerate() {
            map.entry(r.subject).or_default().push(i);
        }
        map
    }

    /// Recordings belonging to `subjects`, in dataset order.
    pub fn select<'a>(&'a self, subjects: &BTreeSet<SubjectId>) -> Vec<&'a Recording> {
        self.recordings
            .iter()
            .filter(|r| subjects.contains(&r.subject))
            .collect()
    }

    /// Writes every recording as a PhysioNet-format file under `dir`.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.recordings
            .iter()
            .map(|r| {
                let path = dir.join(r.file_name());
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut out = std::io::BufWriter::new(file);
                r.write_text(&mut out)
                    .and_then(|_| out.flush())
                    .map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// Parses every file whose stem matches the naming pattern. Other files are
/// skipped with a warning.
pub fn scan_dataset_dir(dir: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let matches = path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| parse_stem(s).is_ok());
        if matches {
            paths.push(path);
        } else {
            log::warn!("skipping {}: not a VGRF recording name", path.display());
        }
    }
    if paths.is_empty() {
        return Err(Error::NoRecordingsFound(dir.to_path_buf()));
    }
    paths.sort();
    let recordings = paths
        .par_iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_recording_file(path, &text)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(recordings, format!("directory {}", dir.display()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub pd_subjects: usize,
    pub control_subjects: usize,
    pub pd_recordings: usize,
    pub control_recordings: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
}

impl DatasetSummary {
    pub fn subjects(&self) -> usize {
        self.pd_subjects + self.control_subjects
    }

    pub fn recordings(&self) -> usize {
        self.pd_recordings + self.control_recordings
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "subjects:   {} ({} PD, {} control)",
            self.subjects(),
            self.pd_subjects,
            self.control_subjects
        )?;
        writeln!(
            f,
            "recordings: {} ({} PD, {} control)",
            self.recordings(),
            self.pd_recordings,
            self.control_recordings
        )?;
        write!(
            f,
            "length:     min {} / mean {:.1} / max {} samples",
            self.min_len, self.mean_len, self.max_len
        )
    }
}

pub fn dataset_summary(ds: &Dataset) -> DatasetSummary {
    if ds.is_empty() {
        return DatasetSummary::default();
    }
    let mut s = DatasetSummary {
        min_len: usize::MAX,
        ..Default::default()
    };
    for (subject, _) in ds.subjects() {
        match subject.label() {
            Label::Pd => s.pd_subjects += 1,
            Label::Control => s.control_subjects += 1,
        }
    }
    let mut total = 0usize;
    for r in &ds.recordings {
        match r.label {
            Label::Pd => s.pd_recordings += 1,
            Label::Control => s.control_recordings += 1,
        }
        s.min_len = s.min_len.min(r.len());
        s.max_len = s.max_len.max(r.len());
        total += r.len();
    }
    s.mean_len = total as f64 / ds.len() as f64;
    s
}
