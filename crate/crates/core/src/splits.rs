//! Train/validation split strategies, subject holdout and stratified k-fold.
//!
//! Every planner first sorts its items into canonical order (subject, walk,
//! offset), then shuffles with a seeded ChaCha8 stream, so a plan is a pure
//! function of the input set and the seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::gait::{Label, RecordingKey, SubjectId};
use crate::rng::seeded;

pub const DEFAULT_VAL_FRACTION: f64 = 0.10;
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    /// A class-stratified random fraction of all windows.
    WindowLevel,
    /// A random fraction of the windows of every recording.
    WithinRecording,
    /// All windows of a class-stratified random fraction of subjects.
    SubjectLevel,
}

impl SplitStrategy {
    pub const ALL: [SplitStrategy; 3] = [
        SplitStrategy::WindowLevel,
        SplitStrategy::WithinRecording,
        SplitStrategy::SubjectLevel,
    ];
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            SplitStrategy::WindowLevel => "window-level",
            SplitStrategy::WithinRecording => "within-recording",
            SplitStrategy::SubjectLevel => "subject-level",
        })
    }
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Format(format!("unknown split strategy `{s}`")))
    }
}

/// Identity of a window: its source recording and start offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowRef {
    pub source: RecordingKey,
    pub offset: usize,
}

impl WindowRef {
    pub fn of(w: &Window) -> Self {
        Self {
            source: w.source,
            offset: w.offset,
        }
    }

    pub fn subject(&self) -> SubjectId {
        self.source.subject
    }
}

/// Assignment of windows to training and validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub train: Vec<WindowRef>,
    pub validation: Vec<WindowRef>,
}

fn round_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Splits `total` items across classes in proportion to `sizes` using
/// largest remainders (ties go to the earlier class).
fn largest_remainder(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - alloc.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("fraction {fraction} must lie strictly between 0 and 1")))
    }
}

fn group_by_label<T: Ord + Copy>(items: impl IntoIterator<Item = (T, Label)>) -> BTreeMap<Label, Vec<T>> {
    let mut by: BTreeMap<Label, Vec<T>> = BTreeMap::new();
    for (item, label) in items {
        by.entry(label).or_default().push(item);
    }
    for v in by.values_mut() {
        v.sort();
        v.dedup();
    }
    by
}

/// Draws `count(n_c)` subjects per class, `1 <= count <= n_c - 1`.
fn draw_subjects(
    subjects: &[(SubjectId, Label)],
    seed: u64,
    count: impl Fn(usize) -> usize,
) -> Result<BTreeSet<SubjectId>> {
    let by = group_by_label(subjects.iter().copied());
    let mut rng = seeded(seed);
    let mut picked = BTreeSet::new();
    for label in [Label::Pd, Label::Control] {
        let mut ids = by.get(&label).cloned().unwrap_or_default();
        if ids.len() < 2 {
            return Err(Error::TooFewSubjects {
                needed: 2,
                found: ids.len(),
            });
        }
        let k = count(ids.len()).clamp(1, ids.len() - 1);
        ids.shuffle(&mut rng);
        picked.extend(ids.into_iter().take(k));
    }
    Ok(picked)
}

/// Class-stratified subject holdout; returns `(train, test)` subject sets.
/// Each class contributes `round(fraction * class size)` test subjects.
pub fn holdout_subjects(
    subjects: &[(SubjectId, Label)],
    fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<SubjectId>, BTreeSet<SubjectId>)> {
    check_fraction(fraction)?;
    let test = draw_subjects(subjects, seed, |n| round_count(fraction, n))?;
    let train = subjects
        .iter()
        .map(|(s, _)| *s)
        .filter(|s| !test.contains(s))
        .collect();
    Ok((train, test))
}

/// Splits windows into training and validation by `strategy`.
pub fn split_windows(windows: &[Window], strategy: SplitStrategy, val_fraction: f64, seed: u64) -> Result<SplitPlan> {
    split_refs(
        windows.iter().map(|w| (WindowRef::of(w), w.label)).collect(),
        strategy,
        val_fraction,
        seed,
    )
}

/// [`split_windows`] over window identities alone.
pub fn split_refs(
    mut refs: Vec<(WindowRef, Label)>,
    strategy: SplitStrategy,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitPlan> {
    check_fraction(val_fraction)?;
    if refs.is_empty() {
        return Err(Error::TooFewWindows("no windows to split".into()));
    }
    let n = refs.len();
    refs.sort();
    refs.dedup();
    if refs.len() != n {
        return Err(Error::TooFewWindows("duplicate window identities".into()));
    }
    let mut rng = seeded(seed);
    let mut val: BTreeSet<WindowRef> = BTreeSet::new();
    match strategy {
        SplitStrategy::WindowLevel => {
            let by = group_by_label(refs.iter().copied());
            let labels: Vec<Label> = by.keys().copied().collect();
            let sizes: Vec<usize> = by.values().map(Vec::len).collect();
            let quotas = largest_remainder(round_count(val_fraction, refs.len()), &sizes);
            for (label, q) in labels.iter().zip(quotas) {
                let mut items = by[label].clone();
                items.shuffle(&mut rng);
                val.extend(items.into_iter().take(q));
            }
        }
        SplitStrategy::WithinRecording => {
            let mut by: BTreeMap<RecordingKey, Vec<WindowRef>> = BTreeMap::new();
            for (r, _) in &refs {
                by.entry(r.source).or_default().push(*r);
            }
            for (key, mut items) in by {
                if items.len() < 2 {
                    return Err(Error::TooFewWindows(format!(
                        "recording {key} yields {} window(s), at least 2 are needed",
                        items.len()
                    )));
                }
                let k = round_count(val_fraction, items.len()).max(1);
                items.shuffle(&mut rng);
                val.extend(items.into_iter().take(k));
            }
        }
        SplitStrategy::SubjectLevel => {
            let subjects: Vec<(SubjectId, Label)> = refs.iter().map(|(r, l)| (r.subject(), *l)).collect();
            let chosen = draw_subjects(&subjects, seed, |n| round_count(val_fraction, n))?;
            val.extend(refs.iter().map(|(r, _)| *r).filter(|r| chosen.contains(&r.subject())));
        }
    }
    let (validation, train): (Vec<WindowRef>, Vec<WindowRef>) =
        refs.into_iter().map(|(r, _)| r).partition(|r| val.contains(r));
    Ok(SplitPlan {
        strategy,
        seed,
        train,
        validation,
    })
}

impl SplitPlan {
    /// Indices into `windows` of the training and validation windows.
    pub fn resolve(&self, windows: &[Window]) -> Result<(Vec<usize>, Vec<usize>)> {
        let index: HashMap<WindowRef, usize> = windows.iter().enumerate().map(|(i, w)| (WindowRef::of(w), i)).collect();
        let look = |refs: &[WindowRef]| {
            refs.iter()
                .map(|r| {
                    index
                        .get(r)
                        .copied()
                        .ok_or_else(|| Error::TooFewWindows(format!("window {}@{} not found", r.source, r.offset)))
                })
                .collect::<Result<Vec<_>>>()
        };
        Ok((look(&self.train)?, look(&self.validation)?))
    }

    /// Subjects present on both sides.
    pub fn subject_overlap(&self) -> BTreeSet<SubjectId> {
        verify_no_subject_leakage(
            self.train.iter().map(WindowRef::subject),
            self.validation.iter().map(WindowRef::subject),
        )
    }

    /// Line-oriented manifest: `strategy=`, `seed=`, a header, then one
    /// `subject,walk,offset,side` row per window in canonical order.
    pub fn to_manifest(&self) -> String {
        let mut rows: Vec<(WindowRef, &str)> = self
            .train
            .iter()
            .map(|r| (*r, "train"))
            .chain(self.validation.iter().map(|r| (*r, "val")))
            .collect();
        rows.sort();
        let mut out = format!("strategy={}\nseed={}\nsubject,walk,offset,side\n", self.strategy, self.seed);
        for (r, side) in rows {
            out.push_str(&format!("{},{},{},{side}\n", r.source.subject, r.source.walk, r.offset));
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("split manifest: {m}"));
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key}=`")))
        };
        let strategy: SplitStrategy = field("strategy")?.parse()?;
        let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
        if lines.next() != Some("subject,walk,offset,side") {
            return Err(bad("missing column header".into()));
        }
        let mut plan = SplitPlan {
            strategy,
            seed,
            train: Vec::new(),
            validation: Vec::new(),
        };
        for line in lines.filter(|l| !l.is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            let [subject, walk, offset, side] = cols[..] else {
                return Err(bad(format!("malformed row `{line}`")));
            };
            let r = WindowRef {
                source: RecordingKey {
                    subject: subject.parse().map_err(|_| bad(format!("bad subject `{subject}`")))?,
                    walk: walk.parse().map_err(|_| bad(format!("bad walk `{walk}`")))?,
                },
                offset: offset.parse().map_err(|_| bad(format!("bad offset `{offset}`")))?,
            };
            match side {
                "train" => plan.train.push(r),
                "val" => plan.validation.push(r),
                _ => return Err(bad(format!("bad side `{side}`"))),
            }
        }
        Ok(plan)
    }
}

/// Subject-level k-fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<BTreeSet<SubjectId>>,
}

/// Stratified subject-level k-fold. Within each class (PD first) subjects are
/// shuffled and dealt round-robin, the dealing position carrying over from
/// one class to the next so that fold sizes differ by at most one.
pub fn stratified_kfold(subjects: &[(SubjectId, Label)], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let by = group_by_label(subjects.iter().copied());
    let mut rng = seeded(seed);
    let mut folds = vec![BTreeSet::new(); k];
    let mut deal = 0usize;
    for label in [Label::Pd, Label::Control] {
        let mut ids = by.get(&label).cloned().unwrap_or_default();
        if ids.len() < k {
            return Err(Error::TooFewSubjects {
                needed: k,
                found: ids.len(),
            });
        }
        ids.shuffle(&mut rng);
        for id in ids {
            folds[deal % k].insert(id);
            deal += 1;
        }
    }
    Ok(FoldPlan { k, seed, folds })
}

impl FoldPlan {
    pub fn test_subjects(&self, fold: usize) -> &BTreeSet<SubjectId> {
        &self.folds[fold]
    }

    pub fn train_subjects(&self, fold: usize) -> BTreeSet<SubjectId> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }

    pub fn fold_of(&self, subject: &SubjectId) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(subject))
    }

    /// `(pd, control)` subject counts per fold.
    pub fn stratification(&self) -> Vec<(usize, usize)> {
        self.folds
            .iter()
            .map(|f| {
                let pd = f.iter().filter(|s| s.label() == Label::Pd).count();
                (pd, f.len() - pd)
            })
            .collect()
    }

    /// Train/test subject overlap of every fold.
    pub fn overlaps(&self) -> Vec<BTreeSet<SubjectId>> {
        (0..self.k)
            .map(|i| verify_no_subject_leakage(self.train_subjects(i), self.test_subjects(i).iter().copied()))
            .collect()
    }

    /// `k=`, `seed=`, a header, then `subject,fold` rows in subject order.
    pub fn to_manifest(&self) -> String {
        let mut rows: Vec<(SubjectId, usize)> = self
            .folds
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.iter().map(move |s| (*s, i)))
            .collect();
        rows.sort();
        let mut out = format!("k={}\nseed={}\nsubject,fold\n", self.k, self.seed);
        for (s, i) in rows {
            out.push_str(&format!("{s},{i}\n"));
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("fold manifest: {m}"));
        let mut lines = text.lines();
        let mut num = |key: &str| -> Result<u64> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("expected `{key}=`")))
        };
        let k = num("k")? as usize;
        let seed = num("seed")?;
        if lines.next() != Some("subject,fold") {
            return Err(bad("missing column header".into()));
        }
        let mut folds = vec![BTreeSet::new(); k];
        for line in lines.filter(|l| !l.is_empty()) {
            let (s, f) = line.split_once(',').ok_or_else(|| bad(format!("malformed row `{line}`")))?;
            let s: SubjectId = s.parse().map_err(|_| bad(format!("bad subject `{s}`")))?;
            let f: usize = f.parse().map_err(|_| bad(format!("bad fold `{f}`")))?;
            folds
                .get_mut(f)
                .ok_or_else(|| bad(format!("fold {f} out of range")))?
                .insert(s);
        }
        Ok(Self { k, seed, folds })
    }
}

/// Subjects that appear on both sides of a split; empty iff the sides are
/// subject-disjoint.
pub fn verify_no_subject_leakage(
    train: impl IntoIterator<Item = SubjectId>,
    other: impl IntoIterator<Item = SubjectId>,
) -> BTreeSet<SubjectId> {
    let train: BTreeSet<SubjectId> = train.into_iter().collect();
    other.into_iter().filter(|s| train.contains(s)).collect()
}
