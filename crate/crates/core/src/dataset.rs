//! DHG-14/28 on-disk layout: scanning, skeleton file parsing and
//! leave-one-subject-out splits.
//!
//! Expected tree:
//! `gesture_<g>/finger_<f>/subject_<s>/essai_<t>/skeletons_world.txt`, one frame
//! per line, `3·J` whitespace-separated numbers (`x y z` per joint).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::skeleton::{HandSkeleton, SequenceMeta, SkeletonSequence};

pub const SKELETON_FILE: &str = "skeletons_world.txt";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("no skeleton files found under {0}")]
    EmptyDataset(PathBuf),
    #[error("duplicate entry gesture {gesture} finger {finger} subject {subject} trial {trial}")]
    DuplicateEntry {
        gesture: u32,
        finger: u32,
        subject: u32,
        trial: u32,
    },
    #[error("{path}:{line}: cannot parse '{token}' as a number")]
    ParseError {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: expected {expected} values ({joints} joints), found {found}")]
    WrongJointCount {
        path: PathBuf,
        line: usize,
        found: usize,
        expected: usize,
        joints: usize,
    },
    #[error("{0}: file contains no frames")]
    EmptyFile(PathBuf),
    #[error("subject {0} has no entries")]
    MissingSubject(u32),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DatasetEntry {
    pub gesture: u32,
    pub finger: u32,
    pub subject: u32,
    pub trial: u32,
    pub path: PathBuf,
}

impl DatasetEntry {
    pub fn meta(&self) -> SequenceMeta {
        SequenceMeta {
            subject: self.subject,
            gesture: self.gesture,
            finger: self.finger,
            trial: self.trial,
        }
    }

    pub fn key(&self) -> (u32, u32, u32, u32) {
        (self.gesture, self.finger, self.subject, self.trial)
    }
}

/// Entries sorted by `(gesture, finger, subject, trial)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetIndex {
    entries: Vec<DatasetEntry>,
}

impl DatasetIndex {
    pub fn new(mut entries: Vec<DatasetEntry>) -> Result<Self, DatasetError> {
        entries.sort();
        for w in entries.windows(2) {
            if w[0].key() == w[1].key() {
                let (gesture, finger, subject, trial) = w[0].key();
                return Err(DatasetError::DuplicateEntry {
                    gesture,
                    finger,
                    subject,
                    trial,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.subject).collect()
    }
}

/// Relative path of a sequence inside a DHG tree.
pub fn entry_path(meta: &SequenceMeta) -> PathBuf {
    PathBuf::from(format!("gesture_{}", meta.gesture))
        .join(format!("finger_{}", meta.finger))
        .join(format!("subject_{}", meta.subject))
        .join(format!("essai_{}", meta.trial))
        .join(SKELETON_FILE)
}

fn numbered_dirs(dir: &Path, prefix: &str) -> Result<Vec<(u32, PathBuf)>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name();
        let Some(num) = name
            .to_str()
            .and_then(|n| n.strip_prefix(prefix))
            .and_then(|n| n.parse::<u32>().ok())
        else {
            continue;
        };
        out.push((num, path));
    }
    Ok(out)
}

/// Walks the DHG tree. Missing trials or subjects are skipped silently.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let mut entries = Vec::new();
    for (gesture, gdir) in numbered_dirs(root, "gesture_")? {
        for (finger, fdir) in numbered_dirs(&gdir, "finger_")? {
            for (subject, sdir) in numbered_dirs(&fdir, "subject_")? {
                for (trial, tdir) in numbered_dirs(&sdir, "essai_")? {
                    let path = tdir.join(SKELETON_FILE);
                    if path.is_file() {
                        entries.push(DatasetEntry {
                            gesture,
                            finger,
                            subject,
                            trial,
                            path,
                        });
                    }
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(DatasetError::EmptyDataset(root.to_path_buf()));
    }
    DatasetIndex::new(entries)
}

/// Parses skeleton text: one frame per non-blank line.
pub fn parse_skeleton_text(
    text: &str,
    joints: usize,
    path: &Path,
) -> Result<Vec<HandSkeleton>, DatasetError> {
    let expected = 3 * joints;
    let mut frames = Vec::new();
    let mut values = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        values.clear();
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| DatasetError::ParseError {
                path: path.to_path_buf(),
                line: i + 1,
                token: token.to_string(),
            })?;
            values.push(v);
        }
        if values.len() != expected {
            return Err(DatasetError::WrongJointCount {
                path: path.to_path_buf(),
                line: i + 1,
                found: values.len(),
                expected,
                joints,
            });
        }
        frames.push(HandSkeleton::from_flat(&values));
    }
    if frames.is_empty() {
        return Err(DatasetError::EmptyFile(path.to_path_buf()));
    }
    Ok(frames)
}

pub fn load_sequence(entry: &DatasetEntry, joints: usize) -> Result<SkeletonSequence, DatasetError> {
    let text = fs::read_to_string(&entry.path).map_err(io_err(&entry.path))?;
    let frames = parse_skeleton_text(&text, joints, &entry.path)?;
    Ok(SkeletonSequence::new(frames, entry.meta()))
}

/// Writes one sequence in the skeleton text format (9 significant digits).
pub fn format_skeleton_text(seq: &SkeletonSequence) -> String {
    let mut out = String::new();
    for frame in &seq.frames {
        let line: Vec<String> = frame
            .positions
            .iter()
            .flat_map(|p| [p.x, p.y, p.z])
            .map(|v| format!("{v:.8e}"))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// One fold of leave-one-subject-out cross-validation. Entry lists hold
/// positions into the source collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoocvSplit {
    pub held_out_subject: u32,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split per subject `1..=max(subject)`; every subject in that range must
/// have at least one item.
pub fn loocv_splits_by_subject(subjects: &[u32]) -> Result<Vec<LoocvSplit>, DatasetError> {
    let present: BTreeSet<u32> = subjects.iter().copied().collect();
    let max = present.iter().next_back().copied().unwrap_or(0);
    if let Some(missing) = (1..=max).find(|s| !present.contains(s)) {
        return Err(DatasetError::MissingSubject(missing));
    }
    Ok((1..=max)
        .map(|held_out| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..subjects.len()).partition(|&i| subjects[i] == held_out);
            LoocvSplit {
                held_out_subject: held_out,
                train,
                test,
            }
        })
        .collect())
}

pub fn make_loocv_splits(index: &DatasetIndex) -> Result<Vec<LoocvSplit>, DatasetError> {
    let subjects: Vec<u32> = index.entries().iter().map(|e| e.subject).collect();
    if subjects.is_empty() {
        return Err(DatasetError::MissingSubject(1));
    }
    loocv_splits_by_subject(&subjects)
}
