//! Per-sequence feature files: a text header ending in `end_header`, then the
//! `frames × dims` values as little-endian `f64`, frame-major.
//!
//! ```text
//! gesture-features 1
//! kind global
//! subject 3
//! gesture 5
//! finger 1
//! trial 2
//! dims 30
//! frames 41
//! end_header
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gesture_core::features::{FeatureKind, SequenceFeatures};
use gesture_core::skeleton::SequenceMeta;
use gesture_core::tensor::Tensor2;

const MAGIC: &str = "gesture-features";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub meta: SequenceMeta,
    pub kind: FeatureKind,
    pub values: Tensor2,
}

impl FeatureFile {
    pub fn file_name(&self) -> String {
        let m = &self.meta;
        format!("g{:02}_f{}_s{:02}_t{:02}.feat", m.gesture, m.finger, m.subject, m.trial)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.meta;
        let mut out = format!(
            "{MAGIC} {VERSION}\nkind {}\nsubject {}\ngesture {}\nfinger {}\ntrial {}\ndims {}\nframes {}\nend_header\n",
            self.kind,
            m.subject,
            m.gesture,
            m.finger,
            m.trial,
            self.values.cols(),
            self.values.rows()
        )
        .into_bytes();
        for v in self.values.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        let mut line = String::new();
        r.read_line(&mut line)?;
        match line.split_whitespace().collect::<Vec<_>>()[..] {
            [MAGIC, v] if v == VERSION.to_string() => {}
            _ => bail!("not a feature file (bad first line)"),
        }
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                bail!("missing end_header");
            }
            let l = line.trim();
            if l == "end_header" {
                break;
            }
            let (k, v) = l.split_once(' ').ok_or_else(|| anyhow!("malformed header line '{l}'"))?;
            fields.insert(k.to_string(), v.trim().to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| anyhow!("header lacks '{k}'"));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| anyhow!("bad '{k}' value")) };
        let kind: FeatureKind = get("kind")?.parse().map_err(|e: String| anyhow!(e))?;
        let meta = SequenceMeta {
            subject: num("subject")? as u32,
            gesture: num("gesture")? as u32,
            finger: num("finger")? as u32,
            trial: num("trial")? as u32,
        };
        let (dims, frames) = (num("dims")? as usize, num("frames")? as usize);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * dims * frames {
            bail!("payload has {} bytes, header implies {}", bytes.len(), 8 * dims * frames);
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            meta,
            kind,
            values: Tensor2::from_vec(frames, dims, data),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Self::read(f).with_context(|| format!("reading {}", path.display()))
    }
}

pub fn kind_dir(root: &Path, kind: FeatureKind) -> PathBuf {
    root.join(kind.name())
}

fn meta_key(m: &SequenceMeta) -> (u32, u32, u32, u32) {
    (m.gesture, m.finger, m.subject, m.trial)
}

/// Loads `<root>/<kind>/*.feat` for each kind and joins them per sequence.
/// Every sequence must be present in every requested kind.
pub fn load_feature_set(root: &Path, kinds: &[FeatureKind]) -> Result<Vec<SequenceFeatures>> {
    let mut per_kind: Vec<BTreeMap<(u32, u32, u32, u32), FeatureFile>> = Vec::new();
    for &kind in kinds {
        let dir = kind_dir(root, kind);
        if !dir.is_dir() {
            bail!("missing {kind} branch: directory {} not found", dir.display());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "feat"));
        paths.sort();
        let mut map = BTreeMap::new();
        for p in paths {
            let f = FeatureFile::load(&p)?;
            if f.kind != kind {
                bail!("{} holds {} features, expected {kind}", p.display(), f.kind);
            }
            if map.insert(meta_key(&f.meta), f).is_some() {
                bail!("duplicate sequence in {}", dir.display());
            }
        }
        if map.is_empty() {
            bail!("missing {kind} branch: no feature files in {}", dir.display());
        }
        per_kind.push(map);
    }
    let keys: Vec<_> = per_kind[0].keys().copied().collect();
    for (k, map) in kinds.iter().zip(&per_kind) {
        if map.len() != keys.len() || keys.iter().any(|key| !map.contains_key(key)) {
            bail!("{k} features do not cover the same sequences as {}", kinds[0]);
        }
    }
    let mut dims: BTreeMap<FeatureKind, usize> = BTreeMap::new();
    keys.iter()
        .map(|key| {
            let files: Vec<&FeatureFile> = per_kind.iter().map(|m| &m[key]).collect();
            let meta = files[0].meta;
            let frames = files[0].values.rows();
            let mut stream = |kind: FeatureKind| -> Result<Tensor2> {
                let Some(pos) = kinds.iter().position(|&k| k == kind) else {
                    return Ok(Tensor2::zeros(frames, 0));
                };
                let f = files[pos];
                if f.values.rows() != frames {
                    bail!("sequence {key:?}: {} has {} frames, expected {frames}", kind, f.values.rows());
                }
                let d = *dims.entry(kind).or_insert(f.values.cols());
                if d != f.values.cols() {
                    bail!("sequence {key:?}: {kind} has {} dims, other files have {d}", f.values.cols());
                }
                Ok(f.values.clone())
            };
            Ok(SequenceFeatures {
                meta,
                global: stream(FeatureKind::Global)?,
                finger: stream(FeatureKind::Finger)?,
                skeleton: stream(FeatureKind::Skeleton)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(kind: FeatureKind, subject: u32, frames: usize, dims: usize) -> FeatureFile {
        FeatureFile {
            meta: SequenceMeta {
                subject,
                gesture: 2,
                finger: 1,
                trial: 3,
            },
            kind,
            values: Tensor2::from_vec(frames, dims, (0..frames * dims).map(|k| k as f64 * 0.1 - 1.0).collect()),
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let f = file(FeatureKind::Global, 4, 5, 3);
        assert_eq!(FeatureFile::read(&f.to_bytes()[..]).unwrap(), f);
        let mut bad = f.to_bytes();
        bad.pop();
        assert!(FeatureFile::read(&bad[..]).is_err());
    }

    #[test]
    fn feature_set_requires_every_branch() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [FeatureKind::Global, FeatureKind::Finger] {
            let d = kind_dir(dir.path(), kind);
            std::fs::create_dir_all(&d).unwrap();
            let f = file(kind, 1, 4, 2);
            std::fs::write(d.join(f.file_name()), f.to_bytes()).unwrap();
        }
        let set = load_feature_set(dir.path(), &[FeatureKind::Global, FeatureKind::Finger]).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].global.shape(), (4, 2));
        let err = load_feature_set(dir.path(), &FeatureKind::ALL).unwrap_err();
        assert!(err.to_string().contains("missing skeleton branch"), "{err}");
    }
}
