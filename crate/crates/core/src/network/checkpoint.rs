//! Checkpoint format: UTF-8 header lines terminated by `end_header`, then a
//! little-endian `f64` payload holding the parameters (in layout order)
//! followed by, for each branch with statistics, its means then its standard
//! deviations.
//!
//! ```text
//! gesture-checkpoint 1
//! seed 7
//! classes 14
//! bidirectional true
//! head_hidden 256 128
//! head_dropout 0.3
//! branch global 30 100 2 128 0.3 standardized
//! branch finger 100 100 2 128 0.3 standardized
//! branch skeleton 66 100 2 128 0.3 raw
//! params 1234567
//! end_header
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::model::{BranchConfig, NetworkConfig, NetworkModel, Standardizer};
use super::NetworkError;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "gesture-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: NetworkModel,
    pub seed: u64,
}

pub fn write_checkpoint(w: &mut impl Write, ckpt: &Checkpoint) -> Result<(), NetworkError> {
    let cfg = ckpt.model.config();
    let mut header = format!("{MAGIC} {FORMAT_VERSION}\nseed {}\nclasses {}\n", ckpt.seed, cfg.classes);
    header += &format!("bidirectional {}\n", cfg.bidirectional);
    let widths: Vec<String> = cfg.head_hidden.iter().map(usize::to_string).collect();
    header += &format!("head_hidden {}\n", widths.join(" "));
    header += &format!("head_dropout {:?}\n", cfg.head_dropout);
    for (b, norm) in cfg.branches.iter().zip(ckpt.model.normalization()) {
        header += &format!(
            "branch {} {} {} {} {} {:?} {}\n",
            b.kind,
            b.input_dim,
            b.lstm_hidden,
            b.lstm_layers,
            b.fc_out,
            b.dropout_rate,
            if norm.is_some() { "standardized" } else { "raw" }
        );
    }
    header += &format!("params {}\nend_header\n", ckpt.model.param_count());
    w.write_all(header.as_bytes())?;
    let mut payload = Vec::with_capacity(8 * ckpt.model.param_count());
    let stats = ckpt.model.normalization().iter().flatten();
    let values = ckpt
        .model
        .params()
        .iter()
        .chain(stats.flat_map(|s| s.mean.iter().chain(&s.std)));
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> NetworkError {
    NetworkError::Checkpoint(msg.into())
}

fn parse<T: std::str::FromStr>(field: &str, token: Option<&str>) -> Result<T, NetworkError> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(format!("invalid or missing value for '{field}'")))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, NetworkError> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)
        .map_err(|_| bad("payload shorter than the header declares"))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_checkpoint(r: impl Read) -> Result<Checkpoint, NetworkError> {
    let mut r = BufReader::new(r);
    let mut seed = None;
    let mut classes = None;
    let mut bidirectional = None;
    let mut head_hidden = None;
    let mut head_dropout = None;
    let mut branches = Vec::new();
    let mut standardized = Vec::new();
    let mut params = None;
    let mut first = true;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("missing end_header"));
        }
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap_or("");
        if first {
            if key != MAGIC {
                return Err(bad("not a checkpoint file"));
            }
            let version: u32 = parse("version", tok.next())?;
            if version != FORMAT_VERSION {
                return Err(bad(format!("unsupported format version {version}")));
            }
            first = false;
            continue;
        }
        match key {
            "end_header" => break,
            "seed" => seed = Some(parse::<u64>(key, tok.next())?),
            "classes" => classes = Some(parse::<usize>(key, tok.next())?),
            "bidirectional" => bidirectional = Some(parse::<bool>(key, tok.next())?),
            "head_hidden" => {
                head_hidden = Some(tok.map(|t| parse::<usize>(key, Some(t))).collect::<Result<Vec<_>, _>>()?)
            }
            "head_dropout" => head_dropout = Some(parse::<f64>(key, tok.next())?),
            "branch" => {
                let kind = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("invalid branch kind"))?;
                branches.push(BranchConfig {
                    kind,
                    input_dim: parse("branch input_dim", tok.next())?,
                    lstm_hidden: parse("branch lstm_hidden", tok.next())?,
                    lstm_layers: parse("branch lstm_layers", tok.next())?,
                    fc_out: parse("branch fc_out", tok.next())?,
                    dropout_rate: parse("branch dropout", tok.next())?,
                });
                standardized.push(match tok.next() {
                    Some("standardized") => true,
                    Some("raw") => false,
                    _ => return Err(bad("branch normalization must be 'standardized' or 'raw'")),
                });
            }
            "params" => params = Some(parse::<usize>(key, tok.next())?),
            "" => {}
            other => return Err(bad(format!("unknown header key '{other}'"))),
        }
    }
    let missing = |k: &str| bad(format!("header lacks '{k}'"));
    let config = NetworkConfig {
        branches,
        head_hidden: head_hidden.ok_or_else(|| missing("head_hidden"))?,
        classes: classes.ok_or_else(|| missing("classes"))?,
        bidirectional: bidirectional.ok_or_else(|| missing("bidirectional"))?,
        head_dropout: head_dropout.ok_or_else(|| missing("head_dropout"))?,
    };
    let mut model = NetworkModel::zeros(config.clone())?;
    let declared = params.ok_or_else(|| missing("params"))?;
    if declared != model.param_count() {
        return Err(bad(format!(
            "header declares {declared} parameters, architecture needs {}",
            model.param_count()
        )));
    }
    let values = read_f64s(&mut r, declared)?;
    model.params_mut().copy_from_slice(&values);
    let mut norm = Vec::with_capacity(standardized.len());
    for (b, &s) in config.branches.iter().zip(&standardized) {
        norm.push(if s {
            Some(Standardizer {
                mean: read_f64s(&mut r, b.input_dim)?,
                std: read_f64s(&mut r, b.input_dim)?,
            })
        } else {
            None
        });
    }
    model.set_normalization(norm)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(Checkpoint {
        model,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NetworkError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NetworkError> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    fn model() -> NetworkModel {
        let mut cfg = NetworkConfig::new(&[(FeatureKind::Global, 3), (FeatureKind::Skeleton, 2)], 4);
        for b in &mut cfg.branches {
            b.lstm_hidden = 2;
            b.fc_out = 3;
        }
        cfg.head_hidden = vec![5, 4];
        cfg.head_dropout = 0.1;
        let mut m = NetworkModel::new(cfg, 3).unwrap();
        m.params_mut()[0] = f64::from_bits(0x3ff0_0000_0000_0001);
        m.set_normalization(vec![
            Some(Standardizer {
                mean: vec![0.1, -2.0, 1e-300],
                std: vec![1.0, 0.5, 3.0],
            }),
            None,
        ])
        .unwrap();
        m
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ckpt = Checkpoint { model: model(), seed: 42 };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ckpt).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.model.config(), ckpt.model.config());
        assert_eq!(back.model.checksum(), ckpt.model.checksum());
        assert_eq!(back.model.normalization(), ckpt.model.normalization());
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = Checkpoint { model: model(), seed: 1 };
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn truncated_and_garbage_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Checkpoint { model: model(), seed: 0 }).unwrap();
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(NetworkError::Checkpoint(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra[..]), Err(NetworkError::Checkpoint(_))));
        assert!(matches!(read_checkpoint(&b"hello\n"[..]), Err(NetworkError::Checkpoint(_))));
    }
}
