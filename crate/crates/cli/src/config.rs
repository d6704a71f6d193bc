//! `key = value` pipeline configuration files.
//!
//! ```text
//! # network
//! lstm_hidden = 100
//! head_hidden = 256, 128
//! dropout = 0.3
//! # features
//! bins = 5
//! lags = 1, 5, 10
//! euler = xyz
//! ```

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use gesture_core::evaluation::{GestureCategoryMap, PipelineConfig};

pub const KEYS: &[(&str, &str)] = &[
    ("lstm_hidden", "LSTM units per direction"),
    ("lstm_layers", "stacked LSTM layers per branch"),
    ("fc_out", "width of each branch's FC layer"),
    ("dropout", "dropout rate inside the branches"),
    ("head_hidden", "comma-separated widths of the hidden head layers"),
    ("head_dropout", "dropout rate in the head"),
    ("bidirectional", "true or false"),
    ("standardize_skeleton", "z-score the skeleton stream too (true or false)"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam epsilon"),
    ("batch", "minibatch size"),
    ("epochs", "training epochs"),
    ("clip", "global gradient-norm clip, 0 disables"),
    ("target_train_accuracy", "stop early once training accuracy reaches this, 'none' disables"),
    ("bins", "number of distance bins M"),
    ("sigma_scale", "Gaussian width as a multiple of the palm radius"),
    ("lags", "comma-separated dynamic-pose frame lags"),
    ("euler", "xyz or zyx"),
    ("translation_origin", "first_frame or camera"),
    ("fine_gestures", "comma-separated gesture ids counted as fine"),
    ("method", "full, motion or skeleton"),
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| anyhow!("invalid value '{raw}' for {key}: {e}"))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

pub fn apply(config: &mut PipelineConfig, key: &str, raw: &str) -> Result<()> {
    let arch = &mut config.architecture;
    let train = &mut config.train;
    let global = &mut config.extractor.global;
    match key {
        "lstm_hidden" => arch.lstm_hidden = value(key, raw)?,
        "lstm_layers" => arch.lstm_layers = value(key, raw)?,
        "fc_out" => arch.fc_out = value(key, raw)?,
        "dropout" => arch.dropout = value(key, raw)?,
        "head_hidden" => arch.head_hidden = list(key, raw)?,
        "head_dropout" => arch.head_dropout = value(key, raw)?,
        "bidirectional" => arch.bidirectional = value(key, raw)?,
        "standardize_skeleton" => arch.standardize_skeleton = value(key, raw)?,
        "lr" => train.adam.lr = value(key, raw)?,
        "beta1" => train.adam.beta1 = value(key, raw)?,
        "beta2" => train.adam.beta2 = value(key, raw)?,
        "epsilon" => train.adam.epsilon = value(key, raw)?,
        "batch" => train.batch = value(key, raw)?,
        "epochs" => train.epochs = value(key, raw)?,
        "clip" => train.clip = value(key, raw)?,
        "target_train_accuracy" => {
            train.target_train_accuracy = match raw {
                "none" => None,
                v => Some(value(key, v)?),
            }
        }
        "bins" => global.bins = value(key, raw)?,
        "sigma_scale" => global.sigma_scale = value(key, raw)?,
        "lags" => global.lags = list(key, raw)?,
        "euler" => global.euler = value(key, raw)?,
        "translation_origin" => global.translation_origin = value(key, raw)?,
        "fine_gestures" => config.categories = GestureCategoryMap::new(list::<u32>(key, raw)?)?,
        "method" => config.method = value(key, raw)?,
        other => bail!("unknown configuration key '{other}'"),
    }
    Ok(())
}

pub fn parse(text: &str, config: &mut PipelineConfig) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
        apply(config, key.trim(), val.trim()).with_context(|| format!("line {}", i + 1))?;
    }
    if config.extractor.global.bins == 0 {
        bail!("bins must be at least 1");
    }
    if config.extractor.global.lags.iter().any(|&l| l == 0) {
        bail!("lags must be positive");
    }
    if !(config.extractor.global.sigma_scale > 0.0) {
        bail!("sigma_scale must be positive");
    }
    if config.train.batch == 0 {
        bail!("batch must be at least 1");
    }
    Ok(())
}

pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
        parse(&text, &mut config).with_context(|| format!("config {}", p.display()))?;
    }
    Ok(config)
}

/// Every key with its default value, as a commented config file.
pub fn defaults_text() -> String {
    let c = PipelineConfig::default();
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    let fine: Vec<u32> = c.categories.fine().iter().copied().collect();
    let values = [
        c.architecture.lstm_hidden.to_string(),
        c.architecture.lstm_layers.to_string(),
        c.architecture.fc_out.to_string(),
        c.architecture.dropout.to_string(),
        join(&c.architecture.head_hidden),
        c.architecture.head_dropout.to_string(),
        c.architecture.bidirectional.to_string(),
        c.architecture.standardize_skeleton.to_string(),
        c.train.adam.lr.to_string(),
        c.train.adam.beta1.to_string(),
        c.train.adam.beta2.to_string(),
        c.train.adam.epsilon.to_string(),
        c.train.batch.to_string(),
        c.train.epochs.to_string(),
        c.train.clip.to_string(),
        c.train.target_train_accuracy.map_or("none".into(), |v| v.to_string()),
        c.extractor.global.bins.to_string(),
        c.extractor.global.sigma_scale.to_string(),
        join(&c.extractor.global.lags),
        c.extractor.global.euler.to_string(),
        "first_frame".into(),
        fine.iter().map(u32::to_string).collect::<Vec<_>>().join(", "),
        c.method.to_string(),
    ];
    KEYS.iter()
        .zip(values)
        .map(|((k, help), v)| format!("# {help}\n{k} = {v}\n"))
        .collect()
}
