//! Single-file model checkpoints.
//!
//! A text header (magic line, `key=value` lines) is terminated by a line
//! `---`; the parameter vector follows as little-endian `f64` values in the
//! [`ModelParams`] layout.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{ClassWeights, InitScheme, ModelConfig, ModelMode, ModelParams, TrainedModel};
use crate::corpus::GroupScheme;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "MAML1";
const END_OF_HEADER: &str = "---";

fn check_name(name: &str) -> Result<&str> {
    if name.contains(['\n', '\r', '\t']) {
        return Err(Error::input(format!("name `{name:?}` cannot be stored in a checkpoint")));
    }
    Ok(name)
}

pub fn write_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let cfg = &model.config;
    let p = &model.params;
    let mut header = String::new();
    let mut line = |s: String| {
        header.push_str(&s);
        header.push('\n');
    };
    line(CHECKPOINT_MAGIC.to_string());
    line(format!("dim={}", cfg.dim));
    line(format!("mode={}", cfg.mode.as_str()));
    line(format!("init={}", cfg.init.as_str()));
    line(format!("learning_rate={}", cfg.learning_rate));
    line(format!("epochs={}", cfg.epochs));
    line(format!("batch_size={}", cfg.batch_size));
    line(format!("seed={}", cfg.seed));
    if let Some(scheme) = &cfg.group_scheme {
        line(format!("attribute={}", check_name(scheme.attribute())?));
        for g in scheme.groups() {
            line(format!("group={}", check_name(g)?));
        }
        for (a, g) in scheme.assignment() {
            line(format!("assign={}\t{g}", check_name(a)?));
        }
    }
    line(format!("n_groups={}", p.n_groups()));
    for (i, a) in p.annotators().iter().enumerate() {
        let w = model
            .class_weights
            .get(a)
            .ok_or_else(|| Error::input(format!("no class weights for `{a}`")))?;
        let g = p.head_group(i).map_or("-".to_string(), |g| g.to_string());
        line(format!("head={}\t{g}\t{}\t{}", check_name(a)?, w[0], w[1]));
    }
    let trace: Vec<String> = model.loss_trace.iter().map(f64::to_string).collect();
    line(format!("loss_trace={}", trace.join(",")));
    line(format!("params={}", p.values().len()));
    line(END_OF_HEADER.to_string());

    let mut bytes = header.into_bytes();
    bytes.reserve(p.values().len() * 8);
    for v in p.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::data(format!("checkpoint: bad value `{v}` for `{key}`")))
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedModel> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = BufReader::new(f);
    let mut lines = Vec::new();
    loop {
        let mut s = String::new();
        let n = rdr.read_line(&mut s).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::data("checkpoint: header not terminated"));
        }
        let s = s.trim_end_matches('\n').to_string();
        if s == END_OF_HEADER {
            break;
        }
        lines.push(s);
    }
    if lines.first().map(String::as_str) != Some(CHECKPOINT_MAGIC) {
        return Err(Error::data(format!("{}: not a {CHECKPOINT_MAGIC} checkpoint", path.display())));
    }

    let mut scalars: BTreeMap<String, String> = BTreeMap::new();
    let mut groups = Vec::new();
    let mut assignment = BTreeMap::new();
    let mut heads = Vec::new();
    for l in &lines[1..] {
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::data(format!("checkpoint: malformed line `{l}`")))?;
        match k {
            "group" => groups.push(v.to_string()),
            "assign" => {
                let (a, g) = v
                    .split_once('\t')
                    .ok_or_else(|| Error::data("checkpoint: malformed assign line"))?;
                assignment.insert(a.to_string(), parse::<usize>(k, g)?);
            }
            "head" => {
                let parts: Vec<&str> = v.split('\t').collect();
                if parts.len() != 4 {
                    return Err(Error::data("checkpoint: malformed head line"));
                }
                let g = match parts[1] {
                    "-" => None,
                    s => Some(parse::<usize>(k, s)?),
                };
                heads.push((
                    parts[0].to_string(),
                    g,
                    [parse::<f64>(k, parts[2])?, parse::<f64>(k, parts[3])?],
                ));
            }
            _ => {
                scalars.insert(k.to_string(), v.to_string());
            }
        }
    }
    let get = |k: &str| {
        scalars
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::data(format!("checkpoint: missing `{k}`")))
    };
    let group_scheme = match scalars.get("attribute") {
        Some(attr) => Some(GroupScheme::new(attr.clone(), groups, assignment)?),
        None => None,
    };
    let config = ModelConfig {
        dim: parse("dim", get("dim")?)?,
        mode: get("mode")?.parse::<ModelMode>()?,
        group_scheme,
        init: get("init")?.parse::<InitScheme>()?,
        learning_rate: parse("learning_rate", get("learning_rate")?)?,
        epochs: parse("epochs", get("epochs")?)?,
        batch_size: parse("batch_size", get("batch_size")?)?,
        seed: parse("seed", get("seed")?)?,
    };
    let n_groups: usize = parse("n_groups", get("n_groups")?)?;
    let loss_trace = match get("loss_trace")? {
        "" => Vec::new(),
        s => s.split(',').map(|v| parse("loss_trace", v)).collect::<Result<Vec<f64>>>()?,
    };
    let n_params: usize = parse("params", get("params")?)?;

    let annotators: Vec<String> = heads.iter().map(|h| h.0.clone()).collect();
    let head_group: Vec<usize> = heads.iter().filter_map(|h| h.1).collect();
    let mut params = ModelParams::zeros(config.dim, n_groups, annotators, head_group)?;
    if params.values().len() != n_params {
        return Err(Error::data("checkpoint: parameter count does not match the header"));
    }
    let mut raw = Vec::new();
    rdr.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() != n_params * 8 {
        return Err(Error::data(format!(
            "checkpoint: expected {} parameter bytes, found {}",
            n_params * 8,
            raw.len()
        )));
    }
    for (v, chunk) in params.values_mut().iter_mut().zip(raw.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    let class_weights = ClassWeights::from_map(heads.into_iter().map(|(a, _, w)| (a, w)).collect());
    Ok(TrainedModel {
        config,
        params,
        class_weights,
        loss_trace,
    })
}
