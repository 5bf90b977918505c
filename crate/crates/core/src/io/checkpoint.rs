//! Training checkpoints: `GICK`, `u32` version, `u64` header length, JSON header,
//! then the named `f32` records back to back in header order.

use super::{read_file, write_atomic};
use crate::autodiff::AdamState;
use crate::error::{Error, Result};
use crate::models::{DiscriminatorConfig, GeneratorConfig, ParamSet};
use crate::train::{Snapshot, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"GICK";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    epoch: u32,
    step: u64,
    stale_epochs: u32,
    best: Option<BestMeta>,
    g_adam_t: Vec<u64>,
    d_adam_t: Vec<u64>,
    records: Vec<Record>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BestMeta {
    epoch: u32,
    val_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    name: String,
    dims: Vec<usize>,
}

/// `(record name, data)` in file order.
fn records(state: &TrainState) -> Vec<(String, Vec<usize>, &[f32])> {
    let mut out = Vec::new();
    fn push_set<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f32])>, prefix: &str, s: &'a ParamSet<f32>) {
        for p in s.iter() {
            out.push((format!("{prefix}.{}", p.name), p.dims.to_vec(), &p.data[..]));
        }
    }
    fn push_adam<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f32])>, prefix: &str, s: &'a ParamSet<f32>, st: &'a [AdamState<f32>]) {
        for (p, a) in s.iter().zip(st) {
            out.push((format!("{prefix}.m.{}", p.name), p.dims.to_vec(), &a.m[..]));
            out.push((format!("{prefix}.v.{}", p.name), p.dims.to_vec(), &a.v[..]));
        }
    }
    push_set(&mut out, "g.param", &state.generator.params);
    push_set(&mut out, "g.buffer", &state.generator.buffers);
    push_adam(&mut out, "g.adam", &state.generator.params, &state.g_adam);
    push_set(&mut out, "d.param", &state.discriminator.params);
    push_set(&mut out, "d.buffer", &state.discriminator.buffers);
    push_adam(&mut out, "d.adam", &state.discriminator.params, &state.d_adam);
    if let Some(b) = &state.best {
        push_set(&mut out, "best.param", &b.params);
        push_set(&mut out, "best.buffer", &b.buffers);
    }
    out
}

pub fn checkpoint_bytes(state: &TrainState) -> Vec<u8> {
    let recs = records(state);
    let header = Header {
        config: state.config.clone(),
        epoch: state.epoch,
        step: state.step,
        stale_epochs: state.stale_epochs,
        best: state.best.as_ref().map(|b| BestMeta {
            epoch: b.epoch,
            val_l1: b.val_l1,
        }),
        g_adam_t: state.g_adam.iter().map(|a| a.t).collect(),
        d_adam_t: state.d_adam.iter().map(|a| a.t).collect(),
        records: recs.iter().map(|(n, d, _)| Record { name: n.clone(), dims: d.clone() }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in recs {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(state))
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.get(0..4) != Some(MAGIC.as_slice()) {
        return Err(Error::format(path, 0, "bad magic (expected GICK)"));
    }
    let version = bytes
        .get(4..8)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, 4, "truncated header"))?;
    if version != VERSION {
        return Err(Error::format(path, 4, format!("unsupported checkpoint version {version}")));
    }
    let len = bytes
        .get(8..16)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
        .ok_or_else(|| Error::format(path, 8, "truncated header"))?;
    let json = bytes.get(16..16 + len).ok_or_else(|| Error::format(path, 16, "truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::format(path, 16, e.to_string()))?;
    Ok((header, 16 + len))
}

/// First differing leaf between two JSON values, as a dotted path; `seed` fields are ignored.
fn first_difference(prefix: &str, expected: &Value, found: &Value) -> Option<(String, String, String)> {
    match (expected, found) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, va) in a {
                if k == "seed" {
                    continue;
                }
                let path = format!("{prefix}.{k}");
                match b.get(k) {
                    Some(vb) => {
                        if let Some(d) = first_difference(&path, va, vb) {
                            return Some(d);
                        }
                    }
                    None => return Some((path, va.to_string(), "nothing".into())),
                }
            }
            None
        }
        (a, b) if a != b => Some((prefix.to_string(), a.to_string(), b.to_string())),
        _ => None,
    }
}

/// Architecture check of a checkpoint against the networks a caller intends to use.
pub fn check_architecture(path: &Path, generator: &GeneratorConfig, discriminator: &DiscriminatorConfig) -> Result<()> {
    let bytes = read_file(path)?;
    let (header, _) = parse_header(path, &bytes)?;
    let pairs = [
        (
            "generator",
            serde_json::to_value(generator).expect("config serializes"),
            serde_json::to_value(&header.config.generator).expect("config serializes"),
        ),
        (
            "discriminator",
            serde_json::to_value(discriminator).expect("config serializes"),
            serde_json::to_value(&header.config.discriminator).expect("config serializes"),
        ),
    ];
    for (name, want, have) in pairs {
        if let Some((field, expected, found)) = first_difference(name, &want, &have) {
            return Err(Error::CheckpointMismatch { field, expected, found });
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = read_file(path)?;
    let (header, mut offset) = parse_header(path, &bytes)?;
    let mut state = TrainState::new(header.config.clone())?;
    state.epoch = header.epoch;
    state.step = header.step;
    state.stale_epochs = header.stale_epochs;
    if header.g_adam_t.len() != state.g_adam.len() || header.d_adam_t.len() != state.d_adam.len() {
        return Err(Error::format(path, 16, "optimizer state count does not match the architecture"));
    }
    for (a, &t) in state.g_adam.iter_mut().zip(&header.g_adam_t) {
        a.t = t;
    }
    for (a, &t) in state.d_adam.iter_mut().zip(&header.d_adam_t) {
        a.t = t;
    }
    if let Some(b) = &header.best {
        state.best = Some(Snapshot {
            epoch: b.epoch,
            val_l1: b.val_l1,
            params: state.generator.params.clone(),
            buffers: state.generator.buffers.clone(),
        });
    }
    let expected: Vec<Record> = records(&state)
        .into_iter()
        .map(|(name, dims, _)| Record { name, dims })
        .collect();
    if expected != header.records {
        let bad = expected
            .iter()
            .zip(&header.records)
            .find(|(a, b)| a != b)
            .map(|(a, _)| a.name.clone())
            .or_else(|| expected.get(header.records.len()).map(|r| r.name.clone()))
            .unwrap_or_else(|| "extra records".into());
        return Err(Error::format(path, 16, format!("missing or malformed parameter record `{bad}`")));
    }
    let mut payload: Vec<Vec<f32>> = Vec::with_capacity(expected.len());
    for r in &expected {
        let n: usize = r.dims.iter().product();
        let chunk = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| Error::format(path, offset as u64, format!("record `{}` truncated", r.name)))?;
        payload.push(chunk.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect());
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(Error::format(path, offset as u64, "trailing bytes after last record"));
    }
    let mut it = payload.into_iter();
    let fill_set = |s: &mut ParamSet<f32>, it: &mut std::vec::IntoIter<Vec<f32>>| {
        for p in s.iter_mut() {
            p.data = it.next().expect("record count checked");
        }
    };
    fill_set(&mut state.generator.params, &mut it);
    fill_set(&mut state.generator.buffers, &mut it);
    for a in state.g_adam.iter_mut() {
        a.m = it.next().expect("record count checked");
        a.v = it.next().expect("record count checked");
    }
    fill_set(&mut state.discriminator.params, &mut it);
    fill_set(&mut state.discriminator.buffers, &mut it);
    for a in state.d_adam.iter_mut() {
        a.m = it.next().expect("record count checked");
        a.v = it.next().expect("record count checked");
    }
    if let Some(b) = state.best.as_mut() {
        fill_set(&mut b.params, &mut it);
        fill_set(&mut b.buffers, &mut it);
    }
    Ok(state)
}

/// [`load_checkpoint`] after verifying the stored architecture matches.
pub fn load_checkpoint_matching(path: &Path, generator: &GeneratorConfig, discriminator: &DiscriminatorConfig) -> Result<TrainState> {
    check_architecture(path, generator, discriminator)?;
    load_checkpoint(path)
}
