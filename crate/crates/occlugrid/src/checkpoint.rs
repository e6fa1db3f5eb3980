//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "OCLG"  magic
//! u32     format version (currently 1)
//! u8      model kind
//! [u8;32] training fingerprint (sha-256, see config::train_fingerprint)
//! u32+... run config JSON (length-prefixed)
//! u64     epochs completed
//! f64     best eval overall accuracy so far (NaN before any eval)
//! u64     parameter rng seed
//! u64     adam step counter
//! u64     parameter count, then per parameter:
//!   u32+...  name
//!   u64 u64  rows, cols
//!   f64*     values, then adam first and second moments
//! ```
//!
//! Values are raw f64 bits, so a save/load cycle is exact and resumed
//! runs continue on the same trajectory.

use std::path::Path;

use occlugrid_core::optim::AdamState;
use occlugrid_core::params::{Init, ModelParams};
use occlugrid_core::tensor::Tensor2;

use crate::config::{train_fingerprint, ModelKind, RunConfig};
use crate::errors::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"OCLG";
const VERSION: u32 = 1;

/// A loaded checkpoint; saving works from borrowed parts instead.
pub struct Checkpoint {
    pub model: ModelKind,
    pub fingerprint: [u8; 32],
    pub config: RunConfig,
    pub epoch: u64,
    /// NaN until the first evaluation produced an overall accuracy.
    pub best_acc: f64,
    pub params: ModelParams,
    pub adam: AdamState,
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(
    config: &RunConfig,
    epoch: u64,
    best_acc: f64,
    params: &ModelParams,
    adam: &AdamState,
) -> Vec<u8> {
    let config_json = serde_json::to_vec(config).expect("config serialization cannot fail");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    out.push(config.model.code());
    out.extend_from_slice(&train_fingerprint(config));
    push_u32(&mut out, config_json.len() as u32);
    out.extend_from_slice(&config_json);
    push_u64(&mut out, epoch);
    out.extend_from_slice(&best_acc.to_le_bytes());
    push_u64(&mut out, params.seed);
    push_u64(&mut out, adam.t);
    push_u64(&mut out, params.len() as u64);
    for i in 0..params.len() {
        let name = params.name(i);
        let t = params.tensor(i);
        push_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        push_u64(&mut out, t.rows as u64);
        push_u64(&mut out, t.cols as u64);
        push_f64s(&mut out, &t.data);
        push_f64s(&mut out, &adam.m[i].data);
        push_f64s(&mut out, &adam.v[i].data);
    }
    out
}

pub fn save(
    path: &Path,
    config: &RunConfig,
    epoch: u64,
    best_acc: f64,
    params: &ModelParams,
    adam: &AdamState,
) -> CliResult<()> {
    std::fs::write(path, encode(config, epoch, best_acc, params, adam))
        .map_err(CliError::io(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Checkpoint(format!(
                "{} is truncated at byte {}",
                self.path.display(),
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> CliResult<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load(path: &Path) -> CliResult<Checkpoint> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let mut c = Cursor { bytes: &bytes, pos: 0, path };

    if c.take(4)? != MAGIC {
        return Err(CliError::Checkpoint(format!(
            "{} is not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CliError::Checkpoint(format!(
            "{} uses unsupported format version {version}",
            path.display()
        )));
    }
    let model = ModelKind::from_code(c.u8()?).ok_or_else(|| {
        CliError::Checkpoint(format!("{} names an unknown model kind", path.display()))
    })?;
    let mut fingerprint = [0u8; 32];
    fingerprint.copy_from_slice(c.take(32)?);
    let config_len = c.u32()? as usize;
    let config: RunConfig = serde_json::from_slice(c.take(config_len)?).map_err(|e| {
        CliError::Checkpoint(format!("{} carries an unreadable config: {e}", path.display()))
    })?;
    let epoch = c.u64()?;
    let best_acc = c.f64()?;
    let params_seed = c.u64()?;
    let adam_t = c.u64()?;
    let n_params = c.u64()? as usize;

    let mut params = ModelParams::new(params_seed);
    let mut m = Vec::with_capacity(n_params);
    let mut v = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| {
                CliError::Checkpoint(format!("{} has a non-utf8 parameter name", path.display()))
            })?
            .to_string();
        let rows = c.u64()? as usize;
        let cols = c.u64()? as usize;
        let n = rows * cols;
        if params.index_of(&name).is_some() {
            return Err(CliError::Checkpoint(format!(
                "{} repeats parameter {name}",
                path.display()
            )));
        }
        let idx = params.register(&name, rows, cols, Init::Zero);
        params.tensor_mut(idx).data = c.f64s(n)?;
        let mut mt = Tensor2::zeros(rows, cols);
        mt.data = c.f64s(n)?;
        m.push(mt);
        let mut vt = Tensor2::zeros(rows, cols);
        vt.data = c.f64s(n)?;
        v.push(vt);
    }
    if c.pos != bytes.len() {
        return Err(CliError::Checkpoint(format!(
            "{} has {} trailing bytes",
            path.display(),
            bytes.len() - c.pos
        )));
    }

    Ok(Checkpoint {
        model,
        fingerprint,
        config,
        epoch,
        best_acc,
        params,
        adam: AdamState { m, v, t: adam_t },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use occlugrid_core::net::{NetConfig, VectorNet};

    fn small_config() -> RunConfig {
        let net = NetConfig {
            d_model: 16,
            heads: 2,
            enc_layers: 1,
            dec_blocks: 1,
            ..NetConfig::default()
        };
        RunConfig { net: net.into(), ..RunConfig::default() }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let cfg = small_config();
        let net = VectorNet::new(cfg.net.to_net()).unwrap();
        let params = net.init_params(7);
        let mut adam = AdamState::zeros_like(&params);
        adam.t = 42;
        adam.m[0].data[0] = -0.5;
        adam.v[1].data[2] = 3.25;

        let path = std::env::temp_dir().join(format!("occlugrid-ckpt-{}.bin", std::process::id()));
        save(&path, &cfg, 9, 0.8125, &params, &adam).unwrap();
        let back = load(&path).unwrap();
        std::fs::remove_file(&path).ok();

        assert_eq!(back.model, cfg.model);
        assert_eq!(back.fingerprint, crate::config::train_fingerprint(&cfg));
        assert_eq!(back.config, cfg);
        assert_eq!(back.epoch, 9);
        assert_eq!(back.best_acc, 0.8125);
        assert_eq!(back.params.seed, params.seed);
        assert_eq!(back.params.flatten(), params.flatten());
        assert_eq!(back.adam.t, 42);
        assert_eq!(back.adam.m[0].data, adam.m[0].data);
        assert_eq!(back.adam.v[1].data, adam.v[1].data);
        // Names and shapes survive too.
        for i in 0..params.len() {
            assert_eq!(back.params.name(i), params.name(i));
            assert_eq!(back.params.tensor(i).rows, params.tensor(i).rows);
        }
    }

    #[test]
    fn encoding_is_deterministic_with_nan_best_accuracy() {
        let cfg = small_config();
        let net = VectorNet::new(cfg.net.to_net()).unwrap();
        let params = net.init_params(0);
        let adam = AdamState::zeros_like(&params);
        let bytes = encode(&cfg, 0, f64::NAN, &params, &adam);
        let bytes2 = encode(&cfg, 0, f64::NAN, &params, &adam);
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn garbage_and_truncation_are_reported_as_checkpoint_errors() {
        let dir = std::env::temp_dir();
        let bad = dir.join(format!("occlugrid-bad-{}.bin", std::process::id()));
        std::fs::write(&bad, b"PNG!").unwrap();
        let err = load(&bad).err().expect("bad magic must not load").to_string();
        assert!(err.starts_with("E_CHECKPOINT") && err.contains("bad magic"), "{err}");

        let cfg = small_config();
        let net = VectorNet::new(cfg.net.to_net()).unwrap();
        let params = net.init_params(0);
        let adam = AdamState::zeros_like(&params);
        let full = encode(&cfg, 1, f64::NAN, &params, &adam);
        std::fs::write(&bad, &full[..full.len() - 3]).unwrap();
        let err = load(&bad).err().expect("truncated file must not load").to_string();
        std::fs::remove_file(&bad).ok();
        assert!(err.contains("truncated"), "{err}");
    }
}
