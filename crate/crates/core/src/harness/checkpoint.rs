//! Bit-exact model checkpoints.
//!
//! Layout: magic bytes `MASHV1\n`; a manifest — entry count, then per entry
//! the name length, UTF-8 name, rank, dims, and byte offset into the payload
//! region, all as 64-bit little-endian unsigned — followed by the raw
//! row-major 64-bit little-endian float payloads, and a trailing 64-bit
//! checksum (sum of payload bytes mod 2^64). Model hyperparameters ride
//! along as `config.*` entries holding one value each, so a checkpoint alone
//! reconstructs the exact model; the u64 seed is stored through its bit
//! pattern to survive the float payload unchanged.

use std::fs;
use std::path::Path;

use crate::dst_attention::{AttentionConfig, AttnDir, MaskMode};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Matrix;
use crate::positional::{RopeConfig, RopeScheme};

pub const MAGIC: &[u8; 7] = b"MASHV1\n";

/// One named tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub matrix: Matrix,
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize entries in the given order.
pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let mut manifest = Vec::new();
    let mut payload = Vec::new();
    push_u64(&mut manifest, entries.len() as u64);
    for e in entries {
        push_u64(&mut manifest, e.name.len() as u64);
        manifest.extend_from_slice(e.name.as_bytes());
        push_u64(&mut manifest, 2);
        push_u64(&mut manifest, e.matrix.rows() as u64);
        push_u64(&mut manifest, e.matrix.cols() as u64);
        push_u64(&mut manifest, payload.len() as u64);
        for v in e.matrix.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = payload.iter().fold(0u64, |acc, &b| acc.wrapping_add(b as u64));
    let mut out = Vec::with_capacity(MAGIC.len() + manifest.len() + payload.len() + 8);
    out.extend_from_slice(MAGIC);
    out.append(&mut manifest);
    out.append(&mut payload);
    push_u64(&mut out, checksum);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let count = r.u64()? as usize;
    let mut metas = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Checkpoint(format!("entry name is not UTF-8: {e}")))?
            .to_owned();
        let rank = r.u64()?;
        if rank != 2 {
            return Err(Error::Checkpoint(format!("entry '{name}' has rank {rank}, want 2")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let offset = r.u64()? as usize;
        metas.push((name, rows, cols, offset));
    }
    let payload_start = r.pos;
    if bytes.len() < payload_start + 8 {
        return Err(Error::Checkpoint("missing checksum".into()));
    }
    let payload = &bytes[payload_start..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let computed = payload.iter().fold(0u64, |acc, &b| acc.wrapping_add(b as u64));
    if stored != computed {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, rows, cols, offset) in metas {
        let bytes_len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("entry '{name}' dims overflow")))?;
        let end = offset
            .checked_add(bytes_len)
            .ok_or_else(|| Error::Checkpoint(format!("entry '{name}' offset overflows")))?;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!(
                "entry '{name}' spans bytes {offset}..{end}, payload has {}",
                payload.len()
            )));
        }
        let data: Vec<f64> = payload[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(Entry { name, matrix: Matrix::from_vec(rows, cols, data) });
    }
    Ok(entries)
}

fn scalar(name: &str, v: f64) -> Entry {
    Entry { name: name.into(), matrix: Matrix::from_vec(1, 1, vec![v]) }
}

fn mask_mode_code(m: MaskMode) -> f64 {
    match m {
        MaskMode::FullCausal => 0.0,
        MaskMode::Dst => 1.0,
    }
}

fn attn_dir_code(d: AttnDir) -> f64 {
    match d {
        AttnDir::Causal => 0.0,
        AttnDir::Bidirectional => 1.0,
    }
}

fn rope_scheme_code(s: RopeScheme) -> f64 {
    match s {
        RopeScheme::Distinct => 0.0,
        RopeScheme::Balanced => 1.0,
        RopeScheme::Harmonic => 2.0,
    }
}

/// Config entries, in a fixed order ahead of the weight tensors.
fn config_entries(cfg: &ModelConfig) -> Vec<Entry> {
    vec![
        scalar("config.blocks", cfg.blocks as f64),
        scalar("config.width", cfg.width as f64),
        scalar("config.heads", cfg.heads as f64),
        scalar("config.head_dim", cfg.head_dim as f64),
        scalar("config.vocab", cfg.vocab as f64),
        scalar("config.mlp_hidden", cfg.mlp_hidden as f64),
        scalar("config.enc_dim", cfg.enc_dim as f64),
        scalar("config.frames", cfg.frames as f64),
        scalar("config.grid_h", cfg.grid_h as f64),
        scalar("config.grid_w", cfg.grid_w as f64),
        scalar("config.rope_base", cfg.rope.base),
        scalar("config.mask_mode", mask_mode_code(cfg.attention.mask_mode)),
        scalar("config.temporal_attn", attn_dir_code(cfg.attention.temporal_attn)),
        scalar("config.spatial_attn", attn_dir_code(cfg.attention.spatial_attn)),
        scalar("config.disentangle", cfg.attention.disentangle as u64 as f64),
        scalar("config.rope_scheme", rope_scheme_code(cfg.attention.rope_scheme)),
        scalar("config.seed", f64::from_bits(cfg.seed)),
    ]
}

fn get_scalar(entries: &[Entry], name: &str) -> Result<f64> {
    let e = entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Checkpoint(format!("missing entry '{name}'")))?;
    if e.matrix.shape() != (1, 1) {
        return Err(Error::Checkpoint(format!(
            "entry '{name}' is {}x{}, want 1x1",
            e.matrix.rows(),
            e.matrix.cols()
        )));
    }
    Ok(e.matrix.get(0, 0))
}

fn get_usize(entries: &[Entry], name: &str) -> Result<usize> {
    let v = get_scalar(entries, name)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::Checkpoint(format!("entry '{name}' is not a small integer: {v}")));
    }
    Ok(v as usize)
}

fn config_from_entries(entries: &[Entry]) -> Result<ModelConfig> {
    let heads = get_usize(entries, "config.heads")?;
    let head_dim = get_usize(entries, "config.head_dim")?;
    let mask_mode = match get_usize(entries, "config.mask_mode")? {
        0 => MaskMode::FullCausal,
        1 => MaskMode::Dst,
        c => return Err(Error::Checkpoint(format!("unknown mask_mode code {c}"))),
    };
    let dir = |v: usize, name: &str| -> Result<AttnDir> {
        match v {
            0 => Ok(AttnDir::Causal),
            1 => Ok(AttnDir::Bidirectional),
            c => Err(Error::Checkpoint(format!("unknown {name} code {c}"))),
        }
    };
    let temporal_attn = dir(get_usize(entries, "config.temporal_attn")?, "temporal_attn")?;
    let spatial_attn = dir(get_usize(entries, "config.spatial_attn")?, "spatial_attn")?;
    let disentangle = match get_usize(entries, "config.disentangle")? {
        0 => false,
        1 => true,
        c => return Err(Error::Checkpoint(format!("unknown disentangle code {c}"))),
    };
    let rope_scheme = match get_usize(entries, "config.rope_scheme")? {
        0 => RopeScheme::Distinct,
        1 => RopeScheme::Balanced,
        2 => RopeScheme::Harmonic,
        c => return Err(Error::Checkpoint(format!("unknown rope_scheme code {c}"))),
    };
    let cfg = ModelConfig {
        blocks: get_usize(entries, "config.blocks")?,
        width: get_usize(entries, "config.width")?,
        heads,
        head_dim,
        vocab: get_usize(entries, "config.vocab")?,
        mlp_hidden: get_usize(entries, "config.mlp_hidden")?,
        enc_dim: get_usize(entries, "config.enc_dim")?,
        attention: AttentionConfig {
            heads,
            head_dim,
            mask_mode,
            temporal_attn,
            spatial_attn,
            disentangle,
            rope_scheme,
        },
        rope: RopeConfig::new(head_dim, get_scalar(entries, "config.rope_base")?)?,
        frames: get_usize(entries, "config.frames")?,
        grid_h: get_usize(entries, "config.grid_h")?,
        grid_w: get_usize(entries, "config.grid_w")?,
        seed: get_scalar(entries, "config.seed")?.to_bits(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Write model weights plus config to `path`.
pub fn save_model(path: &Path, params: &ModelParams, cfg: &ModelConfig) -> Result<()> {
    let mut entries = config_entries(cfg);
    for (name, m) in params.named_tensors() {
        entries.push(Entry { name, matrix: m.clone() });
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, encode(&entries))?;
    Ok(())
}

/// Read a model back; every weight tensor must be present with its exact
/// shape.
pub fn load_model(path: &Path) -> Result<(ModelParams, ModelConfig)> {
    let bytes = fs::read(path)?;
    let entries = decode(&bytes)?;
    let cfg = config_from_entries(&entries)?;
    let mut params = ModelParams::init(&cfg)?;
    let expected: Vec<String> = params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
    for (name, slot) in expected.iter().zip(params.tensors_mut()) {
        let e = entries
            .iter()
            .find(|e| &e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
        if e.matrix.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' is {}x{}, model wants {}x{}",
                e.matrix.rows(),
                e.matrix.cols(),
                slot.rows(),
                slot.cols()
            )));
        }
        *slot = e.matrix.clone();
    }
    if !params.all_finite() {
        return Err(Error::Checkpoint("checkpoint holds non-finite weights".into()));
    }
    Ok((params, cfg))
}
