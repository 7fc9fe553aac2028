//! `OQD1` binary dataset format (all integers and floats little-endian):
//!
//! ```text
//! magic "OQD1" | u32 obs_dim | u32 act_dim | u64 count
//! count × [obs f64×obs_dim][act f64×act_dim][reward f64][next_obs f64×obs_dim][done u8]
//! u32 meta_len | meta_len bytes of UTF-8 `key=value` lines
//! ```

use std::path::Path;

use super::{Dataset, DatasetMeta, Transition};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OQD1";
/// Bytes before the first record.
pub const HEADER_LEN: usize = 4 + 4 + 4 + 8;

pub fn record_len(obs_dim: usize, act_dim: usize) -> usize {
    8 * (2 * obs_dim + act_dim + 1) + 1
}

fn encode_meta(meta: &DatasetMeta) -> Result<String> {
    let mut lines = vec![
        ("env".to_string(), meta.env.clone()),
        ("tier".to_string(), meta.tier.clone()),
        ("seed".to_string(), meta.seed.to_string()),
        ("lineage".to_string(), meta.lineage.join(";")),
    ];
    for (k, v) in &meta.extra {
        if matches!(k.as_str(), "env" | "tier" | "seed" | "lineage") {
            return Err(Error::Argument(format!("metadata key {k:?} is reserved")));
        }
        lines.push((k.clone(), v.clone()));
    }
    let mut out = String::new();
    for (k, v) in lines {
        if k.contains(['=', '\n']) || v.contains('\n') || k.is_empty() {
            return Err(Error::Argument(format!("unencodable metadata entry {k:?}={v:?}")));
        }
        out.push_str(&k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    }
    Ok(out)
}

fn decode_meta(text: &str, offset: u64) -> Result<DatasetMeta> {
    let mut meta = DatasetMeta::default();
    for line in text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            offset,
            message: format!("metadata line without '=': {line:?}"),
        })?;
        match k {
            "env" => meta.env = v.to_string(),
            "tier" => meta.tier = v.to_string(),
            "seed" => {
                meta.seed = v.parse().map_err(|_| Error::Format {
                    offset,
                    message: format!("bad seed {v:?}"),
                })?
            }
            "lineage" => {
                meta.lineage = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(';').map(str::to_string).collect()
                }
            }
            _ => {
                meta.extra.insert(k.to_string(), v.to_string());
            }
        }
    }
    Ok(meta)
}

pub fn to_bytes(d: &Dataset) -> Result<Vec<u8>> {
    let meta = encode_meta(&d.meta)?;
    let mut out = Vec::with_capacity(
        HEADER_LEN + d.len() * record_len(d.obs_dim(), d.act_dim()) + 4 + meta.len(),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(d.obs_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(d.act_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(d.len() as u64).to_le_bytes());
    for t in d.transitions() {
        for v in t.obs.iter().chain(&t.act).chain([&t.reward]).chain(&t.next_obs) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(t.done));
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(8 * n, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let obs_dim = r.u32("obs_dim")? as usize;
    let act_dim = r.u32("act_dim")? as usize;
    if obs_dim == 0 || act_dim == 0 {
        return Err(Error::Format {
            offset: 4,
            message: format!("zero dimension (obs_dim={obs_dim}, act_dim={act_dim})"),
        });
    }
    let count = r.u64("count")?;
    let needed = (count as u128) * record_len(obs_dim, act_dim) as u128;
    if needed > (bytes.len() - r.pos) as u128 {
        return Err(Error::Format {
            offset: r.pos as u64,
            message: format!(
                "header declares {count} records of {} bytes but only {} bytes follow",
                record_len(obs_dim, act_dim),
                bytes.len() - r.pos
            ),
        });
    }
    let mut transitions = Vec::with_capacity(count as usize);
    for i in 0..count {
        let obs = r.f64s(obs_dim, "obs")?;
        let act = r.f64s(act_dim, "act")?;
        let reward = r.f64s(1, "reward")?[0];
        let next_obs = r.f64s(obs_dim, "next_obs")?;
        let done_at = r.pos;
        let done = match r.take(1, "done")?[0] {
            0 => false,
            1 => true,
            b => {
                return Err(Error::Format {
                    offset: done_at as u64,
                    message: format!("record {i}: done flag must be 0 or 1, got {b}"),
                })
            }
        };
        transitions.push(Transition {
            obs,
            act,
            reward,
            next_obs,
            done,
        });
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_at = r.pos as u64;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let text = std::str::from_utf8(meta_bytes).map_err(|e| Error::Format {
        offset: meta_at + e.valid_up_to() as u64,
        message: "metadata is not UTF-8".into(),
    })?;
    let meta = decode_meta(text, meta_at)?;
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            message: format!("{} trailing bytes after metadata", bytes.len() - r.pos),
        });
    }
    Dataset::from_transitions(obs_dim, act_dim, meta, transitions).map_err(|e| Error::Format {
        offset: HEADER_LEN as u64,
        message: e.to_string(),
    })
}

pub fn save(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(d)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    from_bytes(&std::fs::read(path)?)
}

/// Human-readable export with a header row.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = Vec::new();
    header.extend((0..d.obs_dim()).map(|k| format!("obs_{k}")));
    header.extend((0..d.act_dim()).map(|k| format!("act_{k}")));
    header.push("reward".to_string());
    header.extend((0..d.obs_dim()).map(|k| format!("next_obs_{k}")));
    header.push("done".to_string());
    w.write_record(&header)?;
    for t in d.transitions() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.extend(t.obs.iter().map(f64::to_string));
        row.extend(t.act.iter().map(f64::to_string));
        row.push(t.reward.to_string());
        row.extend(t.next_obs.iter().map(f64::to_string));
        row.push(u8::from(t.done).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
