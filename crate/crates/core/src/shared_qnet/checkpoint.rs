//! `OQW1` parameter checkpoints (little-endian):
//!
//! ```text
//! magic "OQW1" | u32 obs_dim | u32 act_dim | u8 frozen
//! 3 × [u32 n_dims | u32 × n_dims layer dims | u8 output activation]
//! raw f64 parameter blocks: backbone, transition head, Q head (W0, b0, W1, b1, ...)
//! ```

use std::path::Path;

use super::SharedQNet;
use crate::error::{Error, Result};
use crate::numerics::{Activation, MlpNet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OQW1";

impl SharedQNet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let nets = [&self.backbone, &self.transition_head, &self.q_head];
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.act_dim as u32).to_le_bytes());
        out.push(self.frozen_backbone as u8);
        for net in nets {
            out.extend_from_slice(&(net.layer_dims().len() as u32).to_le_bytes());
            for &d in net.layer_dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(net.output_activation().tag());
        }
        for net in nets {
            for block in net.params() {
                for v in block {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format { offset: 0, message: "bad checkpoint magic".into() });
        }
        let obs_dim = r.u32()? as usize;
        let act_dim = r.u32()? as usize;
        let frozen = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(r.error(1, format!("bad frozen flag {b}"))),
        };
        let mut layouts = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = r.u32()? as usize;
            if !(2..=64).contains(&n) {
                return Err(r.error(4, format!("bad layer count {n}")));
            }
            let dims = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims.contains(&0) {
                return Err(r.error(4 * n, "zero layer width".into()));
            }
            let tag = r.u8()?;
            let act = Activation::from_tag(tag).ok_or_else(|| r.error(1, format!("bad activation tag {tag}")))?;
            layouts.push((dims, act));
        }
        let mut nets = Vec::with_capacity(3);
        for (dims, act) in layouts {
            let mut net = MlpNet::zeros(&dims, act)?;
            for block in net.params_mut() {
                for v in block.iter_mut() {
                    *v = r.f64()?;
                }
            }
            nets.push(net);
        }
        if r.pos != bytes.len() {
            return Err(r.error(0, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let q = nets.pop().unwrap();
        let g = nets.pop().unwrap();
        let h = nets.pop().unwrap();
        let mut net = SharedQNet::from_parts(obs_dim, act_dim, h, g, q)?;
        net.set_frozen(frozen);
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn error(&self, back: usize, message: String) -> Error {
        Error::Format { offset: self.pos.saturating_sub(back) as u64, message }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated checkpoint: need {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(net: &SharedQNet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, net.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SharedQNet> {
    SharedQNet::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_preserves_checksums() {
        let net = SharedQNet::new(4, 2, &[8, 5], &mut Rng::new(1)).unwrap();
        let back = SharedQNet::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.phi_checksum(), net.phi_checksum());
        let frozen = net.freeze_backbone();
        assert!(SharedQNet::from_bytes(&frozen.to_bytes()).unwrap().is_frozen());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.oqw");
        let net = SharedQNet::new(3, 1, &[6], &mut Rng::new(2)).unwrap();
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let bytes = SharedQNet::new(3, 1, &[6], &mut Rng::new(3)).unwrap().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(SharedQNet::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            SharedQNet::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(SharedQNet::from_bytes(&long), Err(Error::Format { .. })));
        let mut flag = bytes.clone();
        flag[12] = 7;
        assert!(matches!(SharedQNet::from_bytes(&flag), Err(Error::Format { offset: 12, .. })));
    }
}
