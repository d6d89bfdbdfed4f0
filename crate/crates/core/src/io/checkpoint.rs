//! `CVPS` checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! "CVPS" | u32 version
//! u32 len | model config text (UTF-8)
//! f64 best validation loss | u64 optimizer step | u32 parameter count
//! per parameter:
//!   u32 len | name | u8 complex | u32 rank | u64 dims[rank]
//!   value, first moment, second moment: real plane, then the imaginary
//!   plane for complex parameters
//! ```

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network, Param};
use crate::tensor::ComplexTensor;
use crate::train::AdamState;

pub const MAGIC: &[u8; 4] = b"CVPS";
pub const FORMAT_VERSION: u32 = 1;

fn put_planes(out: &mut Vec<u8>, t: &ComplexTensor, complex: bool) {
    for &v in t.re() {
        out.write_f64::<LittleEndian>(v).expect("vec write");
    }
    if complex {
        for &v in t.im() {
            out.write_f64::<LittleEndian>(v).expect("vec write");
        }
    }
}

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).expect("vec write");
    let cfg = net.config().to_text();
    out.write_u32::<LittleEndian>(cfg.len() as u32).expect("vec write");
    out.extend_from_slice(cfg.as_bytes());
    out.write_f64::<LittleEndian>(net.best_val_loss).expect("vec write");
    out.write_u64::<LittleEndian>(net.optimizer.step).expect("vec write");
    out.write_u32::<LittleEndian>(net.params.len() as u32)
        .expect("vec write");
    for (i, p) in net.params.iter().enumerate() {
        out.write_u32::<LittleEndian>(p.name.len() as u32).expect("vec write");
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.complex as u8);
        let shape = p.value.shape();
        out.write_u32::<LittleEndian>(shape.len() as u32).expect("vec write");
        for &d in shape {
            out.write_u64::<LittleEndian>(d as u64).expect("vec write");
        }
        put_planes(&mut out, &p.value, p.complex);
        put_planes(&mut out, &net.optimizer.m[i], p.complex);
        put_planes(&mut out, &net.optimizer.v[i], p.complex);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptCheckpoint("string is not UTF-8".into()))
    }

    fn planes(&mut self, shape: &[usize], complex: bool) -> Result<ComplexTensor> {
        let n: usize = shape.iter().product();
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::CorruptCheckpoint("tensor too large".into()))?;
        let mut re = vec![0.0; n];
        LittleEndian::read_f64_into(self.take(bytes)?, &mut re);
        let mut im = vec![0.0; n];
        if complex {
            LittleEndian::read_f64_into(self.take(bytes)?, &mut im);
        }
        ComplexTensor::from_parts(shape, re, im)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::NotACheckpoint);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version > FORMAT_VERSION || version == 0 {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let config = ModelConfig::from_text(&r.string()?)?;
    let best_val_loss = r.f64()?;
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    let mut m = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let complex = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::CorruptCheckpoint(format!("bad complex flag {other}"))),
        };
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::CorruptCheckpoint(format!("rank {rank} for {name}")));
        }
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let value = r.planes(&shape, complex)?;
        m.push(r.planes(&shape, complex)?);
        v.push(r.planes(&shape, complex)?);
        params.push(Param { name, value, complex });
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Network::from_parts(config, params, AdamState { step, m, v }, best_val_loss)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_branches, Attention};
    use crate::oracle::random_tensor;

    fn small_net(seed: u64) -> Network {
        let cfg = ModelConfig {
            window: 3,
            in_channels: 2,
            num_classes: 3,
            filters: 4,
            kernel: 3,
            branches: parse_branches("S,D").unwrap(),
            attention: Attention::AfterFusion,
            se_reduction: 2,
            dropout_rate: 0.25,
            fc_sizes: vec![6],
        };
        let mut net = Network::build(&cfg, seed).unwrap();
        let mut rng = crate::rng::rng(seed);
        for (i, p) in net.params.iter().enumerate() {
            let noise = random_tensor(p.value.shape(), &mut rng);
            net.optimizer.m[i] = if p.complex {
                noise.clone()
            } else {
                noise.map(|z| z.re.into())
            };
            net.optimizer.v[i] = net.optimizer.m[i].map(|z| z * z.conj());
        }
        net.optimizer.step = 17;
        net.best_val_loss = 0.123456789;
        net
    }

    #[test]
    fn double_round_trip_is_byte_identical() {
        let net = small_net(1);
        let bytes = encode_checkpoint(&net);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back.params, net.params);
        assert_eq!(back.optimizer, net.optimizer);
        assert_eq!(back.best_val_loss.to_bits(), net.best_val_loss.to_bits());
        assert_eq!(back.config(), net.config());
    }

    #[test]
    fn same_logits_after_reload() {
        let net = small_net(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.cvps");
        save_checkpoint(&net, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let x = random_tensor(&net.config().input_shape(3), &mut crate::rng::rng(9));
        assert_eq!(net.forward(&x, None).unwrap(), back.forward(&x, None).unwrap());
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        assert!(matches!(decode_checkpoint(&[0u8; 64]), Err(Error::NotACheckpoint)));
        assert!(matches!(decode_checkpoint(b"CVP"), Err(Error::NotACheckpoint)));
        let mut bytes = encode_checkpoint(&small_net(3));
        bytes[4] = 2;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
        let bytes = encode_checkpoint(&small_net(3));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::CorruptCheckpoint(_))
        ));
    }
}
