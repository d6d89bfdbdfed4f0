//! PLBL label files: an ASCII header line
//! `PLBL 1 <height> <width> <num_classes>\n` followed by row-major u16 LE labels.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::scene::LabelMap;

const MAGIC: &str = "PLBL";
const VERSION: u32 = 1;

pub fn decode_label_map(bytes: &[u8]) -> Result<LabelMap> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::BadHeader("missing PLBL header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::BadHeader("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(Error::BadHeader(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::BadHeader(format!("bad header field {s:?}")))
    };
    let version = num(fields[1])?;
    if version != VERSION as usize {
        return Err(Error::BadHeader(format!("unsupported PLBL version {version}")));
    }
    let (height, width) = (num(fields[2])?, num(fields[3])?);
    let num_classes: u16 = fields[4]
        .parse()
        .map_err(|_| Error::BadHeader(format!("bad class count {:?}", fields[4])))?;

    let payload = &bytes[newline + 1..];
    if payload.len() != 2 * height * width {
        return Err(Error::ShapeMismatch(format!(
            "payload holds {} bytes, header declares {height}x{width}",
            payload.len()
        )));
    }
    let labels = payload.chunks_exact(2).map(LittleEndian::read_u16).collect();
    LabelMap::new(height, width, num_classes, labels)
}

pub fn encode_label_map(map: &LabelMap) -> Vec<u8> {
    let mut out = format!(
        "{MAGIC} {VERSION} {} {} {}\n",
        map.height(),
        map.width(),
        map.num_classes()
    )
    .into_bytes();
    let start = out.len();
    out.resize(start + 2 * map.labels().len(), 0);
    LittleEndian::write_u16_into(map.labels(), &mut out[start..]);
    out
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_map(&bytes)
}

pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_label_map(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes(header: &str, labels: &[u16]) -> Vec<u8> {
        let mut b = header.as_bytes().to_vec();
        for l in labels {
            b.extend_from_slice(&l.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_small_map() {
        let map = decode_label_map(&bytes("PLBL 1 1 3 2\n", &[0, 1, 2])).unwrap();
        assert_eq!((map.height(), map.width(), map.num_classes()), (1, 3, 2));
        assert_eq!(map.labels(), &[0, 1, 2]);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = decode_label_map(&bytes("PLBL 1 1 3 2\n", &[0, 7, 2])).unwrap_err();
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn rejects_truncated_payload() {
        let err = decode_label_map(&bytes("PLBL 1 2 2 2\n", &[0, 1, 2])).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"));
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(matches!(decode_label_map(b"P6 1 1\n\0\0"), Err(Error::BadHeader(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_identity(
            h in 1usize..12, w in 1usize..12, k in 1u16..20, seed in any::<u64>()
        ) {
            let labels: Vec<u16> = (0..h * w)
                .map(|i| (crate::rng::derive(seed, i as u64) % (k as u64 + 1)) as u16)
                .collect();
            let map = LabelMap::new(h, w, k, labels).unwrap();
            prop_assert_eq!(decode_label_map(&encode_label_map(&map)).unwrap(), map);
        }
    }
}
