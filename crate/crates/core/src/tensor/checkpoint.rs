//! `FTZ` checkpoint container.
//!
//! ```text
//! "FTEN" | u32 version | u32 count
//! count x ( u16 name_len | name (utf-8) | u8 rank | rank x u32 dim | u8 dtype | payload )
//! ```
//! All integers and payload elements are little-endian. dtype 0 is `f32`,
//! dtype 1 is `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

pub const FTZ_MAGIC: &[u8; 4] = b"FTEN";
pub const FTZ_VERSION: u32 = 1;

pub fn encode_ftz<T: Scalar>(entries: &[(String, Tensor<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(FTZ_MAGIC);
    out.extend_from_slice(&FTZ_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::invalid("encode_ftz", format!("name too long: {name}")))?;
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| Error::invalid("encode_ftz", format!("rank too large for {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| Error::invalid("encode_ftz", format!("dim too large for {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(T::DTYPE);
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.malformed(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn malformed(&self, detail: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            detail,
        }
    }
}

/// Decode a checkpoint. Entries stored in another dtype are converted.
pub fn decode_ftz<T: Scalar>(bytes: &[u8], origin: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path: origin,
    };
    if r.take(4)? != FTZ_MAGIC {
        return Err(r.malformed("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FTZ_VERSION {
        return Err(r.malformed(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.malformed("entry name is not utf-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data: Vec<T> = match r.u8()? {
            0 => r
                .take(numel * 4)?
                .chunks_exact(4)
                .map(|c| T::lit(f32::read_le(c) as f64))
                .collect(),
            1 => r
                .take(numel * 8)?
                .chunks_exact(8)
                .map(|c| T::lit(f64::read_le(c)))
                .collect(),
            d => return Err(r.malformed(format!("unknown dtype {d} for `{name}`"))),
        };
        let t = Tensor::new(shape, data).map_err(|e| r.malformed(e.to_string()))?;
        entries.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}

pub fn write_ftz<T: Scalar>(path: &Path, entries: &[(String, Tensor<T>)]) -> Result<()> {
    let bytes = encode_ftz(entries)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_ftz<T: Scalar>(path: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ftz(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let entries = vec![(
            "ab".to_string(),
            Tensor::<f32>::new(vec![2], vec![1.0, -2.5]).unwrap(),
        )];
        let bytes = encode_ftz(&entries).unwrap();
        let expected: Vec<u8> = [
            &b"FTEN"[..],
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &2u16.to_le_bytes(),
            b"ab",
            &[1u8],
            &2u32.to_le_bytes(),
            &[0u8],
            &1.0f32.to_le_bytes(),
            &(-2.5f32).to_le_bytes(),
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_garbage() {
        let p = Path::new("x.ftz");
        assert!(decode_ftz::<f32>(b"FTEX\x01\0\0\0\0\0\0\0", p).is_err());
        let mut ok = encode_ftz::<f32>(&[("w".into(), Tensor::zeros(&[3]))]).unwrap();
        ok.pop();
        assert!(decode_ftz::<f32>(&ok, p).is_err());
    }

    proptest! {
        #[test]
        fn f32_round_trip_is_bit_exact(
            shape in prop::collection::vec(1usize..5, 1..4),
            seed in any::<u32>(),
            name in "[a-z.0-9]{1,24}",
        ) {
            let t = Tensor::<f32>::from_fn(&shape, |i| {
                f32::from_bits((seed as u64 * 2654435761 + i as u64 * 40503) as u32 & 0xbf7f_ffff)
            });
            let entries = vec![(name, t)];
            let bytes = encode_ftz(&entries).unwrap();
            let back: Vec<(String, Tensor<f32>)> = decode_ftz(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0].0, &entries[0].0);
            let a: Vec<u32> = back[0].1.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = entries[0].1.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(encode_ftz(&back).unwrap(), bytes);
        }
    }
}
