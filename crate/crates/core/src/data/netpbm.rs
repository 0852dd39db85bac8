//! Binary NetPBM: P6 (RGB) and P5 (greyscale), 8-bit only.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6 (interleaved RGB).
    pub channels: usize,
    pub data: Vec<u8>,
}

pub fn encode(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.data);
    out
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<Raster> {
    let bad = |detail: &str| Error::Format {
        path: origin.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(bad(&format!("unsupported magic {m}"))),
    };
    let num = |s: String| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let len = width * height * channels;
    if width == 0 || height == 0 || bytes.len() != start + len {
        return Err(bad(&format!(
            "expected {len} raster bytes, found {}",
            bytes.len().saturating_sub(start)
        )));
    }
    Ok(Raster {
        width,
        height,
        channels,
        data: bytes[start..].to_vec(),
    })
}

pub fn write(path: &Path, raster: &Raster) -> Result<()> {
    std::fs::write(path, encode(raster)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p6_layout_and_round_trip() {
        let r = Raster {
            width: 2,
            height: 1,
            channels: 3,
            data: vec![1, 2, 3, 250, 251, 252],
        };
        let bytes = encode(&r);
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(decode(&bytes, Path::new("m")).unwrap(), r);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n3 1\n255\n\x00\x07\xff";
        let r = decode(bytes, Path::new("m")).unwrap();
        assert_eq!((r.width, r.height, r.channels), (3, 1, 1));
        assert_eq!(r.data, vec![0, 7, 255]);
    }

    #[test]
    fn truncated_raster_is_rejected() {
        assert!(decode(b"P5\n2 2\n255\n\x00\x01\x02", Path::new("m")).is_err());
        assert!(decode(b"P3\n1 1\n255\n0 0 0", Path::new("m")).is_err());
    }
}
