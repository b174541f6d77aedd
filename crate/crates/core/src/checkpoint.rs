//! Parameter snapshots on disk.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            8 bytes   "PADLABCK"
//! version          u32       currently 1
//! entry count      u32
//! per entry:
//!   name length    u32
//!   name           utf-8 bytes
//!   dims           4 x u32   (n, c, h, w)
//! payload          f64 little-endian, entries concatenated in header order
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PADLABCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32::try_from(entries.len()).expect("entry count fits u32").to_le_bytes());
    for (name, t) in entries {
        let nb = name.as_bytes();
        buf.extend_from_slice(&u32::try_from(nb.len()).expect("name fits u32").to_le_bytes());
        buf.extend_from_slice(nb);
        let (n, c, h, w) = t.shape();
        for d in [n, c, h, w] {
            buf.extend_from_slice(&u32::try_from(d).expect("dim fits u32").to_le_bytes());
        }
    }
    for (_, t) in entries {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::parse(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(format!(
            "checkpoint version {version} unsupported, expected {CHECKPOINT_VERSION}"
        )));
    }
    let count = r.u32()? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::parse("checkpoint entry name is not utf-8".to_string()))?
            .to_string();
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        headers.push((name, dims));
    }
    let mut out = Vec::with_capacity(count);
    for (name, [n, c, h, w]) in headers {
        let numel = [c, h, w]
            .iter()
            .try_fold(n, |a, d| a.checked_mul(*d))
            .and_then(|e| e.checked_mul(8))
            .ok_or_else(|| Error::parse(format!("checkpoint entry {name:?} has absurd dims")))?;
        let bytes = r.take(numel)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(n, c, h, w, data)?));
    }
    if r.pos != buf.len() {
        return Err(Error::parse(format!(
            "checkpoint has {} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(format!(
                "checkpoint truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor)> {
        vec![
            ("a.w".to_string(), Tensor::from_fn(2, 3, 1, 4, |n, c, _, x| (n * 12 + c * 4 + x) as f64 * 0.5)),
            ("a.b".to_string(), Tensor::full(1, 3, 1, 1, -1.25)),
        ]
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("padlab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_preserves_names_shapes_values() {
        let path = tmp("rt.ckpt");
        let entries = sample();
        save(&path, &entries).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn saved_bytes_start_with_magic_and_version() {
        let path = tmp("hdr.ckpt");
        save(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2, "entry count");
    }

    #[test]
    fn bad_magic_version_and_truncation_are_rejected() {
        let path = tmp("bad.ckpt");
        save(&path, &sample()).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("bad magic"));

        let mut bad = good.clone();
        bad[8] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("version"));

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("truncated"));

        let mut long = good.clone();
        long.extend_from_slice(&[0; 5]);
        std::fs::write(&path, &long).unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn empty_checkpoint_is_legal() {
        let path = tmp("empty.ckpt");
        save(&path, &[]).unwrap();
        assert!(load(&path).unwrap().is_empty());
    }
}
