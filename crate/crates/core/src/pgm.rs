//! Binary 8-bit PGM (P5) heatmap output. Values are min-max scaled to
//! 0..=255 per image; a constant map renders black.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_pgm(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(Error::dimension(format!(
            "pgm wants {rows}x{cols} = {} values, got {}",
            rows * cols,
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("pgm values must be finite".to_string()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    buf.extend(values.iter().map(|&v| {
        if span == 0.0 {
            0u8
        } else {
            ((v - lo) / span * 255.0).round() as u8
        }
    }));
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("padlab-pgm-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn header_and_payload_have_the_p5_layout() {
        let path = tmp("ramp.pgm");
        write_pgm(&path, 2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 51, 102, 153, 204, 255]);
    }

    #[test]
    fn extremes_hit_0_and_255() {
        let path = tmp("extremes.pgm");
        write_pgm(&path, 1, 3, &[-2.0, 0.0, 6.0]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let px = &bytes[bytes.len() - 3..];
        assert_eq!(px, &[0, 64, 255]);
    }

    #[test]
    fn constant_map_renders_black() {
        let path = tmp("flat.pgm");
        write_pgm(&path, 2, 2, &[7.0; 4]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0, 0]);
    }

    #[test]
    fn shape_mismatch_and_nan_are_rejected() {
        let path = tmp("bad.pgm");
        assert!(write_pgm(&path, 2, 2, &[1.0; 3]).is_err());
        assert!(write_pgm(&path, 1, 2, &[1.0, f64::NAN]).is_err());
    }
}
