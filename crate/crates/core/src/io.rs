//! File formats: 8-bit PGM (P5/P2, maxval 255) and the lossless `CLF1` tensor format.
//!
//! `CLF1` layout, little-endian, no padding:
//!
//! ```text
//! offset 0   4 bytes  ASCII "CLF1"
//! offset 4   u32      height
//! offset 8   u32      width
//! offset 12  f64 * height * width, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, IntGrid};

pub const TENSOR_MAGIC: &[u8; 4] = b"CLF1";
const TENSOR_HEADER_LEN: usize = 12;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(start) {
                None => Error::format(start, format!("unexpected end of file, expected {what}")),
                Some(_) => Error::format(start, format!("expected {what}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

/// Parses an in-memory PGM image. Pixel `v` maps to `v / 255`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Grid> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        Some(_) => return Err(Error::format(0, "unsupported magic, expected P5 or P2")),
        None => return Err(Error::format(0, "file too short for a PGM header")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(2, "expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = {
        cur.skip_space_and_comments();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            maxval_at,
            format!("maxval must be 255, got {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(2, "zero image dimension"));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;

    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => return Err(Error::format(cur.pos, "expected whitespace after maxval")),
            None => return Err(Error::format(cur.pos, "truncated payload: no raster data")),
        }
        let raster = &bytes[cur.pos..];
        if raster.len() < n {
            return Err(Error::format(
                bytes.len(),
                format!(
                    "truncated payload: expected {n} bytes, found {}",
                    raster.len()
                ),
            ));
        }
        data.extend(raster[..n].iter().map(|&b| f64::from(b) / 255.0));
    } else {
        for _ in 0..n {
            let at = {
                cur.skip_space_and_comments();
                cur.pos
            };
            let v = match cur.number("pixel value") {
                Err(Error::Format { offset, .. }) if offset >= bytes.len() => {
                    return Err(Error::format(offset, "truncated payload"))
                }
                other => other?,
            };
            if v > 255 {
                return Err(Error::format(at, format!("pixel value {v} exceeds maxval")));
            }
            data.push(v as f64 / 255.0);
        }
    }
    Grid::new(height, width, data)
}

/// Reads a P5 or P2 PGM file with maxval 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Encodes a grid as binary P5. Values are clamped to [0, 1] and scaled by 255.
pub fn encode_pgm(grid: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(
        grid.values()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(grid)).map_err(|e| Error::io(path, e))
}

pub fn encode_tensor(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_tensor(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < TENSOR_HEADER_LEN {
        return Err(Error::format(
            bytes.len(),
            format!("file too short for a CLF1 header ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::format(0, "bad magic, expected CLF1"));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if height == 0 || width == 0 {
        return Err(Error::format(4, "zero tensor dimension"));
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(TENSOR_HEADER_LEN))
        .ok_or_else(|| Error::format(4, "tensor dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected),
            format!(
                "length mismatch: expected {expected} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(height * width);
    for (i, chunk) in bytes[TENSOR_HEADER_LEN..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                TENSOR_HEADER_LEN + 8 * i,
                "non-finite tensor value",
            ));
        }
        data.push(v);
    }
    Grid::new(height, width, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_tensor(&bytes)
}

pub fn write_tensor(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(grid)).map_err(|e| Error::io(path, e))
}

/// Integer grids share the CLF1 format, stored as doubles.
pub fn write_int_tensor(grid: &IntGrid, path: impl AsRef<Path>) -> Result<()> {
    write_tensor(&grid.to_grid(), path)
}

/// Reads a grid from either format, dispatching on the leading magic bytes.
pub fn read_any(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(TENSOR_MAGIC) {
        parse_tensor(&bytes)
    } else {
        parse_pgm(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn offset_of(err: Error) -> usize {
        match err {
            Error::Format { offset, .. } => offset,
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn p5_extremes() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 255, 0]);
        let g = parse_pgm(&bytes).unwrap();
        assert_eq!(g.shape(), (2, 2));
        assert_eq!(g.values(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn p2_single_pixel() {
        let g = parse_pgm(b"P2 1 1 255 128").unwrap();
        assert_eq!(g.values(), &[128.0 / 255.0]);
        assert!((g.get(0, 0) - 0.501_960_784_313_725_5).abs() < 1e-15);
    }

    #[test]
    fn p2_with_comments() {
        let g = parse_pgm(b"P2\n# made by hand\n2 1\n255\n0 # left\n255\n").unwrap();
        assert_eq!(g.values(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_errors_carry_offsets() {
        assert_eq!(offset_of(parse_pgm(b"P3 1 1 255 0").unwrap_err()), 0);
        assert_eq!(offset_of(parse_pgm(b"P5 1 1 65535\n\0\0").unwrap_err()), 7);
        let mut truncated = b"P5 2 2 255\n".to_vec();
        truncated.extend([1, 2, 3]);
        assert_eq!(offset_of(parse_pgm(&truncated).unwrap_err()), 14);
        assert!(matches!(
            parse_pgm(b"P2 2 1 255 7"),
            Err(Error::Format { offset: 12, .. })
        ));
        assert!(parse_pgm(b"P2 1 1 255 256").is_err());
        assert!(parse_pgm(b"P5 x").is_err());
        assert!(parse_pgm(b"").is_err());
    }

    #[test]
    fn pgm_encoding() {
        let g = Grid::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(encode_pgm(&g).ends_with(&[0, 255]));
        let half = Grid::from_rows(&[[0.5]]).unwrap();
        assert_eq!(*encode_pgm(&half).last().unwrap(), 128);
        let over = Grid::from_rows(&[[1.7]]).unwrap();
        assert_eq!(*encode_pgm(&over).last().unwrap(), 255);
    }

    #[test]
    fn tensor_format_errors() {
        assert!(parse_tensor(b"").is_err());
        let mut bad = b"XXXX".to_vec();
        bad.extend(1u32.to_le_bytes());
        bad.extend(1u32.to_le_bytes());
        bad.extend(0f64.to_le_bytes());
        assert_eq!(offset_of(parse_tensor(&bad).unwrap_err()), 0);

        let g = Grid::from_rows(&[[1.0, 2.0]]).unwrap();
        let mut bytes = encode_tensor(&g);
        bytes.push(0);
        assert!(parse_tensor(&bytes).is_err(), "trailing bytes");
        bytes.truncate(bytes.len() - 2);
        assert!(parse_tensor(&bytes).is_err(), "short payload");

        let mut huge = TENSOR_MAGIC.to_vec();
        huge.extend(u32::MAX.to_le_bytes());
        huge.extend(u32::MAX.to_le_bytes());
        assert!(parse_tensor(&huge).is_err());
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::from_rows(&[
            [0.1, -3.5e-300, 7.0],
            [1e300, 0.0, -0.0],
            [std::f64::consts::PI, 1.0 / 3.0, f64::MIN_POSITIVE],
        ])
        .unwrap();
        let p = dir.path().join("g.clf1");
        write_tensor(&g, &p).unwrap();
        let back = read_tensor(&p).unwrap();
        let bits = |g: &Grid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&g), bits(&back));

        let q = dir.path().join("g.pgm");
        let unit = g.map(|v| v.clamp(0.0, 1.0));
        write_pgm(&unit, &q).unwrap();
        assert!(unit.max_abs_diff(&read_pgm(&q).unwrap()).unwrap() <= 1.0 / 510.0 + 1e-15);
        assert!(read_any(&p).is_ok() && read_any(&q).is_ok());
        assert!(matches!(
            read_pgm(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn tensor_round_trip_is_bit_exact(
            h in 1usize..6, w in 1usize..6,
            seed in proptest::collection::vec(-1e12f64..1e12, 36),
        ) {
            let g = Grid::new(h, w, seed[..h * w].to_vec()).unwrap();
            let back = parse_tensor(&encode_tensor(&g)).unwrap();
            prop_assert!(g.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn pgm_round_trip_within_half_step(vals in proptest::collection::vec(0.0f64..=1.0, 20)) {
            let g = Grid::new(4, 5, vals).unwrap();
            let back = parse_pgm(&encode_pgm(&g)).unwrap();
            prop_assert!(g.max_abs_diff(&back).unwrap() <= 1.0 / 510.0 + 1e-15);
        }
    }
}
