//! Binary and CSV serialisation of fields, masks and tensor fields.
//!
//! Binary layout (little-endian): the 4-byte magic `TOMO`, then `u32 rows`,
//! `u32 cols`, `u32 tag`, then `planes × rows × cols` `f32` values in
//! row-major order. Tag [`TAG_SCALAR`] holds one plane; [`TAG_TENSOR`] holds
//! the three planes `m11, m12, m22` of a symmetric 2×2 tensor field.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::regularizers::TensorField;

pub const MAGIC: &[u8; 4] = b"TOMO";
pub const TAG_SCALAR: u32 = 1;
pub const TAG_TENSOR: u32 = 3;
pub const HEADER_LEN: usize = 16;

fn planes_for(tag: u32) -> Result<usize> {
    match tag {
        TAG_SCALAR => Ok(1),
        TAG_TENSOR => Ok(3),
        other => Err(Error::Format(format!("unknown dtype tag {other}"))),
    }
}

/// Encodes planes of equal shape into the binary format.
pub fn encode_planes(planes: &[&Array2<f64>], tag: u32) -> Result<Vec<u8>> {
    let expected = planes_for(tag)?;
    if planes.len() != expected {
        return Err(Error::Format(format!(
            "tag {tag} needs {expected} planes, got {}",
            planes.len()
        )));
    }
    let (rows, cols) = planes[0].dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * rows * cols * planes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    for plane in planes {
        crate::error::check_shape((rows, cols), plane.dim())?;
        for &v in plane.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes the binary format into its planes and tag.
pub fn decode_planes(bytes: &[u8]) -> Result<(Vec<Array2<f64>>, u32)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing TOMO header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let tag = word(12) as u32;
    let planes = planes_for(tag)?;
    let n = rows * cols;
    if bytes.len() != HEADER_LEN + 4 * n * planes {
        return Err(Error::Format(format!(
            "expected {} payload bytes for {rows}×{cols}×{planes}, found {}",
            4 * n * planes,
            bytes.len() - HEADER_LEN
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let out = values
        .chunks_exact(n.max(1))
        .take(planes)
        .map(|c| Array2::from_shape_vec((rows, cols), c.to_vec()).expect("length checked"))
        .collect();
    Ok((out, tag))
}

pub fn write_field(path: &Path, field: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_planes(&[field], TAG_SCALAR)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Array2<f64>> {
    let (mut planes, tag) = decode_planes(&fs::read(path)?)?;
    if tag != TAG_SCALAR {
        return Err(Error::Format(format!("expected a scalar field, found tag {tag}")));
    }
    Ok(planes.remove(0))
}

pub fn write_tensor(path: &Path, tensor: &TensorField) -> Result<()> {
    fs::write(
        path,
        encode_planes(&[&tensor.m11, &tensor.m12, &tensor.m22], TAG_TENSOR)?,
    )?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<TensorField> {
    let (planes, tag) = decode_planes(&fs::read(path)?)?;
    if tag != TAG_TENSOR {
        return Err(Error::Format(format!("expected a tensor field, found tag {tag}")));
    }
    let mut it = planes.into_iter();
    Ok(TensorField {
        m11: it.next().unwrap(),
        m12: it.next().unwrap(),
        m22: it.next().unwrap(),
    })
}

/// Writes one CSV row per field row, full `f64` precision.
pub fn write_csv(path: &Path, field: &Array2<f64>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for row in field.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Array2<f64>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::Format(format!(
                    "line {} has {} columns, expected {c}",
                    i + 1,
                    vals.len()
                )))
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty CSV".into()))?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

pub fn write_mask_csv(path: &Path, flags: &Array2<bool>) -> Result<()> {
    write_csv_with(path, flags, |&f| if f { "1" } else { "0" }.to_string())
}

pub fn read_mask_csv(path: &Path) -> Result<Array2<bool>> {
    let field = read_csv(path)?;
    if field.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Format("mask CSV must contain only 0 and 1".into()));
    }
    Ok(field.mapv(|v| v == 1.0))
}

fn write_csv_with<T>(path: &Path, field: &Array2<T>, fmt: impl Fn(&T) -> String) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for row in field.rows() {
        let line: Vec<String> = row.iter().map(&fmt).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}

/// 8-bit binary PGM with linear scaling between `lo` and `hi`.
pub fn write_pgm(path: &Path, field: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let (rows, cols) = field.dim();
    let mut out = format!("P5\n# min={lo:e} max={hi:e}\n{cols} {rows}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    out.extend(
        field
            .iter()
            .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_planes(&[&f], TAG_SCALAR).unwrap();
        assert_eq!(&bytes[..4], b"TOMO");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), TAG_SCALAR);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
    }

    #[test]
    fn rejects_bad_magic_and_length() {
        assert!(decode_planes(b"NOPE000000000000").is_err());
        let f = Array2::zeros((2, 2));
        let mut bytes = encode_planes(&[&f], TAG_SCALAR).unwrap();
        bytes.pop();
        assert!(decode_planes(&bytes).is_err());
    }

    #[test]
    fn csv_and_mask_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 * 0.1 - j as f64 / 3.0);
        let p = dir.path().join("f.csv");
        write_csv(&p, &f).unwrap();
        assert_eq!(read_csv(&p).unwrap(), f);

        let m = Array2::from_shape_fn((2, 5), |(i, j)| (i + j) % 2 == 0);
        let p = dir.path().join("m.csv");
        write_mask_csv(&p, &m).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().next().unwrap(), "1,0,1,0,1");
        assert_eq!(read_mask_csv(&p).unwrap(), m);
    }

    #[test]
    fn tensor_file() {
        let dir = tempfile::tempdir().unwrap();
        let t = TensorField {
            m11: Array2::from_elem((2, 2), 1.0),
            m12: Array2::from_elem((2, 2), -0.5),
            m22: Array2::from_elem((2, 2), 0.25),
        };
        let p = dir.path().join("t.bin");
        write_tensor(&p, &t).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);
        assert!(read_field(&p).is_err());
    }

    proptest! {
        #[test]
        fn binary_roundtrip_is_f32_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            let f = Array2::from_shape_fn((rows, cols), |(i, j)| {
                let x = (seed ^ ((i * 31 + j) as u64)).wrapping_mul(0x9E3779B97F4A7C15);
                (x >> 11) as f64 / (1u64 << 53) as f64 * 200.0 - 100.0
            });
            let (planes, tag) = decode_planes(&encode_planes(&[&f], TAG_SCALAR).unwrap()).unwrap();
            prop_assert_eq!(tag, TAG_SCALAR);
            let expected = f.mapv(|v| v as f32 as f64);
            prop_assert_eq!(&planes[0], &expected);
        }
    }
}
