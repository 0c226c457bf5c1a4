//! Binary grid dumps: one JSON header line `{"dims":…,"h":…,"lo":…,"dtype":…}` followed by the
//! row-major little-endian payload (last axis contiguous).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dims: Vec<usize>,
    pub h: f64,
    pub lo: Vec<f64>,
    /// `"f64"` or `"u8"`.
    pub dtype: String,
}

impl GridHeader {
    fn for_bbox(bbox: &BoundingBox, dtype: &str) -> Self {
        let lat = bbox.lattice();
        Self {
            dims: lat.dims().to_vec(),
            h: bbox.h(),
            lo: bbox.lo().to_vec(),
            dtype: dtype.into(),
        }
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }
}

fn write_header<W: Write>(w: &mut W, h: &GridHeader) -> Result<()> {
    serde_json::to_writer(&mut *w, h)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_field<W: Write>(mut w: W, bbox: &BoundingBox, values: &[f64]) -> Result<()> {
    let h = GridHeader::for_bbox(bbox, "f64");
    if values.len() != h.len() {
        return Err(Error::Misuse("field length does not match the grid".into()));
    }
    write_header(&mut w, &h)?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_mask<W: Write>(mut w: W, bbox: &BoundingBox, mask: &[bool]) -> Result<()> {
    let h = GridHeader::for_bbox(bbox, "u8");
    if mask.len() != h.len() {
        return Err(Error::Misuse("mask length does not match the grid".into()));
    }
    write_header(&mut w, &h)?;
    let buf: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
    w.write_all(&buf)?;
    Ok(())
}

/// Payload of a dump, widened to `f64` for masks.
pub fn read_grid<R: BufRead>(mut r: R) -> Result<(GridHeader, Vec<f64>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: GridHeader = serde_json::from_str(line.trim_end())?;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    let n = h.len();
    let values = match h.dtype.as_str() {
        "f64" if raw.len() == 8 * n => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        "u8" if raw.len() == n => raw.iter().map(|&b| b as f64).collect(),
        _ => return Err(Error::Config(format!("payload does not match header {line}"))),
    };
    Ok((h, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_and_mask_round_trip() {
        let b = BoundingBox::new(&[0.0, -1.0], &[1.0, 0.5], &[4, 6]).unwrap();
        let n = b.node_count();
        let vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.25 - 1.0).collect();
        let mut buf = Vec::new();
        write_field(&mut buf, &b, &vals).unwrap();
        let (h, back) = read_grid(&buf[..]).unwrap();
        assert_eq!(h.dims, vec![4, 6]);
        assert_eq!(h.h, 0.25);
        assert_eq!(back, vals);

        let mask: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let mut buf = Vec::new();
        write_mask(&mut buf, &b, &mask).unwrap();
        let (h, back) = read_grid(&buf[..]).unwrap();
        assert_eq!(h.dtype, "u8");
        assert!(back.iter().zip(&mask).all(|(v, m)| (*v == 1.0) == *m));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let b = BoundingBox::new(&[0.0], &[1.0], &[4]).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &b, &[0.0; 4]).unwrap();
        buf.pop();
        assert!(read_grid(&buf[..]).is_err());
    }
}
