//! Grid vector serialization.
//!
//! Text form:
//! ```text
//! rows cols categories
//! 0010...0
//! ```
//! one `0`/`1` character per bit in linear-index order.
//!
//! Binary container, all integers little-endian:
//! ```text
//! magic "ADGRID01"
//! u32 rows | u32 cols | u32 categories | u32 frame_width | u32 frame_height
//! u64 count
//! count x ( u32 bit_len | ceil(bit_len / 8) bytes, LSB-first )
//! ```

use std::fs;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use super::{GridSpec, GridVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ADGRID01";

pub fn to_text(grid: &GridVector) -> String {
    let s = grid.spec();
    format!("{} {} {}\n{}\n", s.rows, s.cols, s.categories, grid.to_bit_string())
}

/// Parses the text form. Frame dimensions are not part of the text format
/// and are taken from `frame`.
pub fn from_text(text: &str, frame: (u32, u32)) -> Result<GridVector> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty grid text".into()))?;
    let dims = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("bad grid header `{header}`: {e}")))?;
    let [rows, cols, categories] = dims[..] else {
        return Err(Error::Format(format!("grid header needs 3 fields, got `{header}`")));
    };
    let spec = GridSpec {
        rows,
        cols,
        categories,
        frame_width_px: frame.0,
        frame_height_px: frame.1,
    };
    spec.validate()?;
    let body: String = lines.collect();
    GridVector::from_bit_string(spec, &body)
}

fn pack(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= b << (i % 8);
    }
    out
}

fn unpack(bytes: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

pub fn write_container<W: Write>(mut w: W, spec: &GridSpec, grids: &[GridVector]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [spec.rows, spec.cols, spec.categories] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&spec.frame_width_px.to_le_bytes())?;
    w.write_all(&spec.frame_height_px.to_le_bytes())?;
    w.write_all(&(grids.len() as u64).to_le_bytes())?;
    for g in grids {
        w.write_all(&(g.len() as u32).to_le_bytes())?;
        w.write_all(&pack(g.bits()))?;
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_container<R: Read>(mut r: R) -> Result<(GridSpec, Vec<GridVector>)> {
    let fmt = |e: std::io::Error| Error::Format(format!("truncated grid container: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(fmt)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a grid container (bad magic)".into()));
    }
    let mut dims = [0u32; 5];
    for d in &mut dims {
        *d = read_u32(&mut r).map_err(fmt)?;
    }
    let spec = GridSpec {
        rows: dims[0] as usize,
        cols: dims[1] as usize,
        categories: dims[2] as usize,
        frame_width_px: dims[3],
        frame_height_px: dims[4],
    };
    spec.validate()?;
    let mut count = [0u8; 8];
    r.read_exact(&mut count).map_err(fmt)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut grids = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let len = read_u32(&mut r).map_err(fmt)? as usize;
        if len != spec.len() {
            return Err(Error::shape(format!(
                "container entry {i} has {len} bits, spec needs {}",
                spec.len()
            )));
        }
        let mut bytes = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bytes).map_err(fmt)?;
        grids.push(GridVector::from_bits(spec, unpack(&bytes, len))?);
    }
    Ok((spec, grids))
}

pub fn save_container(path: &Path, spec: &GridSpec, grids: &[GridVector]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_container(std::io::BufWriter::new(file), spec, grids).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: &Path) -> Result<(GridSpec, Vec<GridVector>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_container(std::io::BufReader::new(file))
}

/// Reads every grid of a multi-grid text file (blocks separated by blank lines).
pub fn read_text_grids<R: BufRead>(r: R, frame: (u32, u32)) -> Result<Vec<GridVector>> {
    let mut out = Vec::new();
    let mut block = String::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            if !block.is_empty() {
                out.push(from_text(&block, frame)?);
                block.clear();
            }
        } else {
            block.push_str(&line);
            block.push('\n');
        }
    }
    if !block.is_empty() {
        out.push(from_text(&block, frame)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ObjectCategory;
    use proptest::prelude::*;

    #[test]
    fn text_layout() {
        let spec = GridSpec::new(1, 2, 100, 100).unwrap();
        let g = GridVector::zeros(spec)
            .set_cell(&spec.cell(0, 1, ObjectCategory::Car).unwrap())
            .unwrap();
        let text = to_text(&g);
        assert_eq!(text, "1 2 8\n0000000001000000\n");
        assert_eq!(from_text(&text, (100, 100)).unwrap(), g);
    }

    #[test]
    fn container_rejects_garbage() {
        assert!(read_container(&b"NOTAGRID"[..]).is_err());
        let spec = GridSpec::default();
        let mut buf = Vec::new();
        write_container(&mut buf, &spec, &[GridVector::zeros(spec)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_container(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn container_round_trip(rows in 1usize..5, cols in 1usize..5, seeds in proptest::collection::vec(any::<u64>(), 0..6)) {
            let spec = GridSpec::new(rows, cols, 320, 240).unwrap();
            let grids: Vec<GridVector> = seeds.iter().map(|s| {
                let bits = (0..spec.len()).map(|i| ((s >> (i % 64)) & 1) as u8).collect();
                GridVector::from_bits(spec, bits).unwrap()
            }).collect();
            let mut buf = Vec::new();
            write_container(&mut buf, &spec, &grids).unwrap();
            let (spec2, back) = read_container(&buf[..]).unwrap();
            prop_assert_eq!(spec2, spec);
            prop_assert_eq!(back, grids.clone());
            let text: String = grids.iter().map(|g| to_text(g) + "\n").collect();
            prop_assert_eq!(read_text_grids(text.as_bytes(), (320, 240)).unwrap(), grids);
        }
    }
}
