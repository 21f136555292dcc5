//! Binary index files.
//!
//! Little-endian layout: magic, version, model kind and parameters, grid
//! boundaries, error guarantee, records in cell order, blocks, pivot
//! distances. The model is refit from the boundaries on load.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CellBlock, CellTable, GridLayout};
use crate::models::{fit_model, ErrorGuarantee, ModelConfig, ModelKind};
use crate::point::Point;
use crate::query::SprigIndex;

const MAGIC: &[u8; 8] = b"SPRIGIDX";
const VERSION: u32 = 1;

pub fn encode(index: &SprigIndex) -> Vec<u8> {
    let mut w = Vec::new();
    let model = index.model();
    let config = model.config();
    w.extend_from_slice(MAGIC);
    w.extend_from_slice(&VERSION.to_le_bytes());
    w.push(model.kind().code());
    put_f64(&mut w, config.shepard_power);
    match config.rbf_width {
        Some(width) => {
            w.push(1);
            put_f64(&mut w, width);
        }
        None => {
            w.push(0);
            put_f64(&mut w, 0.0);
        }
    }
    put_u64(&mut w, config.rbf_mem_budget as u64);

    put_f64s(&mut w, index.grid().bx());
    put_f64s(&mut w, index.grid().by());

    let eg = index.error_guarantee();
    put_f64(&mut w, eg.eg);
    w.extend_from_slice(&eg.eg_x.to_le_bytes());
    w.extend_from_slice(&eg.eg_y.to_le_bytes());

    let table = index.table();
    put_u64(&mut w, table.data().len() as u64);
    for p in table.data() {
        put_f64(&mut w, p.x);
        put_f64(&mut w, p.y);
        put_u64(&mut w, p.id);
    }
    put_u64(&mut w, table.blocks().len() as u64);
    for b in table.blocks() {
        put_u64(&mut w, b.cell_id);
        w.extend_from_slice(&b.offset.to_le_bytes());
        w.extend_from_slice(&b.size.to_le_bytes());
        put_f64(&mut w, b.pivot.0);
        put_f64(&mut w, b.pivot.1);
    }
    put_f64s(&mut w, table.pivot_dists());
    w
}

pub fn decode(bytes: &[u8]) -> Result<SprigIndex> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not an index file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported index version {version}"
        )));
    }
    let code = r.u8()?;
    let kind = ModelKind::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown model code {code}")))?;
    let shepard_power = r.f64()?;
    let has_width = r.u8()? != 0;
    let width = r.f64()?;
    let rbf_mem_budget = usize::try_from(r.u64()?).unwrap_or(usize::MAX);
    let config = ModelConfig {
        shepard_power,
        rbf_width: has_width.then_some(width),
        rbf_mem_budget,
    };

    let bx = r.f64s()?;
    let by = r.f64s()?;
    let grid = GridLayout::from_boundaries(bx, by).map_err(|e| Error::Format(e.to_string()))?;

    let eg = ErrorGuarantee {
        eg: r.f64()?,
        eg_x: r.u32()?,
        eg_y: r.u32()?,
    };

    let count = r.len(24)?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let (x, y, id) = (r.f64()?, r.f64()?, r.u64()?);
        data.push(Point::new(x, y, id));
    }
    let count = r.len(32)?;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        blocks.push(CellBlock {
            cell_id: r.u64()?,
            offset: r.u32()?,
            size: r.u32()?,
            pivot: (r.f64()?, r.f64()?),
        });
    }
    let pivot_dists = r.f64s()?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after index".into()));
    }

    let table = CellTable::from_parts(grid.cell_count(), blocks, data, pivot_dists)?;
    for b in table.blocks() {
        let misplaced = table.data()[b.range()]
            .iter()
            .any(|p| !p.is_finite() || grid.cell_id_of(p) != b.cell_id);
        if misplaced {
            return Err(Error::Format(format!(
                "records misplaced in cell {}",
                b.cell_id
            )));
        }
    }
    let model = fit_model(&grid, kind, &config)?;
    SprigIndex::from_parts(grid, table, model, eg)
}

pub fn save(index: &SprigIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&encode(index))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<SprigIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(w: &mut Vec<u8>, values: &[f64]) {
    put_u64(w, values.len() as u64);
    for &v in values {
        put_f64(w, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated index file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }

    /// Element count of a sequence whose elements take `item` bytes each,
    /// rejected if the remaining input cannot hold it.
    fn len(&mut self, item: usize) -> Result<usize> {
        let count = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if count.saturating_mul(item as u64) > remaining {
            return Err(Error::Format("truncated index file".into()));
        }
        Ok(count as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let count = self.len(8)?;
        (0..count).map(|_| self.f64()).collect()
    }
}
