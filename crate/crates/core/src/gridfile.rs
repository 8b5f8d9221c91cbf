//! DWGRID1 binary grid files.
//!
//! Layout, all little-endian: the 7 magic bytes `DWGRID1`, then three f64
//! header values (delta, resolution, which: 0 = V_r, 1 = V_u), then the
//! (resolution + 1)² nodes in row-major order (row = y index), each node as
//! two f64 components.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::mollify::{CachedGrid, Which};

pub const MAGIC: &[u8; 7] = b"DWGRID1";

pub fn write_grid<W: Write>(mut out: W, grid: &CachedGrid, which: Which) -> Result<()> {
    out.write_all(MAGIC)?;
    let tag = match which {
        Which::Vr => 0.0,
        Which::Vu => 1.0,
    };
    for h in [grid.delta, grid.resolution as f64, tag] {
        out.write_all(&h.to_le_bytes())?;
    }
    let transposed;
    let nodes = match which {
        Which::Vr => &grid.nodes,
        Which::Vu => {
            transposed = grid.transposed_nodes();
            &transposed
        }
    };
    for v in nodes {
        out.write_all(&v.x.to_le_bytes())?;
        out.write_all(&v.y.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a grid file back as the V_r grid it encodes, plus the stored tile tag.
pub fn read_grid<R: Read>(mut input: R) -> Result<(CachedGrid, Which)> {
    let mut magic = [0u8; 7];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::GridFormat("file shorter than the magic bytes".into()))?;
    if &magic != MAGIC {
        return Err(Error::GridFormat("bad magic bytes".into()));
    }
    let mut f = [0u8; 8];
    let mut next = |input: &mut R| -> Result<f64> {
        input
            .read_exact(&mut f)
            .map_err(|_| Error::GridFormat("truncated grid file".into()))?;
        Ok(f64::from_le_bytes(f))
    };
    let delta = next(&mut input)?;
    let res = next(&mut input)?;
    let tag = next(&mut input)?;
    if !(res >= 4.0 && res.fract() == 0.0 && res < 1e6) {
        return Err(Error::GridFormat(format!("resolution {res} is not a valid grid size")));
    }
    let which = match tag {
        0.0 => Which::Vr,
        1.0 => Which::Vu,
        t => return Err(Error::GridFormat(format!("unknown tile tag {t}"))),
    };
    let res = res as usize;
    let count = (res + 1) * (res + 1);
    let mut nodes = Vec::with_capacity(count);
    for _ in 0..count {
        let x = next(&mut input)?;
        let y = next(&mut input)?;
        nodes.push(Vec2::new(x, y));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::GridFormat("trailing bytes after node data".into()));
    }
    let grid = CachedGrid::from_nodes(delta, res, nodes)?;
    let grid = match which {
        Which::Vr => grid,
        // the stored V_u array is its own transpose-swap inverse
        Which::Vu => {
            let nodes = grid.transposed_nodes();
            CachedGrid::from_nodes(delta, res, nodes)?
        }
    };
    Ok((grid, which))
}

pub fn save(path: &Path, grid: &CachedGrid, which: Which) -> Result<()> {
    write_grid(BufWriter::new(File::create(path)?), grid, which)
}

pub fn load(path: &Path) -> Result<(CachedGrid, Which)> {
    read_grid(BufReader::new(File::open(path)?))
}
