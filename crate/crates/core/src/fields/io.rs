//! Field serialisation.
//!
//! Binary layout, little endian: the magic `DSFIELD1`, then `u64` values
//! `n_theta`, `n_q`, grid hash and node count, then one `f64` per node in node
//! order (axis first, then rings from the centre outward, θ fastest).

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use super::{GridSpec, ScalarField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DSFIELD1";

pub fn write_field(mut out: impl Write, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    out.write_all(MAGIC)?;
    for v in [grid.n_theta() as u64, grid.n_q() as u64, grid.hash(), grid.len() as u64] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * grid.len());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field(mut input: impl Read, grid: &Arc<GridSpec>) -> Result<ScalarField> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut header = [0u64; 4];
    for h in header.iter_mut() {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        *h = u64::from_le_bytes(b);
    }
    let [nt, nq, hash, len] = header;
    if nt as usize != grid.n_theta() || nq as usize != grid.n_q() || hash != grid.hash() {
        return Err(Error::GridMismatch);
    }
    if len as usize != grid.len() {
        return Err(Error::Format(format!("node count {len} does not match grid")));
    }
    let mut bytes = vec![0u8; 8 * grid.len()];
    input.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let field = ScalarField::from_values(grid, values)?;
    if !field.is_finite() {
        return Err(Error::NonFinite("reading field"));
    }
    Ok(field)
}

/// CSV with header `node,x,y,value`.
pub fn write_csv(mut out: impl Write, field: &ScalarField) -> Result<()> {
    writeln!(out, "node,x,y,value")?;
    for (k, (p, v)) in field.grid().points().iter().zip(field.values()).enumerate() {
        writeln!(out, "{k},{:e},{:e},{:e}", p[0], p[1], v)?;
    }
    Ok(())
}

pub fn read_csv(input: impl Read, grid: &Arc<GridSpec>) -> Result<ScalarField> {
    let mut values = vec![f64::NAN; grid.len()];
    for (line_no, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line_no == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("line {}: expected node,x,y,value", line_no + 1));
        if cols.len() != 4 {
            return Err(bad());
        }
        let node: usize = cols[0].trim().parse().map_err(|_| bad())?;
        let value: f64 = cols[3].trim().parse().map_err(|_| bad())?;
        *values.get_mut(node).ok_or(Error::GridMismatch)? = value;
    }
    let field = ScalarField::from_values(grid, values)?;
    if !field.is_finite() {
        return Err(Error::Format("missing or non-finite node values".into()));
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridParams;
    use crate::geometry::{BoundaryCurve, ShapeSpec};

    fn grid(nq: usize) -> Arc<GridSpec> {
        let curve = BoundaryCurve::build(ShapeSpec::Disk, 0.2, 128).unwrap();
        Arc::new(GridSpec::build(&curve, &GridParams::uniform(16, nq)).unwrap())
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let g = grid(6);
        let f = ScalarField::from_fn(&g, |p| p[0].sin() * p[1] + 0.1);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 40 + 8 * g.len());
        assert_eq!(read_field(buf.as_slice(), &g).unwrap(), f);
        let mut csv = Vec::new();
        write_csv(&mut csv, &f).unwrap();
        let back = read_csv(csv.as_slice(), &g).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn wrong_grid_is_rejected() {
        let f = ScalarField::constant(&grid(6), 1.0);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert!(matches!(read_field(buf.as_slice(), &grid(7)), Err(Error::GridMismatch)));
        buf[0] = b'X';
        assert!(matches!(read_field(buf.as_slice(), &grid(6)), Err(Error::Format(_))));
    }
}
