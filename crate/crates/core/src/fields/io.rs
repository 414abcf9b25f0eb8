//! Binary and CSV serialization of scalar fields.
//!
//! Binary layout, all little-endian 64-bit words:
//!
//! ```text
//! dim: u64
//! per axis: N_i: u64, L_i: f64, topology: u64 (0 periodic, 1 clamped), origin_i: f64
//! payload: ΠN_i × f64, row-major with axis 0 slowest
//! ```

use std::io::{Read, Write};

use super::{Grid, ScalarField, Topology};
use crate::error::{Error, Result};

pub fn write_field<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let grid = field.grid();
    out.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for axis in 0..grid.dim() {
        let flag: u64 = match grid.topology() {
            Topology::Periodic => 0,
            Topology::Clamped => 1,
        };
        out.write_all(&(grid.points()[axis] as u64).to_le_bytes())?;
        out.write_all(&grid.extents()[axis].to_le_bytes())?;
        out.write_all(&flag.to_le_bytes())?;
        out.write_all(&grid.origin()[axis].to_le_bytes())?;
    }
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn word<R: Read>(input: &mut R) -> Result<[u8; 8]> {
    let mut buf = [0u8; 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated field file: {e}")))?;
    Ok(buf)
}

pub fn read_field<R: Read>(mut input: R) -> Result<ScalarField> {
    let dim = u64::from_le_bytes(word(&mut input)?) as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim} in header")));
    }
    let mut points = Vec::with_capacity(dim);
    let mut extents = Vec::with_capacity(dim);
    let mut origin = Vec::with_capacity(dim);
    let mut topology = None;
    for axis in 0..dim {
        points.push(u64::from_le_bytes(word(&mut input)?) as usize);
        extents.push(f64::from_le_bytes(word(&mut input)?));
        let t = match u64::from_le_bytes(word(&mut input)?) {
            0 => Topology::Periodic,
            1 => Topology::Clamped,
            other => return Err(Error::Format(format!("topology flag {other} on axis {axis}"))),
        };
        if topology.is_some_and(|prev| prev != t) {
            return Err(Error::Format("mixed topologies are not supported".into()));
        }
        topology = Some(t);
        origin.push(f64::from_le_bytes(word(&mut input)?));
    }
    let grid = Grid::new(&points, &extents, &origin, topology.expect("dim >= 1"))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(f64::from_le_bytes(word(&mut input)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    ScalarField::new(grid, values)
}

/// One row per node: coordinates `x0..x{n-1}` then the value.
pub fn write_csv<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).chain(["value".to_string()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, v) in field.values().iter().enumerate() {
        let x = grid.coord(i);
        for c in &x[..dim] {
            write!(out, "{c:.16e},")?;
        }
        writeln!(out, "{v:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_field;

    #[test]
    fn binary_round_trip() {
        let g = Grid::new(&[8, 9], &[1.0, 2.5], &[-0.5, 3.0], Topology::Clamped).unwrap();
        let u = sample_field(|x| x[0] * x[1] - 0.1, &g).unwrap();
        let mut buf = Vec::new();
        write_field(&u, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 2 * 4 + 72));
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn rejects_bad_payloads() {
        let g = Grid::periodic(1, 8, 1.0).unwrap();
        let u = ScalarField::constant(g, 1.0).unwrap();
        let mut buf = Vec::new();
        write_field(&u, &mut buf).unwrap();
        assert!(matches!(read_field(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut longer = buf.clone();
        longer.push(0);
        assert!(read_field(longer.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = 7;
        assert!(read_field(bad.as_slice()).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = Grid::periodic(2, 8, 1.0).unwrap();
        let u = ScalarField::constant(g, 0.5).unwrap();
        let mut buf = Vec::new();
        write_csv(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1,value");
        assert_eq!(lines.len(), 65);
        assert_eq!(lines[2].split(',').count(), 3);
    }
}
