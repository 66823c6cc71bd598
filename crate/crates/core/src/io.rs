//! Binary field container: the header `"CHQF"`, version `u32`, `d u32`,
//! `n u32`, half-width `f64` and a complex flag `u8`, followed by the
//! little-endian `f64` samples in row-major order (re/im interleaved for
//! complex fields).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};

const MAGIC: &[u8; 4] = b"CHQF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Real(RealField),
    Complex(ComplexField),
}

impl Field {
    pub fn grid(&self) -> &Grid {
        match self {
            Field::Real(u) => &u.grid,
            Field::Complex(psi) => &psi.grid,
        }
    }
}

fn write_header<W: Write>(w: &mut W, g: &Grid, complex: bool) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.d() as u32).to_le_bytes())?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    w.write_all(&g.half_width().to_le_bytes())?;
    w.write_all(&[complex as u8])?;
    Ok(())
}

pub fn write_field<W: Write>(w: &mut W, field: &Field) -> Result<()> {
    match field {
        Field::Real(u) => {
            write_header(w, &u.grid, false)?;
            for v in &u.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Field::Complex(psi) => {
            write_header(w, &psi.grid, true)?;
            for v in &psi.values {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    Ok(buf)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    if &read_array::<_, 4>(r)? != MAGIC {
        return Err(Error::Format("missing CHQF magic".into()));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let d = u32::from_le_bytes(read_array(r)?) as usize;
    let n = u32::from_le_bytes(read_array(r)?) as usize;
    let half_width = read_f64(r)?;
    let complex = match read_array::<_, 1>(r)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad complex flag {other}"))),
    };
    let grid = Grid::new(d, half_width, n).map_err(|e| Error::Format(format!("bad grid in header: {e}")))?;
    let len = grid.len();
    let field = if complex {
        let values = (0..len).map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?))).collect::<Result<Vec<_>>>()?;
        Field::Complex(ComplexField::new(grid, values)?)
    } else {
        let values = (0..len).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        Field::Real(RealField::new(grid, values)?)
    };
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    Ok(field)
}

pub fn save(path: &Path, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Field> {
    read_field(&mut BufReader::new(File::open(path)?))
}
