//! Field dumps: little-endian header followed by the raw values over the full grid box.
//!
//! Layout: magic `LSFD`, `u32` version, three `u32` cell counts, `f64` spacing, three `f64`
//! origin coordinates, `u8` complex flag, then one `f64` (real) or two `f64` (complex) per
//! cell in x-fastest order. Cells outside the domain hold NaN.

use super::{Grid, GridField};
use crate::{pt, Complex64, Error, Point, Result};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"LSFD";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub dims: [usize; 3],
    pub h: f64,
    pub origin: Point,
    pub complex: bool,
    /// Full-box values, `None` outside the domain.
    pub values: Vec<Option<Complex64>>,
}

impl FieldDump {
    pub fn from_field(f: &GridField) -> Self {
        let g: &Grid = &f.grid;
        let complex = f.values.iter().any(|v| v.im != 0.0);
        let values = (0..g.n_cells()).map(|c| f.at_cell(c)).collect();
        FieldDump { dims: g.dims, h: g.h, origin: g.origin, complex, values }
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.h.to_le_bytes())?;
        for a in 0..3 {
            w.write_all(&self.origin[a].to_le_bytes())?;
        }
        w.write_all(&[self.complex as u8])?;
        let mut buf = Vec::with_capacity(self.values.len() * if self.complex { 16 } else { 8 });
        for v in &self.values {
            let v = v.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            buf.extend_from_slice(&v.re.to_le_bytes());
            if self.complex {
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a field dump".into()));
        }
        let u32_ = |r: &mut dyn Read| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let f64_ = |r: &mut dyn Read| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let version = u32_(r)?;
        if version != VERSION {
            return Err(Error::Config(format!("unsupported dump version {version}")));
        }
        let dims = [u32_(r)? as usize, u32_(r)? as usize, u32_(r)? as usize];
        let h = f64_(r)?;
        let origin = pt(f64_(r)?, f64_(r)?, f64_(r)?);
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let complex = flag[0] != 0;
        let n = dims[0] * dims[1] * dims[2];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let re = f64_(r)?;
            let im = if complex { f64_(r)? } else { 0.0 };
            values.push(if re.is_nan() { None } else { Some(Complex64::new(re, im)) });
        }
        Ok(FieldDump { dims, h, origin, complex, values })
    }
}

pub fn write_field(path: &std::path::Path, f: &GridField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    FieldDump::from_field(f).write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &std::path::Path) -> Result<FieldDump> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    FieldDump::read(&mut r)
}
