//! Ensemble serialization.
//!
//! Binary layout (little-endian): `b"FDRV"`, version `u32`, N `u32`, T `u32`,
//! p `u32`, then N*T*p `f64` values in row-major (rep, t, component) order.

use std::io::{self, Read, Write};

use ndarray::Array3;

use super::paths::PathEnsemble;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FDRV";
pub const BINARY_VERSION: u32 = 1;

/// Formats a float in round-trip scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with header `rep,t,component,value`; t is 1-based.
pub fn write_csv<W: Write>(ens: &PathEnsemble, mut w: W) -> Result<()> {
    writeln!(w, "rep,t,component,value")?;
    for ((rep, ti, c), v) in ens.data.indexed_iter() {
        writeln!(w, "{rep},{},{c},{}", ti + 1, fmt_f64(*v))?;
    }
    Ok(())
}

fn u32_field(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n)
        .map_err(|_| Error::InvalidConfig(format!("{what} = {n} does not fit the binary header")))
}

pub fn write_binary<W: Write>(ens: &PathEnsemble, mut w: W) -> Result<()> {
    let (n, t, p) = ens.data.dim();
    w.write_all(MAGIC)?;
    for v in [
        BINARY_VERSION,
        u32_field(n, "N")?,
        u32_field(t, "T")?,
        u32_field(p, "p")?,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in ens.data.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads the array written by [`write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> Result<Array3<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad magic",
        )));
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 4];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word);
    }
    let [version, n, t, p] = header;
    if version != BINARY_VERSION {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported version {version}"),
        )));
    }
    let len = n as usize * t as usize * p as usize;
    let mut values = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Array3::from_shape_vec((n as usize, t as usize, p as usize), values)
        .map_err(|e| Error::Io(io::Error::new(io::ErrorKind::InvalidData, e.to_string())))
}
