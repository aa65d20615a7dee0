//! Little-endian binary arrays shared by state dumps and Wigner grids.
//!
//! Layout: magic `CQBA`, then u32 version (1), u32 kind (0 = complex128,
//! 1 = float64), u32 rank, rank × u64 extents, then the payload in row-major
//! order. A complex element is two f64 (re, im).

use std::io::{self, Read, Write};

use crate::fock::C64;

const MAGIC: &[u8; 4] = b"CQBA";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Complex(Vec<C64>),
    Real(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryArray {
    pub dims: Vec<usize>,
    pub payload: Payload,
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

pub fn write_array(w: &mut impl Write, a: &BinaryArray) -> io::Result<()> {
    let len: usize = a.dims.iter().product();
    let (kind, n) = match &a.payload {
        Payload::Complex(v) => (0u32, v.len()),
        Payload::Real(v) => (1u32, v.len()),
    };
    if n != len {
        return Err(bad("payload length does not match extents"));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&kind.to_le_bytes())?;
    w.write_all(&(a.dims.len() as u32).to_le_bytes())?;
    for &d in &a.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    match &a.payload {
        Payload::Complex(v) => {
            for z in v {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Payload::Real(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_array(r: &mut impl Read) -> io::Result<BinaryArray> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != MAGIC {
        return Err(bad("bad magic"));
    }
    if read_u32(r)? != VERSION {
        return Err(bad("unsupported version"));
    }
    let kind = read_u32(r)?;
    let rank = read_u32(r)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        dims.push(u64::from_le_bytes(b) as usize);
    }
    let len: usize = dims.iter().product();
    let payload = match kind {
        0 => {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                let re = read_f64(r)?;
                v.push(C64::new(re, read_f64(r)?));
            }
            Payload::Complex(v)
        }
        1 => Payload::Real((0..len).map(|_| read_f64(r)).collect::<io::Result<_>>()?),
        _ => return Err(bad("unknown element kind")),
    };
    Ok(BinaryArray { dims, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let a = BinaryArray { dims: vec![2, 3], payload: Payload::Complex((0..6).map(|k| C64::new(k as f64, -1.0)).collect()) };
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        assert_eq!(buf.len(), 4 + 12 + 16 + 6 * 16);
        assert_eq!(read_array(&mut buf.as_slice()).unwrap(), a);
        let bad_len = BinaryArray { dims: vec![2], payload: Payload::Real(vec![1.0]) };
        assert!(write_array(&mut Vec::new(), &bad_len).is_err());
    }
}
