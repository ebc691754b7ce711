//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PATN" | version: u32 | tensor count: u32
//! per tensor: name length: u32 | name bytes (UTF-8) | rank: u32 | dims: u64 × rank | f64 × numel
//! ```

use std::io::{Read, Write};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PATN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamSet) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Compatibility(format!(
            "bad checkpoint magic {:?}",
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Compatibility(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let count = read_u32(&mut r)?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| Error::Compatibility(format!("tensor name is not UTF-8: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        set.insert(name, Tensor::new(shape, data)?);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let mut set = ParamSet::new();
        set.insert("ab", Tensor::new(vec![1, 2], vec![1.5, -2.0]).unwrap());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &set).unwrap();
        assert_eq!(&buf[0..4], b"PATN");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..16], &2u32.to_le_bytes());
        assert_eq!(&buf[16..18], b"ab");
        assert_eq!(&buf[18..22], &2u32.to_le_bytes());
        assert_eq!(&buf[22..30], &1u64.to_le_bytes());
        assert_eq!(&buf[30..38], &2u64.to_le_bytes());
        assert_eq!(&buf[38..46], &1.5f64.to_le_bytes());
        assert_eq!(buf.len(), 54);
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), set);
    }

    #[test]
    fn rejects_wrong_magic() {
        let buf = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00";
        assert!(matches!(
            read_checkpoint(&buf[..]),
            Err(Error::Compatibility(_))
        ));
    }
}
