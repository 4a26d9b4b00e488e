//! Little-endian binary dump of tables. The layout is described byte by
//! byte in `docs/binary-format.md`.

use super::{DulutPair, LutTable};
use crate::error::{Error, Result};

const TABLE_MAGIC: &[u8; 4] = b"FQLT";
const PAIR_MAGIC: &[u8; 4] = b"FQDP";
const VERSION: u8 = 1;

pub fn encode_table(t: &LutTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * t.entries().len());
    write_table(&mut out, t);
    out
}

fn write_table(out: &mut Vec<u8>, t: &LutTable) {
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&[VERSION, t.t_bit() as u8, t.i_bit() as u8, 0]);
    out.extend_from_slice(&(t.entries().len() as u32).to_le_bytes());
    out.extend_from_slice(&t.entry_min().to_le_bytes());
    out.extend_from_slice(&t.entry_max().to_le_bytes());
    for e in t.entries() {
        out.extend_from_slice(&e.to_le_bytes());
    }
}

pub fn encode_pair(p: &DulutPair) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PAIR_MAGIC);
    out.extend_from_slice(&[VERSION, 0, 0, 0]);
    out.extend_from_slice(&p.in_scale().to_le_bytes());
    out.extend_from_slice(&p.out_scale().to_le_bytes());
    write_table(&mut out, p.table1());
    write_table(&mut out, p.table2());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<[u8; 3]> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!(
                "expected magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let [version, a, b, c] = self.array::<4>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok([a, b, c])
    }

    fn table(&mut self) -> Result<LutTable> {
        let [t_bit, i_bit, _] = self.header(TABLE_MAGIC)?;
        let count = u32::from_le_bytes(self.array()?) as usize;
        let entry_min = i32::from_le_bytes(self.array()?);
        let entry_max = i32::from_le_bytes(self.array()?);
        if count > (1 << super::MAX_T_BIT) + 1 {
            return Err(Error::Format(format!("entry count {count} too large")));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            entries.push(i32::from_le_bytes(self.array()?));
        }
        let t = LutTable::new(t_bit.into(), i_bit.into(), entries)?;
        if (t.entry_min(), t.entry_max()) != (entry_min, entry_max) {
            return Err(Error::Format(format!(
                "entry bounds [{entry_min}, {entry_max}] disagree with i_bit {i_bit}"
            )));
        }
        Ok(t)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode_table(buf: &[u8]) -> Result<LutTable> {
    let mut r = Reader { buf, pos: 0 };
    let t = r.table()?;
    r.finish()?;
    Ok(t)
}

pub fn decode_pair(buf: &[u8]) -> Result<DulutPair> {
    let mut r = Reader { buf, pos: 0 };
    r.header(PAIR_MAGIC)?;
    let in_scale = f64::from_le_bytes(r.array()?);
    let out_scale = f64::from_le_bytes(r.array()?);
    let t1 = r.table()?;
    let t2 = r.table()?;
    r.finish()?;
    DulutPair::new(t1, t2, in_scale, out_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout_is_byte_exact() {
        let t = LutTable::identity(2, 4).unwrap();
        let bytes = encode_table(&t);
        let mut want = b"FQLT".to_vec();
        want.extend_from_slice(&[1, 2, 4, 0, 5, 0, 0, 0]);
        want.extend_from_slice(&(-8i32).to_le_bytes());
        want.extend_from_slice(&8i32.to_le_bytes());
        for e in [-8i32, -4, 0, 4, 8] {
            want.extend_from_slice(&e.to_le_bytes());
        }
        assert_eq!(bytes, want);
        assert_eq!(decode_table(&bytes).unwrap(), t);
    }

    #[test]
    fn pair_roundtrip() {
        let t1 = LutTable::identity(3, 8).unwrap();
        let t2 = LutTable::new(2, 8, vec![-128, -3, 0, 90, 128]).unwrap();
        let p = DulutPair::new(t1, t2, 0.15625, 1.0 / 128.0).unwrap();
        let bytes = encode_pair(&p);
        assert_eq!(&bytes[..4], b"FQDP");
        assert_eq!(decode_pair(&bytes).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_table(&LutTable::identity(2, 4).unwrap());
        assert!(decode_table(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_table(&extra).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode_table(&bad_magic).is_err());
        let mut bad_version = bytes;
        bad_version[4] = 9;
        assert!(matches!(decode_table(&bad_version), Err(Error::Format(_))));
    }
}
