//! On-disk reference index: `TIDX`, u16 version, u32 n, u32 d, u32 class
//! count, each class name as u32 length plus UTF-8 bytes, then n·d unit
//! vector entries as little-endian f32 and n u32 label ids.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ReferenceIndex;

pub const INDEX_MAGIC: &[u8; 4] = b"TIDX";
pub const INDEX_FORMAT_VERSION: u16 = 1;

fn u32_of(v: usize, what: &str) -> std::io::Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{what} exceeds u32")))
}

pub fn write_index<T: Scalar, W: Write>(index: &ReferenceIndex<T>, mut w: W) -> std::io::Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(INDEX_MAGIC);
    buf.extend_from_slice(&INDEX_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_of(index.len(), "row count")?);
    buf.extend_from_slice(&u32_of(index.dim(), "dimension")?);
    buf.extend_from_slice(&u32_of(index.classes().len(), "class count")?);
    for name in index.classes() {
        buf.extend_from_slice(&u32_of(name.len(), "class name")?);
        buf.extend_from_slice(name.as_bytes());
    }
    for r in 0..index.len() {
        for v in index.row(r) {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    for &l in index.labels() {
        buf.extend_from_slice(&u32_of(l, "label")?);
    }
    w.write_all(&buf)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::format("reference index", format!("truncated {what}")))?;
        Ok(b)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(what)?) as usize)
    }
}

pub fn read_index<T: Scalar, R: Read>(r: R) -> Result<ReferenceIndex<T>> {
    let bad = |reason: String| Error::format("reference index", reason);
    let mut c = Cursor { inner: r };
    if &c.take::<4>("magic")? != INDEX_MAGIC {
        return Err(bad("missing TIDX magic".into()));
    }
    let version = u16::from_le_bytes(c.take("version")?);
    if version != INDEX_FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = c.u32("row count")?;
    let dim = c.u32("dimension")?;
    let class_count = c.u32("class count")?;
    if n == 0 || dim == 0 {
        return Err(bad("index must hold at least one nonzero-dimension row".into()));
    }
    let mut classes = Vec::with_capacity(class_count.min(1 << 16));
    for _ in 0..class_count {
        let len = c.u32("class name length")?;
        let mut name = vec![0u8; len];
        c.inner
            .read_exact(&mut name)
            .map_err(|_| bad("truncated class name".into()))?;
        classes.push(String::from_utf8(name).map_err(|_| bad("class name is not UTF-8".into()))?);
    }
    let mut vectors = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        let v = f32::from_le_bytes(c.take("vector data")?);
        if !v.is_finite() {
            return Err(bad("non-finite vector entry".into()));
        }
        vectors.push(T::lit(v as f64));
    }
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let l = c.u32("label")?;
        if l >= classes.len() {
            return Err(bad(format!("row {row} has label {l} outside the class table")));
        }
        labels.push(l);
    }
    Ok(ReferenceIndex::from_parts(classes, dim, vectors, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triage::build_index;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let idx = build_index(vec!["ab".into()], &[vec![1.0f32]], &[0]).unwrap();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        assert_eq!(
            buf,
            [
                b'T', b'I', b'D', b'X', 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, //
                2, 0, 0, 0, b'a', b'b', 0x00, 0x00, 0x80, 0x3f, 0, 0, 0, 0,
            ]
        );
    }

    #[test]
    fn rejects_corrupt_files() {
        let idx = build_index(
            vec!["a".into(), "b".into()],
            &[vec![1.0f32, 0.0], vec![0.0, 1.0]],
            &[0, 1],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        assert!(read_index::<f32, _>(&buf[..buf.len() - 1]).is_err());
        let mut wrong_label = buf.clone();
        let last = wrong_label.len() - 4;
        wrong_label[last] = 7;
        assert!(read_index::<f32, _>(wrong_label.as_slice()).is_err());
        let mut wrong_magic = buf;
        wrong_magic[0] = b'X';
        assert!(read_index::<f32, _>(wrong_magic.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn f32_index_round_trips(rows in prop::collection::vec(prop::collection::vec(0.1f32..2.0, 3), 1..20)) {
            let labels: Vec<usize> = (0..rows.len()).map(|i| i % 2).collect();
            let idx = build_index(vec!["x".into(), "y".into()], &rows, &labels).unwrap();
            let mut buf = Vec::new();
            write_index(&idx, &mut buf).unwrap();
            let back: ReferenceIndex<f32> = read_index(buf.as_slice()).unwrap();
            prop_assert_eq!(back, idx);
        }
    }
}
