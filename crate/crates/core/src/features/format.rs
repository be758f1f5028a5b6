//! On-disk entropy graph: `ENTG`, u16 version, u16 width, u16 height,
//! u8 normalized flag, then `width * height` little-endian f32 pixels.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::EntropyGraph;

pub const GRAPH_MAGIC: &[u8; 4] = b"ENTG";
pub const GRAPH_FORMAT_VERSION: u16 = 1;

pub fn write_graph<W: Write>(graph: &EntropyGraph, mut w: W) -> std::io::Result<()> {
    let dim = |v: usize| {
        u16::try_from(v).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "graph side exceeds u16"))
    };
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&GRAPH_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dim(graph.width)?.to_le_bytes())?;
    w.write_all(&dim(graph.height)?.to_le_bytes())?;
    w.write_all(&[graph.normalized as u8])?;
    let mut buf = Vec::with_capacity(graph.pixels.len() * 4);
    for p in &graph.pixels {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_graph<R: Read>(mut r: R) -> Result<EntropyGraph> {
    let bad = |reason: &str| Error::format("entropy graph", reason);
    let mut header = [0u8; 11];
    r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if &header[..4] != GRAPH_MAGIC {
        return Err(bad("missing ENTG magic"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != GRAPH_FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let width = u16::from_le_bytes([header[6], header[7]]) as usize;
    let height = u16::from_le_bytes([header[8], header[9]]) as usize;
    let normalized = match header[10] {
        0 => false,
        1 => true,
        other => return Err(bad(&format!("normalized flag must be 0 or 1, got {other}"))),
    };
    let mut body = vec![0u8; width * height * 4];
    r.read_exact(&mut body).map_err(|_| bad("truncated pixel data"))?;
    let pixels = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut graph = EntropyGraph::new(width, height, pixels)?;
    graph.normalized = normalized;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let mut g = EntropyGraph::new(2, 1, vec![1.0, -0.5]).unwrap();
        g.normalized = true;
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(
            buf,
            [
                b'E', b'N', b'T', b'G', 1, 0, 2, 0, 1, 0, 1, //
                0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xbf,
            ]
        );
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_graph(&b"ENTX\x01\x00\x01\x00\x01\x00\x00\0\0\0\0"[..]).is_err());
        assert!(read_graph(&b"ENTG\x01\x00\x02\x00\x02\x00\x00\0\0\0\0"[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(w in 1usize..20, h in 1usize..20, norm in any::<bool>(), seed in any::<u32>()) {
            let pixels: Vec<f32> = (0..w * h).map(|k| ((k as u32).wrapping_mul(seed) % 1000) as f32 / 999.0).collect();
            let mut g = EntropyGraph::new(w, h, pixels).unwrap();
            g.normalized = norm;
            let mut buf = Vec::new();
            write_graph(&g, &mut buf).unwrap();
            let back = read_graph(buf.as_slice()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
