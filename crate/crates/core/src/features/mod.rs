//! Binary-to-image feature extraction.
//!
//! A file is cut into fixed-length byte segments, each segment is reduced to
//! its Shannon entropy, and the resulting stream is rasterized into a square
//! entropy graph that the embedder consumes.

mod augment;
mod entropy;
mod format;
mod graph;

pub use augment::{augment_class, augment_rotations, rescale_crop, rotate90};
pub use entropy::{entropy_stream, segment_bytes, shannon_entropy, ByteSegment, EntropyStream};
pub use format::{read_graph, write_graph, GRAPH_FORMAT_VERSION, GRAPH_MAGIC};
pub use graph::{rasterize, EntropyGraph, GRAPH_SIDE};

/// Default segment length in bytes.
pub const DEFAULT_SEGMENT_LEN: usize = 200;

/// Corpus-level pixel mean used for graph normalization.
pub const DEFAULT_PIXEL_MEAN: f64 = 0.52206;

/// Corpus-level pixel standard deviation used for graph normalization.
pub const DEFAULT_PIXEL_STD: f64 = 0.08426;

/// Classes with fewer samples than this are augmented.
pub const DEFAULT_AUGMENT_MIN: usize = 30;

/// Full extraction: bytes to a raw (unnormalized) entropy graph.
pub fn extract_graph(bytes: &[u8], segment_len: usize, provenance: impl Into<String>) -> crate::Result<EntropyGraph> {
    let stream = entropy_stream(bytes, segment_len)?;
    let mut graph = rasterize(&stream)?;
    graph.provenance = provenance.into();
    Ok(graph)
}
