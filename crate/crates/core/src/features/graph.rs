use crate::error::{Error, Result};

use super::EntropyStream;

/// Side length of the square entropy graph.
pub const GRAPH_SIDE: usize = 224;

/// Entropy stream laid out as a row-major image.
///
/// Raw pixels lie in `[0, 1]` (entropy divided by 8). After
/// [`EntropyGraph::normalize`] they are standardized with corpus statistics
/// and `normalized` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyGraph {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub normalized: bool,
    pub provenance: String,
}

impl EntropyGraph {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("graph dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::arg(format!(
                "graph of {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            normalized: false,
            provenance: String::new(),
        })
    }

    pub fn filled(side: usize, value: f32) -> Self {
        Self {
            width: side,
            height: side,
            pixels: vec![value; side * side],
            normalized: false,
            provenance: String::new(),
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    /// `pixel' = (pixel - mean) / std`, applied exactly once.
    pub fn normalize(mut self, mean: f64, std: f64) -> Result<Self> {
        if self.normalized {
            return Err(Error::state(format!(
                "graph '{}' is already normalized",
                self.provenance
            )));
        }
        if !std.is_finite() || std <= 0.0 || !mean.is_finite() {
            return Err(Error::arg(format!(
                "normalization needs finite mean and std > 0, got mean={mean} std={std}"
            )));
        }
        for p in &mut self.pixels {
            *p = ((*p as f64 - mean) / std) as f32;
        }
        self.normalized = true;
        Ok(self)
    }
}

/// Divide by 8, resample piecewise-linearly to `GRAPH_SIDE²` points and fill
/// row-major.
pub fn rasterize(stream: &EntropyStream) -> Result<EntropyGraph> {
    rasterize_to(stream, GRAPH_SIDE)
}

pub(crate) fn rasterize_to(stream: &EntropyStream, side: usize) -> Result<EntropyGraph> {
    let values = &stream.values;
    if values.is_empty() {
        return Err(Error::EmptyInput("entropy stream has no values".into()));
    }
    let points = side * side;
    let n = values.len();
    let mut pixels = Vec::with_capacity(points);
    if n == 1 || points == 1 {
        pixels.resize(points, (values[0] / 8.0) as f32);
    } else {
        // Sample k sits at k * (n - 1) / (points - 1) in stream coordinates;
        // integer arithmetic keeps the equal-length case an exact copy.
        let denom = (points - 1) as u64;
        let span = (n - 1) as u64;
        for k in 0..points as u64 {
            let num = k * span;
            let i = (num / denom) as usize;
            let rem = num % denom;
            let v = if rem == 0 {
                values[i]
            } else {
                let t = rem as f64 / denom as f64;
                values[i] + (values[i + 1] - values[i]) * t
            };
            pixels.push((v / 8.0) as f32);
        }
    }
    EntropyGraph::new(side, side, pixels)
}
