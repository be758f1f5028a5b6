use rand::Rng;

use crate::error::{Error, Result};

use super::EntropyGraph;

/// Rotate a square graph 90 degrees clockwise.
pub fn rotate90(graph: &EntropyGraph) -> Result<EntropyGraph> {
    if !graph.is_square() {
        return Err(Error::arg(format!(
            "rotation needs a square graph, got {}x{}",
            graph.width, graph.height
        )));
    }
    let n = graph.width;
    let mut pixels = vec![0.0f32; n * n];
    for r in 0..n {
        for c in 0..n {
            pixels[r * n + c] = graph.pixels[(n - 1 - c) * n + r];
        }
    }
    Ok(EntropyGraph {
        pixels,
        ..graph.clone()
    })
}

/// The original graph followed by its 90, 180 and 270 degree rotations.
pub fn augment_rotations(graph: &EntropyGraph) -> Result<[EntropyGraph; 4]> {
    let r90 = rotate90(graph)?;
    let r180 = rotate90(&r90)?;
    let r270 = rotate90(&r180)?;
    let tag = |g: EntropyGraph, deg: u32| EntropyGraph {
        provenance: format!("{}#rot{deg}", graph.provenance),
        ..g
    };
    Ok([graph.clone(), tag(r90, 90), tag(r180, 180), tag(r270, 270)])
}

/// Crop a random window covering 80-100% of each side and stretch it back to
/// full size with bilinear sampling.
pub fn rescale_crop<R: Rng + ?Sized>(graph: &EntropyGraph, rng: &mut R) -> EntropyGraph {
    let (w, h) = (graph.width, graph.height);
    let scale: f64 = rng.gen_range(0.8..1.0);
    let cw = ((w as f64 * scale).round() as usize).clamp(1, w);
    let ch = ((h as f64 * scale).round() as usize).clamp(1, h);
    let x0 = rng.gen_range(0..=w - cw);
    let y0 = rng.gen_range(0..=h - ch);

    let sample_axis = |i: usize, out: usize, crop: usize, origin: usize| -> (usize, usize, f64) {
        let pos = if out > 1 {
            i as f64 * (crop - 1) as f64 / (out - 1) as f64
        } else {
            0.0
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(crop - 1);
        (origin + lo, origin + hi, pos - lo as f64)
    };

    let mut pixels = Vec::with_capacity(w * h);
    for r in 0..h {
        let (r0, r1, tr) = sample_axis(r, h, ch, y0);
        for c in 0..w {
            let (c0, c1, tc) = sample_axis(c, w, cw, x0);
            let top = graph.at(r0, c0) as f64 * (1.0 - tc) + graph.at(r0, c1) as f64 * tc;
            let bottom = graph.at(r1, c0) as f64 * (1.0 - tc) + graph.at(r1, c1) as f64 * tc;
            pixels.push((top * (1.0 - tr) + bottom * tr) as f32);
        }
    }
    EntropyGraph {
        width: w,
        height: h,
        pixels,
        normalized: graph.normalized,
        provenance: format!("{}#crop", graph.provenance),
    }
}

/// Grow a class to at least `floor` graphs: rotations of the originals
/// first, then random rescale-crops. Classes already at the floor are
/// returned unchanged.
pub fn augment_class<R: Rng + ?Sized>(
    graphs: Vec<EntropyGraph>,
    floor: usize,
    rng: &mut R,
) -> Result<Vec<EntropyGraph>> {
    if graphs.is_empty() || graphs.len() >= floor {
        return Ok(graphs);
    }
    let originals = graphs.len();
    let mut out = graphs;
    'rotations: for i in 0..originals {
        let [_, r90, r180, r270] = augment_rotations(&out[i])?;
        for g in [r90, r180, r270] {
            if out.len() >= floor {
                break 'rotations;
            }
            out.push(g);
        }
    }
    while out.len() < floor {
        let src = rng.gen_range(0..originals);
        let g = rescale_crop(&out[src], rng);
        out.push(g);
    }
    Ok(out)
}
