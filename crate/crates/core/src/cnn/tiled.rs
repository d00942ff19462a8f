use rayon::prelude::*;

use super::network::Network;
use crate::error::{Error, Result};
use crate::frame_io::Plane;

/// Runs `net` over `tile`×`tile` output regions, each computed from an input
/// window extended by `overlap` samples per side. Only each tile's interior
/// is kept, so with `overlap` ≥ the receptive radius the result matches
/// [`Network::apply_plane`] bit for bit.
pub fn tiled_apply(net: &Network, plane: &Plane, tile: usize, overlap: usize) -> Result<Plane> {
    let radius = net.receptive_radius().ok_or_else(|| {
        Error::Config("network is not tileable: it has strided or size-changing convolutions".into())
    })?;
    if overlap < radius {
        return Err(Error::Config(format!(
            "tile overlap {overlap} is below the receptive-field radius; need at least {radius}"
        )));
    }
    if tile == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    let (w, h) = plane.dims();
    if tile >= w && tile >= h {
        return net.apply_plane(plane);
    }
    let origins: Vec<(usize, usize)> = (0..h)
        .step_by(tile)
        .flat_map(|y| (0..w).step_by(tile).map(move |x| (x, y)))
        .collect();
    let results: Vec<((usize, usize, usize, usize), Plane)> = origins
        .par_iter()
        .map(|&(x, y)| {
            let cw = tile.min(w - x);
            let ch = tile.min(h - y);
            let x0 = x.saturating_sub(overlap);
            let y0 = y.saturating_sub(overlap);
            let x1 = (x + cw + overlap).min(w);
            let y1 = (y + ch + overlap).min(h);
            let window = plane.crop(x0, y0, x1 - x0, y1 - y0)?;
            let out = net.apply_plane(&window)?;
            Ok(((x, y, cw, ch), out.crop(x - x0, y - y0, cw, ch)?))
        })
        .collect::<Result<_>>()?;
    let mut out = Plane::new(w, h, plane.bit_depth());
    for ((x, y, cw, ch), part) in results {
        for row in 0..ch {
            let dst = (y + row) * w + x;
            out.data_mut()[dst..dst + cw].copy_from_slice(part.row(row));
        }
    }
    Ok(out)
}
