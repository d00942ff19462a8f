use std::path::Path;

use crate::error::{Error, Result};
use crate::frame_io::{read_frame_at, Plane, VideoSpec};

/// Writes `plane` as a binary 8-bit graymap. Samples deeper than 8 bits are
/// shifted right by `bit_depth - 8`.
pub fn write_pgm(plane: &Plane, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    let shift = plane.bit_depth().saturating_sub(8);
    let mut bytes = format!("P5\n{} {}\n255\n", plane.width(), plane.height()).into_bytes();
    bytes.extend(plane.data().iter().map(|&v| (v >> shift) as u8));
    std::fs::write(out, bytes).map_err(|e| Error::io(out, e))
}

/// Crops a `w`×`h` luma patch at (`x`, `y`) from frame `frame_index` of the
/// sequence at `path` and writes it as a graymap.
#[allow(clippy::too_many_arguments)]
pub fn dump_patch(
    path: impl AsRef<Path>,
    spec: &VideoSpec,
    frame_index: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    out: impl AsRef<Path>,
) -> Result<()> {
    if w == 0 || h == 0 || x + w > spec.width || y + h > spec.height {
        return Err(Error::Dimension(format!(
            "patch {w}x{h} at ({x},{y}) outside the {}x{} frame (need x+w <= {} and y+h <= {}, w,h >= 1)",
            spec.width, spec.height, spec.width, spec.height
        )));
    }
    let frame = read_frame_at(path, spec, frame_index)?;
    write_pgm(&frame.y.crop(x, y, w, h)?, out)
}
