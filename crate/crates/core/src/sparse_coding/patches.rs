use crate::error::{Error, Result};
use crate::tensor::{dims2, Offset, Tensor};

fn positions(extent: usize, patch: usize, stride: usize) -> usize {
    (extent - patch) / stride + 1
}

fn check(shape: &[usize], patch_shape: &[usize], stride: usize) -> Result<()> {
    let (h, w) = dims2(shape);
    let (ph, pw) = dims2(patch_shape);
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    if shape.len() != patch_shape.len() || ph > h || pw > w || ph == 0 || pw == 0 {
        return Err(Error::InvalidArgument(format!(
            "patch {patch_shape:?} does not fit in signal {shape:?}"
        )));
    }
    Ok(())
}

/// Number of sliding-window patches.
pub fn patch_count(shape: &[usize], patch_shape: &[usize], stride: usize) -> Result<usize> {
    check(shape, patch_shape, stride)?;
    let (h, w) = dims2(shape);
    let (ph, pw) = dims2(patch_shape);
    Ok(positions(h, ph, stride) * positions(w, pw, stride))
}

/// Top-left corners of every patch, row-major.
pub fn patch_offsets(shape: &[usize], patch_shape: &[usize], stride: usize) -> Result<Vec<Offset>> {
    check(shape, patch_shape, stride)?;
    let (h, w) = dims2(shape);
    let (ph, pw) = dims2(patch_shape);
    let mut out = Vec::new();
    for r in 0..positions(h, ph, stride) {
        for c in 0..positions(w, pw, stride) {
            out.push([r * stride, c * stride]);
        }
    }
    Ok(out)
}

/// All windows of `patch_shape` at the given stride, row-major.
pub fn extract_patches(y: &Tensor, patch_shape: &[usize], stride: usize) -> Result<Vec<Tensor>> {
    patch_offsets(y.shape(), patch_shape, stride)?
        .into_iter()
        .map(|o| y.window(o, patch_shape))
        .collect()
}
