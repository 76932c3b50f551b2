//! Dense real 1D/2D tensors in row-major order.
//!
//! A `Tensor` is the universal container for samples, atoms and coefficient
//! maps. Rank-1 tensors behave as a single row wherever a 2D view is needed,
//! so every spatial routine in the crate works on `(rows, cols)` pairs.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Spatial offset `(row, col)`; 1D signals always use row 0.
pub type Offset = [usize; 2];

pub const TENSOR_MAGIC: &[u8; 4] = b"CSKT";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating rank, extents, length and finiteness.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        validate_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expects {n} values, got {}", data.len()),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        })
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(&[r, c], rows.concat())
    }

    /// Internal constructor for values that are finite by construction.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(rows, cols)`; a 1D tensor of length n is `(1, n)`.
    pub fn dims2(&self) -> (usize, usize) {
        dims2(&self.shape)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (_, w) = self.dims2();
        self.data[row * w + col]
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data.iter().map(|v| v * c).collect();
        Tensor::new(&self.shape, data).expect("scaling by a finite factor")
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn l2_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn l0_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Unit-norm copy; `None` for the zero tensor.
    pub fn normalized(&self) -> Option<Tensor> {
        let n = self.l2_norm();
        (n > 0.0).then(|| self.scale(1.0 / n))
    }

    /// Copies the `shape`-sized window starting at `offset`.
    pub fn window(&self, offset: Offset, shape: &[usize]) -> Result<Tensor> {
        let (h, w) = self.dims2();
        let (ph, pw) = dims2(shape);
        if shape.len() != self.rank() || offset[0] + ph > h || offset[1] + pw > w {
            return Err(Error::InvalidArgument(format!(
                "window {shape:?} at {offset:?} does not fit in {:?}",
                self.shape
            )));
        }
        let mut data = Vec::with_capacity(ph * pw);
        for r in 0..ph {
            let start = (offset[0] + r) * w + offset[1];
            data.extend_from_slice(&self.data[start..start + pw]);
        }
        Ok(Tensor::from_parts_unchecked(shape.to_vec(), data))
    }

    /// Returns a zero frame of `frame_shape` with `self` written at `offset`.
    pub fn placed_in(&self, frame_shape: &[usize], offset: Offset) -> Result<Tensor> {
        let mut frame = Tensor::zeros(frame_shape)?;
        frame.add_window(offset, self, 1.0)?;
        Ok(frame)
    }

    /// `self[offset..] += c * patch`.
    pub fn add_window(&mut self, offset: Offset, patch: &Tensor, c: f64) -> Result<()> {
        let (h, w) = self.dims2();
        let (ph, pw) = patch.dims2();
        if patch.rank() != self.rank() || offset[0] + ph > h || offset[1] + pw > w {
            return Err(Error::InvalidArgument(format!(
                "patch {:?} at {offset:?} does not fit in {:?}",
                patch.shape, self.shape
            )));
        }
        for r in 0..ph {
            let dst = &mut self.data[(offset[0] + r) * w + offset[1]..][..pw];
            let src = &patch.data[r * pw..(r + 1) * pw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Tensor::new(&self.shape, data)
    }

    /// Writes the binary form: magic `CSKT`, u8 rank, u64 extents, f64 payload (LE).
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_u8(self.shape.len() as u8)?;
        for &e in &self.shape {
            w.write_u64::<LittleEndian>(e as u64)?;
        }
        for &v in &self.data {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        Self::read_after_magic(magic, r)
    }

    fn read_after_magic<R: Read>(magic: [u8; 4], mut r: R) -> Result<Tensor> {
        if &magic != TENSOR_MAGIC {
            return Err(Error::BadMagic {
                what: "tensor".into(),
                expected: u32::from_be_bytes(*TENSOR_MAGIC),
                actual: u32::from_be_bytes(magic),
            });
        }
        let rank = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u64::<LittleEndian>()? as usize);
        }
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        let mut data = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        Tensor::new(&shape, data)
    }
}

/// Writes a sequence of tensors back to back.
pub fn write_tensors<W: Write>(mut w: W, tensors: &[Tensor]) -> io::Result<()> {
    for t in tensors {
        t.write_to(&mut w)?;
    }
    Ok(())
}

/// Reads tensors until a clean end of stream.
pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            let n = r.read(&mut magic[got..])?;
            if n == 0 {
                break;
            }
            got += n;
        }
        match got {
            0 => return Ok(out),
            4 => out.push(Tensor::read_after_magic(magic, &mut r)?),
            _ => {
                return Err(Error::Truncated {
                    what: "tensor stream".into(),
                    expected: 4,
                    actual: got,
                })
            }
        }
    }
}

pub fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [h, w] => (*h, *w),
        _ => panic!("tensor rank must be 1 or 2, got {shape:?}"),
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be 1 or 2".into(),
        });
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn norms_and_dot() {
        assert_eq!(t(&[3.0, 4.0]).l2_norm(), 5.0);
        assert_eq!(t(&[0.0, 2.0, 0.0]).l0_count(), 1);
        assert_eq!(t(&[1.0, 2.0]).dot(&t(&[3.0, 4.0])).unwrap(), 11.0);
        assert_eq!(t(&[-1.0, 2.0]).l1_norm(), 3.0);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = t(&[1.0, 2.0]);
        let b = Tensor::zeros(&[2, 1]).unwrap();
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("[2]") && err.contains("[2, 1]"), "{err}");
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(Tensor::new(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[], vec![]).is_err());
        assert!(Tensor::new(&[1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::zeros(&[0, 3]).is_err());
    }

    #[test]
    fn window_and_place() {
        let img = Tensor::new(&[3, 3], (0..9).map(f64::from).collect()).unwrap();
        let w = img.window([1, 1], &[2, 2]).unwrap();
        assert_eq!(w.data(), &[4.0, 5.0, 7.0, 8.0]);
        let framed = w.placed_in(&[4, 4], [2, 0]).unwrap();
        assert_eq!(framed.get(2, 0), 4.0);
        assert_eq!(framed.get(3, 1), 8.0);
        assert_eq!(framed.sum(), w.sum());
        assert!(img.window([2, 2], &[2, 2]).is_err());
    }

    #[test]
    fn binary_layout_is_exact() {
        let x = Tensor::new(&[1, 2], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        x.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CSKT");
        assert_eq!(buf[4], 2);
        assert_eq!(&buf[5..13], &1u64.to_le_bytes());
        assert_eq!(&buf[13..21], &2u64.to_le_bytes());
        assert_eq!(&buf[21..29], &1.0f64.to_le_bytes());
        assert_eq!(&buf[29..37], &(-2.5f64).to_le_bytes());
        assert_eq!(buf.len(), 37);
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let x = t(&[1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[x.clone(), x]).unwrap();
        assert_eq!(read_tensors(&buf[..]).unwrap().len(), 2);
        assert!(read_tensors(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensors(&bad[..]), Err(Error::BadMagic { .. })));
    }

    proptest! {
        #[test]
        fn scale_is_homogeneous(v in prop::collection::vec(-1e3f64..1e3, 1..40), c in -50f64..50.0) {
            let x = Tensor::from_vec(v).unwrap();
            let lhs = x.scale(c).l2_norm();
            let rhs = c.abs() * x.l2_norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn serialization_round_trips(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1e6..1e6)).collect();
            let x = Tensor::new(&[h, w], data).unwrap();
            let mut buf = Vec::new();
            x.write_to(&mut buf).unwrap();
            let y = Tensor::read_from(&buf[..]).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}
