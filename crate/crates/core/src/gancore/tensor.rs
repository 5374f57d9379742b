//! Dense row-major tensors and the raw kernels behind the tape ops.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of the engine (`f32` for training, `f64` for
/// gradient checks).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + AddAssign + MulAssign + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` with arbitrary strides (matrixmultiply conventions).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        c: &mut [Self],
    );

    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap()
    }

    fn f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap()
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                // SAFETY: slices cover the m×k, k×n and m×n extents addressed by the strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        0.0,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} vs len {}", data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "bad reshape to {shape:?}");
        self.shape = shape.to_vec();
        self
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().cloned().sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::of(x.f64())).collect(),
        }
    }

    /// Rows `idx` of a tensor whose first axis is the batch axis.
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let row = self.data.len() / self.shape[0].max(1);
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor { shape, data }
    }
}

/// Matrix product of 2-D tensors with optional transposition of either side.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Tensor<T> {
    assert_eq!(a.shape.len(), 2, "matmul lhs must be 2-D, got {:?}", a.shape);
    assert_eq!(b.shape.len(), 2, "matmul rhs must be 2-D, got {:?}", b.shape);
    let (ar, ac) = (a.shape[0], a.shape[1]);
    let (br, bc) = (b.shape[0], b.shape[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dims: {:?}{} x {:?}{}", a.shape, ta, b.shape, tb);
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = vec![T::zero(); m * n];
    if m > 0 && n > 0 && k > 0 {
        T::gemm(m, k, n, &a.data, rsa, csa, &b.data, rsb, csb, &mut out);
    }
    Tensor { shape: vec![m, n], data: out }
}

/// Geometry of a 2-D convolution window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.height + 2 * self.pad - self.kernel) / self.stride + 1,
            (self.width + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    pub fn image_shape(&self) -> Vec<usize> {
        vec![self.batch, self.channels, self.height, self.width]
    }

    pub fn cols_shape(&self) -> Vec<usize> {
        let (ho, wo) = self.out_hw();
        vec![self.channels * self.kernel * self.kernel, self.batch * ho * wo]
    }

    /// Visits every contiguous run of in-bounds taps as
    /// `(column-matrix start, image start, run length)`; consecutive
    /// elements of a run are 1 apart in the column matrix and `stride` apart
    /// in the image.
    #[inline]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ho, wo) = self.out_hw();
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let ncols = self.batch * ho * wo;
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    // ox range with 0 <= ox*s + kj - p < width
                    let ox_lo = if kj >= p { 0 } else { (p - kj + s - 1) / s };
                    let ox_end = if self.width + p > kj { ((self.width + p - kj - 1) / s + 1).min(wo) } else { 0 };
                    if ox_end <= ox_lo {
                        continue;
                    }
                    for n in 0..self.batch {
                        let img = (n * self.channels + c) * self.height * self.width;
                        for oy in 0..ho {
                            let y = oy * s + ki;
                            if y < p || y - p >= self.height {
                                continue;
                            }
                            let col0 = (n * ho + oy) * wo;
                            let src0 = img + (y - p) * self.width;
                            f(row * ncols + col0 + ox_lo, src0 + ox_lo * s + kj - p, ox_end - ox_lo);
                        }
                    }
                }
            }
        }
    }
}

/// `[N, C, H, W] → [C·k·k, N·Ho·Wo]` (im2col).
pub fn unfold<T: Scalar>(x: &Tensor<T>, g: &ConvGeom) -> Tensor<T> {
    assert_eq!(x.shape, g.image_shape(), "unfold input shape");
    let shape = g.cols_shape();
    let mut out = vec![T::zero(); shape.iter().product()];
    let st = g.stride;
    g.for_each_run(|dst, src, len| {
        let d = &mut out[dst..dst + len];
        if st == 1 {
            d.copy_from_slice(&x.data[src..src + len]);
        } else {
            for (o, v) in d.iter_mut().zip(x.data[src..].iter().step_by(st)) {
                *o = *v;
            }
        }
    });
    Tensor { shape, data: out }
}

/// Adjoint of [`unfold`]: scatter-adds columns back into `[N, C, H, W]`.
pub fn fold<T: Scalar>(cols: &Tensor<T>, g: &ConvGeom) -> Tensor<T> {
    assert_eq!(cols.shape, g.cols_shape(), "fold input shape");
    let shape = g.image_shape();
    let mut out = vec![T::zero(); shape.iter().product()];
    let st = g.stride;
    g.for_each_run(|src, dst, len| {
        let c = &cols.data[src..src + len];
        for (o, v) in out[dst..].iter_mut().step_by(st).zip(c) {
            *o += *v;
        }
    });
    Tensor { shape, data: out }
}

/// `[A, B, L] → [B, A, L]`.
pub fn swap01<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (a, b, l) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut out = Vec::with_capacity(x.data.len());
    for j in 0..b {
        for i in 0..a {
            let s = (i * b + j) * l;
            out.extend_from_slice(&x.data[s..s + l]);
        }
    }
    Tensor {
        shape: vec![b, a, l],
        data: out,
    }
}

/// Per-channel sum of a `[N, C, ...]` tensor.
pub fn channel_sum<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c) = (x.shape[0], x.shape[1]);
    let inner = x.data.len() / (n * c).max(1);
    let mut out = vec![T::zero(); c];
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            let s = (b * c + ch) * inner;
            *o += x.data[s..s + inner].iter().cloned().sum::<T>();
        }
    }
    Tensor { shape: vec![c], data: out }
}

/// Broadcast a `[C]` vector over a `[N, C, ...]` shape.
pub fn channel_broadcast<T: Scalar>(v: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let (n, c) = (shape[0], shape[1]);
    assert_eq!(v.data.len(), c, "channel broadcast length");
    let inner: usize = shape[2..].iter().product();
    let mut out = Vec::with_capacity(n * c * inner);
    for _ in 0..n {
        for ch in 0..c {
            out.extend(core::iter::repeat(v.data[ch]).take(inner));
        }
    }
    Tensor {
        shape: shape.to_vec(),
        data: out,
    }
}

/// `[n, m] → [m]`.
pub fn sum_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let m = x.shape[1];
    let mut out = vec![T::zero(); m];
    for row in x.data.chunks_exact(m) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Tensor { shape: vec![m], data: out }
}

/// `[n, m] → [n]`.
pub fn sum_cols<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, m) = (x.shape[0], x.shape[1]);
    Tensor {
        shape: vec![n],
        data: x.data.chunks_exact(m.max(1)).map(|r| r.iter().cloned().sum()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec())
    }

    #[test]
    fn matmul_transpose_variants() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[3, 2], &[7., 8., 9., 10., 11., 12.]);
        let ab = matmul(&a, &b, false, false);
        assert_eq!(ab.data, vec![58., 64., 139., 154.]);
        let at = t(&[3, 2], &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(matmul(&at, &b, true, false).data, ab.data);
        let bt = t(&[2, 3], &[7., 9., 11., 8., 10., 12.]);
        assert_eq!(matmul(&a, &bt, false, true).data, ab.data);
        assert_eq!(matmul(&at, &bt, true, true).data, ab.data);
    }

    #[test]
    fn fold_is_adjoint_of_unfold() {
        // <unfold(x), y> == <x, fold(y)>
        let g = ConvGeom {
            batch: 2,
            channels: 3,
            height: 5,
            width: 6,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let x = Tensor::new(g.image_shape(), (0..180).map(|i| ((i * 37 % 11) as f64) - 5.0).collect());
        let ylen: usize = g.cols_shape().iter().product();
        let y = Tensor::new(g.cols_shape(), (0..ylen).map(|i| ((i * 13 % 7) as f64) - 3.0).collect());
        let lhs: f64 = unfold(&x, &g).data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&fold(&y, &g).data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn unfold_matches_direct_convolution() {
        let g = ConvGeom {
            batch: 1,
            channels: 1,
            height: 4,
            width: 4,
            kernel: 2,
            stride: 2,
            pad: 0,
        };
        let x = Tensor::new(g.image_shape(), (0..16).map(|v| v as f64).collect());
        let w = t(&[1, 4], &[1., 1., 1., 1.]);
        let y = matmul(&w, &unfold(&x, &g), false, false);
        assert_eq!(y.data, vec![10., 18., 42., 50.]);
    }

    #[test]
    fn channel_helpers() {
        let x = Tensor::new(vec![2, 2, 1, 2], vec![1., 2., 3., 4., 5., 6., 7., 8.]);
        assert_eq!(channel_sum(&x).data, vec![14., 22.]);
        let b = channel_broadcast(&t(&[2], &[1., 2.]), &[2, 2, 1, 2]);
        assert_eq!(b.data, vec![1., 1., 2., 2., 1., 1., 2., 2.]);
        let s = swap01(&Tensor::new(vec![2, 3, 1], vec![1., 2., 3., 4., 5., 6.]));
        assert_eq!(s.data, vec![1., 4., 2., 5., 3., 6.]);
    }
}
