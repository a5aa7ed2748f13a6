//! Dense row-major tensors over `f32` (training) or `f64` (verification).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Real scalar type a [`Tensor`] can hold.
///
/// Implemented for `f32` and `f64`; the GEMM entry point routes to the
/// matching `matrixmultiply` kernel.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    /// Short name used in debug output and checkpoint diagnostics.
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    /// `C = alpha * A * B + beta * C` with arbitrary row/column strides.
    ///
    /// # Safety
    /// The strided views must stay inside the buffers behind the pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const NAME: &'static str = $name;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

/// A dense N-dimensional array. Images use the `B x C x H x W` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} holds {n} elements but {} were supplied",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: &[usize], v: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        })
    }

    /// I.i.d. standard normal draws from `rng`.
    pub fn randn(shape: &[usize], rng: &mut RngState) -> Result<Self> {
        let n = check_shape(shape)?;
        let data = (0..n).map(|_| T::from_f64(rng.normal())).collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    // Internal constructor for shapes already known to be valid.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major strides, in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() || index.iter().zip(&self.shape).any(|(i, d)| i >= d) {
            return Err(Error::Contract(format!(
                "index {index:?} out of bounds for shape {:?}",
                self.shape
            )));
        }
        Ok(index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum())
    }

    pub fn at(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::ZERO, |acc, &x| acc + x)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::ZERO, |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts between precisions (f32 <-> f64).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    /// Slice `index` along axis 0, dropping that axis (`[B, ...] -> [...]`).
    pub fn index_first(&self, index: usize) -> Result<Self> {
        if self.rank() < 2 || index >= self.shape[0] {
            return Err(Error::Contract(format!(
                "cannot take item {index} of shape {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }

    /// Adds a leading axis of extent 1.
    pub fn unsqueeze0(&self) -> Self {
        let mut shape = Vec::with_capacity(self.rank() + 1);
        shape.push(1);
        shape.extend_from_slice(&self.shape);
        Self {
            shape,
            data: self.data.clone(),
        }
    }

    /// Concatenates along `axis`; every other extent must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        if axis >= first.rank() {
            return Err(Error::Contract(format!(
                "concat axis {axis} out of range for rank {}",
                first.rank()
            )));
        }
        for p in &parts[1..] {
            let compatible = p.rank() == first.rank()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &first.shape, &p.shape));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total_axis: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total_axis;
        Ok(Self { shape, data })
    }

    /// Inverse of [`Tensor::concat`]: splits along `axis` into the given extents.
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Self>> {
        if axis >= self.rank() || sizes.iter().sum::<usize>() != self.shape[axis] {
            return Err(Error::Contract(format!(
                "cannot split shape {:?} along axis {axis} into {sizes:?}",
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let full = self.shape[axis] * inner;
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            let mut data = Vec::with_capacity(outer * s * inner);
            for o in 0..outer {
                let base = o * full + start * inner;
                data.extend_from_slice(&self.data[base..base + s * inner]);
            }
            let mut shape = self.shape.clone();
            shape[axis] = s;
            out.push(Self { shape, data });
            start += s;
        }
        Ok(out)
    }
}
