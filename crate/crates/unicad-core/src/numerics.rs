//! Dense-tensor arithmetic with deterministic reduction order.
//!
//! Everything is row-major and loop-based: every contraction sums in
//! ascending index order, so identical inputs produce bit-identical outputs
//! across runs and across batch shapes. That exactness is load-bearing — the
//! rank-padding and sequence-padding guarantees elsewhere in the crate reduce
//! to "adding a zero term in ascending order changes nothing".
//!
//! Storage precision is single (`f32`); the trainer's gradient checks run the
//! same code in double via the [`Scalar`] type parameter.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Additive penalty for masked logits; large enough to absorb any real logit
/// and underflow exp() to exactly zero, without producing NaN the way a true
/// -inf would.
const MASK_PENALTY: f64 = -1e30;

/// Real scalar the tensor stack is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Gauss error function; backs the exact-CDF GELU.
    fn erf(self) -> Self;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> f32 {
        // erff is only ~1 ulp worse, but going through f64 keeps the f32 and
        // f64 graphs consistent for the finite-difference checks.
        libm::erf(self as f64) as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> f64 {
        libm::erf(self)
    }
}

/// Contiguous row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} scalars, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Tensor {
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
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

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[T] {
        debug_assert_eq!(self.ndim(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        debug_assert_eq!(self.ndim(), 2);
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data reinterpreted under a new shape of equal volume.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    /// Precision conversion; `f32 -> f64` is exact.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

fn check_2d<T: Scalar>(t: &Tensor<T>, name: &str) -> Result<(usize, usize)> {
    if t.ndim() != 2 {
        return Err(Error::Shape(format!("{} must be 2-D, got {:?}", name, t.shape())));
    }
    Ok((t.dim(0), t.dim(1)))
}

/// `c[i][j] = sum_t a[i][t] * b[t][j]`, summed in ascending `t`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = check_2d(a, "a")?;
    let (k2, n) = check_2d(b, "b")?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul {}x{} by {}x{}", m, k, k2, n)));
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (t, &av) in arow.iter().enumerate() {
            let brow = &b.data[t * n..(t + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `c = a * b^T` with `a: m x k`, `b: n x k`; ascending-`t` reduction.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = check_2d(a, "a")?;
    let (n, k2) = check_2d(b, "b")?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul_nt {}x{} by ({}x{})^T", m, k, n, k2)));
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for t in 0..k {
                acc = acc + arow[t] * brow[t];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `c = a^T * b` with `a: k x m`, `b: k x n`; ascending-`t` reduction.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = check_2d(a, "a")?;
    let (k2, n) = check_2d(b, "b")?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul_tn ({}x{})^T by {}x{}", k, m, k2, n)));
    }
    let mut out = vec![T::zero(); m * n];
    for t in 0..k {
        let arow = &a.data[t * m..(t + 1) * m];
        let brow = &b.data[t * n..(t + 1) * n];
        for i in 0..m {
            let av = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `x * w` plus an optional per-column bias broadcast over rows.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let mut y = matmul(x, w)?;
    if let Some(b) = bias {
        let n = y.dim(1);
        if b.len() != n {
            return Err(Error::Shape(format!("bias len {} vs cols {}", b.len(), n)));
        }
        for i in 0..y.dim(0) {
            let row = y.row_mut(i);
            for j in 0..n {
                row[j] = row[j] + b.data[j];
            }
        }
    }
    Ok(y)
}

/// Row-wise softmax over the masked logits.
///
/// `mask` has one entry per column and applies to every row. Masked positions
/// come out exactly zero; valid positions are `exp(l - max_valid) / sum_valid`.
pub fn softmax_masked<T: Scalar>(logits: &Tensor<T>, mask: &[u8]) -> Result<Tensor<T>> {
    let (rows, n) = check_2d(logits, "logits")?;
    if mask.len() != n {
        return Err(Error::Shape(format!("mask len {} vs cols {}", mask.len(), n)));
    }
    if !mask.iter().any(|&m| m != 0) {
        return Err(Error::Contract("softmax over an all-masked row".into()));
    }
    let penalty = T::of(MASK_PENALTY);
    let mut out = vec![T::zero(); rows * n];
    for i in 0..rows {
        let lrow = &logits.data[i * n..(i + 1) * n];
        let orow = &mut out[i * n..(i + 1) * n];
        let mut mx = T::neg_infinity();
        for j in 0..n {
            let adj = if mask[j] != 0 { lrow[j] } else { lrow[j] + penalty };
            if adj > mx {
                mx = adj;
            }
            orow[j] = adj;
        }
        let mut sum = T::zero();
        for v in orow.iter_mut() {
            *v = (*v - mx).exp();
            sum = sum + *v;
        }
        for (j, v) in orow.iter_mut().enumerate() {
            *v = if mask[j] != 0 { *v / sum } else { T::zero() };
        }
    }
    Tensor::new(vec![rows, n], out)
}

/// Per-row layer norm: `(x - mean) / sqrt(var + eps) * gamma + beta`.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    Ok(layer_norm_with_stats(x, gamma, beta, eps)?.0)
}

/// Layer norm that also returns `(mean, rstd)` per row for backward passes.
pub fn layer_norm_with_stats<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (rows, d) = check_2d(x, "x")?;
    if gamma.len() != d || beta.len() != d {
        return Err(Error::Shape(format!(
            "gamma/beta len {}/{} vs width {}",
            gamma.len(),
            beta.len(),
            d
        )));
    }
    if eps <= T::zero() {
        return Err(Error::Input("layer_norm eps must be positive".into()));
    }
    let inv_d = T::one() / T::of(d as f64);
    let mut out = vec![T::zero(); rows * d];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for i in 0..rows {
        let xrow = &x.data[i * d..(i + 1) * d];
        let mut mean = T::zero();
        for &v in xrow {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = T::zero();
        for &v in xrow {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rstd = T::one() / (var + eps).sqrt();
        let orow = &mut out[i * d..(i + 1) * d];
        for j in 0..d {
            orow[j] = (xrow[j] - mean) * rstd * gamma.data[j] + beta.data[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    Ok((Tensor::new(vec![rows, d], out)?, means, rstds))
}

/// Exact Gaussian-CDF GELU: `x * Phi(x)` with `Phi(x) = (1 + erf(x/sqrt(2)))/2`.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data.iter_mut() {
        *v = gelu_scalar(*v);
    }
    out
}

#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    x * half * (T::one() + (x * inv_sqrt2).erf())
}

/// d/dx of the exact GELU: `Phi(x) + x * phi(x)`.
#[inline]
pub fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = T::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let phi_cdf = half * (T::one() + (x * inv_sqrt2).erf());
    let pdf = inv_sqrt_2pi * (-(x * x) * half).exp();
    phi_cdf + x * pdf
}

/// Elementwise sum of two same-shape tensors.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("add {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape.clone(), data)
}

/// 2-D transpose.
pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = check_2d(a, "a")?;
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

// --- .uten tensor file format ------------------------------------------------
//
//   magic   b"UTEN"
//   version u32 = 1 (LE)
//   ndim    u8
//   dims    ndim x u32 (LE)
//   data    f32 (LE), row-major

const UTEN_MAGIC: &[u8; 4] = b"UTEN";
const UTEN_VERSION: u32 = 1;

pub fn write_uten(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(UTEN_MAGIC)?;
    w.write_all(&UTEN_VERSION.to_le_bytes())?;
    w.write_all(&[t.ndim() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_uten(path: &Path) -> Result<Tensor<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::codec("magic", "file shorter than header"))?;
    if &magic != UTEN_MAGIC {
        return Err(Error::codec("magic", format!("expected UTEN, got {:?}", magic)));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| Error::codec("version", "truncated"))?;
    let version = u32::from_le_bytes(buf4);
    if version != UTEN_VERSION {
        return Err(Error::codec("version", format!("unsupported version {}", version)));
    }
    let mut nd = [0u8; 1];
    r.read_exact(&mut nd).map_err(|_| Error::codec("ndim", "truncated"))?;
    let ndim = nd[0] as usize;
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        r.read_exact(&mut buf4)
            .map_err(|_| Error::codec(format!("dims[{}]", i), "truncated"))?;
        shape.push(u32::from_le_bytes(buf4) as usize);
    }
    let count: usize = shape.iter().product();
    let mut raw = vec![0u8; count * 4];
    r.read_exact(&mut raw).map_err(|_| Error::codec("data", "truncated"))?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(shape, data)
}
