//! Dense row-major `f64` arrays.
//!
//! Deliberately small: explicit shapes, no broadcasting, no views. Layers call
//! the slice-level GEMM kernels at the bottom of this file directly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::shape("a shape needs at least one axis"));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::shape(format!("extent of axis {pos} is zero in {dims:?}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Size(format!("element count of {dims:?} overflows")))?;
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major flat offset of `coords`.
    pub fn offset(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.rank() {
            return Err(Error::shape(format!(
                "{} coordinates for rank-{} shape",
                coords.len(),
                self.rank()
            )));
        }
        let mut flat = 0;
        for (axis, (&c, &d)) in coords.iter().zip(&self.0).enumerate() {
            if c >= d {
                return Err(Error::shape(format!("coordinate {c} out of range {d} on axis {axis}")));
            }
            flat = flat * d + c;
        }
        Ok(flat)
    }

    /// Inverse of [`Shape::offset`].
    pub fn coords(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.numel() {
            return Err(Error::shape(format!("flat index {flat} out of range {}", self.numel())));
        }
        let mut out = vec![0; self.rank()];
        for (slot, &d) in out.iter_mut().zip(&self.0).rev() {
            *slot = flat % d;
            flat /= d;
        }
        Ok(out)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Shorthand for `zeros(Shape::new(dims)?)`.
    pub fn zeros_of(dims: &[usize]) -> Result<Self> {
        Ok(Self::zeros(Shape::new(dims)?))
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::shape(format!(
                "{} values do not fill shape {shape}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, coords: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.offset(coords)?])
    }

    pub fn set(&mut self, coords: &[usize], value: f64) -> Result<()> {
        let at = self.shape.offset(coords)?;
        self.data[at] = value;
        Ok(())
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn expect_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "operands have shapes {} and {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn elementwise(&self, other: &Tensor, op: BinaryOp) -> Result<Tensor> {
        self.expect_same_shape(other)?;
        let f: fn(f64, f64) -> f64 = match op {
            BinaryOp::Add => |a, b| a + b,
            BinaryOp::Sub => |a, b| a - b,
            BinaryOp::Mul => |a, b| a * b,
        };
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, BinaryOp::Mul)
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.dims(), other.dims()) else {
            return Err(Error::shape(format!(
                "matmul needs rank-2 operands, got {} and {}",
                self.shape, other.shape
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner extents differ: {} x {}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor::zeros(Shape::new([m, n])?);
        gemm_nn(m, k, n, &self.data, &other.data, &mut out.data);
        Ok(out)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "dot of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> Result<&[f64]> {
        let &[rows, cols] = self.dims() else {
            return Err(Error::shape(format!("row() on rank-{} tensor", self.shape.rank())));
        };
        if i >= rows {
            return Err(Error::shape(format!("row {i} out of range {rows}")));
        }
        Ok(&self.data[i * cols..(i + 1) * cols])
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `c[m,n] += a[m,k] * b[k,n]`.
///
/// Register-blocked, but each output still accumulates its `k` products in
/// ascending `k` order onto its starting value, the same order a naive triple
/// loop uses, so results match such a loop exactly.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    const MR: usize = 6;
    const NR: usize = 16;
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let full_n = n - n % NR;
    let full_m = m - m % MR;
    // column panels outermost so the k x NR slice of b stays hot across rows
    for j in (0..full_n).step_by(NR) {
        for i in (0..full_m).step_by(MR) {
            let mut acc = [[0.0f64; NR]; MR];
            for (r, row) in acc.iter_mut().enumerate() {
                row.copy_from_slice(&c[(i + r) * n + j..][..NR]);
            }
            for p in 0..k {
                let b_row: &[f64; NR] = b[p * n + j..][..NR].try_into().expect("NR slice");
                for (r, row) in acc.iter_mut().enumerate() {
                    let a_rp = a[(i + r) * k + p];
                    for (cv, &bv) in row.iter_mut().zip(b_row) {
                        *cv += a_rp * bv;
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                c[(i + r) * n + j..][..NR].copy_from_slice(row);
            }
        }
        for i in full_m..m {
            let mut acc: [f64; NR] = c[i * n + j..][..NR].try_into().expect("NR slice");
            for p in 0..k {
                let a_ip = a[i * k + p];
                for (cv, &bv) in acc.iter_mut().zip(&b[p * n + j..][..NR]) {
                    *cv += a_ip * bv;
                }
            }
            c[i * n + j..][..NR].copy_from_slice(&acc);
        }
    }
    if full_n < n {
        let (j, w) = (full_n, n - full_n);
        for i in (0..full_m).step_by(MR) {
            let mut acc = [[0.0f64; NR]; MR];
            for (r, row) in acc.iter_mut().enumerate() {
                row[..w].copy_from_slice(&c[(i + r) * n + j..][..w]);
            }
            for p in 0..k {
                let b_row = &b[p * n + j..][..w];
                for (r, row) in acc.iter_mut().enumerate() {
                    let a_rp = a[(i + r) * k + p];
                    for (cv, &bv) in row[..w].iter_mut().zip(b_row) {
                        *cv += a_rp * bv;
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                c[(i + r) * n + j..][..w].copy_from_slice(&row[..w]);
            }
        }
        for i in full_m..m {
            for jj in j..n {
                let mut acc = c[i * n + jj];
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + jj];
                }
                c[i * n + jj] = acc;
            }
        }
    }
}

/// Row-major `[rows, cols]` to `[cols, rows]`.
pub fn transpose(rows: usize, cols: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for (r, row) in src[..rows * cols].chunks_exact(cols).enumerate() {
        for (cidx, &v) in row.iter().enumerate() {
            out[cidx * rows + r] = v;
        }
    }
    out
}

/// `c[m,n] += a[m,k] * b[n,k]^T`.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    gemm_nn(m, k, n, a, &transpose(n, k, b), c);
}

/// `c[m,n] += a[k,m]^T * b[k,n]`.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    gemm_nn(m, k, n, &transpose(k, m, a), b, c);
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::{SeededRng, Stream};

    fn random(dims: &[usize], rng: &mut SeededRng) -> Tensor {
        let n = dims.iter().product();
        Tensor::from_vec(dims, (0..n).map(|_| rng.symmetric(1.0)).collect()).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.dims()[0], a.dims()[1], b.dims()[1]);
        let mut out = Tensor::zeros_of(&[m, n]).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.get(&[i, p]).unwrap() * b.get(&[p, j]).unwrap();
                }
                out.set(&[i, j], acc).unwrap();
            }
        }
        out
    }

    #[test]
    fn zeros_examples() {
        assert_eq!(Tensor::zeros_of(&[2, 2]).unwrap().data(), &[0.0; 4]);
        assert_eq!(Tensor::zeros_of(&[1]).unwrap().data(), &[0.0]);
        let t = Tensor::zeros_of(&[3, 1, 1, 1]).unwrap();
        assert_eq!(t.data(), &[0.0; 3]);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(Shape::new([usize::MAX, 2]), Err(Error::Size(_))));
        assert!(matches!(Shape::new([3, 0]), Err(Error::Shape(_))));
        assert!(matches!(Shape::new(Vec::new()), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_examples() {
        let a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        let c = Tensor::from_vec(&[2], vec![2.0, 3.0]).unwrap();
        let d = Tensor::from_vec(&[2], vec![0.0, 5.0]).unwrap();
        assert_eq!(c.mul(&d).unwrap().data(), &[0.0, 15.0]);
        let e = Tensor::zeros_of(&[3]).unwrap();
        assert!(matches!(a.add(&e), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_examples() {
        let mut rng = SeededRng::new(11, Stream::Test);
        let x = random(&[3, 4], &mut rng);
        let mut eye = Tensor::zeros_of(&[3, 3]).unwrap();
        for i in 0..3 {
            eye.set(&[i, i], 1.0).unwrap();
        }
        assert_eq!(eye.matmul(&x).unwrap(), x);

        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);
        assert!(matches!(a.matmul(&x), Err(Error::Shape(_))));

        let a = random(&[5, 7], &mut rng);
        let b = random(&[7, 3], &mut rng);
        let got = a.matmul(&b).unwrap();
        let want = naive_matmul(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn transposed_kernels_agree_with_matmul() {
        let mut rng = SeededRng::new(12, Stream::Test);
        let a = random(&[4, 6], &mut rng);
        let b = random(&[6, 5], &mut rng);
        let want = naive_matmul(&a, &b);

        // b^T stored as [5,6]
        let mut bt = vec![0.0; 30];
        for p in 0..6 {
            for j in 0..5 {
                bt[j * 6 + p] = b.get(&[p, j]).unwrap();
            }
        }
        let mut c = vec![0.0; 20];
        gemm_nt(4, 6, 5, a.data(), &bt, &mut c);
        for (g, w) in c.iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-12);
        }

        let mut at = vec![0.0; 24];
        for i in 0..4 {
            for p in 0..6 {
                at[p * 4 + i] = a.get(&[i, p]).unwrap();
            }
        }
        let mut c = vec![0.0; 20];
        gemm_tn(4, 6, 5, &at, b.data(), &mut c);
        for (g, w) in c.iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn dot_and_norm() {
        let e1 = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let e2 = Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        assert_eq!(e1.dot(&e2).unwrap(), 0.0);
        assert_eq!(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap().norm(), 5.0);
        assert!(e1.dot(&Tensor::zeros_of(&[3]).unwrap()).is_err());

        let mut rng = SeededRng::new(13, Stream::Test);
        for len in 1..40 {
            let v = random(&[len], &mut rng);
            assert!((v.dot(&v).unwrap() - v.norm().powi(2)).abs() <= 1e-12);
        }
    }

    fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..6, 1..=4)
    }

    proptest! {
        #[test]
        fn offset_coords_round_trip(dims in dims_strategy()) {
            let shape = Shape::new(dims.clone()).unwrap();
            for flat in 0..shape.numel() {
                let c = shape.coords(flat).unwrap();
                prop_assert_eq!(shape.offset(&c).unwrap(), flat);
            }
            if dims.len() == 3 {
                let (j, k) = (dims[1], dims[2]);
                let c = [dims[0] - 1, j - 1, k - 1];
                prop_assert_eq!(shape.offset(&c).unwrap(), (c[0] * j + c[1]) * k + c[2]);
            }
        }

        #[test]
        fn matmul_matches_triple_loop(m in 1usize..=16, k in 1usize..=16, n in 1usize..=16, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed, Stream::Test);
            let a = random(&[m, k], &mut rng);
            let b = random(&[k, n], &mut rng);
            let got = a.matmul(&b).unwrap();
            let want = naive_matmul(&a, &b);
            for (g, w) in got.data().iter().zip(want.data()) {
                prop_assert!((g - w).abs() <= 1e-12);
            }
        }

        #[test]
        fn elementwise_commutes_with_permutation(
            values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50),
            seed in any::<u64>(),
        ) {
            let n = values.len();
            let a = Tensor::from_vec(&[n], values.iter().map(|v| v.0).collect()).unwrap();
            let b = Tensor::from_vec(&[n], values.iter().map(|v| v.1).collect()).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            SeededRng::new(seed, Stream::Test).shuffle(&mut perm);
            let permute = |t: &Tensor| {
                Tensor::from_vec(&[n], perm.iter().map(|&i| t.data()[i]).collect()).unwrap()
            };
            for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
                let direct = permute(&a.elementwise(&b, op).unwrap());
                let via = permute(&a).elementwise(&permute(&b), op).unwrap();
                prop_assert_eq!(direct, via);
            }
        }
    }
}
