//! Dense row-major `f32` tensors and the few kernels the rest of the crate
//! needs. Storage is `f32`; every reduction accumulates in `f64`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that `data.len()` equals the product of `shape`.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Dimension("tensor rank must be at least 1".into()));
        }
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Row-major matrix from nested rows; all rows must be the same length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
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

    /// Number of rows along the first axis.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements in one slice along the first axis.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// The `i`-th slice along the first axis, flattened.
    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.first_non_finite() {
            Some(i) => Err(Error::NonFinite(format!(
                "{what}: element {i} is {}",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }

    /// Stacks equally shaped slices into a tensor with a leading sample axis.
    pub fn stack(item_shape: &[usize], rows: &[Vec<f32>]) -> Result<Self> {
        let mut shape = Vec::with_capacity(item_shape.len() + 1);
        shape.push(rows.len());
        shape.extend_from_slice(item_shape);
        let width: usize = item_shape.iter().product();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Dimension(format!(
                "row of length {} does not match item shape {item_shape:?}",
                bad.len()
            )));
        }
        Self::new(shape, rows.concat())
    }
}

/// Standard matrix product of an `m×k` and a `k×n` matrix.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Dimension(format!(
            "matmul needs two matrices, got shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "inner dimensions differ: {m}x{k} times {k2}x{n}"
        )));
    }
    let mut out = vec![0f32; m * n];
    let mut acc = vec![0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..k {
            let lhs = f64::from(a.data[i * k + p]);
            if lhs == 0.0 {
                continue;
            }
            let rhs = &b.data[p * n..(p + 1) * n];
            for (acc, &r) in acc.iter_mut().zip(rhs) {
                *acc += lhs * f64::from(r);
            }
        }
        for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = v as f32;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `f64`-accumulated dot product. Callers guarantee equal lengths.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Euclidean distance without the length check, for hot loops.
pub(crate) fn l2_unchecked(a: &[f32], b: &[f32]) -> f64 {
    let mut sum = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = f64::from(x) - f64::from(y);
        sum += d * d;
    }
    sum.sqrt()
}

/// Euclidean norm of `a - b`, accumulated in `f64`.
pub fn l2_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(l2_unchecked(a, b))
}

/// Index of the maximum element; ties resolve to the smallest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> Result<usize> {
    let mut iter = v.iter().enumerate();
    let (mut best, mut best_val) = match iter.next() {
        Some((i, &x)) => (i, x),
        None => return Err(Error::Dimension("argmax of an empty vector".into())),
    };
    for (i, &x) in iter {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor {
        let data = (0..m * n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Tensor::new(vec![m, n], data).unwrap()
    }

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.row_len(), 3);
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3, 3);
        let i = Tensor::identity(3).unwrap();
        assert_eq!(matmul(&i, &a).unwrap(), a);
        assert_eq!(matmul(&a, &i).unwrap(), a);
    }

    #[test]
    fn matmul_scalar() {
        let a = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let b = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 3, 5);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[4, 5]);
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0f64;
                for p in 0..3 {
                    s += a.data()[i * 3 + p] as f64 * b.data()[p * 5 + j] as f64;
                }
                assert!((c.data()[i * 5 + j] as f64 - s).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]).unwrap();
        let b = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn l2_cases() {
        assert_eq!(l2_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(l2_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(l2_distance(&[0.0], &[0.0, 1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f32> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f32> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
        let oracle = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((l2_distance(&a, &b).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn argmax_cases() {
        assert_eq!(argmax(&[0.1f32, 0.8, 0.1]).unwrap(), 1);
        assert_eq!(argmax(&[0.5f32, 0.5]).unwrap(), 0);
        assert!(argmax::<f32>(&[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f32> = (0..10).map(|_| rng.random()).collect();
        let mut oracle = 0;
        for i in 1..v.len() {
            if v[i] > v[oracle] {
                oracle = i;
            }
        }
        assert_eq!(argmax(&v).unwrap(), oracle);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn l2_symmetric_nonnegative(
                pair in (1usize..32).prop_flat_map(|d| (
                    proptest::collection::vec(-100f32..100.0, d),
                    proptest::collection::vec(-100f32..100.0, d),
                ))
            ) {
                let (a, b) = pair;
                let ab = l2_distance(&a, &b).unwrap();
                let ba = l2_distance(&b, &a).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab == 0.0, a == b);
            }

            #[test]
            fn argmax_in_bounds_and_shift_invariant(
                v in proptest::collection::vec(-1000i32..1000, 1..40),
                c in -1000i32..1000,
            ) {
                // integer-valued floats keep the shift exact
                let v: Vec<f32> = v.into_iter().map(|x| x as f32).collect();
                let shifted: Vec<f32> = v.iter().map(|x| x + c as f32).collect();
                let i = argmax(&v).unwrap();
                prop_assert!(i < v.len());
                prop_assert_eq!(i, argmax(&shifted).unwrap());
            }

            #[test]
            fn matmul_identity_exact(
                (n, data) in (1usize..6).prop_flat_map(|n| (Just(n), proptest::collection::vec(-1e3f32..1e3, n * n)))
            ) {
                let a = Tensor::new(vec![n, n], data).unwrap();
                let i = Tensor::identity(n).unwrap();
                prop_assert_eq!(&matmul(&i, &a).unwrap(), &a);
                prop_assert_eq!(&matmul(&a, &i).unwrap(), &a);
            }
        }
    }
}
