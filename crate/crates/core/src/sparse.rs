//! Minimal compressed-sparse-row complex matrices.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![C64::new(1.0, 0.0); n],
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_unstable_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if let (Some(&lr), Some(&lc)) = (rows.last(), indices.last()) {
                if lr == r && lc == c {
                    *data.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            indices.push(c);
            data.push(v);
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_dat = Vec::with_capacity(indices.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(data) {
            if v != C64::new(0.0, 0.0) {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_dat.push(v);
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices: keep_idx,
            data: keep_dat,
        }
    }

    pub fn from_dense(a: &Array2<C64>) -> Self {
        let mut t = Vec::new();
        for ((r, c), v) in a.indexed_iter() {
            if *v != C64::new(0.0, 0.0) {
                t.push((r, c, *v));
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Nonzeros of one row as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().copied().zip(self.data[a..b].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r)
            .find(|&(cc, _)| cc == c)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn matvec(&self, x: ArrayView1<C64>) -> Array1<C64> {
        let mut y = Array1::zeros(self.nrows);
        self.matvec_into(x, y.as_slice_mut().unwrap());
        y
    }

    pub fn matvec_into(&self, x: ArrayView1<C64>, y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let owned;
        let xs = match x.as_slice() {
            Some(s) => s,
            None => {
                owned = x.to_vec();
                &owned
            }
        };
        for (r, yr) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[r], self.indptr[r + 1]);
            *yr = self.indices[a..b]
                .iter()
                .zip(&self.data[a..b])
                .map(|(&c, &v)| v * xs[c])
                .sum();
        }
    }

    /// `self · b` for a dense right-hand matrix.
    pub fn matmul_dense(&self, b: &Array2<C64>) -> Array2<C64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = Array2::zeros((self.nrows, b.ncols()));
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let src = b.row(c);
                let mut dst = out.row_mut(r);
                dst.scaled_add(v, &src);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.triplets() {
            a[[r, c]] += v;
        }
        a
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn conj(&self) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v = v.conj());
        m
    }

    pub fn scaled(&self, k: C64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= k);
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let t = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
        for r in 0..self.nrows {
            acc.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    *acc.entry(c).or_default() += a * b;
                }
            }
            t.extend(acc.iter().map(|(&c, &v)| (r, c, v)));
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}
