//! Dense helpers on top of LAPACK: Hermitian eigensystems, LU solves and
//! smallest-singular-value estimation by inverse iteration.

use ndarray::{Array1, Array2, ArrayView2, Axis, OwnedRepr, ShapeBuilder};
use ndarray_linalg::{Eigh, FactorizeInto, LUFactorized, Solve, UPLO};

use crate::error::{Error, Result};
use crate::C64;

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
///
/// The input is copied to column-major order first: for row-major complex
/// input, `Eigh` returns eigenvectors of the conjugate matrix.
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut f = Array2::zeros(a.raw_dim().f());
    f.assign(a);
    let (e, v) = f.eigh(UPLO::Upper)?;
    Ok((e, v))
}

pub fn eigvalsh(a: &Array2<C64>) -> Result<Array1<f64>> {
    Ok(eigh(a)?.0)
}

pub fn hermitize(a: &Array2<C64>) -> Array2<C64> {
    let h = a + &a.t().mapv(|v| v.conj());
    h.mapv(|v| v * 0.5)
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|v| v.conj())
}

pub fn frobenius(a: ArrayView2<C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: ArrayView2<C64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Largest deviation from Hermiticity.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    a.indexed_iter()
        .map(|((i, j), v)| (v - a[[j, i]].conj()).norm())
        .fold(0.0, f64::max)
}

/// `½ Σ |λ_i(a − b)|` for Hermitian `a`, `b`.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> Result<f64> {
    let d = hermitize(&(a - b));
    Ok(0.5 * eigvalsh(&d)?.iter().map(|x| x.abs()).sum::<f64>())
}

pub fn vec_norm(x: &Array1<C64>) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Deterministic pseudo-random complex vector (splitmix64).
pub fn seeded_vector(n: usize, seed: u64) -> Array1<C64> {
    let mut s = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = move || {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    Array1::from_shape_fn(n, |_| C64::new(next(), next()))
}

/// Orthonormalise the columns in place (modified Gram–Schmidt, two passes).
pub fn orthonormalize(q: &mut Array2<C64>) {
    let p = q.ncols();
    for _ in 0..2 {
        for j in 0..p {
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let proj: C64 = qi.iter().zip(q.column(j)).map(|(a, b)| a.conj() * b).sum();
                let mut cj = q.column_mut(j);
                cj.scaled_add(-proj, &qi);
            }
            let nrm = q.column(j).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 0.0 {
                q.column_mut(j).mapv_inplace(|v| v / nrm);
            }
        }
    }
}

/// LU factorisation of a dense complex matrix.
pub struct DenseLu {
    lu: LUFactorized<OwnedRepr<C64>>,
    n: usize,
}

impl DenseLu {
    pub fn new(a: Array2<C64>) -> Result<Self> {
        let n = a.nrows();
        let lu = a.factorize_into()?;
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        Ok(self.lu.solve(b)?)
    }

    /// Solve `A† x = b`.
    pub fn solve_h(&self, b: &Array1<C64>) -> Result<Array1<C64>> {
        Ok(self.lu.solve_h(b)?)
    }
}

/// Estimate the smallest singular value of `A` by block inverse iteration
/// on `(A†A)^{-1}` followed by a Rayleigh–Ritz step with `apply = A·`.
///
/// `solve` and `solve_h` apply `A^{-1}` and `A^{-†}`. The returned estimate
/// is an upper bound that converges from above.
pub fn smallest_singular_value(
    n: usize,
    block: usize,
    apply: &dyn Fn(&Array1<C64>) -> Array1<C64>,
    solve: &dyn Fn(&Array1<C64>) -> Result<Array1<C64>>,
    solve_h: &dyn Fn(&Array1<C64>) -> Result<Array1<C64>>,
    max_iter: usize,
) -> Result<f64> {
    let p = block.clamp(1, n);
    let mut q = Array2::<C64>::zeros((n, p));
    for j in 0..p {
        q.column_mut(j).assign(&seeded_vector(n, 17 + j as u64));
    }
    orthonormalize(&mut q);
    let mut last = f64::INFINITY;
    let mut est = f64::INFINITY;
    for it in 0..max_iter {
        for j in 0..p {
            let x = q.column(j).to_owned();
            let y = solve_h(&x)?;
            let z = solve(&y)?;
            if z.iter().any(|v| !v.is_finite()) {
                return Ok(0.0);
            }
            q.column_mut(j).assign(&z);
        }
        orthonormalize(&mut q);
        est = ritz_min(&q, apply)?;
        if it >= 2 && (last - est).abs() <= 1e-4 * est.max(1e-300) {
            break;
        }
        last = est;
    }
    Ok(est)
}

/// Smallest singular value of `A Q` for orthonormal `Q`.
fn ritz_min(q: &Array2<C64>, apply: &dyn Fn(&Array1<C64>) -> Array1<C64>) -> Result<f64> {
    let p = q.ncols();
    let mut g = Array2::<C64>::zeros((p, p));
    let cols: Vec<Array1<C64>> = (0..p).map(|j| apply(&q.column(j).to_owned())).collect();
    for i in 0..p {
        for j in 0..p {
            g[[i, j]] = cols[i].iter().zip(cols[j].iter()).map(|(a, b)| a.conj() * b).sum();
        }
    }
    let ev = eigvalsh(&g)?;
    Ok(ev[0].max(0.0).sqrt())
}

/// Solve a small dense real linear system.
pub fn solve_real(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let x = a.solve(b).map_err(|_| Error::SingularJacobian)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian);
    }
    Ok(x)
}

/// Matrix exponential `exp(-A)` of a Hermitian matrix, with the largest
/// exponent subtracted before exponentiating; returns the normalised
/// density `exp(-A)/Tr exp(-A)`.
pub fn gibbs_from_hermitian(a: &Array2<C64>) -> Result<Array2<C64>> {
    let (e, v) = eigh(a)?;
    let emin = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Array1<f64> = e.mapv(|x| (-(x - emin)).exp());
    let z = w.sum();
    let mut vw = v.clone();
    for (mut col, &wi) in vw.axis_iter_mut(Axis(1)).zip(w.iter()) {
        col.mapv_inplace(|x| x * (wi / z));
    }
    Ok(vw.dot(&adjoint(&v)))
}
