//! Symbolic algebra of spin strings on the infinite chain.
//!
//! Strings are products of spin-1/2 operators `S^a = σ^a/2`. An
//! [`OperatorPolynomial`] is a translation-covariant density: the operator it
//! stands for is `Σ_j τ_j(p)`, so every string is stored shifted to offset 0.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use ndarray_linalg::{JobSvd, SVDDC};

use crate::error::{Error, Result};
use crate::lattice::SpinChainParams;
use crate::C64;

/// Relative pruning threshold for polynomial coefficients.
pub const PRUNE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const NONTRIVIAL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// σ-level product `σ^a σ^b = phase · σ^c`.
    pub fn mul(self, other: Pauli) -> (C64, Pauli) {
        use Pauli::*;
        let i = C64::new(0.0, 1.0);
        match (self, other) {
            (I, p) | (p, I) => (C64::new(1.0, 0.0), p),
            (a, b) if a == b => (C64::new(1.0, 0.0), I),
            (X, Y) => (i, Z),
            (Y, Z) => (i, X),
            (Z, X) => (i, Y),
            (Y, X) => (-i, Z),
            (Z, Y) => (-i, X),
            (X, Z) => (-i, Y),
            _ => unreachable!(),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// A product of single-site operators on consecutive sites starting at
/// `offset`. Identity factors at either end are always trimmed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    offset: i64,
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(offset: i64, letters: Vec<Pauli>) -> Self {
        let first = letters.iter().position(|&p| p != Pauli::I);
        match first {
            None => Self::identity(),
            Some(f) => {
                let last = letters.iter().rposition(|&p| p != Pauli::I).unwrap();
                Self {
                    offset: offset + f as i64,
                    letters: letters[f..=last].to_vec(),
                }
            }
        }
    }

    pub fn identity() -> Self {
        Self {
            offset: 0,
            letters: Vec::new(),
        }
    }

    /// Parse letters such as `"YXXY"`; `"I"` or `""` is the identity.
    pub fn parse(offset: i64, letters: &str) -> Result<Self> {
        let v = letters
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::Parse(format!("bad letter {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(offset, v))
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    /// Number of sites between the first and last nontrivial factor, inclusive.
    pub fn support(&self) -> usize {
        self.letters.len()
    }

    /// Number of nontrivial factors.
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn at(&self, site: i64) -> Pauli {
        let k = site - self.offset;
        if k < 0 || k as usize >= self.letters.len() {
            Pauli::I
        } else {
            self.letters[k as usize]
        }
    }

    pub fn shifted(&self, d: i64) -> Self {
        Self {
            offset: self.offset + d,
            letters: self.letters.clone(),
        }
    }

    /// Same letters at offset 0 (translation class representative).
    pub fn at_origin(&self) -> Self {
        self.shifted(-self.offset)
    }

    pub fn letter_string(&self) -> String {
        if self.letters.is_empty() {
            "I".to_string()
        } else {
            self.letters.iter().map(|p| p.to_char()).collect()
        }
    }

    /// σ-level product of two strings (absolute positions respected).
    pub fn multiply(&self, other: &PauliString) -> (C64, PauliString) {
        if self.is_identity() {
            return (C64::new(1.0, 0.0), other.clone());
        }
        if other.is_identity() {
            return (C64::new(1.0, 0.0), self.clone());
        }
        let lo = self.offset.min(other.offset);
        let hi = (self.offset + self.support() as i64).max(other.offset + other.support() as i64);
        let mut phase = C64::new(1.0, 0.0);
        let mut letters = Vec::with_capacity((hi - lo) as usize);
        for site in lo..hi {
            let (p, c) = self.at(site).mul(other.at(site));
            phase *= p;
            letters.push(c);
        }
        (phase, PauliString::new(lo, letters))
    }

    /// Two strings commute iff they anticommute on an even number of sites.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let lo = self.offset.max(other.offset);
        let hi = (self.offset + self.support() as i64).min(other.offset + other.support() as i64);
        let mut anti = 0;
        for site in lo..hi {
            let (a, b) = (self.at(site), other.at(site));
            if a != Pauli::I && b != Pauli::I && a != b {
                anti += 1;
            }
        }
        anti % 2 == 0
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.letter_string(), self.offset)
    }
}

/// Free-function form of [`PauliString::multiply`].
pub fn multiply(a: &PauliString, b: &PauliString) -> (C64, PauliString) {
    a.multiply(b)
}

/// Coefficient of `S_a S_b` in terms of `S_c`, where `σ_a σ_b = phase σ_c`.
fn s_product(a: &PauliString, b: &PauliString) -> (C64, PauliString) {
    let (phase, c) = a.multiply(b);
    let exp = c.weight() as i32 - a.weight() as i32 - b.weight() as i32;
    (phase * 2f64.powi(exp), c)
}

/// Translation-covariant density `p` standing for `Σ_j τ_j(p)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorPolynomial {
    terms: BTreeMap<PauliString, C64>,
}

impl OperatorPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (PauliString, C64)>,
    {
        let mut p = Self::zero();
        for (s, c) in terms {
            p.add_term(&s, c);
        }
        p.prune();
        p
    }

    /// Real-coefficient convenience constructor, e.g. `[("YY", 1.0), ("X", h)]`.
    pub fn from_real(terms: &[(&str, f64)]) -> Result<Self> {
        let mut v = Vec::with_capacity(terms.len());
        for &(s, c) in terms {
            v.push((PauliString::parse(0, s)?, C64::new(c, 0.0)));
        }
        Ok(Self::from_terms(v))
    }

    /// Accumulate a term without pruning.
    pub fn add_term(&mut self, s: &PauliString, c: C64) {
        *self.terms.entry(s.at_origin()).or_insert(C64::new(0.0, 0.0)) += c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, &C64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, s: &PauliString) -> C64 {
        self.terms.get(&s.at_origin()).copied().unwrap_or_default()
    }

    /// Coefficient looked up by letter string, e.g. `p.coeff_of("YXY")`.
    pub fn coeff_of(&self, letters: &str) -> C64 {
        PauliString::parse(0, letters)
            .map(|s| self.coeff(&s))
            .unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_support(&self) -> usize {
        self.terms.keys().map(|s| s.support()).max().unwrap_or(0)
    }

    /// Drop coefficients below `PRUNE_TOL` times the largest one.
    pub fn prune(&mut self) {
        let scale = self.max_abs();
        self.prune_relative_to(scale);
    }

    /// Drop coefficients below `PRUNE_TOL * scale`, keeping exact zeros out.
    pub fn prune_relative_to(&mut self, scale: f64) {
        let thr = PRUNE_TOL * scale;
        self.terms.retain(|_, c| c.norm() > thr && *c != C64::new(0.0, 0.0));
    }

    pub fn canonical(&self) -> Self {
        let mut p = Self::zero();
        for (s, c) in &self.terms {
            p.add_term(s, *c);
        }
        p.prune();
        p
    }

    pub fn scaled(&self, k: C64) -> Self {
        let mut p = Self {
            terms: self.terms.iter().map(|(s, c)| (s.clone(), c * k)).collect(),
        };
        p.prune();
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let scale = self.max_abs().max(other.max_abs());
        let mut p = self.clone();
        for (s, c) in &other.terms {
            p.add_term(s, *c);
        }
        p.prune_relative_to(scale);
        p
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    /// Largest |Im c| relative to the largest |c|. Spin strings are
    /// Hermitian, so a Hermitian polynomial has real coefficients.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        self.terms.values().map(|c| c.im.abs()).fold(0.0, f64::max) / m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Largest coefficient norm of `self - k·other` minimised over the scalar
    /// `k` fixed by the largest coefficient of `other`; returns `(k, rel_err)`.
    pub fn proportionality(&self, other: &Self) -> Option<(C64, f64)> {
        let (lead, cl) = other
            .terms
            .iter()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
        let k = self.coeff(lead) / cl;
        let diff = self.sub(&other.scaled(k));
        Some((k, diff.max_abs() / self.max_abs().max(f64::MIN_POSITIVE)))
    }

    /// One term per line: `coeff_re coeff_im offset letters`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, c) in &self.terms {
            out.push_str(&format!(
                "{:.17e} {:.17e} {} {}\n",
                c.re,
                c.im,
                s.offset(),
                s.letter_string()
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Self::zero();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 fields", lineno + 1)));
            }
            let num = |x: &str| {
                x.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let re = num(f[0])?;
            let im = num(f[1])?;
            let off: i64 = f[2]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            p.add_term(&PauliString::parse(off, f[3])?, C64::new(re, im));
        }
        p.prune();
        Ok(p)
    }
}

impl fmt::Display for OperatorPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (s, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.im == 0.0 {
                write!(f, "{}·{}", c.re, s.letter_string())?;
            } else {
                write!(f, "({}{:+}i)·{}", c.re, c.im, s.letter_string())?;
            }
        }
        Ok(())
    }
}

/// All nonvanishing `[a, τ_d b]` contributions with `a` at the origin, each
/// returned with its absolute offset.
fn pair_commutators(a: &OperatorPolynomial, b: &OperatorPolynomial) -> Vec<(PauliString, C64)> {
    let mut out = Vec::new();
    for (sa, ca) in &a.terms {
        for (sb, cb) in &b.terms {
            let (la, lb) = (sa.support() as i64, sb.support() as i64);
            if la == 0 || lb == 0 {
                continue;
            }
            for d in (1 - lb)..la {
                let sbd = sb.shifted(d);
                if sa.commutes_with(&sbd) {
                    continue;
                }
                let (k, s) = s_product(sa, &sbd);
                out.push((s, ca * cb * k * 2.0));
            }
        }
    }
    out
}

/// Exact commutator of two translation-covariant densities.
pub fn commutator(a: &OperatorPolynomial, b: &OperatorPolynomial) -> OperatorPolynomial {
    let mut p = OperatorPolynomial::zero();
    for (s, c) in pair_commutators(a, b) {
        p.add_term(&s, c);
    }
    p.prune_relative_to(a.max_abs() * b.max_abs());
    p
}

/// The boost `B = -i Σ_j j h_j` built from an energy density.
#[derive(Clone, Debug)]
pub struct Boost {
    density: OperatorPolynomial,
}

/// Boost operator for a Hermitian energy density.
pub fn boost(h_density: &OperatorPolynomial) -> Result<Boost> {
    let defect = h_density.hermiticity_defect();
    if defect > 1e-12 {
        return Err(Error::NonHermitian(defect));
    }
    Ok(Boost {
        density: h_density.clone(),
    })
}

impl Boost {
    pub fn density(&self) -> &OperatorPolynomial {
        &self.density
    }

    /// `[B, Q]` for a translation-covariant `Q`.
    ///
    /// With `[h_0, τ_d q] = Σ_s c_s s` at absolute offsets `o_s`, the density
    /// of `[B, Q]` at site p is `-i Σ_s c_s (p - o_s)`. It is independent of p
    /// exactly when `Σ c_s` vanishes shape by shape, i.e. when `[H, Q] = 0`;
    /// the result is then `i Σ_s c_s o_s`.
    pub fn commutator(&self, q: &OperatorPolynomial) -> Result<OperatorPolynomial> {
        let mut total: BTreeMap<PauliString, C64> = BTreeMap::new();
        let mut moment = OperatorPolynomial::zero();
        for (s, c) in pair_commutators(&self.density, q) {
            *total.entry(s.at_origin()).or_default() += c;
            moment.add_term(&s, c * C64::new(0.0, s.offset() as f64));
        }
        let scale = self.density.max_abs() * q.max_abs();
        let resid = total.values().map(|c| c.norm()).fold(0.0, f64::max);
        if resid > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotCovariant(resid / scale));
        }
        moment.prune_relative_to(scale);
        Ok(moment)
    }
}

/// Canonical strings (offset 0) of support `1..=max_support`.
pub fn strings_up_to(max_support: usize) -> Vec<PauliString> {
    let mut out = Vec::new();
    for len in 1..=max_support {
        let inner = len.saturating_sub(2);
        let n_inner = 4usize.pow(inner as u32);
        for &first in &Pauli::NONTRIVIAL {
            let lasts: &[Pauli] = if len == 1 { &[Pauli::I] } else { &Pauli::NONTRIVIAL };
            for code in 0..n_inner {
                for &last in lasts {
                    let mut letters = Vec::with_capacity(len);
                    letters.push(first);
                    let mut k = code;
                    let mut mid = vec![Pauli::I; inner];
                    for slot in mid.iter_mut().rev() {
                        *slot = Pauli::ALL[k % 4];
                        k /= 4;
                    }
                    letters.extend(mid);
                    if len > 1 {
                        letters.push(last);
                    }
                    out.push(PauliString::new(0, letters));
                }
            }
        }
    }
    out
}

/// Hermitian translation-invariant densities of bounded support that commute
/// with a given Hamiltonian density, with the Hilbert–Schmidt metric.
///
/// In that metric a spin string of weight w has norm `2^-w` per site, so the
/// space is computed in rescaled coordinates `y = 2^-w c`, where orthogonal
/// projection is a plain Euclidean projection.
#[derive(Clone, Debug)]
pub struct ConservedSpace {
    max_support: usize,
    basis: Vec<PauliString>,
    index: BTreeMap<PauliString, usize>,
    scale: Vec<f64>,
    /// Orthonormal null-space vectors in rescaled coordinates, one per column.
    null: Array2<f64>,
    /// The map `y ↦ [h, y]` and its pseudo-inverse, used to refine projections.
    map: Array2<f64>,
    pinv: Array2<f64>,
}

impl ConservedSpace {
    pub fn new(h_density: &OperatorPolynomial, max_support: usize) -> Result<Self> {
        if max_support == 0 {
            return Err(Error::InvalidParams("max_support must be positive".into()));
        }
        let defect = h_density.hermiticity_defect();
        if defect > 1e-12 {
            return Err(Error::NonHermitian(defect));
        }
        let basis = strings_up_to(max_support);
        let index: BTreeMap<_, _> = basis.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let scale: Vec<f64> = basis.iter().map(|s| 2f64.powi(-(s.weight() as i32))).collect();

        // [h, s] for Hermitian h and s is anti-Hermitian: i times real coefficients.
        let mut rows: BTreeMap<PauliString, usize> = BTreeMap::new();
        let mut entries = Vec::new();
        for (j, s) in basis.iter().enumerate() {
            let single = OperatorPolynomial::from_terms([(s.clone(), C64::new(1.0, 0.0))]);
            for (t, c) in commutator(h_density, &single).terms() {
                let next = rows.len();
                let r = *rows.entry(t.clone()).or_insert(next);
                entries.push((r, j, c.im / scale[j]));
            }
        }
        let n = basis.len();
        let m = rows.len().max(1);
        let mut a = Array2::<f64>::zeros((m.max(n), n));
        for (r, j, v) in entries {
            a[[r, j]] += v;
        }
        let (u, sv, vt) = a.svddc(JobSvd::Some)?;
        let (u, vt) = match (u, vt) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::Linalg("svd returned no singular vectors".into())),
        };
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let rank = sv.iter().filter(|&&x| x > 1e-9 * smax.max(1e-300)).count();
        let null = vt.slice(ndarray::s![rank.., ..]).t().to_owned();
        let mut vr = vt.slice(ndarray::s![..rank, ..]).t().to_owned();
        for (k, mut col) in vr.columns_mut().into_iter().enumerate() {
            col /= sv[k];
        }
        let pinv = vr.dot(&u.slice(ndarray::s![.., ..rank]).t());
        Ok(Self {
            max_support,
            basis,
            index,
            scale,
            null,
            map: a,
            pinv,
        })
    }

    pub fn max_support(&self) -> usize {
        self.max_support
    }

    pub fn dim(&self) -> usize {
        self.null.ncols()
    }

    /// Orthogonal projection onto the conserved space; also returns the
    /// relative norm of the discarded part. Identity components are dropped.
    pub fn project(&self, p: &OperatorPolynomial) -> Result<(OperatorPolynomial, f64)> {
        let defect = p.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::NonHermitian(defect));
        }
        let mut y = ndarray::Array1::<f64>::zeros(self.basis.len());
        for (s, c) in p.terms() {
            if s.is_identity() {
                continue;
            }
            let &j = self.index.get(s).ok_or(Error::SupportTooLarge {
                support: s.support(),
                n: self.max_support,
            })?;
            y[j] = c.re * self.scale[j];
        }
        let mut yp = self.null.dot(&self.null.t().dot(&y));
        // The SVD basis is accurate to ~eps·cond; a few refinement steps
        // remove the remaining commutator residual.
        for _ in 0..3 {
            let r = self.map.dot(&yp);
            yp -= &self.pinv.dot(&r);
        }
        let norm = y.dot(&y).sqrt();
        let resid = (&y - &yp).mapv(|v| v * v).sum().sqrt() / norm.max(f64::MIN_POSITIVE);
        let out = OperatorPolynomial::from_terms(
            yp.iter()
                .enumerate()
                .map(|(j, &v)| (self.basis[j].clone(), C64::new(v / self.scale[j], 0.0))),
        );
        Ok((out, resid))
    }
}

/// Nearest-neighbour energy density `J_z ZZ + J_y YY + h X`.
pub fn h0_density(jy: f64, jz: f64, h: f64) -> OperatorPolynomial {
    OperatorPolynomial::from_real(&[("ZZ", jz), ("YY", jy), ("X", h)]).expect("static letters")
}

/// Next-nearest density `ε1 (J_z ZIZ + J_y YIY)`.
pub fn h1_density(jy: f64, jz: f64, eps1: f64) -> OperatorPolynomial {
    OperatorPolynomial::from_real(&[("ZIZ", eps1 * jz), ("YIY", eps1 * jy)]).expect("static letters")
}

/// Closed-form fourth charge
/// `Σ_μ J_μ S^μ S^x S^x S^μ − h S^μ S^x S^μ + (J_μ̄/4) S^μ S^μ`, μ ∈ {y, z}.
/// Conserved for all couplings.
pub fn c4_closed_form(jy: f64, jz: f64, h: f64) -> OperatorPolynomial {
    OperatorPolynomial::from_real(&[
        ("YXXY", jy),
        ("ZXXZ", jz),
        ("YXY", -h),
        ("ZXZ", -h),
        ("YY", jz / 4.0),
        ("ZZ", jy / 4.0),
    ])
    .expect("static letters")
}

/// Variant of [`c4_closed_form`] whose three-site field term carries
/// `−h J_μ / 2` instead of `−h`. The two coincide at `J_y = J_z = 2`; this
/// form commutes with H0 only when `h = 0` or `J_y = J_z`.
pub fn c4_field_scaled_form(jy: f64, jz: f64, h: f64) -> OperatorPolynomial {
    OperatorPolynomial::from_real(&[
        ("YXXY", jy),
        ("ZXXZ", jz),
        ("YXY", -h * jy / 2.0),
        ("ZXZ", -h * jz / 2.0),
        ("YY", jz / 4.0),
        ("ZZ", jy / 4.0),
    ])
    .expect("static letters")
}

/// Conserved charges `C_1 (optional), C_2 = H0, C_3, …`.
#[derive(Clone, Debug)]
pub struct ChargeFamily {
    /// Charge index i of each entry (1 for the magnetisation, 2 for H0, …).
    pub indices: Vec<usize>,
    pub charges: Vec<OperatorPolynomial>,
    pub max_support: Vec<usize>,
}

impl ChargeFamily {
    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&OperatorPolynomial> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .map(|k| &self.charges[k])
    }

    pub fn labels(&self) -> Vec<String> {
        self.indices.iter().map(|i| format!("C{i}")).collect()
    }
}

/// Rescale so that the largest coefficient among the longest strings equals
/// `target` (ties broken by the lexicographically smallest string).
fn normalize_charge(p: &OperatorPolynomial, target: f64) -> OperatorPolynomial {
    let lmax = p.max_support();
    let top = p
        .terms()
        .filter(|(s, _)| s.support() == lmax)
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    let lead = p
        .terms()
        .filter(|(s, c)| s.support() == lmax && c.norm() >= top * (1.0 - 1e-9))
        .map(|(s, c)| (s.clone(), *c))
        .min_by(|a, b| a.0.cmp(&b.0));
    match lead {
        Some((_, c)) => p.scaled(C64::new(target, 0.0) / c),
        None => p.clone(),
    }
}

/// The boost step `C_{i+1} = Π [B, C_i]`, normalised.
///
/// Π is the orthogonal projection onto densities of support ≤ i+1 commuting
/// with H0. Where the boost recursion closes (h = 0 or J_y = J_z) the
/// projection is the identity; elsewhere the bare boost leaves a
/// non-conserved remainder and Π removes it.
pub fn next_charge(
    b: &Boost,
    space: &ConservedSpace,
    c: &OperatorPolynomial,
    norm_target: f64,
) -> Result<(OperatorPolynomial, f64)> {
    let raw = b.commutator(c)?;
    let (proj, resid) = space.project(&raw)?;
    if proj.is_zero() {
        return Err(Error::InvalidParams("boost produced no new conserved charge".into()));
    }
    Ok((normalize_charge(&proj, norm_target), resid))
}

/// Build `n_charges` conserved charges for the chain couplings of `params`.
///
/// Anisotropic couplings give `{C_2 = H0, C_3, …}`; at `J_y = J_z` the
/// magnetisation `C_1` is prepended (for `n_charges ≥ 2`). Every density
/// must fit on the ring, i.e. support < N.
pub fn build_charge_family(params: &SpinChainParams, n_charges: usize) -> Result<ChargeFamily> {
    if n_charges == 0 {
        return Err(Error::InvalidParams("n_charges must be at least 1".into()));
    }
    let (jy, jz, h) = (params.jy, params.jz, params.h);
    let h0 = h0_density(jy, jz, h);
    let isotropic = (jy - jz).abs() <= 1e-12 * jy.abs().max(jz.abs()).max(1.0);
    let mut fam = ChargeFamily {
        indices: Vec::new(),
        charges: Vec::new(),
        max_support: Vec::new(),
    };
    let with_c1 = isotropic && n_charges >= 2;
    if with_c1 {
        fam.indices.push(1);
        fam.charges.push(OperatorPolynomial::from_real(&[("X", 1.0)])?);
        fam.max_support.push(1);
    }
    fam.indices.push(2);
    fam.charges.push(h0.clone());
    fam.max_support.push(2);

    let highest = if with_c1 { n_charges } else { n_charges + 1 };
    if highest >= params.n {
        return Err(Error::SupportTooLarge {
            support: highest,
            n: params.n,
        });
    }
    let b = boost(&h0)?;
    let target = jy.abs().max(jz.abs());
    let mut current = h0.clone();
    for i in 3..=highest {
        let space = ConservedSpace::new(&h0, i)?;
        let (next, _) = next_charge(&b, &space, &current, target)?;
        fam.indices.push(i);
        fam.max_support.push(next.max_support());
        fam.charges.push(next.clone());
        current = next;
    }
    Ok(fam)
}
