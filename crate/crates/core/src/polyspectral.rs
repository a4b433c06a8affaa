//! Real polynomials, Sturm chains, Cauchy bounds, bisection and the
//! congruence diagonalization of the pencil `(AᵀA, D)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A Sturm remainder whose every coefficient is below this fraction of the
/// terms cancelled into it is treated as zero.
pub const STURM_FLUSH: f64 = 1e-10;

/// Relative remainder below which a chain element is taken to divide both
/// `p` and `p′`.
pub const GCD_TOL: f64 = 1e-6;

/// Relative tolerance under which a `δ_i` is considered zero.
pub const DELTA_CLAMP: f64 = 1e-12;

/// Real polynomial with ascending coefficients. Trailing zeros are trimmed,
/// so the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `c0 + c1 λ`.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Polynomial::new(vec![c0, c1])
    }

    /// Monic polynomial with the given real roots.
    pub fn from_roots(roots: &[f64]) -> Self {
        roots.iter().fold(Polynomial::constant(1.0), |p, r| p.mul(&Polynomial::linear(-r, 1.0)))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Polynomial::new(self.coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let get = |p: &Self, k: usize| p.coeffs.get(k).copied().unwrap_or(0.0);
        Polynomial::new((0..len).map(|k| get(self, k) + get(other, k)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `q(μ) = p(s μ)`.
    pub fn compose_scale(&self, s: f64) -> Self {
        let mut f = 1.0;
        Polynomial::new(
            self.coeffs
                .iter()
                .map(|c| {
                    let v = c * f;
                    f *= s;
                    v
                })
                .collect(),
        )
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Positive power-of-two multiple with largest coefficient in `[1, 2)`.
    ///
    /// Scaling by a power of two is exact, so signs at exact roots survive.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs();
        if m == 0.0 || !m.is_finite() {
            return self.clone();
        }
        let e = libm::floor(libm::log2(m)) as i32;
        self.scale(libm::exp2(-e as f64))
    }

    /// Quotient and remainder of division by `divisor`.
    ///
    /// Panics if `divisor` is the zero polynomial.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (Polynomial::zero(), self.clone());
        }
        let mut quot = vec![0.0; rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let q = rem[k + dd] / lead;
            quot[k] = q;
            for (j, c) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= q * c;
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd);
        (Polynomial::new(quot), Polynomial::new(rem))
    }

    /// `div_rem` plus, per remainder coefficient, the sum of magnitudes of
    /// the terms that were combined into it.
    fn div_rem_tracked(&self, divisor: &Self) -> (Self, Self, Vec<f64>) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut mag: Vec<f64> = rem.iter().map(|c| c.abs()).collect();
        if rem.len() <= dd {
            return (Polynomial::zero(), self.clone(), mag);
        }
        let mut quot = vec![0.0; rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let q = rem[k + dd] / lead;
            quot[k] = q;
            for (j, c) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= q * c;
                mag[k + j] += (q * c).abs();
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd);
        mag.truncate(dd);
        (Polynomial::new(quot), Polynomial::new(rem), mag)
    }

    /// Sign at `x`, with `±∞` handled through the leading term.
    fn sign_at(&self, x: f64) -> f64 {
        let deg = match self.degree() {
            Some(d) => d,
            None => return 0.0,
        };
        let v = if x == f64::INFINITY {
            self.leading()
        } else if x == f64::NEG_INFINITY {
            if deg % 2 == 0 {
                self.leading()
            } else {
                -self.leading()
            }
        } else {
            self.eval(x)
        };
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Sturm chain `p₀ = p, p₁ = p′, p_{k+1} = −rem(p_{k−1}, p_k)`, divided
/// through by the last element (the gcd of `p` and `p′`) so that repeated
/// roots are counted once.
#[derive(Debug, Clone)]
pub struct SturmSequence {
    chain: Vec<Polynomial>,
}

impl SturmSequence {
    pub fn new(p: &Polynomial) -> Result<Self> {
        if p.is_zero() {
            return Err(Error::InvalidInput("Sturm chain of the zero polynomial".into()));
        }
        let p0 = p.normalized();
        let p1 = p.derivative().normalized();
        let mut chain = vec![p0.clone()];
        if !p1.is_zero() {
            chain.push(p1.clone());
        }
        while chain.len() >= 2 {
            let a = &chain[chain.len() - 2];
            let b = &chain[chain.len() - 1];
            // Remainders drift along the chain, so a common divisor is
            // confirmed against p and p′ themselves.
            if b.degree().unwrap_or(0) > 0 && divides(b, &p0, GCD_TOL) && divides(b, &p1, GCD_TOL) {
                break;
            }
            let (_, r, cancelled) = a.div_rem_tracked(b);
            if r.coeffs.iter().zip(&cancelled).all(|(c, m)| c.abs() <= STURM_FLUSH * m) {
                break;
            }
            chain.push(r.scale(-1.0).normalized());
        }
        let gcd = chain.last().cloned().expect("chain is nonempty");
        if gcd.degree().unwrap_or(0) > 0 {
            chain = chain.iter().map(|c| c.div_rem(&gcd).0.normalized()).collect();
        }
        Ok(SturmSequence { chain })
    }

    pub fn chain(&self) -> &[Polynomial] {
        &self.chain
    }

    /// Number of sign changes of the chain at `x` (zeros skipped).
    pub fn variations(&self, x: f64) -> usize {
        let mut last = 0.0;
        let mut count = 0;
        for p in &self.chain {
            let s = p.sign_at(x);
            if s != 0.0 {
                if last != 0.0 && s != last {
                    count += 1;
                }
                last = s;
            }
        }
        count
    }

    /// Distinct real roots in `(lo, hi]`.
    pub fn count(&self, lo: f64, hi: f64) -> Result<usize> {
        if !(lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(self.variations(lo).saturating_sub(self.variations(hi)))
    }
}

/// Whether `b` divides `p` up to a relative remainder of `tol`.
fn divides(b: &Polynomial, p: &Polynomial, tol: f64) -> bool {
    let (_, r, cancelled) = p.div_rem_tracked(b);
    let scale = cancelled.iter().fold(0.0, |m: f64, c| m.max(*c));
    r.max_abs() <= tol * scale
}

/// Number of distinct real roots of `p` in `(lo, hi]`; either end may be
/// infinite.
pub fn sturm_count(p: &Polynomial, lo: f64, hi: f64) -> Result<usize> {
    if !(lo < hi) {
        return Err(Error::InvalidInterval { lo, hi });
    }
    SturmSequence::new(p)?.count(lo, hi)
}

/// `1 + max_{i<deg} |c_i| / |c_deg|`; every real (and complex) root lies in
/// the disc of this radius.
pub fn cauchy_bound(p: &Polynomial) -> Result<f64> {
    let deg = match p.degree() {
        Some(d) if d >= 1 => d,
        _ => return Err(Error::InvalidInput("Cauchy bound of a constant polynomial".into())),
    };
    let lead = p.leading().abs();
    let m = p.coeffs[..deg].iter().fold(0.0, |m: f64, c| m.max(c.abs()));
    Ok(1.0 + m / lead)
}

/// Result of [`bisect_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
    /// `|f(root)|`.
    pub residual: f64,
    /// `false` when the iteration cap was hit first.
    pub converged: bool,
}

pub const BISECTION_MAX_ITER: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops once the bracket is no wider than `tol · max(1, |λ|)`, when the
/// midpoint can no longer be separated from an endpoint, or after
/// [`BISECTION_MAX_ITER`] halvings (then `converged` is `false`).
pub fn bisect_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Bisection>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::InvalidInterval { lo, hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(Bisection { root: lo, iterations: 0, residual: 0.0, converged: true });
    }
    if fhi == 0.0 {
        return Ok(Bisection { root: hi, iterations: 0, residual: 0.0, converged: true });
    }
    if !(flo * fhi < 0.0) {
        return Err(Error::NoSignChange { lo, hi });
    }
    let lo_positive = flo > 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(Bisection { root: mid, iterations, residual: 0.0, converged: true });
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    Ok(Bisection { root, iterations, residual: f(root).abs(), converged })
}

/// Congruence that diagonalizes `AᵀA` and `D` at once:
/// `Rᵀ(AᵀA)R = diag(γ)`, `RᵀDR = diag(δ)`.
///
/// With the normalization used here `γ_i = 1` and `δ` is sorted in
/// decreasing order.
#[derive(Debug, Clone)]
pub struct Diagonalization {
    pub r: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub delta: DVector<f64>,
}

impl Diagonalization {
    /// Left end of the interval on which `AᵀA + λD ⪰ 0`.
    pub fn lambda_lower(&self) -> f64 {
        -1.0 / self.delta[0]
    }

    /// Relative Frobenius off-diagonal residual of both congruences.
    pub fn residual(&self, ata: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
        let rel = |m: &DMatrix<f64>, target: &DVector<f64>, base: f64| {
            let mut e = self.r.transpose() * m * &self.r;
            for k in 0..target.len() {
                e[(k, k)] -= target[k];
            }
            e.norm() / base
        };
        let scale_a = (self.r.transpose() * ata * &self.r).norm();
        let scale_d = (self.r.transpose() * d * &self.r).norm().max(f64::MIN_POSITIVE);
        rel(ata, &self.gamma, scale_a).max(rel(d, &self.delta, scale_d))
    }
}

/// `L⁻¹ D L⁻ᵀ` for `AᵀA = LLᵀ`, plus `L`.
fn whitened(ata: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = ata.nrows();
    if ata.ncols() != k || d.nrows() != k || d.ncols() != k {
        return Err(Error::InvalidInput("pencil matrices must be square and equal size".into()));
    }
    let chol = ata.clone().cholesky().ok_or(Error::RankDeficient("AᵀA is not positive definite"))?;
    let l = chol.l();
    let linv_d = l.solve_lower_triangular(d).ok_or(Error::RankDeficient("singular Cholesky factor"))?;
    let m = l.solve_lower_triangular(&linv_d.transpose()).ok_or(Error::RankDeficient("singular Cholesky factor"))?;
    Ok((l, (&m + m.transpose()) * 0.5))
}

/// `λ_l = min{λ : AᵀA + λD ⪰ 0} = −1/θ_max` with `θ_max` the largest
/// eigenvalue of `L⁻¹DL⁻ᵀ`.
pub fn lambda_lower(ata: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<f64> {
    let (_, m) = whitened(ata, d)?;
    let theta = m.symmetric_eigenvalues().max();
    if !(theta > 0.0) {
        return Err(Error::InvalidInput("D has no positive direction".into()));
    }
    Ok(-1.0 / theta)
}

/// `R = L⁻ᵀQ` with `Q` the eigenvectors of `L⁻¹DL⁻ᵀ`.
pub fn simdiag(ata: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<Diagonalization> {
    let (l, m) = whitened(ata, d)?;
    let k = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let mut q = DMatrix::zeros(k, k);
    let mut delta = DVector::zeros(k);
    for (c, &i) in order.iter().enumerate() {
        q.set_column(c, &eig.eigenvectors.column(i));
        let v = eig.eigenvalues[i];
        delta[c] = if v <= DELTA_CLAMP * top { 0.0 } else { v };
    }
    let r = l.transpose().solve_upper_triangular(&q).ok_or(Error::RankDeficient("singular Cholesky factor"))?;
    Ok(Diagonalization { r, gamma: DVector::from_element(k, 1.0), delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_basic_counts() {
        let p = Polynomial::new(vec![-1.0, 0.0, 1.0]);
        assert_eq!(sturm_count(&p, 0.0, f64::INFINITY).unwrap(), 1);
        assert_eq!(sturm_count(&p, f64::NEG_INFINITY, f64::INFINITY).unwrap(), 2);
        let q = Polynomial::new(vec![1.0, 0.0, 1.0]);
        assert_eq!(sturm_count(&q, f64::NEG_INFINITY, f64::INFINITY).unwrap(), 0);
        assert!(sturm_count(&p, 1.0, 1.0).is_err());
        assert!(sturm_count(&Polynomial::zero(), 0.0, 1.0).is_err());
    }

    #[test]
    fn sturm_counts_repeated_roots_once() {
        let p = Polynomial::from_roots(&[1.0, 1.0, 2.0, -3.0, -3.0, -3.0]);
        assert_eq!(sturm_count(&p, f64::NEG_INFINITY, f64::INFINITY).unwrap(), 3);
        assert_eq!(sturm_count(&p, 0.0, 5.0).unwrap(), 2);
        let s = SturmSequence::new(&p).unwrap();
        assert_eq!(s.chain().last().unwrap().degree(), Some(0));
    }

    #[test]
    fn half_open_interval() {
        let p = Polynomial::from_roots(&[1.0, 2.0]);
        assert_eq!(sturm_count(&p, 1.0, 2.0).unwrap(), 1);
        assert_eq!(sturm_count(&p, 0.5, 1.5).unwrap(), 1);
    }

    #[test]
    fn cauchy_examples() {
        let p = Polynomial::new(vec![2.0, -3.0, 1.0]);
        assert_eq!(cauchy_bound(&p).unwrap(), 4.0);
        assert_eq!(cauchy_bound(&Polynomial::new(vec![0.0, 0.0, 0.0, 1.0])).unwrap(), 1.0);
        assert!(cauchy_bound(&Polynomial::constant(3.0)).is_err());
    }

    #[test]
    fn bisection_examples() {
        let r = bisect_root(|x| x - 2.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((r.root - 2.0).abs() < 1e-11);
        let r = bisect_root(|x| x * x * x - 8.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((r.root - 2.0).abs() < 1e-11);
        assert!(r.converged);
        assert!(matches!(bisect_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12), Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn polynomial_arithmetic() {
        let p = Polynomial::from_roots(&[1.0, -2.0, 3.0]);
        assert_eq!(p.degree(), Some(3));
        for r in [1.0, -2.0, 3.0] {
            assert!(p.eval(r).abs() < 1e-12);
        }
        let (q, r) = p.div_rem(&Polynomial::linear(-1.0, 1.0));
        assert!(r.max_abs() < 1e-12);
        assert_eq!(q, Polynomial::from_roots(&[-2.0, 3.0]));
        let scaled = p.compose_scale(2.0);
        assert!((scaled.eval(1.5) - p.eval(3.0)).abs() < 1e-12);
        assert_eq!(p.derivative().eval(0.0), p.coeffs()[1]);
    }

    #[test]
    fn lambda_lower_examples() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let d = crate::model::constraint_matrix(1);
        assert!((lambda_lower(&eye, &d).unwrap() + 1.0).abs() < 1e-14);
        let ata = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        assert!((lambda_lower(&ata, &d).unwrap() + 4.0).abs() < 1e-12);
        let singular = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(lambda_lower(&singular, &d), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn simdiag_identity_case() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let d = crate::model::constraint_matrix(1);
        let diag = simdiag(&eye, &d).unwrap();
        assert_eq!(diag.delta.as_slice(), &[1.0, 0.0]);
        let rtr = diag.r.transpose() * &diag.r;
        assert!((rtr - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!((diag.lambda_lower() - lambda_lower(&eye, &d).unwrap()).abs() < 1e-14);
    }
}
