//! Global solver for
//!
//! ```text
//! minimize ‖A y − b‖²   subject to   yᵀD y + 2gᵀy = 0
//! ```
//!
//! with `D = diag(I_n, 0)` and `g = [0, …, 0, −1/2]`, i.e. the squared-range
//! problem written in the lifted variable `y = [x; ‖x‖²]`.
//!
//! `y*` is a global minimizer iff some `λ*` satisfies
//! `(AᵀA + λ*D) y* = Aᵀb − λ*g`, the constraint, and `AᵀA + λ*D ⪰ 0`. The
//! admissible multipliers form `[λ_l, ∞)`. On the open part the constraint
//! value `c(λ)` of `y(λ) = (AᵀA + λD)⁻¹(Aᵀb − λg)` is strictly decreasing, so
//! its root is found by bisection once a Sturm count of the polynomial
//! `T(λ) = c(λ) ∏(γ_j + λδ_j)²` confirms one exists. Otherwise `λ* = λ_l`
//! and the solution is recovered from the singular system along its null
//! vector.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::model::{constraint_matrix, constraint_vector, DesignSystem};
use crate::polyspectral::{bisect_root, cauchy_bound, simdiag, Diagonalization, Polynomial, SturmSequence};
use crate::{Error, Result};

/// Relative width at which the multiplier bisection stops.
pub const BISECTION_TOL: f64 = 1e-12;

/// Offset past `λ_l` (relative to `1 + |λ_l|`) where root counting starts.
pub const INTERIOR_OFFSET: f64 = 1e-10;

/// One instance of the problem, with the normal-equation quantities cached.
#[derive(Debug, Clone)]
pub struct GtrsInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub d: DMatrix<f64>,
    pub g: DVector<f64>,
    pub ata: DMatrix<f64>,
    pub atb: DVector<f64>,
    /// Row weights, when the objective is `(Ay − b)ᵀW(Ay − b)`.
    pub weights: Option<DVector<f64>>,
}

impl GtrsInstance {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.ncols() < 2 {
            return Err(Error::InvalidInput(alloc::format!(
                "A is {}x{}, b has {} entries",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let n = a.ncols() - 1;
        let ata = a.tr_mul(&a);
        let atb = a.tr_mul(&b);
        Ok(GtrsInstance { a, b, d: constraint_matrix(n), g: constraint_vector(n), ata, atb, weights: None })
    }

    pub fn from_design(design: &DesignSystem) -> Self {
        let (ata, atb) = design.normal_equations();
        GtrsInstance {
            a: design.a.clone(),
            b: design.rhs.clone(),
            d: design.d(),
            g: design.g(),
            ata,
            atb,
            weights: design.weights.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len() - 1
    }

    /// `(Ay − b)ᵀW(Ay − b)`.
    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        let r = &self.a * y - &self.b;
        match &self.weights {
            None => r.norm_squared(),
            Some(w) => r.iter().zip(w.iter()).map(|(ri, wi)| wi * ri * ri).sum(),
        }
    }

    /// `yᵀDy + 2gᵀy`.
    pub fn constraint(&self, y: &DVector<f64>) -> f64 {
        y.dot(&(&self.d * y)) + 2.0 * self.g.dot(y)
    }

    fn shifted(&self, lambda: f64) -> DMatrix<f64> {
        &self.ata + &self.d * lambda
    }

    fn shifted_rhs(&self, lambda: f64) -> DVector<f64> {
        &self.atb - &self.g * lambda
    }

    /// `y(λ) = (AᵀA + λD)⁻¹(Aᵀb − λg)`; fails when `AᵀA + λD` is not
    /// positive definite.
    pub fn y_of_lambda(&self, lambda: f64) -> Result<DVector<f64>> {
        let chol = self.shifted(lambda).cholesky().ok_or(Error::Singular(lambda))?;
        Ok(chol.solve(&self.shifted_rhs(lambda)))
    }

    /// Relative residuals of the three global optimality conditions at
    /// `(y, λ)`.
    pub fn certificate(&self, y: &DVector<f64>, lambda: f64) -> Certificate {
        let k = self.shifted(lambda);
        let rhs = self.shifted_rhs(lambda);
        let lin = (&k * y - &rhs).norm() / (rhs.norm() + k.norm() * y.norm()).max(f64::MIN_POSITIVE);
        let cons = self.constraint(y).abs() / (1.0 + y.norm_squared());
        let min_eig = k.symmetric_eigenvalues().min() / self.ata.norm();
        Certificate { linear_residual: lin, constraint_residual: cons, min_eigenvalue: min_eig }
    }
}

/// Optimality certificate, every field is relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// `‖(AᵀA+λD)y − (Aᵀb−λg)‖ / (‖Aᵀb−λg‖ + ‖AᵀA+λD‖‖y‖)`.
    pub linear_residual: f64,
    /// `|yᵀDy + 2gᵀy| / (1 + ‖y‖²)`.
    pub constraint_residual: f64,
    /// `λ_min(AᵀA + λD) / ‖AᵀA‖`.
    pub min_eigenvalue: f64,
}

impl Certificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.linear_residual < tol && self.constraint_residual < tol && self.min_eigenvalue >= -tol
    }
}

/// How the multiplier was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    /// `λ*` inside `(λ_l, ∞)`, found by bisection.
    Regular,
    /// `λ* = λ_l`, singular Lagrangian Hessian.
    HardCase,
    /// Inequality-constrained solve where the unconstrained minimizer is
    /// already feasible (`λ* = 0`).
    Interior,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GtrsWarning {
    /// More than one root of `T` counted past `λ_l`.
    MultipleRoots(usize),
    /// Bisection hit its iteration cap.
    BisectionCap,
    /// The Sturm count found no root past `λ_l` although `c(λ_l⁺) > 0`
    /// brackets one; the chain of `T` was too ill-conditioned to count.
    CountMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtrsDiagnostics {
    pub constraint_residual: f64,
    pub objective: f64,
    pub bisection_iterations: usize,
    pub lambda_lower: f64,
    pub roots_counted: usize,
    pub warnings: Vec<GtrsWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtrsSolution {
    pub y: DVector<f64>,
    /// Lagrange multiplier; equals `diagnostics.lambda_lower` on the hard
    /// case path.
    pub lambda: f64,
    pub path: SolverPath,
    pub diagnostics: GtrsDiagnostics,
}

/// `c(λ) = y(λ)ᵀDy(λ) + 2gᵀy(λ)`, defined for `λ > λ_l`.
pub fn c_of_lambda(inst: &GtrsInstance, lambda: f64) -> Result<f64> {
    let y = inst.y_of_lambda(lambda)?;
    Ok(inst.constraint(&y))
}

/// `T(λ)` of degree at most `2n + 2`, whose roots past `λ_l` are those of
/// `c`. Built from `w(λ) = Rᵀ(Aᵀb − λg)`.
pub fn build_t(inst: &GtrsInstance, diag: &Diagonalization) -> Result<Polynomial> {
    let k = inst.g.len();
    if diag.r.nrows() != k || diag.gamma.len() != k || diag.delta.len() != k {
        return Err(Error::InvalidInput("diagonalization does not match the instance".into()));
    }
    let rt = diag.r.transpose();
    let u = &rt * &inst.atb;
    let v = &rt * &inst.g;
    let w: Vec<Polynomial> = (0..k).map(|i| Polynomial::linear(u[i], -v[i])).collect();
    let factors: Vec<Polynomial> = (0..k).map(|j| Polynomial::linear(diag.gamma[j], diag.delta[j])).collect();
    let squares: Vec<Polynomial> = factors.iter().map(|f| f.mul(f)).collect();
    let mut t = Polynomial::zero();
    for i in 0..k {
        let others = (0..k).filter(|&j| j != i).fold(Polynomial::constant(1.0), |acc, j| acc.mul(&squares[j]));
        let linear_term = w[i].mul(&factors[i]).scale(2.0 * v[i]);
        let quadratic_term = w[i].mul(&w[i]).scale(diag.delta[i]);
        t = t.add(&linear_term.add(&quadratic_term).mul(&others));
    }
    Ok(t)
}

/// Solve the singular system `(AᵀA + λ_l D) y = Aᵀb − λ_l g` together with
/// the constraint, given a null vector `v` of `AᵀA + λ_l D`.
///
/// Along `y = y_p + t v` the constraint is a quadratic `q(t)`; the minimizer
/// of `vᵀy` over `q(t) ≤ 0` is its smaller root, where the constraint is
/// active.
pub fn solve_hard_case(inst: &GtrsInstance, lambda_l: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    let k = inst.shifted(lambda_l);
    let rhs = inst.shifted_rhs(lambda_l);
    let vn = v.norm();
    if vn == 0.0 {
        return Err(Error::InvalidInput("zero null vector".into()));
    }
    let unit = v / vn;
    let svd = k.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let nullity = svd.singular_values.iter().filter(|s| **s <= 1e-9 * smax).count();
    if nullity > 1 {
        return Err(Error::UnsupportedDegeneracy(nullity));
    }
    if (&k * &unit).norm() > 1e-8 * smax {
        return Err(Error::InvalidInput("v is not a null vector of AᵀA + λ_l D".into()));
    }
    // Consistency: rhs must be orthogonal to the null space.
    if unit.dot(&rhs).abs() > 1e-6 * rhs.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Infeasible("right-hand side has a null-space component"));
    }
    let rhs_proj = &rhs - &unit * unit.dot(&rhs);
    let yp = svd.solve(&rhs_proj, 1e-9 * smax).map_err(|_| Error::Infeasible("pseudo-inverse failed"))?;
    let yp = &yp - &unit * unit.dot(&yp);

    let qa = unit.dot(&(&inst.d * &unit));
    let qb = 2.0 * (unit.dot(&(&inst.d * &yp)) + inst.g.dot(&unit));
    let qc = inst.constraint(&yp);
    let t = if qa.abs() <= 1e-14 * (1.0 + qb.abs()) {
        if qb == 0.0 {
            return Err(Error::Infeasible("constraint is constant along the null vector"));
        }
        -qc / qb
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        let tol = 1e-12 * (qb * qb + (4.0 * qa * qc).abs());
        if disc < -tol {
            return Err(Error::Infeasible("constraint cannot be met along the null vector"));
        }
        let sq = disc.max(0.0).sqrt();
        let (r1, r2) = if qb > 0.0 {
            let r = (-qb - sq) / (2.0 * qa);
            (r, if r != 0.0 { qc / (qa * r) } else { (-qb + sq) / (2.0 * qa) })
        } else {
            let r = (-qb + sq) / (2.0 * qa);
            (if r != 0.0 { qc / (qa * r) } else { (-qb - sq) / (2.0 * qa) }, r)
        };
        r1.min(r2)
    };
    Ok(yp + unit * t)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    inst: &GtrsInstance,
    y: DVector<f64>,
    lambda: f64,
    path: SolverPath,
    lambda_lower: f64,
    iterations: usize,
    roots: usize,
    warnings: Vec<GtrsWarning>,
) -> GtrsSolution {
    let diagnostics = GtrsDiagnostics {
        constraint_residual: inst.constraint(&y),
        objective: inst.objective(&y),
        bisection_iterations: iterations,
        lambda_lower,
        roots_counted: roots,
        warnings,
    };
    GtrsSolution { y, lambda, path, diagnostics }
}

/// Upper end of the bisection bracket: `1 + ` a Cauchy bound on the roots
/// of `T`, computed on `T(μ/δ_max)` so that the polynomial is well scaled.
fn root_bound(t_scaled: &Polynomial, scale: f64) -> f64 {
    match cauchy_bound(t_scaled) {
        Ok(b) => 1.0 + b * scale,
        Err(_) => 1.0 + scale,
    }
}

/// Grow `hi` until `c(hi) < 0`.
fn negative_endpoint(inst: &GtrsInstance, lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..64 {
        if c_of_lambda(inst, hi)? < 0.0 {
            return Ok(hi);
        }
        hi = lo + 2.0 * (hi - lo).max(1.0);
    }
    Err(Error::NoSignChange { lo, hi })
}

/// The complete solver: `λ_l` from the pencil, `T`, a Sturm count past
/// `λ_l`, then bisection on `c` or the hard-case fallback.
pub fn solve_bias_eli(inst: &GtrsInstance) -> Result<GtrsSolution> {
    let diag = simdiag(&inst.ata, &inst.d)?;
    let delta_max = diag.delta[0];
    let lambda_l = diag.lambda_lower();
    let eps = INTERIOR_OFFSET * (1.0 + lambda_l.abs());
    let lo = lambda_l + eps;

    let t = build_t(inst, &diag)?;
    // μ = δ_max λ puts λ_l at μ = −1.
    let scale = 1.0 / delta_max;
    let t_scaled = t.compose_scale(scale).normalized();
    let roots = if t_scaled.is_zero() { 0 } else { SturmSequence::new(&t_scaled)?.count(lo / scale, f64::INFINITY)? };

    let mut warnings = Vec::new();
    if c_of_lambda(inst, lo)? > 0.0 {
        if roots == 0 {
            warnings.push(GtrsWarning::CountMismatch);
        } else if roots >= 2 {
            warnings.push(GtrsWarning::MultipleRoots(roots));
        }
        let hi = negative_endpoint(inst, lo, root_bound(&t_scaled, scale).max(lo + 1.0))?;
        let mut failure = None;
        let bis = bisect_root(
            |lambda| match c_of_lambda(inst, lambda) {
                Ok(c) => c,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            BISECTION_TOL,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        if !bis.converged {
            warnings.push(GtrsWarning::BisectionCap);
        }
        let y = inst.y_of_lambda(bis.root)?;
        return Ok(finish(inst, y, bis.root, SolverPath::Regular, lambda_l, bis.iterations, roots, warnings));
    }

    if diag.delta.len() > 1 && diag.delta[1] >= delta_max * (1.0 - 1e-9) {
        return Err(Error::UnsupportedDegeneracy(2));
    }
    let v: DVector<f64> = diag.r.column(0).into_owned();
    let y = solve_hard_case(inst, lambda_l, &v)?;
    Ok(finish(inst, y, lambda_l, SolverPath::HardCase, lambda_l, 0, roots, warnings))
}

/// Convex variant: minimize the objective subject to `yᵀDy + 2gᵀy ≤ 0`.
///
/// If the unconstrained least-squares solution is feasible it is returned
/// (`λ* = 0`); otherwise the constraint is active with `λ* > 0` and `c` is
/// bisected on `(0, bound]`.
pub fn solve_inequality(inst: &GtrsInstance) -> Result<GtrsSolution> {
    let y0 = inst.y_of_lambda(0.0).map_err(|_| Error::RankDeficient("AᵀA is singular"))?;
    let c0 = inst.constraint(&y0);
    if c0 <= 0.0 {
        return Ok(finish(inst, y0, 0.0, SolverPath::Interior, f64::NAN, 0, 0, Vec::new()));
    }
    let diag = simdiag(&inst.ata, &inst.d)?;
    let lambda_l = diag.lambda_lower();
    let scale = 1.0 / diag.delta[0];
    let t_scaled = build_t(inst, &diag)?.compose_scale(scale).normalized();
    let hi = negative_endpoint(inst, 0.0, root_bound(&t_scaled, scale).max(1.0))?;
    let bis = bisect_root(|l| c_of_lambda(inst, l).unwrap_or(f64::NAN), 0.0, hi, BISECTION_TOL)?;
    let mut warnings = Vec::new();
    if !bis.converged {
        warnings.push(GtrsWarning::BisectionCap);
    }
    let y = inst.y_of_lambda(bis.root)?;
    Ok(finish(inst, y, bis.root, SolverPath::Regular, lambda_l, bis.iterations, 1, warnings))
}
