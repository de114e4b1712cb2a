//! SISO state-space realizations, transfer evaluation, resolvent moments,
//! feedback interconnection and system predicates.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    eig_tolerance, eigenvalues, eigenvalues_c, min_pairwise_distance, rank, spectral_abscissa, to_complex,
    CMat, RMat,
};

/// State-space quadruple `(A, B, C, D)` of a single-input single-output
/// system. Order zero is allowed and represents a static gain `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: f64,
}

impl Realization {
    pub fn new(a: RMat, b: RMat, c: RMat, d: f64) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::Shape(format!("A is {}x{}, expected square", a.nrows(), a.ncols())));
        }
        if b.shape() != (n, 1) {
            return Err(Error::Shape(format!("B is {}x{}, expected {}x1", b.nrows(), b.ncols(), n)));
        }
        if c.shape() != (1, n) {
            return Err(Error::Shape(format!("C is {}x{}, expected 1x{}", c.nrows(), c.ncols(), n)));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) || !d.is_finite() {
            return Err(Error::InvalidArgument("realization has non-finite entries".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain `u = k e` (order zero).
    pub fn static_gain(k: f64) -> Self {
        Self { a: RMat::zeros(0, 0), b: RMat::zeros(0, 1), c: RMat::zeros(1, 0), d: k }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        eigenvalues(&self.a)
    }

    pub fn spectral_abscissa(&self) -> f64 {
        spectral_abscissa(&self.a)
    }

    /// True iff every eigenvalue has real part below `-margin`.
    pub fn is_stable(&self, margin: f64) -> bool {
        self.spectral_abscissa() < -margin
    }

    pub fn controllability_rank(&self) -> usize {
        controllability_rank(&to_complex(&self.a), &to_complex(&self.b))
    }

    pub fn observability_rank(&self) -> usize {
        observability_rank(&to_complex(&self.c), &to_complex(&self.a))
    }

    pub fn is_minimal(&self) -> bool {
        let n = self.order();
        self.controllability_rank() == n && self.observability_rank() == n
    }

    fn pole_guard(&self, s: Complex64) -> Result<()> {
        let ev = self.poles();
        let tol = eig_tolerance(&ev, &[s]);
        if min_pairwise_distance(&ev, &[s]) < tol {
            return Err(Error::PoleHit { point: format!("{s}"), tolerance: tol });
        }
        Ok(())
    }

    /// `C (sI − A)⁻¹ B + D`, by a linear solve.
    pub fn eval_transfer(&self, s: Complex64) -> Result<Complex64> {
        self.pole_guard(s)?;
        let x = self.resolvent_solve(s, &to_complex(&self.b))?;
        Ok((to_complex(&self.c) * x)[(0, 0)] + self.d)
    }

    fn resolvent_solve(&self, s: Complex64, rhs: &CMat) -> Result<CMat> {
        let n = self.order();
        if n == 0 {
            return Ok(CMat::zeros(0, rhs.ncols()));
        }
        let m = CMat::identity(n, n) * s - to_complex(&self.a);
        m.lu().solve(rhs).ok_or(Error::Singular { pivot: 0.0 })
    }

    /// k-moment `C (s₁I − A)^{−(k+1)} B` (plus `D` for `k = 0`).
    pub fn moment_resolvent(&self, s1: Complex64, k: usize) -> Result<Complex64> {
        self.pole_guard(s1)?;
        let n = self.order();
        let mut x = to_complex(&self.b);
        if n > 0 {
            let lu = (CMat::identity(n, n) * s1 - to_complex(&self.a)).lu();
            for _ in 0..=k {
                x = lu.solve(&x).ok_or(Error::Singular { pivot: 0.0 })?;
            }
        }
        let mut eta = (to_complex(&self.c) * x)[(0, 0)];
        if k == 0 {
            eta += self.d;
        }
        Ok(eta)
    }

    /// Realization of `1 − P(s)`.
    pub fn complement(&self) -> Realization {
        Realization { a: self.a.clone(), b: self.b.clone(), c: -&self.c, d: 1.0 - self.d }
    }
}

pub fn controllability_matrix(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = CMat::zeros(n, n * m);
    let mut col = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&col);
        col = a * col;
    }
    out
}

pub fn observability_matrix(c: &CMat, a: &CMat) -> CMat {
    let n = a.nrows();
    let p = c.nrows();
    let mut out = CMat::zeros(n * p, n);
    let mut row = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&row);
        row = row * a;
    }
    out
}

pub fn controllability_rank(a: &CMat, b: &CMat) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    rank(&controllability_matrix(a, b), None)
}

pub fn observability_rank(c: &CMat, a: &CMat) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    rank(&observability_matrix(c, a), None)
}

/// `C (sI − A)⁻¹ B + D` for complex data, with the same pole guard as
/// [`Realization::eval_transfer`].
pub fn eval_transfer_c(a: &CMat, b: &CMat, c: &CMat, d: Complex64, s: Complex64) -> Result<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(d);
    }
    let ev = eigenvalues_c(a);
    let tol = eig_tolerance(&ev, &[s]);
    if min_pairwise_distance(&ev, &[s]) < tol {
        return Err(Error::PoleHit { point: format!("{s}"), tolerance: tol });
    }
    let m = CMat::identity(n, n) * s - a;
    let x = m.lu().solve(b).ok_or(Error::Singular { pivot: 0.0 })?;
    Ok((c * x)[(0, 0)] + d)
}

/// The three loop transfers of a negative unity-feedback interconnection:
/// reference→output, plant-input disturbance→output, reference→error.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSet {
    pub p_cl: Realization,
    pub t_dy: Realization,
    pub e_re: Realization,
}

/// Closes `P` with `K` in negative unity feedback: `ε = r − y` drives `K`,
/// and a disturbance `d` adds to the plant input.
///
/// With `Δ = 1 + D_P D_K` the shared state matrix on `(x, x_K)` is
/// `[[A − B D_K C/Δ, B C_K/Δ], [−B_K C/Δ, A_K − B_K D_P C_K/Δ]]`.
pub fn negative_feedback(p: &Realization, k: &Realization) -> Result<LoopSet> {
    let delta = 1.0 + p.d * k.d;
    if delta.abs() < 1e-12 {
        return Err(Error::IllPosed(delta));
    }
    let n = p.order();
    let nk = k.order();
    let dk = k.d / delta;
    let mut a = RMat::zeros(n + nk, n + nk);
    a.view_mut((0, 0), (n, n)).copy_from(&(&p.a - &p.b * &p.c * dk));
    a.view_mut((0, n), (n, nk)).copy_from(&(&p.b * &k.c / delta));
    a.view_mut((n, 0), (nk, n)).copy_from(&(-(&k.b * &p.c) / delta));
    a.view_mut((n, n), (nk, nk)).copy_from(&(&k.a - &k.b * &k.c * (p.d / delta)));

    let mut b_r = RMat::zeros(n + nk, 1);
    b_r.view_mut((0, 0), (n, 1)).copy_from(&(&p.b * dk));
    b_r.view_mut((n, 0), (nk, 1)).copy_from(&(&k.b / delta));

    let mut b_d = RMat::zeros(n + nk, 1);
    b_d.view_mut((0, 0), (n, 1)).copy_from(&(&p.b / delta));
    b_d.view_mut((n, 0), (nk, 1)).copy_from(&(-(&k.b) * (p.d / delta)));

    let mut c_y = RMat::zeros(1, n + nk);
    c_y.view_mut((0, 0), (1, n)).copy_from(&(&p.c / delta));
    c_y.view_mut((0, n), (1, nk)).copy_from(&(&k.c * (p.d / delta)));

    let d_yr = p.d * k.d / delta;
    let d_yd = p.d / delta;

    let p_cl = Realization::new(a.clone(), b_r.clone(), c_y.clone(), d_yr)?;
    let t_dy = Realization::new(a.clone(), b_d, c_y.clone(), d_yd)?;
    let e_re = p_cl.complement();
    Ok(LoopSet { p_cl, t_dy, e_re })
}
