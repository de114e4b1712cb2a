//! Dense linear-algebra kernel: Sylvester solvers, Kronecker vectorization,
//! spectra, rank and null space, matrix exponential.
//!
//! Matrices are stored as `nalgebra` dynamic matrices. Anything that can carry
//! complex interpolation points (generators, Sylvester solutions) is complex;
//! real data is promoted with [`to_complex`] and recovered with [`to_real`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type RVec = DVector<f64>;
pub type CVec = DVector<Complex64>;

/// Relative tolerance used for the post-solve Sylvester residual check.
pub const TAU_RES: f64 = 1e-9;
/// Relative eigenvalue-separation tolerance (scaled by the spectral radius).
pub const TAU_EIG_REL: f64 = 1e-8;
/// Relative rank tolerance (scaled by the largest singular value).
pub const RANK_REL_TOL: f64 = 1e-10;

const SCHUR_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Largest absolute imaginary part of any entry.
pub fn max_imag(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
}

/// Largest entry modulus (the max-norm used for moment residuals).
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Real part of `m`, provided every imaginary part is below `tol` times the
/// largest entry modulus (or `tol` absolutely for tiny matrices).
pub fn to_real(m: &CMat, tol: f64) -> Result<RMat> {
    let im = max_imag(m);
    if im > tol * max_abs(m).max(1.0) {
        return Err(Error::NotReal(im));
    }
    Ok(m.map(|z| z.re))
}

pub fn kron<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::ComplexField,
{
    a.kronecker(b)
}

fn sort_spectrum(v: &mut [Complex64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Dense orthogonal reflector `I − 2vvᵀ/‖v‖²` with a fixed, non-symmetric
/// direction; used to restart a stalled QR iteration from a similar matrix.
fn restart_reflector(n: usize) -> CMat {
    let v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt());
    let h = RMat::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    to_complex(&h)
}

/// Complex Schur decomposition `A = Q T Qᴴ`. When the QR iteration stalls
/// (it can on highly structured matrices) it is restarted from an
/// orthogonally similar matrix. `None` for non-finite input or if both
/// attempts fail.
pub fn complex_schur(a: &CMat) -> Option<(CMat, CMat)> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    if let Some(s) = a.clone().try_schur(f64::EPSILON, SCHUR_MAX_ITER) {
        return Some(s.unpack());
    }
    let h = restart_reflector(a.nrows());
    let (q, t) = (&h * a * &h).try_schur(f64::EPSILON, SCHUR_MAX_ITER)?.unpack();
    Some((h * q, t))
}

/// Eigenvalues of a real matrix, sorted by real then imaginary part.
/// Complex eigenvalues come out in exact conjugate pairs (they are read off
/// the 2×2 blocks of the real Schur form). If no Schur form can be computed
/// the spectrum is reported as NaN.
pub fn eigenvalues(a: &RMat) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<Complex64> = match a.clone().try_schur(f64::EPSILON, SCHUR_MAX_ITER) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => complex_schur_diagonal(&to_complex(a)),
    };
    sort_spectrum(&mut ev);
    ev
}

/// Eigenvalues of a complex matrix; real input is routed through the real
/// Schur form so that conjugate pairing is preserved.
pub fn eigenvalues_c(a: &CMat) -> Vec<Complex64> {
    if max_imag(a) == 0.0 {
        return eigenvalues(&a.map(|z| z.re));
    }
    let mut ev = complex_schur_diagonal(a);
    sort_spectrum(&mut ev);
    ev
}

fn complex_schur_diagonal(a: &CMat) -> Vec<Complex64> {
    match complex_schur(a) {
        Some((_, t)) => (0..t.nrows()).map(|i| t[(i, i)]).collect(),
        None => vec![Complex64::new(f64::NAN, f64::NAN); a.nrows()],
    }
}

pub fn spectral_radius(ev: &[Complex64]) -> f64 {
    ev.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest real part of the spectrum; `-inf` for an empty matrix and `+inf`
/// when the spectrum could not be computed.
pub fn spectral_abscissa(a: &RMat) -> f64 {
    eigenvalues(a)
        .iter()
        .fold(f64::NEG_INFINITY, |acc, z| if z.re.is_nan() { f64::INFINITY } else { acc.max(z.re) })
}

/// Smallest pairwise distance between two spectra (`+inf` if either is empty).
pub fn min_pairwise_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut d = f64::INFINITY;
    for x in a {
        for y in b {
            d = d.min((x - y).norm());
        }
    }
    d
}

/// Eigenvalue-separation tolerance for a pair of spectra.
pub fn eig_tolerance(a: &[Complex64], b: &[Complex64]) -> f64 {
    TAU_EIG_REL * spectral_radius(a).max(spectral_radius(b)).max(1.0)
}

/// Distance between two equally sized spectra under a greedy matching:
/// the globally closest unmatched pair is matched first. Returns `+inf` for
/// sets of different size.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

/// Singular values in decreasing order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Numerical rank; the default tolerance is `1e-10 * sigma_max`.
pub fn rank(a: &CMat, tol: Option<f64>) -> usize {
    let sv = singular_values(a);
    let smax = sv.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or(RANK_REL_TOL * smax);
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Rank after scaling every nonzero column to unit norm. Solutions at
/// Jordan points have columns growing like successive moments, which can
/// span many orders of magnitude while remaining independent.
pub fn column_scaled_rank(a: &CMat) -> usize {
    let mut scaled = a.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
    }
    rank(&scaled, None)
}

pub fn rank_real(a: &RMat, tol: Option<f64>) -> usize {
    rank(&to_complex(a), tol)
}

/// Orthonormal basis of the right null space. Each vector is rotated so that
/// its largest-modulus entry is real and positive, which makes the basis of
/// real data real and the output deterministic.
pub fn null_space(a: &CMat, tol: Option<f64>) -> Vec<CVec> {
    let (m, n) = a.shape();
    if n == 0 {
        return Vec::new();
    }
    // Pad wide matrices so that the SVD exposes a full n×n right factor.
    let padded = if m < n {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let tol = tol.unwrap_or(RANK_REL_TOL * smax);
    let mut basis = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            let v: CVec = v_t.row(k).transpose().map(|z| z.conj());
            basis.push(normalize_phase(v));
        }
    }
    basis
}

fn normalize_phase(v: CVec) -> CVec {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        // Prefer the first index among (near-)ties so the choice is stable.
        if z.norm() > best * (1.0 + 1e-12) {
            best = z.norm();
            idx = i;
        }
    }
    if best <= 0.0 {
        return v;
    }
    let phase = v[idx].conj() / v[idx].norm();
    v * phase
}

/// `expm(A t)` by scaling and squaring.
pub fn expm(a: &RMat, t: f64) -> RMat {
    (a * t).exp()
}

/// Result of a Sylvester solve `A Π + B L = Π S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SylvesterSolution {
    pub pi: CMat,
    pub residual_norm: f64,
    pub rank: usize,
}

/// `‖AΠ + BL − ΠS‖_F`.
pub fn sylvester_residual(a: &CMat, b: &CMat, l: &CMat, s: &CMat, pi: &CMat) -> f64 {
    (a * pi + b * l - pi * s).norm()
}

/// Natural scale `‖A‖‖Π‖ + ‖B‖‖L‖ + ‖Π‖‖S‖` against which residuals are judged.
pub fn sylvester_scale(a: &CMat, b: &CMat, l: &CMat, s: &CMat, pi: &CMat) -> f64 {
    a.norm() * pi.norm() + b.norm() * l.norm() + pi.norm() * s.norm()
}

fn check_sylvester_shapes(a: &CMat, b: &CMat, l: &CMat, s: &CMat) -> Result<()> {
    let n = a.nrows();
    let nu = s.nrows();
    if !a.is_square() || !s.is_square() {
        return Err(Error::Shape("A and S must be square".into()));
    }
    if b.nrows() != n || l.ncols() != nu || b.ncols() != l.nrows() {
        return Err(Error::Shape(format!(
            "B is {}x{}, L is {}x{}; expected {}xm and mx{}",
            b.nrows(),
            b.ncols(),
            l.nrows(),
            l.ncols(),
            n,
            nu
        )));
    }
    if a.iter().chain(b.iter()).chain(l.iter()).chain(s.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry in Sylvester data".into()));
    }
    Ok(())
}

/// Solves `A Π + B L = Π S` for `Π` by the complex-Schur (Bartels–Stewart)
/// method: both coefficient matrices are triangularized and the transformed
/// equation is solved column by column with back substitution.
pub fn solve_sylvester(a: &CMat, b: &CMat, l: &CMat, s: &CMat) -> Result<SylvesterSolution> {
    check_sylvester_shapes(a, b, l, s)?;
    let n = a.nrows();
    let nu = s.nrows();
    if n == 0 || nu == 0 {
        return Ok(SylvesterSolution { pi: CMat::zeros(n, nu), residual_norm: 0.0, rank: 0 });
    }
    let ea = eigenvalues_c(a);
    let es = eigenvalues_c(s);
    let tau = eig_tolerance(&ea, &es);
    let dist = min_pairwise_distance(&ea, &es);
    if dist < tau {
        return Err(Error::SpectraOverlap { distance: dist, tolerance: tau });
    }

    let (qa, ta) = complex_schur(a).ok_or(Error::Singular { pivot: f64::NAN })?;
    let (qs, ts) = complex_schur(s).ok_or(Error::Singular { pivot: f64::NAN })?;

    // A Π − Π S = −B L  ⇒  T_a Y − Y T_s = F̂ with Y = Q_aᴴ Π Q_s.
    let scale = a.norm().max(s.norm()).max(1.0);
    let pivot_floor = 1e2 * f64::EPSILON * scale;
    let solve_transformed = |rhs_full: &CMat| -> Result<CMat> {
        let f_hat = qa.adjoint() * rhs_full * &qs;
        let mut y = CMat::zeros(n, nu);
        for j in 0..nu {
            let mut rhs: CVec = f_hat.column(j).into_owned();
            for k in 0..j {
                let tkj = ts[(k, j)];
                if tkj != Complex64::new(0.0, 0.0) {
                    rhs += y.column(k) * tkj;
                }
            }
            let mu = ts[(j, j)];
            for i in (0..n).rev() {
                let mut acc = rhs[i];
                for p in (i + 1)..n {
                    acc -= ta[(i, p)] * y[(p, j)];
                }
                let piv = ta[(i, i)] - mu;
                if piv.norm() < pivot_floor {
                    return Err(Error::Singular { pivot: piv.norm() });
                }
                y[(i, j)] = acc / piv;
            }
        }
        Ok(&qa * y * qs.adjoint())
    };
    let pi = solve_transformed(&(-(b * l)))?;

    let residual_norm = sylvester_residual(a, b, l, s, &pi);
    let bound = TAU_RES * sylvester_scale(a, b, l, s, &pi);
    if residual_norm > bound && residual_norm > f64::EPSILON {
        return Err(Error::Inaccurate { residual: residual_norm, bound });
    }
    let rank = column_scaled_rank(&pi);
    Ok(SylvesterSolution { pi, residual_norm, rank })
}

/// Real-data convenience wrapper around [`solve_sylvester`].
pub fn solve_sylvester_real(a: &RMat, b: &RMat, l: &RMat, s: &RMat) -> Result<SylvesterSolution> {
    solve_sylvester(&to_complex(a), &to_complex(b), &to_complex(l), &to_complex(s))
}

/// Kronecker form of `Π ↦ MΠ − ΠS` acting on the column-stacked `vec(Π)`:
/// `I_ν ⊗ M − Sᵀ ⊗ I_n`.
pub fn sylvester_operator(m: &CMat, s: &CMat) -> CMat {
    let n = m.nrows();
    let nu = s.nrows();
    kron(&CMat::identity(nu, nu), m) - kron(&s.transpose(), &CMat::identity(n, n))
}

/// Basis of `{Π : MΠ = ΠS}` from the null space of the Kronecker operator.
/// Empty exactly when the spectra of `M` and `S` are disjoint.
pub fn homogeneous_sylvester_basis(m: &CMat, s: &CMat) -> Result<Vec<CMat>> {
    if !m.is_square() || !s.is_square() {
        return Err(Error::Shape("M and S must be square".into()));
    }
    let n = m.nrows();
    let nu = s.nrows();
    if n == 0 || nu == 0 {
        return Ok(Vec::new());
    }
    let op = sylvester_operator(m, s);
    // Tolerance relative to the data, not to the operator's own largest
    // singular value (which vanishes when M and S nearly coincide).
    let tol = RANK_REL_TOL * (m.norm() + s.norm());
    Ok(null_space(&op, Some(tol))
        .into_iter()
        .map(|v| CMat::from_column_slice(n, nu, v.as_slice()))
        .collect())
}

/// Solves the square complex system `M x = rhs` by LU; reports singularity.
pub fn solve_linear(m: &CMat, rhs: &CMat) -> Result<CMat> {
    if !m.is_square() || m.nrows() != rhs.nrows() {
        return Err(Error::Shape("linear system must be square and conformant".into()));
    }
    let lu = m.clone().lu();
    lu.solve(rhs).ok_or(Error::Singular { pivot: 0.0 })
}

/// Block-diagonal assembly of two complex matrices.
pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMat::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}
