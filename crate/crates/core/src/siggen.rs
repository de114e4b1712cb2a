//! Exogenous signal generators `ω̇ = Sω, θ = Lω`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, eigenvalues_c, max_imag, spectral_radius, to_complex, CMat, CVec, RMat, RVec};
use crate::lti::observability_rank;

/// An observable pair `(L, S)` with an initial condition `ω(0)`.
///
/// Data is stored in complex form so that interpolation points off the real
/// axis can be expressed directly; generators built from real data stay real.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGenerator {
    s: CMat,
    l: CMat,
    omega0: CVec,
}

impl SignalGenerator {
    /// Validates shapes and observability of `(L, S)`.
    pub fn new(s: CMat, l: CMat, omega0: CVec) -> Result<Self> {
        let nu = s.nrows();
        if nu == 0 || !s.is_square() {
            return Err(Error::Shape("S must be square and non-empty".into()));
        }
        if l.shape() != (1, nu) || omega0.len() != nu {
            return Err(Error::Shape(format!(
                "L is {}x{} and omega0 has {} entries; expected 1x{} and {}",
                l.nrows(),
                l.ncols(),
                omega0.len(),
                nu,
                nu
            )));
        }
        let rank = observability_rank(&l, &s);
        if rank < nu {
            return Err(Error::NotObservable { rank, dim: nu });
        }
        Ok(Self { s, l, omega0 })
    }

    pub fn new_real(s: RMat, l: RMat, omega0: RVec) -> Result<Self> {
        Self::new(to_complex(&s), to_complex(&l), omega0.map(|x| Complex64::new(x, 0.0)))
    }

    /// Generator of `θ(t) = t^k`: an upper Jordan block at 0 with unit
    /// superdiagonal, `L = e₁ᵀ` and `ω(0) = k!·e_{k+1}`.
    pub fn polynomial(k: usize) -> Self {
        let nu = k + 1;
        let mut s = RMat::zeros(nu, nu);
        for i in 0..k {
            s[(i, i + 1)] = 1.0;
        }
        let mut l = RMat::zeros(1, nu);
        l[(0, 0)] = 1.0;
        let mut w = RVec::zeros(nu);
        w[k] = (1..=k).map(|i| i as f64).product();
        Self::new_real(s, l, w).expect("polynomial generator is observable")
    }

    /// `S = [[0, w], [−w, 0]]`, `L = [1, 0]`, `ω(0) = [1, 0]` so `θ(t) = cos(wt)`.
    pub fn sinusoid(w: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument(format!("sinusoid frequency must be positive, got {w}")));
        }
        let s = RMat::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let l = RMat::from_row_slice(1, 2, &[1.0, 0.0]);
        Self::new_real(s, l, RVec::from_vec(vec![1.0, 0.0]))
    }

    /// `m × m` Jordan block at `s1` with superdiagonal −1 and `L = e₁ᵀ`.
    ///
    /// The negative coupling makes the moments come out in natural order:
    /// for this generator `CΠ = [η₀(s₁), η₁(s₁), …, η_{m−1}(s₁)]`.
    pub fn jordan(s1: Complex64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("Jordan block order must be at least 1".into()));
        }
        let mut s = CMat::identity(m, m) * s1;
        for i in 0..m - 1 {
            s[(i, i + 1)] = Complex64::new(-1.0, 0.0);
        }
        let mut l = CMat::zeros(1, m);
        l[(0, 0)] = Complex64::new(1.0, 0.0);
        let mut w = CVec::zeros(m);
        w[0] = Complex64::new(1.0, 0.0);
        Self::new(s, l, w)
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn s(&self) -> &CMat {
        &self.s
    }

    pub fn l(&self) -> &CMat {
        &self.l
    }

    pub fn omega0(&self) -> &CVec {
        &self.omega0
    }

    /// Same pair with a different initial condition.
    pub fn with_omega0(&self, omega0: CVec) -> Result<Self> {
        Self::new(self.s.clone(), self.l.clone(), omega0)
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        eigenvalues_c(&self.s)
    }

    pub fn is_real(&self) -> bool {
        max_imag(&self.s) == 0.0 && max_imag(&self.l) == 0.0 && self.omega0.iter().all(|z| z.im == 0.0)
    }

    /// Real data `(S, L, ω(0))`; fails for generators with complex entries.
    pub fn as_real(&self) -> Result<(RMat, RMat, RVec)> {
        if !self.is_real() {
            let im = max_imag(&self.s).max(max_imag(&self.l));
            return Err(Error::NotReal(im));
        }
        Ok((self.s.map(|z| z.re), self.l.map(|z| z.re), self.omega0.map(|z| z.re)))
    }

    pub fn observability_rank(&self) -> usize {
        observability_rank(&self.l, &self.s)
    }

    /// Persistence: every mode lies on the imaginary axis and `ω(0) ≠ 0`.
    pub fn is_persistent(&self) -> bool {
        let ev = self.spectrum();
        let tol = 1e-9 * spectral_radius(&ev).max(1.0);
        ev.iter().all(|z| z.re.abs() <= tol) && self.omega0.iter().any(|z| z.norm() > 0.0)
    }

    /// `θ(t) = L expm(S t) ω(0)` at the given times (real generators only).
    pub fn trajectory(&self, times: &[f64]) -> Result<Vec<f64>> {
        let (s, l, w) = self.as_real()?;
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::InvalidArgument("times must be nonnegative and ascending".into()));
        }
        Ok(times.iter().map(|&t| (&l * (s.clone() * t).exp() * &w)[(0, 0)]).collect())
    }
}

/// Two generators stacked as `S = [[S₁, S₃], [0, S₂]]`, `L = [L₁, L₂]`.
///
/// Composition through [`BlockGenerator::compose`] insists on joint
/// observability. [`BlockGenerator::blockwise`] accepts blocks that are only
/// individually observable (for instance two Jordan blocks at the same point),
/// which are then handled as separate interpolation structures.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGenerator {
    first: SignalGenerator,
    second: SignalGenerator,
    s3: CMat,
    combined_observable: bool,
}

impl BlockGenerator {
    pub fn compose(g1: SignalGenerator, g2: SignalGenerator, s3: Option<CMat>) -> Result<Self> {
        let b = Self::blockwise(g1, g2, s3)?;
        if !b.combined_observable {
            let (s, l, _) = b.combined_parts();
            return Err(Error::NotObservable { rank: observability_rank(&l, &s), dim: b.dim() });
        }
        Ok(b)
    }

    pub fn blockwise(g1: SignalGenerator, g2: SignalGenerator, s3: Option<CMat>) -> Result<Self> {
        let s3 = s3.unwrap_or_else(|| CMat::zeros(g1.dim(), g2.dim()));
        if s3.shape() != (g1.dim(), g2.dim()) {
            return Err(Error::Shape(format!(
                "coupling block is {}x{}, expected {}x{}",
                s3.nrows(),
                s3.ncols(),
                g1.dim(),
                g2.dim()
            )));
        }
        let mut b = Self { first: g1, second: g2, s3, combined_observable: false };
        let (s, l, _) = b.combined_parts();
        b.combined_observable = observability_rank(&l, &s) == b.dim();
        Ok(b)
    }

    pub fn first(&self) -> &SignalGenerator {
        &self.first
    }

    pub fn second(&self) -> &SignalGenerator {
        &self.second
    }

    pub fn s3(&self) -> &CMat {
        &self.s3
    }

    pub fn combined_observable(&self) -> bool {
        self.combined_observable
    }

    pub fn nu1(&self) -> usize {
        self.first.dim()
    }

    pub fn nu2(&self) -> usize {
        self.second.dim()
    }

    pub fn dim(&self) -> usize {
        self.nu1() + self.nu2()
    }

    /// `(S, L, ω(0))` of the stacked system, regardless of observability.
    pub fn combined_parts(&self) -> (CMat, CMat, CVec) {
        let (n1, n2) = (self.nu1(), self.nu2());
        let mut s = block_diag(self.first.s(), self.second.s());
        s.view_mut((0, n1), (n1, n2)).copy_from(&self.s3);
        let mut l = CMat::zeros(1, n1 + n2);
        l.view_mut((0, 0), (1, n1)).copy_from(self.first.l());
        l.view_mut((0, n1), (1, n2)).copy_from(self.second.l());
        let mut w = CVec::zeros(n1 + n2);
        w.rows_mut(0, n1).copy_from(self.first.omega0());
        w.rows_mut(n1, n2).copy_from(self.second.omega0());
        (s, l, w)
    }

    /// The stacked generator; requires joint observability.
    pub fn combined(&self) -> Result<SignalGenerator> {
        let (s, l, w) = self.combined_parts();
        SignalGenerator::new(s, l, w)
    }
}

pub fn make_polynomial(k: usize) -> SignalGenerator {
    SignalGenerator::polynomial(k)
}

pub fn make_sinusoid(w: f64) -> Result<SignalGenerator> {
    SignalGenerator::sinusoid(w)
}

pub fn make_jordan(s1: Complex64, m: usize) -> Result<SignalGenerator> {
    SignalGenerator::jordan(s1, m)
}

pub fn compose(g1: SignalGenerator, g2: SignalGenerator, s3: Option<CMat>) -> Result<BlockGenerator> {
    BlockGenerator::compose(g1, g2, s3)
}
