//! Moments through Sylvester solves, the reduced family `(S − GL, G, H)`,
//! tracking certificates, and design of the free gain `G`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    eig_tolerance, eigenvalues, eigenvalues_c, max_abs, max_imag, min_pairwise_distance, singular_values,
    solve_sylvester, spectral_abscissa, spectrum_distance, to_complex, CMat, CVec, RMat, SylvesterSolution,
};
use crate::lti::{eval_transfer_c, observability_matrix, Realization};
use crate::optim::{levenberg_marquardt, nelder_mead};
use crate::poly;
use crate::siggen::{BlockGenerator, SignalGenerator};

/// Moments of a system at the spectrum of a generator: `CΠ + DL`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub generator: SignalGenerator,
    pub values: CMat,
    pub pi: SylvesterSolution,
    /// Whether the source realization was minimal; moments are still valid
    /// otherwise, but `Π` may lose rank.
    pub source_minimal: bool,
}

fn moments_complex(a: &CMat, b: &CMat, c: &CMat, d: Complex64, g: &SignalGenerator) -> Result<(CMat, SylvesterSolution)> {
    let sol = solve_sylvester(a, b, g.l(), g.s())?;
    let values = c * &sol.pi + g.l() * d;
    Ok((values, sol))
}

/// Solves `AΠ + BL = ΠS` and returns `CΠ + DL`.
pub fn moments_of(sys: &Realization, g: &SignalGenerator) -> Result<MomentSet> {
    let (values, pi) = moments_complex(
        &to_complex(&sys.a),
        &to_complex(&sys.b),
        &to_complex(&sys.c),
        Complex64::new(sys.d, 0.0),
        g,
    )?;
    Ok(MomentSet { generator: g.clone(), values, pi, source_minimal: sys.is_minimal() })
}

/// A member `(F, G, H, D) = (S − GL, G, H, D)` of the reduced family.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub s: CMat,
    pub l: CMat,
    pub g: CMat,
    pub h: CMat,
    pub d: Complex64,
}

impl ReducedModel {
    pub fn f(&self) -> CMat {
        &self.s - &self.g * &self.l
    }

    pub fn order(&self) -> usize {
        self.s.nrows()
    }

    pub fn spectral_abscissa(&self) -> f64 {
        eigenvalues_c(&self.f()).iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }

    pub fn transfer(&self, s: Complex64) -> Result<Complex64> {
        eval_transfer_c(&self.f(), &self.g, &self.h, self.d, s)
    }

    /// `H (s₁I − F)^{−(k+1)} G` (plus `D` for `k = 0`).
    pub fn moment_resolvent(&self, s1: Complex64, k: usize) -> Result<Complex64> {
        let f = self.f();
        let ev = eigenvalues_c(&f);
        let tol = eig_tolerance(&ev, &[s1]);
        if min_pairwise_distance(&ev, &[s1]) < tol {
            return Err(Error::PoleHit { point: format!("{s1}"), tolerance: tol });
        }
        let n = f.nrows();
        let lu = (CMat::identity(n, n) * s1 - f).lu();
        let mut x = self.g.clone();
        for _ in 0..=k {
            x = lu.solve(&x).ok_or(Error::Singular { pivot: 0.0 })?;
        }
        let mut eta = (&self.h * x)[(0, 0)];
        if k == 0 {
            eta += self.d;
        }
        Ok(eta)
    }

    /// Moments of the reduced model at the generator it was built on.
    pub fn moments(&self) -> Result<CMat> {
        let g = SignalGenerator::new(self.s.clone(), self.l.clone(), CVec::zeros(self.order()))?;
        Ok(moments_complex(&self.f(), &self.g, &self.h, self.d, &g)?.0)
    }

    /// Real realization, if all data is real.
    pub fn to_realization(&self) -> Result<Realization> {
        let tol = 1e-12;
        let f = crate::linalg::to_real(&self.f(), tol)?;
        let g = crate::linalg::to_real(&self.g, tol)?;
        let h = crate::linalg::to_real(&self.h, tol)?;
        if self.d.im.abs() > tol {
            return Err(Error::NotReal(self.d.im));
        }
        Realization::new(f, g, h, self.d.re)
    }

    /// Whether this model shares the moments of `sys` at σ(S) to `tol`.
    pub fn matches_moments_of(&self, sys: &Realization, tol: f64) -> Result<bool> {
        let g = SignalGenerator::new(self.s.clone(), self.l.clone(), CVec::zeros(self.order()))?;
        let theirs = moments_of(sys, &g)?.values;
        let ours = self.moments()?;
        Ok(max_abs(&(ours - theirs)) < tol)
    }
}

fn check_gain(g: &SignalGenerator, gain: &CMat) -> Result<()> {
    if gain.shape() != (g.dim(), 1) {
        return Err(Error::Shape(format!("G is {}x{}, expected {}x1", gain.nrows(), gain.ncols(), g.dim())));
    }
    Ok(())
}

/// The moment-matching model `(S − GL, G, CΠ, D)`: it interpolates
/// `sys` at σ(S) (with derivatives up to Jordan multiplicity).
pub fn reduce(sys: &Realization, g: &SignalGenerator, gain: &CMat) -> Result<ReducedModel> {
    check_gain(g, gain)?;
    let m = moments_of(sys, g)?;
    let d = Complex64::new(sys.d, 0.0);
    let f = g.s() - gain * g.l();
    let ef = eigenvalues_c(&f);
    let es = g.spectrum();
    let tol = eig_tolerance(&ef, &es);
    let dist = min_pairwise_distance(&ef, &es);
    if dist < tol {
        return Err(Error::SpectraOverlap { distance: dist, tolerance: tol });
    }
    // With feedthrough D the reduced model keeps D, so H = CΠ.
    let h = &m.values - g.l() * d;
    Ok(ReducedModel { s: g.s().clone(), l: g.l().clone(), g: gain.clone(), h, d })
}

/// `(S − GL, G, L)`: a model that tracks every signal of the generator.
pub fn tracking_family(g: &SignalGenerator, gain: &CMat) -> Result<ReducedModel> {
    check_gain(g, gain)?;
    let model = ReducedModel {
        s: g.s().clone(),
        l: g.l().clone(),
        g: gain.clone(),
        h: g.l().clone(),
        d: Complex64::new(0.0, 0.0),
    };
    let abscissa = model.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(Error::Unstable { what: "S - G L".into(), abscissa });
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReport {
    /// `‖L − (CΠ + DL)‖_∞`.
    pub residual: f64,
    pub tol: f64,
    pub tracks: bool,
    pub moments: CMat,
    pub persistent: bool,
}

fn tracking_report(sys: &Realization, g: &SignalGenerator, tol: f64) -> Result<TrackingReport> {
    let m = moments_of(sys, g)?;
    let residual = max_abs(&(g.l() - &m.values));
    Ok(TrackingReport { residual, tol, tracks: residual < tol, moments: m.values, persistent: g.is_persistent() })
}

fn require_stable(sys: &Realization) -> Result<()> {
    let abscissa = sys.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(Error::Unstable { what: "system".into(), abscissa });
    }
    Ok(())
}

/// Open-loop tracking certificate: `y` tracks every `θ` of the generator
/// iff `CΠ + DL = L` (the system must be stable).
pub fn check_tracking_condition(sys: &Realization, g: &SignalGenerator, tol: f64) -> Result<TrackingReport> {
    require_stable(sys)?;
    tracking_report(sys, g, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrackingReport {
    /// Verdict on the stacked generator (absent when it is not observable).
    pub combined: Option<TrackingReport>,
    /// Verdicts on each block, from independent solves.
    pub blocks: Vec<TrackingReport>,
    pub tracks: bool,
}

/// Block-wise certificate: for a block-diagonal stack the combined verdict
/// is the conjunction of the per-block verdicts.
pub fn check_tracking_blocks(sys: &Realization, bg: &BlockGenerator, tol: f64) -> Result<BlockTrackingReport> {
    require_stable(sys)?;
    let blocks = vec![tracking_report(sys, bg.first(), tol)?, tracking_report(sys, bg.second(), tol)?];
    let combined = match bg.combined() {
        Ok(g) => Some(tracking_report(sys, &g, tol)?),
        Err(_) => None,
    };
    let tracks = match &combined {
        Some(c) => c.tracks,
        None => blocks.iter().all(|b| b.tracks),
    };
    Ok(BlockTrackingReport { combined, blocks, tracks })
}

/// Verdicts for every leading sub-generator `(L[:k], S[:k, :k])` that is
/// invariant (`S[k:, :k] = 0`) and observable, read off the same `Π`.
/// For the polynomial generator of `t^ν` these are the generators of
/// `1, t, …, t^ν`.
pub fn nested_tracking(sys: &Realization, g: &SignalGenerator, tol: f64) -> Result<Vec<(usize, f64, bool)>> {
    require_stable(sys)?;
    let m = moments_of(sys, g)?;
    let s = g.s();
    let nu = g.dim();
    let mut out = Vec::new();
    for k in 1..=nu {
        let lower_zero = (k..nu).all(|i| (0..k).all(|j| s[(i, j)].norm() == 0.0));
        if !lower_zero {
            continue;
        }
        let sub_s = s.view((0, 0), (k, k)).into_owned();
        let sub_l = g.l().view((0, 0), (1, k)).into_owned();
        if crate::lti::observability_rank(&sub_l, &sub_s) < k {
            continue;
        }
        let sub_m = m.values.view((0, 0), (1, k)).into_owned();
        let residual = max_abs(&(sub_l - sub_m));
        out.push((k, residual, residual < tol));
    }
    Ok(out)
}

fn conjugate_closed(poles: &[Complex64]) -> bool {
    let mut used = vec![false; poles.len()];
    for i in 0..poles.len() {
        if used[i] {
            continue;
        }
        let p = poles[i];
        let tol = 1e-10 * p.norm().max(1.0);
        if p.im.abs() <= tol {
            used[i] = true;
            continue;
        }
        let partner = (0..poles.len()).find(|&j| j != i && !used[j] && (poles[j] - p.conj()).norm() <= tol);
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}

fn poly_from_roots_c(roots: &[Complex64]) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        p = next;
    }
    p
}

fn poly_of_matrix(coeffs: &[Complex64], m: &CMat) -> CMat {
    let n = m.nrows();
    let mut acc = CMat::zeros(n, n);
    for &c in coeffs.iter().rev() {
        acc = &acc * m + CMat::identity(n, n) * c;
    }
    acc
}

/// Output-injection gain with `σ(S − GL)` equal to `poles`
/// (Ackermann's formula on the dual pair, `G = p(S) O⁻¹ e_ν`).
pub fn design_g(s: &CMat, l: &CMat, poles: &[Complex64]) -> Result<CMat> {
    let nu = s.nrows();
    if !s.is_square() || l.shape() != (1, nu) {
        return Err(Error::Shape("S must be square and L a matching row".into()));
    }
    if poles.len() != nu {
        return Err(Error::InvalidArgument(format!("{} poles requested for order {}", poles.len(), nu)));
    }
    let real_data = max_imag(s) == 0.0 && max_imag(l) == 0.0;
    if real_data && !conjugate_closed(poles) {
        return Err(Error::InvalidArgument("pole set must be closed under conjugation".into()));
    }
    let obs = observability_matrix(l, s);
    let sv = singular_values(&obs);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&x| x > 1e-10 * smax && x > 0.0).count();
    if rank < nu {
        return Err(Error::NotObservable { rank, dim: nu });
    }
    let cond = smax / smin;
    if cond > 1e12 {
        return Err(Error::PlacementFailed(format!("observability matrix condition number {cond:.3e}")));
    }
    let mut e = CMat::zeros(nu, 1);
    e[(nu - 1, 0)] = Complex64::new(1.0, 0.0);
    let q = crate::linalg::solve_linear(&obs, &e)?;
    let coeffs = poly_from_roots_c(poles);
    let mut g = poly_of_matrix(&coeffs, s) * q;
    if real_data {
        g = g.map(|z| Complex64::new(z.re, 0.0));
    }

    // Post-check: the spectrum, or (for clustered targets whose eigenvalues
    // are intrinsically ill-conditioned) the characteristic polynomial.
    let f = s - &g * l;
    let achieved = eigenvalues_c(&f);
    let scale = poles.iter().fold(1.0f64, |m, p| m.max(p.norm()));
    if spectrum_distance(&achieved, poles) > 1e-6 * scale {
        let mut ok = false;
        if real_data {
            let cp = poly::charpoly(&f.map(|z| z.re));
            let target: Vec<f64> = coeffs.iter().map(|z| z.re).collect();
            let cscale = poly::max_coeff(&target).max(1.0);
            ok = cp.iter().zip(&target).all(|(a, b)| (a - b).abs() <= 1e-9 * cscale);
        }
        if !ok {
            return Err(Error::PlacementFailed(format!(
                "achieved spectrum misses the target by {:.3e}",
                spectrum_distance(&achieved, poles)
            )));
        }
    }
    Ok(g)
}

/// Real output-injection gain (column) with `σ(S − GL) = poles`.
pub fn design_g_real(s: &RMat, l: &RMat, poles: &[Complex64]) -> Result<RMat> {
    let g = design_g(&to_complex(s), &to_complex(l), poles)?;
    Ok(g.map(|z| z.re))
}

/// State-feedback row `K` with `σ(A − BK) = poles`, by duality.
pub fn place_state_feedback(a: &RMat, b: &RMat, poles: &[Complex64]) -> Result<RMat> {
    let g = design_g_real(&a.transpose(), &b.transpose(), poles)?;
    Ok(g.transpose())
}

/// A square matrix family parametrized by a real gain vector. Implementations
/// are expected to be affine in the gain (all templates here are), which the
/// structural pre-check relies on.
pub trait StabilizationTemplate: Sync {
    fn gain_dim(&self) -> usize;
    fn evaluate(&self, gain: &[f64]) -> RMat;
    /// A closed-form candidate, tried before any search.
    fn direct_placement(&self, _margin: f64) -> Option<Vec<f64>> {
        None
    }
    /// Standard deviation of the random starting points.
    fn scale_hint(&self) -> f64 {
        1.0
    }
}

/// Search gains are confined to `|gᵢ| ≤ SEARCH_GAIN_BOUND · scale`.
pub const SEARCH_GAIN_BOUND: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct StabilizeOptions {
    pub margin: f64,
    pub starts: usize,
    pub max_evals: usize,
    pub seed: u64,
    pub scale: Option<f64>,
}

impl Default for StabilizeOptions {
    fn default() -> Self {
        Self { margin: 0.0, starts: 64, max_evals: 4000, seed: 0, scale: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilizeMethod {
    DirectPlacement,
    Search { start: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeOutcome {
    pub gain: Vec<f64>,
    pub abscissa: f64,
    pub method: StabilizeMethod,
    /// Best abscissa reached from each random start (empty for direct placement).
    pub trace: Vec<f64>,
}

fn structural_certificate(template: &dyn StabilizationTemplate, seed: u64) -> Option<String> {
    let dim = template.gain_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let samples: Vec<RMat> = (0..3)
        .map(|_| {
            let g: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            template.evaluate(&g)
        })
        .collect();
    let n = samples[0].nrows();
    for i in 0..n {
        if samples.iter().all(|m| m.row(i).iter().all(|&x| x == 0.0)) {
            return Some(format!(
                "row {i} of the template is identically zero, so 0 is an eigenvalue for every gain"
            ));
        }
    }
    for j in 0..n {
        if samples.iter().all(|m| m.column(j).iter().all(|&x| x == 0.0)) {
            return Some(format!(
                "column {j} of the template is identically zero, so 0 is an eigenvalue for every gain"
            ));
        }
    }
    None
}

/// Finds a gain making `template(gain)` stable with the requested margin:
/// closed-form placement first, then multi-start Nelder–Mead on the spectral
/// abscissa. Starts run in parallel; the result is the lowest-index argmin,
/// so it depends only on the seed.
pub fn design_g_stabilize(template: &dyn StabilizationTemplate, opts: &StabilizeOptions) -> Result<StabilizeOutcome> {
    let scale = opts.scale.unwrap_or_else(|| template.scale_hint()).max(1e-6);
    // Gains far beyond the data scale buy stability with poles that swamp
    // the interpolation modes numerically; the search treats them as infeasible.
    let bound = SEARCH_GAIN_BOUND * scale;
    let objective = |g: &[f64]| {
        if g.iter().any(|x| x.abs() > bound) {
            f64::INFINITY
        } else {
            spectral_abscissa(&template.evaluate(g))
        }
    };
    let target = -opts.margin;
    if let Some(g) = template.direct_placement(opts.margin) {
        let a = objective(&g);
        if a < target {
            return Ok(StabilizeOutcome { gain: g, abscissa: a, method: StabilizeMethod::DirectPlacement, trace: vec![] });
        }
    }
    if opts.margin >= 0.0 {
        if let Some(cert) = structural_certificate(template, opts.seed) {
            let zero = vec![0.0; template.gain_dim()];
            return Err(Error::BudgetExhausted { best_abscissa: objective(&zero).max(0.0), certificate: cert, trace: vec![] });
        }
    }
    let dim = template.gain_dim();
    let results: Vec<(f64, Vec<f64>)> = (0..opts.starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
            let normal = Normal::new(0.0, scale).expect("positive scale");
            let x0: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let res = nelder_mead(objective, &x0, 0.5 * scale, opts.max_evals, target);
            (res.fx, res.x)
        })
        .collect();
    let trace: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (best_idx, best) = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::InvalidArgument("at least one start is required".into()))?;
    if best.0 < target {
        Ok(StabilizeOutcome { gain: best.1.clone(), abscissa: best.0, method: StabilizeMethod::Search { start: best_idx }, trace })
    } else {
        Err(Error::BudgetExhausted {
            best_abscissa: best.0,
            certificate: format!("{} starts without reaching abscissa below {:.3e}", opts.starts, target),
            trace,
        })
    }
}

/// The family `S − GL` with `G` free; direct placement puts the spectrum
/// at `−(1 + margin)·{1, 2, …, ν}`.
pub struct ObserverTemplate {
    pub s: RMat,
    pub l: RMat,
}

impl StabilizationTemplate for ObserverTemplate {
    fn gain_dim(&self) -> usize {
        self.s.nrows()
    }

    fn evaluate(&self, gain: &[f64]) -> RMat {
        let g = RMat::from_column_slice(gain.len(), 1, gain);
        &self.s - g * &self.l
    }

    fn direct_placement(&self, margin: f64) -> Option<Vec<f64>> {
        let nu = self.s.nrows();
        let poles: Vec<Complex64> = (1..=nu).map(|k| Complex64::new(-(1.0 + margin) * k as f64, 0.0)).collect();
        design_g_real(&self.s, &self.l, &poles).ok().map(|g| g.iter().copied().collect())
    }

    fn scale_hint(&self) -> f64 {
        self.s.norm().max(1.0)
    }
}

/// Reduced closed loop assembled from two interpolation blocks:
///
/// `Â = [[S₁ − G₁L₁, G₁H₂], [−G₂H₁, S₂ − G₂L₂]]`.
///
/// The gain vector is `[G₁; G₂]`, or just `G₂` when `fixed_g1` is set.
/// With `g1_basis = N` the first block is restricted to `G₁ = N z` and the
/// gain vector is `[z; G₂]`.
#[derive(Debug, Clone)]
pub struct StructuredLoopTemplate {
    pub s1: RMat,
    pub l1: RMat,
    pub h1: RMat,
    pub s2: RMat,
    pub l2: RMat,
    pub h2: RMat,
    pub fixed_g1: Option<RMat>,
    pub g1_basis: Option<RMat>,
    /// Target spectrum for the closed-form placement; `None` disables it.
    pub target_poles: Option<Vec<Complex64>>,
    pub seed: u64,
}

impl StructuredLoopTemplate {
    pub fn n1(&self) -> usize {
        self.s1.nrows()
    }

    pub fn n2(&self) -> usize {
        self.s2.nrows()
    }

    /// Number of free parameters in the first block.
    pub fn g1_dim(&self) -> usize {
        match (&self.fixed_g1, &self.g1_basis) {
            (Some(_), _) => 0,
            (None, Some(basis)) => basis.ncols(),
            (None, None) => self.n1(),
        }
    }

    /// Splits a full gain vector into `(G₁, G₂)` columns.
    pub fn split(&self, gain: &[f64]) -> (RMat, RMat) {
        let p = self.g1_dim();
        let g2 = RMat::from_column_slice(self.n2(), 1, &gain[p..]);
        let g1 = match (&self.fixed_g1, &self.g1_basis) {
            (Some(g1), _) => g1.clone(),
            (None, Some(basis)) => basis * RMat::from_column_slice(p, 1, &gain[..p]),
            (None, None) => RMat::from_column_slice(p, 1, &gain[..p]),
        };
        (g1, g2)
    }

    pub fn assemble(&self, g1: &RMat, g2: &RMat) -> RMat {
        let (n1, n2) = (self.n1(), self.n2());
        let mut a = RMat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&(&self.s1 - g1 * &self.l1));
        a.view_mut((0, n1), (n1, n2)).copy_from(&(g1 * &self.h2));
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(-(g2 * &self.h1)));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&(&self.s2 - g2 * &self.l2));
        a
    }

    /// Exact placement of the characteristic polynomial.
    ///
    /// `det(sI − Â) = (Δ₁ + N_L) D₂ + N_H M₂`, where `Δ₁ = det(sI − S₁)`,
    /// `N_L = L₁ adj(sI − S₁) G₁`, `N_H = H₁ adj(sI − S₁) G₁`,
    /// `D₂ = det(sI − S₂ + G₂L₂)` and `M₂ = H₂ adj(sI − S₂) G₂`. For fixed
    /// `G₂` this is affine in `G₁`; `G₂` is found by a damped Gauss–Newton
    /// iteration on the least-squares residual of that affine system.
    ///
    /// When `G₁` is restricted to a subspace of codimension `r`, only
    /// `ν − r` poles are prescribed and the characteristic polynomial is
    /// matched to `target·q` with a free monic `q` of degree `r` (the system
    /// stays affine in `(z, q)`); the result is accepted only if it is stable.
    pub fn place(&self, poles: &[Complex64]) -> Option<(RMat, RMat)> {
        let (n1, n2) = (self.n1(), self.n2());
        let nu = n1 + n2;
        let p = self.g1_dim();
        let r = n1 - p;
        if poles.len() + r != nu || self.fixed_g1.is_some() {
            return None;
        }
        let basis = self.g1_basis.clone().unwrap_or_else(|| RMat::identity(n1, n1));
        let target_base = poly::from_roots(poles);
        let mut target = vec![0.0; r];
        target.extend_from_slice(&target_base);
        let delta1 = poly::charpoly(&self.s1);
        let delta2 = poly::charpoly(&self.s2);
        let unit = |n: usize, i: usize| {
            let mut e = RMat::zeros(n, 1);
            e[(i, 0)] = 1.0;
            e
        };
        let adj_basis = |s: &RMat, row: &RMat, base: &[f64]| -> Vec<Vec<f64>> {
            (0..s.nrows())
                .map(|i| poly::sub(&poly::charpoly(&(s - unit(s.nrows(), i) * row)), base))
                .collect()
        };
        let b_l = adj_basis(&self.s1, &self.l1, &delta1);
        let b_h = adj_basis(&self.s1, &self.h1, &delta1);
        let d2_basis = adj_basis(&self.s2, &self.l2, &delta2);
        let m2_basis = adj_basis(&self.s2, &self.h2, &delta2);
        let pad = |p: &[f64]| -> Vec<f64> {
            let mut v = p.to_vec();
            v.resize(nu + 1, 0.0);
            v
        };
        let combo = |base: &[f64], basis: &[Vec<f64>], g: &[f64]| -> Vec<f64> {
            let mut acc = pad(base);
            for (b, &gi) in basis.iter().zip(g) {
                for (k, c) in b.iter().enumerate() {
                    acc[k] += gi * c;
                }
            }
            acc
        };
        let zero = vec![0.0];
        // For given G₂: coefficient matrix (rows: s^0..s^{ν−1}) and rhs.
        let system = |g2: &[f64]| -> (RMat, RMat) {
            let d2 = combo(&delta2, &d2_basis, g2);
            let m2 = combo(&zero, &m2_basis, g2);
            let mut full = RMat::zeros(nu, n1);
            for i in 0..n1 {
                let col = poly::add(&poly::mul(&b_l[i], &d2), &poly::mul(&b_h[i], &m2));
                for (k, c) in col.iter().enumerate().take(nu) {
                    full[(k, i)] = *c;
                }
            }
            let mut mat = RMat::zeros(nu, p + r);
            mat.view_mut((0, 0), (nu, p)).copy_from(&(&full * &basis));
            for j in 0..r {
                for (k, c) in target_base.iter().enumerate() {
                    if j + k < nu {
                        mat[(j + k, p + j)] = -c;
                    }
                }
            }
            let rhs_poly = poly::sub(&target, &poly::mul(&delta1, &d2));
            let mut rhs = RMat::zeros(nu, 1);
            for (k, c) in rhs_poly.iter().enumerate().take(nu) {
                rhs[(k, 0)] = *c;
            }
            (mat, rhs)
        };
        let solve_g1 = |g2: &[f64]| -> Option<(RMat, Vec<f64>)> {
            let (mat, rhs) = system(g2);
            let svd = mat.clone().svd(true, true);
            let g1 = svd.solve(&rhs, 1e-13 * svd.singular_values.max()).ok()?;
            let r = &mat * &g1 - &rhs;
            Some((g1, r.iter().copied().collect()))
        };
        let tscale = poly::max_coeff(&target).max(1.0);
        let residual = |g2: &[f64]| -> Option<Vec<f64>> { solve_g1(g2).map(|(_, r)| r.iter().map(|x| x / tscale).collect()) };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xA5A5_0F0F);
        let scales = [1.0, 0.1, 10.0, 100.0];
        let p_scale = poles.iter().fold(1.0f64, |m, p| m.max(p.norm()));
        for attempt in 0..200 {
            let normal = Normal::new(0.0, scales[attempt % scales.len()]).expect("positive scale");
            let x0: Vec<f64> = (0..n2).map(|_| normal.sample(&mut rng)).collect();
            let (g2, nr) = levenberg_marquardt(residual, &x0, 200, 1e-14);
            if !(nr <= 1e-11) {
                continue;
            }
            let Some((sol, _)) = solve_g1(&g2) else { continue };
            let g1 = &basis * sol.rows(0, p);
            let g2m = RMat::from_column_slice(n2, 1, &g2);
            let a = self.assemble(&g1, &g2m);
            let ev = eigenvalues(&a);
            let abscissa = ev.iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re));
            let max_target = poles.iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re));
            // Accept when the realized spectrum is stable and close to the
            // target (clustered targets are ill-conditioned as eigenvalues).
            if abscissa < 0.0 && (r > 0 || abscissa <= max_target + 1e-3 * p_scale) {
                return Some((g1, g2m));
            }
        }
        None
    }
}

/// Default target spectrum for closed-form loop placement: `ν` real poles
/// evenly spaced on `[−1.5, −0.3]`.
pub fn default_target_poles(nu: usize) -> Vec<Complex64> {
    if nu == 1 {
        return vec![Complex64::new(-0.3, 0.0)];
    }
    (0..nu)
        .map(|k| Complex64::new(-0.3 - 1.2 * k as f64 / (nu - 1) as f64, 0.0))
        .collect()
}

impl StabilizationTemplate for StructuredLoopTemplate {
    fn gain_dim(&self) -> usize {
        self.g1_dim() + self.n2()
    }

    fn evaluate(&self, gain: &[f64]) -> RMat {
        let (g1, g2) = self.split(gain);
        self.assemble(&g1, &g2)
    }

    fn direct_placement(&self, margin: f64) -> Option<Vec<f64>> {
        let poles = self.target_poles.clone()?;
        if poles.iter().any(|p| p.re >= -margin) {
            return None;
        }
        let (g1, g2) = self.place(&poles)?;
        let coords = match &self.g1_basis {
            Some(basis) => basis.clone().svd(true, true).solve(&g1, 1e-13).ok()?,
            None => g1,
        };
        Some(coords.iter().chain(g2.iter()).copied().collect())
    }

    fn scale_hint(&self) -> f64 {
        self.s1.norm().max(self.s2.norm()).max(1.0)
    }
}
