//! Closed-loop reduction: observer-based baseline compensator, reduced loop
//! with enforced tracking, certification, and controller extraction.
//!
//! The reduced loop lives on two interpolation blocks. Block 1 (order `n`,
//! the plant order) carries the reference modes; block 2 (order `ν_C`)
//! interpolates the full-order controller. With gains `G₁, G₂` and output
//! maps `H₁, H₂` it reads
//!
//! ```text
//! Â = [[S₁ − G₁L₁, G₁H₂], [−G₂H₁, S₂ − G₂L₂]],  B̂ = [G₁; G₂],  Ĉ = [H₁, 0].
//! ```
//!
//! `H₂ = C_KΠ₂ + D_K L₂` holds the controller moments at σ(S₂). Tracking is
//! enforced by `H₁ = L₁`: then `[I; 0]` solves `ÂP + B̂L₁ = PS₁` with
//! `ĈP = L₁` for every `G`, so any stabilizing `G` yields a loop that tracks
//! every signal generated by `(L₁, S₁)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    eigenvalues, homogeneous_sylvester_basis, kron, max_abs, solve_sylvester, spectrum_distance, to_complex, to_real,
    CMat, RMat,
};
use crate::lti::{negative_feedback, LoopSet, Realization};
use crate::momentmatch::{
    default_target_poles, design_g_stabilize, moments_of, place_state_feedback, design_g_real, StabilizeMethod,
    StabilizeOptions, StructuredLoopTemplate,
};
use crate::poly::{self, Poly};
use crate::siggen::{BlockGenerator, SignalGenerator};
use crate::sim::{self, DEFAULT_DT, DEFAULT_THRESHOLD_REL};

/// Observer-based compensator `u = K x̂` driven by `ε = r − y`:
/// `A_K = A − BK − L_oC`, `B_K = L_o`, `C_K = K`, `D_K = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensator {
    pub controller: Realization,
    pub state_feedback: RMat,
    pub observer_gain: RMat,
    pub regulator_poles: Vec<Complex64>,
    pub observer_poles: Vec<Complex64>,
}

impl Compensator {
    /// Loop matrix in (state, estimation-error) coordinates:
    /// `[[A − BK, BK], [0, A − L_oC]]`.
    pub fn separated_loop_matrix(&self, plant: &Realization) -> RMat {
        let n = plant.order();
        let bk = &plant.b * &self.state_feedback;
        let mut m = RMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(&plant.a - &bk));
        m.view_mut((0, n), (n, n)).copy_from(&bk);
        m.view_mut((n, n), (n, n)).copy_from(&(&plant.a - &self.observer_gain * &plant.c));
        m
    }

    /// Closed-loop spectrum through the separation structure: the union of
    /// the regulator and observer spectra, each computed on its own block.
    pub fn structured_spectrum(&self, plant: &Realization) -> Vec<Complex64> {
        let mut ev = eigenvalues(&(&plant.a - &plant.b * &self.state_feedback));
        ev.extend(eigenvalues(&(&plant.a - &self.observer_gain * &plant.c)));
        ev
    }

    /// Relative Frobenius defect of `T A_CL T⁻¹` against the separated form,
    /// with `T = [[I, 0], [I, I]]` mapping `(x, x_K)` to `(x, x − x̂)`.
    pub fn similarity_defect(&self, plant: &Realization, lp: &LoopSet) -> f64 {
        let n = plant.order();
        let mut t = RMat::identity(2 * n, 2 * n);
        let mut t_inv = RMat::identity(2 * n, 2 * n);
        for i in 0..n {
            t[(n + i, i)] = 1.0;
            t_inv[(n + i, i)] = -1.0;
        }
        let sep = self.separated_loop_matrix(plant);
        (&t * &lp.p_cl.a * &t_inv - &sep).norm() / sep.norm()
    }
}

fn to_placement_error(e: Error, what: &str) -> Error {
    match e {
        Error::PlacementFailed(m) => Error::PlacementFailed(format!("{what}: {m}")),
        Error::NotObservable { rank, dim } => {
            Error::PlacementFailed(format!("{what}: pair has rank {rank} < {dim} (mode cannot be moved)"))
        }
        other => Error::PlacementFailed(format!("{what}: {other}")),
    }
}

/// Builds an observer-based compensator of the plant's order. The first `n`
/// poles go to state feedback, the last `n` to the observer.
pub fn build_compensator(plant: &Realization, poles: &[Complex64]) -> Result<Compensator> {
    let n = plant.order();
    if n == 0 || poles.len() != 2 * n {
        return Err(Error::InvalidArgument(format!("expected {} poles for a plant of order {}", 2 * n, n)));
    }
    if plant.d != 0.0 {
        return Err(Error::InvalidArgument("observer compensator requires a strictly proper plant".into()));
    }
    let (reg, obs) = poles.split_at(n);
    let k = place_state_feedback(&plant.a, &plant.b, reg).map_err(|e| to_placement_error(e, "state feedback"))?;
    let lo = design_g_real(&plant.a, &plant.c, obs).map_err(|e| to_placement_error(e, "observer"))?;
    let a_k = &plant.a - &plant.b * &k - &lo * &plant.c;
    let controller = Realization::new(a_k, lo.clone(), k.clone(), 0.0)?;
    let comp = Compensator {
        controller,
        state_feedback: k,
        observer_gain: lo,
        regulator_poles: reg.to_vec(),
        observer_poles: obs.to_vec(),
    };
    let dist = spectrum_distance(&comp.structured_spectrum(plant), poles);
    if dist > 1e-4 {
        return Err(Error::PlacementFailed(format!("closed-loop spectrum misses the target by {dist:.3e}")));
    }
    Ok(comp)
}

/// Generator of dimension `n` whose modes cover the reference's modes with
/// enough multiplicity for block 1. Polynomial references give the Jordan
/// block at 0; otherwise `q = n / dim` copies of the reference are chained
/// (`I ⊗ S_r − N ⊗ I`) and any remainder is filled with a Jordan block at 0.
pub fn reference_block(reference: &SignalGenerator, n: usize) -> Result<SignalGenerator> {
    let nr = reference.dim();
    if nr > n {
        return Err(Error::InvalidArgument(format!(
            "reference generator has dimension {nr}, more than the plant order {n}"
        )));
    }
    let ev = reference.spectrum();
    if ev.iter().all(|z| z.norm() <= 1e-12) {
        let mut g = SignalGenerator::jordan(Complex64::new(0.0, 0.0), n)?;
        let mut w = g.omega0().clone() * Complex64::new(0.0, 0.0);
        // Reproduce the reference signal on the first block when possible.
        if nr == 1 {
            w[0] = reference.omega0()[0];
            g = g.with_omega0(w)?;
        }
        return Ok(g);
    }
    let q = n / nr;
    let r = n % nr;
    if r > 0 && ev.iter().any(|z| z.norm() <= 1e-12) {
        return Err(Error::InvalidArgument(
            "plant order must be a multiple of the reference dimension when the reference has a mode at 0".into(),
        ));
    }
    let mut shift = CMat::zeros(q, q);
    for i in 0..q.saturating_sub(1) {
        shift[(i, i + 1)] = Complex64::new(1.0, 0.0);
    }
    let chain = kron(&CMat::identity(q, q), reference.s()) - kron(&shift, &CMat::identity(nr, nr));
    let mut s = CMat::zeros(n, n);
    s.view_mut((0, 0), (q * nr, q * nr)).copy_from(&chain);
    let mut l = CMat::zeros(1, n);
    l.view_mut((0, 0), (1, nr)).copy_from(reference.l());
    if r > 0 {
        let j = SignalGenerator::jordan(Complex64::new(0.0, 0.0), r)?;
        s.view_mut((q * nr, q * nr), (r, r)).copy_from(j.s());
        l[(0, q * nr)] = Complex64::new(1.0, 0.0);
    }
    let mut w = crate::linalg::CVec::zeros(n);
    w.rows_mut(0, nr).copy_from(reference.omega0());
    SignalGenerator::new(s, l, w)
}

/// Block 1 from [`reference_block`] and block 2 a Jordan block of order
/// `nu_c` at `s2_point`.
pub fn default_blocks(reference: &SignalGenerator, n: usize, nu_c: usize, s2_point: f64) -> Result<BlockGenerator> {
    let g1 = reference_block(reference, n)?;
    let g2 = SignalGenerator::jordan(Complex64::new(s2_point, 0.0), nu_c)?;
    BlockGenerator::blockwise(g1, g2, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    /// Moment tolerance.
    pub tol: f64,
    /// Simulation threshold relative to `‖θ‖_∞`.
    pub threshold_rel: f64,
    /// Simulation horizon; `None` sizes it from the slowest loop mode.
    pub horizon: Option<f64>,
    pub dt: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { tol: 1e-6, threshold_rel: DEFAULT_THRESHOLD_REL, horizon: None, dt: DEFAULT_DT }
    }
}

/// Outcome of the three tracking checks on a reference-to-output loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub stability_abscissa: f64,
    /// `‖moments(P̂_CL) − L‖_∞` at the reference modes.
    pub moment_residual_pcl: f64,
    /// `‖moments(Ê)‖_∞` at the reference modes, `Ê = 1 − P̂_CL`.
    pub moment_residual_e: f64,
    /// Largest `|ε|` over the final 10% of the horizon.
    pub tracking_sim_error: f64,
    pub tracking_threshold: f64,
    pub horizon: f64,
    pub dt: f64,
    /// `‖moments(P̂_CL) − L_i‖_∞` for each interpolation structure checked.
    pub interpolation_residuals: Vec<f64>,
    pub tol: f64,
    pub stable: bool,
    pub pcl_check: bool,
    pub e_check: bool,
    pub sim_check: bool,
    /// The three tracking checks agree.
    pub consistent: bool,
    pub verdict: bool,
}

fn moment_residual(sys: &Realization, g: &SignalGenerator, target: &CMat) -> f64 {
    match moments_of(sys, g) {
        Ok(m) => max_abs(&(m.values - target)),
        Err(_) => f64::INFINITY,
    }
}

/// Runs the three checks on a loop `r → y`: moments of the loop against `L`,
/// moments of `1 − loop` against 0, and a simulated tracking error.
pub fn certify_loop(
    p_cl: &Realization,
    reference: &SignalGenerator,
    interpolation: &[SignalGenerator],
    opts: &CertifyOptions,
) -> VerificationReport {
    let abscissa = p_cl.spectral_abscissa();
    let moment_residual_pcl = moment_residual(p_cl, reference, reference.l());
    let zero = CMat::zeros(1, reference.dim());
    let moment_residual_e = moment_residual(&p_cl.complement(), reference, &zero);
    let horizon = opts.horizon.unwrap_or_else(|| sim::auto_horizon(&p_cl.a));
    let (sim_err, threshold) = match sim::simulate_reference_loop(p_cl, reference, horizon, opts.dt) {
        Ok(traj) => {
            let thr = opts.threshold_rel * traj.theta_inf();
            (sim::verdict(&traj, thr).tail_error, thr)
        }
        Err(_) => (f64::INFINITY, 0.0),
    };
    let interpolation_residuals = interpolation.iter().map(|g| moment_residual(p_cl, g, g.l())).collect();
    let stable = abscissa < 0.0;
    let pcl_check = moment_residual_pcl < opts.tol;
    let e_check = moment_residual_e < opts.tol;
    let sim_check = sim_err < threshold;
    VerificationReport {
        stability_abscissa: abscissa,
        moment_residual_pcl,
        moment_residual_e,
        tracking_sim_error: sim_err,
        tracking_threshold: threshold,
        horizon,
        dt: opts.dt,
        interpolation_residuals,
        tol: opts.tol,
        stable,
        pcl_check,
        e_check,
        sim_check,
        consistent: pcl_check == e_check && e_check == sim_check,
        verdict: stable && pcl_check && e_check && sim_check,
    }
}

/// How the gain of the reduced loop was obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GainRoute {
    /// `G₁ = B` with `G₂` found by spectral-abscissa search.
    PlantInputGain,
    /// Both gains from exact placement of the characteristic polynomial.
    StructuredPlacement,
    /// Both gains from spectral-abscissa search.
    StructuredSearch,
}

/// Relative degree of a SISO realization: the least `r` with `CA^{r−1}B ≠ 0`
/// (0 with feedthrough); `None` when the transfer is identically zero.
pub fn relative_degree(sys: &Realization) -> Option<usize> {
    if sys.d != 0.0 {
        return Some(0);
    }
    let scale = sys.a.norm().max(1.0);
    let bc = sys.b.norm() * sys.c.norm();
    let mut v = sys.b.clone();
    for k in 0..sys.order() {
        if (&sys.c * &v)[(0, 0)].abs() > 1e-12 * bc * scale.powi(k as i32) {
            return Some(k + 1);
        }
        v = &sys.a * v;
    }
    None
}

/// Basis of `{G₁ : L₁S₁ᵏG₁ = 0, k < r}`. With `H₁ = L₁` these are exactly
/// the gains for which the reduced loop has relative degree at least `r`,
/// since then `ĈÂᵏB̂ = L₁S₁ᵏG₁` term by term.
pub fn relative_degree_basis(s1: &RMat, l1: &RMat, r: usize) -> RMat {
    let n1 = s1.nrows();
    let r = r.min(n1);
    let mut m = RMat::zeros(n1, n1);
    let mut row = l1.clone();
    for k in 0..r {
        m.row_mut(k).copy_from(&row);
        row = &row * s1;
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let cols: Vec<_> = (0..n1)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        RMat::zeros(n1, 0)
    } else {
        RMat::from_columns(&cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionOptions {
    /// Required decay rate of the reduced loop. The default keeps fifty time
    /// constants inside the simulation horizon cap, so the simulated check
    /// sees a settled error.
    pub margin: f64,
    pub seed: u64,
    pub search_starts: usize,
    pub search_max_evals: usize,
    /// Target spectrum for exact placement; defaults to
    /// [`default_target_poles`].
    pub target_poles: Option<Vec<Complex64>>,
    /// Take `Π₁` from the homogeneous relation `(A − BD_KC)Π₁ = Π₁S₁` and
    /// set `H₁ = CΠ₁` instead of enforcing `H₁ = L₁`.
    pub literal_pi1: bool,
    pub certify: CertifyOptions,
    pub extraction_tol: f64,
    /// Restrict `G₁` so that the reduced loop keeps the plant's relative
    /// degree, which makes the extracted controller proper. Falls back to an
    /// unrestricted `G₁` when no stabilizing gain is found.
    pub match_relative_degree: bool,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            margin: 50.0 / sim::MAX_AUTO_HORIZON,
            seed: 0,
            search_starts: 64,
            search_max_evals: 4000,
            target_poles: None,
            literal_pi1: false,
            certify: CertifyOptions::default(),
            extraction_tol: 1e-6,
            match_relative_degree: true,
        }
    }
}

/// Outcome of controller extraction (kept in the design either way).
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractionOutcome {
    Extracted(ExtractedController),
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopDesign {
    pub plant: Realization,
    pub controller: Realization,
    pub full_loop: LoopSet,
    pub generator: BlockGenerator,
    pub reference: SignalGenerator,
    /// Plant rows of the full-loop Sylvester solution at σ(S₁) (or the
    /// homogeneous solution in literal mode).
    pub pi1: CMat,
    /// Controller Sylvester solution at σ(S₂).
    pub pi2: CMat,
    pub h1: RMat,
    pub h2: RMat,
    pub g1: RMat,
    pub g2: RMat,
    pub reduced_loop: Realization,
    /// `(S − GL, G, H)` on the stacked generator with `H₁ = L₁`, when the
    /// stacked pair is observable.
    pub normative_loop: Option<Realization>,
    pub route: GainRoute,
    /// `G₁` was restricted to match the plant's relative degree.
    pub relative_degree_matched: bool,
    /// Why the `G₁ = B` attempt failed, if it did.
    pub plant_input_gain_failure: Option<String>,
    /// `‖moments(P_CL) − L₁‖_∞` of the full loop at σ(S₁).
    pub baseline_defect: f64,
    pub literal_pi1: bool,
    pub notes: Vec<String>,
    pub extracted: ExtractionOutcome,
    pub certify_options: CertifyOptions,
    pub report: VerificationReport,
}

impl ClosedLoopDesign {
    pub fn gain(&self) -> RMat {
        let mut g = RMat::zeros(self.g1.nrows() + self.g2.nrows(), 1);
        g.view_mut((0, 0), (self.g1.nrows(), 1)).copy_from(&self.g1);
        g.view_mut((self.g1.nrows(), 0), (self.g2.nrows(), 1)).copy_from(&self.g2);
        g
    }

    /// Re-runs certification, e.g. with other tolerances.
    pub fn certify(&self, opts: &CertifyOptions) -> VerificationReport {
        certify_loop(&self.reduced_loop, &self.reference, &[self.generator.first().clone()], opts)
    }
}

/// Certifies a design at moment tolerance `tol`, keeping its other
/// certification settings.
pub fn certify(design: &ClosedLoopDesign, tol: f64) -> VerificationReport {
    design.certify(&CertifyOptions { tol, ..design.certify_options.clone() })
}

/// Reduced loop of the family above for explicit data.
pub fn structured_loop(template: &StructuredLoopTemplate, g1: &RMat, g2: &RMat, d: f64) -> Result<Realization> {
    let a = template.assemble(g1, g2);
    let (n1, n2) = (template.n1(), template.n2());
    let mut b = RMat::zeros(n1 + n2, 1);
    b.view_mut((0, 0), (n1, 1)).copy_from(g1);
    b.view_mut((n1, 0), (n2, 1)).copy_from(g2);
    let mut c = RMat::zeros(1, n1 + n2);
    c.view_mut((0, 0), (1, n1)).copy_from(&template.h1);
    Realization::new(a, b, c, d)
}

/// `(S − GL, G, H)` on the stacked generator: `H` holds the full-loop
/// moments, with the reference block overridden to `L₁`.
pub fn normative_loop(full: &Realization, generator: &BlockGenerator, gain: &RMat) -> Result<Realization> {
    let g = generator.combined()?;
    let m = moments_of(full, &g)?;
    let n1 = generator.nu1();
    let mut h = m.values - g.l() * Complex64::new(full.d, 0.0);
    h.view_mut((0, 0), (1, n1)).copy_from(generator.first().l());
    let s = to_real(g.s(), 1e-12)?;
    let l = to_real(g.l(), 1e-12)?;
    let h = to_real(&h, 1e-9)?;
    Realization::new(&s - gain * &l, gain.clone(), h, full.d)
}

/// Reduces the loop formed by `plant` and `controller` to order
/// `n + ν_C`, with tracking of the block-1 signals enforced.
pub fn reduce_closed_loop(
    plant: &Realization,
    controller: &Realization,
    generator: &BlockGenerator,
    reference: &SignalGenerator,
    opts: &ReductionOptions,
) -> Result<ClosedLoopDesign> {
    let n = plant.order();
    if generator.nu1() != n {
        return Err(Error::Shape(format!(
            "block 1 has order {}, expected the plant order {}",
            generator.nu1(),
            n
        )));
    }
    let (s1, l1, _) = generator.first().as_real()?;
    let (s2, l2, _) = generator.second().as_real()?;
    let mut notes = Vec::new();

    let full_loop = negative_feedback(plant, controller)?;
    let abscissa = full_loop.p_cl.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(Error::Unstable { what: "full closed loop".into(), abscissa });
    }

    // Block 1: full-loop interpolation data at σ(S₁).
    let full_m = moments_of(&full_loop.p_cl, generator.first())?;
    let baseline_defect = max_abs(&(&full_m.values - generator.first().l()));
    let (pi1, h1) = if opts.literal_pi1 {
        let m = to_complex(&(&plant.a - &plant.b * &plant.c * controller.d));
        let basis = homogeneous_sylvester_basis(&m, generator.first().s())?;
        let pi1 = basis.first().cloned().unwrap_or_else(|| CMat::zeros(n, n));
        notes.push(if basis.is_empty() {
            "literal mode: the homogeneous relation only admits Pi1 = 0, so H1 = C*Pi1 = 0 and tracking is not \
             enforced"
                .to_string()
        } else {
            format!(
                "literal mode: the homogeneous relation has a {}-dimensional solution space; its first basis \
                 element is used as Pi1 and H1 = C*Pi1, so tracking is not enforced",
                basis.len()
            )
        });
        let h1 = to_real(&(to_complex(&plant.c) * &pi1), 1e-9)?;
        (pi1, h1)
    } else {
        (full_m.pi.pi.rows(0, n).into_owned(), l1.clone())
    };

    // Block 2: controller interpolation data at σ(S₂).
    let nk = controller.order();
    let nu_c = generator.nu2();
    let (pi2, h2) = if nk == 0 {
        (CMat::zeros(0, nu_c), &l2 * controller.d)
    } else {
        let sol = solve_sylvester(
            &to_complex(&controller.a),
            &to_complex(&controller.b),
            generator.second().l(),
            generator.second().s(),
        )?;
        let h2 = to_real(&(to_complex(&controller.c) * &sol.pi), 1e-9)? + &l2 * controller.d;
        (sol.pi, h2)
    };

    let mut template = StructuredLoopTemplate {
        s1: s1.clone(),
        l1: l1.clone(),
        h1: h1.clone(),
        s2: s2.clone(),
        l2: l2.clone(),
        h2: h2.clone(),
        fixed_g1: Some(plant.b.clone()),
        g1_basis: None,
        target_poles: None,
        seed: opts.seed,
    };
    let stab = StabilizeOptions {
        margin: opts.margin,
        starts: opts.search_starts,
        max_evals: opts.search_max_evals,
        seed: opts.seed,
        scale: None,
    };

    let to_unstable = |e: Error| match e {
        Error::BudgetExhausted { best_abscissa, .. } => {
            Error::Unstable { what: "reduced loop (no stabilizing gain found)".into(), abscissa: best_abscissa }
        }
        other => other,
    };
    let route_of = |m: &StabilizeMethod| match m {
        StabilizeMethod::DirectPlacement => GainRoute::StructuredPlacement,
        StabilizeMethod::Search { .. } => GainRoute::StructuredSearch,
    };
    let nu = n + nu_c;
    let mut plant_input_gain_failure = None;
    let mut relative_degree_matched = false;
    let (g1, g2, route) = match design_g_stabilize(&template, &stab) {
        Ok(out) => {
            let (g1, g2) = template.split(&out.gain);
            (g1, g2, GainRoute::PlantInputGain)
        }
        Err(e) => {
            plant_input_gain_failure = Some(e.to_string());
            template.fixed_g1 = None;
            let r = relative_degree(plant).unwrap_or(0);
            let mut found = None;
            if opts.match_relative_degree && r > 0 {
                template.g1_basis = Some(relative_degree_basis(&s1, &l1, r));
                template.target_poles = Some(match &opts.target_poles {
                    Some(p) if p.len() + r == nu => p.clone(),
                    _ => default_target_poles(nu - r),
                });
                match design_g_stabilize(&template, &stab) {
                    Ok(out) => {
                        let (g1, g2) = template.split(&out.gain);
                        relative_degree_matched = true;
                        found = Some((g1, g2, route_of(&out.method)));
                    }
                    Err(e) => notes.push(format!(
                        "no stabilizing gain preserving relative degree {r} was found ({e}); G1 is left unrestricted"
                    )),
                }
                template.g1_basis = None;
            }
            match found {
                Some(f) => f,
                None => {
                    template.target_poles =
                        Some(opts.target_poles.clone().unwrap_or_else(|| default_target_poles(nu)));
                    let out = design_g_stabilize(&template, &stab).map_err(to_unstable)?;
                    let (g1, g2) = template.split(&out.gain);
                    (g1, g2, route_of(&out.method))
                }
            }
        }
    };

    let reduced_loop = structured_loop(&template, &g1, &g2, plant.d)?;
    let mut gain = RMat::zeros(n + nu_c, 1);
    gain.view_mut((0, 0), (n, 1)).copy_from(&g1);
    gain.view_mut((n, 0), (nu_c, 1)).copy_from(&g2);
    let normative = if generator.combined_observable() && !opts.literal_pi1 {
        normative_loop(&full_loop.p_cl, generator, &gain).ok()
    } else {
        if !generator.combined_observable() {
            notes.push(
                "stacked generator is not observable (repeated modes across blocks); the blocks are handled \
                 separately and no stacked reduction is formed"
                    .into(),
            );
        }
        None
    };

    let extracted = match extract_controller(plant, &reduced_loop, opts.extraction_tol) {
        Ok(k) => ExtractionOutcome::Extracted(k),
        Err(e) => ExtractionOutcome::Failed(e),
    };
    let report = certify_loop(&reduced_loop, reference, &[generator.first().clone()], &opts.certify);

    Ok(ClosedLoopDesign {
        plant: plant.clone(),
        controller: controller.clone(),
        full_loop,
        generator: generator.clone(),
        reference: reference.clone(),
        pi1,
        pi2,
        h1,
        h2,
        g1,
        g2,
        reduced_loop,
        normative_loop: normative,
        route,
        relative_degree_matched,
        plant_input_gain_failure,
        baseline_defect,
        literal_pi1: opts.literal_pi1,
        notes,
        extracted,
        certify_options: opts.certify.clone(),
        report,
    })
}

/// Rational transfer function `num(s)/den(s)` with ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferFraction {
    pub num: Poly,
    pub den: Poly,
}

impl TransferFraction {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    pub fn order(&self) -> usize {
        poly::degree(&self.den)
    }

    pub fn is_proper(&self) -> bool {
        poly::degree(&self.num) <= poly::degree(&self.den)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        roots_with_origin(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        roots_with_origin(&self.num)
    }

    /// Controllable canonical realization (requires a proper fraction).
    pub fn to_realization(&self) -> Result<Realization> {
        let dn = poly::degree(&self.num);
        let dd = poly::degree(&self.den);
        if dn > dd {
            return Err(Error::Improper { num_degree: dn, den_degree: dd });
        }
        let lead = self.den[dd];
        let den: Vec<f64> = self.den[..=dd].iter().map(|x| x / lead).collect();
        let mut num: Vec<f64> = self.num.iter().map(|x| x / lead).collect();
        num.resize(dd + 1, 0.0);
        let d = num[dd];
        let mut a = RMat::zeros(dd, dd);
        for i in 0..dd.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        if dd > 0 {
            for j in 0..dd {
                a[(dd - 1, j)] = -den[j];
            }
        }
        let mut b = RMat::zeros(dd, 1);
        if dd > 0 {
            b[(dd - 1, 0)] = 1.0;
        }
        let c = RMat::from_fn(1, dd, |_, j| num[j] - d * den[j]);
        Realization::new(a, b, c, d)
    }
}

fn roots_with_origin(p: &[f64]) -> Vec<Complex64> {
    let k = p.iter().take_while(|&&x| x == 0.0).count();
    let mut r = vec![Complex64::new(0.0, 0.0); k.min(poly::degree(p))];
    if k < p.len() {
        r.extend(poly::roots(&p[k..]));
    }
    r
}

/// Transfer numerator and denominator of a realization:
/// `det(sI − A + BC) − det(sI − A) + D det(sI − A)` over `det(sI − A)`.
pub fn realization_fraction(sys: &Realization) -> TransferFraction {
    let den = poly::charpoly(&sys.a);
    let closed = poly::charpoly(&(&sys.a - &sys.b * &sys.c));
    let num = poly::add(&poly::sub(&closed, &den), &poly::scale(&den, sys.d));
    TransferFraction { num: poly::trim(num), den }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractedController {
    pub fraction: TransferFraction,
    /// Largest relative mismatch between the re-closed loop and the reduced
    /// loop over the sample points.
    pub reclosure_error: f64,
    /// Number of pole/zero pairs cancelled.
    pub cancelled: usize,
}

/// Sets coefficients `p[0..k]` to exactly zero while they are negligible,
/// so that roots at the origin are represented exactly.
fn snap_origin(p: &mut [f64], tol: f64) {
    let scale = poly::max_coeff(p);
    for x in p.iter_mut() {
        if x.abs() <= tol * scale {
            *x = 0.0;
        } else {
            break;
        }
    }
}

/// `K̂ = P̂_CL / (P (1 − P̂_CL))` with common factors removed, without the
/// properness and re-closure checks of [`extract_controller`].
///
/// Roots closer than `tol·max(1, |r|)` are cancelled; pairs between `tol`
/// and `100·tol` are rejected as ambiguous. Returns the fraction and the
/// number of cancelled pairs.
pub fn controller_fraction(plant: &Realization, reduced_loop: &Realization, tol: f64) -> Result<(TransferFraction, usize)> {
    let p = realization_fraction(plant);
    let ph = realization_fraction(reduced_loop);
    if poly::max_coeff(&p.num) == 0.0 {
        return Err(Error::InvalidArgument("plant transfer is identically zero".into()));
    }
    let one_minus = poly::sub(&ph.den, &ph.num);
    if poly::max_coeff(&one_minus) <= 1e-14 * poly::max_coeff(&ph.den) {
        return Err(Error::InvalidArgument("1 - reduced loop transfer is identically zero".into()));
    }
    let mut num = poly::trim_rel(poly::mul(&ph.num, &p.den), 1e-13);
    let mut den = poly::trim_rel(poly::mul(&p.num, &one_minus), 1e-13);
    snap_origin(&mut num, tol);
    snap_origin(&mut den, tol);
    if poly::is_zero(&num) || poly::is_zero(&den) {
        return Err(Error::InvalidArgument("reduced loop transfer is identically zero".into()));
    }

    // Common factors of s.
    let mut cancelled = 0;
    while num.len() > 1 && den.len() > 1 && num[0] == 0.0 && den[0] == 0.0 {
        num.remove(0);
        den.remove(0);
        cancelled += 1;
    }
    let zn = num.iter().take_while(|&&x| x == 0.0).count();
    let zd = den.iter().take_while(|&&x| x == 0.0).count();
    let core_n = &num[zn..];
    let core_d = &den[zd..];
    let rn = poly::roots(core_n);
    let rd = poly::roots(core_d);

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in rn.iter().enumerate() {
        for (j, b) in rd.iter().enumerate() {
            pairs.push(((a - b).norm() / a.norm().max(b.norm()).max(1.0), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_n = vec![false; rn.len()];
    let mut used_d = vec![false; rd.len()];
    for (d, i, j) in pairs {
        if used_n[i] || used_d[j] {
            continue;
        }
        if d < tol {
            used_n[i] = true;
            used_d[j] = true;
            cancelled += 1;
        } else if d < 100.0 * tol {
            return Err(Error::CancellationUnsafe { a: format!("{}", rn[i]), b: format!("{}", rd[j]), distance: d });
        } else {
            break;
        }
    }
    let keep = |r: &[Complex64], used: &[bool]| -> Vec<Complex64> {
        r.iter().zip(used).filter(|(_, u)| !**u).map(|(z, _)| *z).collect()
    };
    let lead_n = core_n[poly::degree(core_n)];
    let lead_d = core_d[poly::degree(core_d)];
    let mut fnum = vec![0.0; zn];
    fnum.extend(poly::scale(&poly::from_roots(&keep(&rn, &used_n)), lead_n / lead_d));
    let mut fden = vec![0.0; zd];
    fden.extend(poly::from_roots(&keep(&rd, &used_d)));
    Ok((TransferFraction { num: poly::trim(fnum), den: poly::trim(fden) }, cancelled))
}

/// Extracts `K̂` and checks that it is proper and that closing the loop
/// with the plant reproduces `P̂_CL`.
pub fn extract_controller(plant: &Realization, reduced_loop: &Realization, tol: f64) -> Result<ExtractedController> {
    let (fraction, cancelled) = controller_fraction(plant, reduced_loop, tol)?;
    let p = realization_fraction(plant);
    let ph = realization_fraction(reduced_loop);
    if !fraction.is_proper() {
        return Err(Error::Improper { num_degree: poly::degree(&fraction.num), den_degree: fraction.order() });
    }

    // Re-close the loop at sample points in the right half plane.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0C10_5ED0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s = Complex64::new(rng.random_range(0.05..2.0), rng.random_range(-3.0..3.0));
        let pv = p.eval(s);
        let kv = fraction.eval(s);
        let closed = pv * kv / (Complex64::new(1.0, 0.0) + pv * kv);
        let target = ph.eval(s);
        worst = worst.max((closed - target).norm() / target.norm().max(1e-300));
    }
    if !(worst <= 1e-6) {
        return Err(Error::ReclosureFailed(worst));
    }
    Ok(ExtractedController { fraction, reclosure_error: worst, cancelled })
}
