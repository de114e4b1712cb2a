//! Time-domain simulation by exact discretization of the augmented
//! generator–system state, tracking verdicts, and CSV export.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{expm, spectral_abscissa, RMat, RVec};
use crate::lti::{LoopSet, Realization};
use crate::siggen::SignalGenerator;

pub const DEFAULT_DT: f64 = 0.01;
pub const MAX_AUTO_HORIZON: f64 = 500.0;
/// Relative tracking threshold applied to `‖θ‖_∞`.
pub const DEFAULT_THRESHOLD_REL: f64 = 1e-4;

/// Sign convention of the stored error signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorConvention {
    /// `ε = y − θ` (open-loop cascade).
    OutputMinusReference,
    /// `ε = θ − y` (closed loop driven by `r = θ`).
    ReferenceMinusOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
    pub eps: Vec<f64>,
    pub state_dim: usize,
    pub convention: ErrorConvention,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn theta_inf(&self) -> f64 {
        self.theta.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// CSV with header `t,theta,y,eps`, 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 96 + 16);
        out.push_str("t,theta,y,eps\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i], self.theta[i], self.y[i], self.eps[i]
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingVerdict {
    pub tracks: bool,
    /// Largest `|ε|` over the final 10% of the horizon.
    pub tail_error: f64,
    /// Least-squares exponential decay rate of `|ε(t)|` (positive = decaying).
    pub decay_fit: f64,
    pub threshold: f64,
}

/// 50 time constants of the slowest mode, capped at 500 s.
pub fn auto_horizon(a: &RMat) -> f64 {
    let abscissa = spectral_abscissa(a);
    if abscissa < 0.0 {
        (50.0 / abscissa.abs()).min(MAX_AUTO_HORIZON)
    } else {
        MAX_AUTO_HORIZON
    }
}

struct Stepped {
    times: Vec<f64>,
    theta: Vec<f64>,
    states: Vec<RVec>,
}

fn step_cascade(s: &RMat, l: &RMat, w0: &RVec, a: &RMat, b: &RMat, x0: &RVec, horizon: f64, dt: f64) -> Result<Stepped> {
    if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("need dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}")));
    }
    let nu = s.nrows();
    let n = a.nrows();
    if x0.len() != n {
        return Err(Error::Shape(format!("initial state has {} entries, expected {}", x0.len(), n)));
    }
    let mut abar = RMat::zeros(nu + n, nu + n);
    abar.view_mut((0, 0), (nu, nu)).copy_from(s);
    abar.view_mut((nu, 0), (n, nu)).copy_from(&(b * l));
    abar.view_mut((nu, nu), (n, n)).copy_from(a);
    let phi = expm(&abar, dt);
    let steps = (horizon / dt).round() as usize;
    let mut z = RVec::zeros(nu + n);
    z.rows_mut(0, nu).copy_from(w0);
    z.rows_mut(nu, n).copy_from(x0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut theta = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        times.push(k as f64 * dt);
        theta.push((l * z.rows(0, nu))[(0, 0)]);
        states.push(z.rows(nu, n).into_owned());
        if k < steps {
            z = &phi * z;
        }
    }
    Ok(Stepped { times, theta, states })
}

/// Cascade `ω̇ = Sω, ẋ = Ax + BLω, y = Cx + DLω` with `ε = y − θ`.
pub fn simulate_cascade(sys: &Realization, g: &SignalGenerator, x0: &RVec, horizon: f64, dt: f64) -> Result<Trajectory> {
    let (s, l, w0) = g.as_real()?;
    let st = step_cascade(&s, &l, &w0, &sys.a, &sys.b, x0, horizon, dt)?;
    let y: Vec<f64> = st
        .states
        .iter()
        .zip(&st.theta)
        .map(|(x, th)| (&sys.c * x)[(0, 0)] + sys.d * th)
        .collect();
    let eps = y.iter().zip(&st.theta).map(|(y, th)| y - th).collect();
    Ok(Trajectory { times: st.times, theta: st.theta, y, eps, state_dim: g.dim() + sys.order(), convention: ErrorConvention::OutputMinusReference })
}

/// Reference-to-output loop driven by `r = θ` from rest, with `ε = θ − y`.
pub fn simulate_reference_loop(p_cl: &Realization, g: &SignalGenerator, horizon: f64, dt: f64) -> Result<Trajectory> {
    let mut traj = simulate_cascade(p_cl, g, &RVec::zeros(p_cl.order()), horizon, dt)?;
    for e in traj.eps.iter_mut() {
        *e = -*e;
    }
    traj.convention = ErrorConvention::ReferenceMinusOutput;
    Ok(traj)
}

/// Closed loop driven by `r = θ`: `y` from the reference-to-output map and
/// `ε` from the reference-to-error map (they share the state).
pub fn simulate_closed_loop(lp: &LoopSet, g: &SignalGenerator, horizon: f64, dt: f64) -> Result<Trajectory> {
    let (s, l, w0) = g.as_real()?;
    let n = lp.p_cl.order();
    let st = step_cascade(&s, &l, &w0, &lp.e_re.a, &lp.e_re.b, &RVec::zeros(n), horizon, dt)?;
    let mut y = Vec::with_capacity(st.times.len());
    let mut eps = Vec::with_capacity(st.times.len());
    for (x, th) in st.states.iter().zip(&st.theta) {
        y.push((&lp.p_cl.c * x)[(0, 0)] + lp.p_cl.d * th);
        eps.push((&lp.e_re.c * x)[(0, 0)] + lp.e_re.d * th);
    }
    Ok(Trajectory { times: st.times, theta: st.theta, y, eps, state_dim: g.dim() + n, convention: ErrorConvention::ReferenceMinusOutput })
}

/// Thresholds the final 10% of the trajectory.
pub fn verdict(traj: &Trajectory, threshold: f64) -> TrackingVerdict {
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let tail_error = traj
        .times
        .iter()
        .zip(&traj.eps)
        .filter(|(t, _)| **t >= 0.9 * t_end - 1e-12)
        .fold(0.0f64, |m, (_, e)| if e.is_finite() { m.max(e.abs()) } else { f64::INFINITY });
    TrackingVerdict { tracks: tail_error < threshold, tail_error, decay_fit: decay_rate(traj), threshold }
}

/// Default threshold `1e−4 ‖θ‖_∞`.
pub fn default_threshold(traj: &Trajectory) -> f64 {
    DEFAULT_THRESHOLD_REL * traj.theta_inf()
}

fn decay_rate(traj: &Trajectory) -> f64 {
    let emax = traj.eps.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let floor = 1e-12 * emax.max(traj.theta_inf());
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.eps)
        .filter(|(_, e)| e.is_finite() && e.abs() > floor && e.abs() > 0.0)
        .map(|(t, e)| (*t, e.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if var == 0.0 {
        0.0
    } else {
        -cov / var
    }
}
