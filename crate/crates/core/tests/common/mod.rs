#![allow(dead_code)]

use mmred_core::linalg::{c, spectral_abscissa, RMat};
use mmred_core::lti::Realization;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> RMat {
    RMat::from_fn(r, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random SISO system with spectral abscissa drawn from [-1.5, -0.2].
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> Realization {
    let a0 = randn(rng, n, n);
    let target = rng.random_range(-1.5..-0.2);
    let a = &a0 - RMat::identity(n, n) * (spectral_abscissa(&a0) - target);
    let b = randn(rng, n, 1);
    let cc = randn(rng, 1, n);
    let d = if rng.random_bool(0.5) { rng.sample(StandardNormal) } else { 0.0 };
    Realization::new(a, b, cc, d).unwrap()
}

pub fn fourdisk_plant() -> Realization {
    let mut a = RMat::zeros(8, 8);
    let row = [-0.161, -6.004, -0.58215, -9.9835, -0.40727, -3.982, 0.0, 0.0];
    for j in 0..8 {
        a[(0, j)] = row[j];
    }
    for i in 1..8 {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = RMat::zeros(8, 1);
    b[(0, 0)] = 1.0;
    let cc = RMat::from_row_slice(1, 8, &[0.0, 0.0, 6.4432e-3, 2.1936e-3, 7.1252e-2, 1.0002, 0.10455, 0.99551]);
    Realization::new(a, b, cc, 0.0).unwrap()
}

pub fn fourdisk_poles() -> Vec<Complex64> {
    [-1.5, -1.1, -1.0, -0.5, -0.3333, -0.25, -0.2, -0.1, -2.1, -1.3, -1.0, -0.2, -0.1667, -0.1429, -0.03, -0.01]
        .iter()
        .map(|&x| c(x, 0.0))
        .collect()
}

pub struct DesignInputs {
    pub plant: Realization,
    pub controller: Realization,
    pub generator: mmred_core::siggen::BlockGenerator,
    pub reference: mmred_core::siggen::SignalGenerator,
}

/// Random strictly proper plant of order 2–4 with an observer-based
/// stabilizing controller, a step or ramp reference, and `ν_C ∈ {1, 2}`.
pub fn random_design_inputs(seed: u64) -> DesignInputs {
    use mmred_core::clred::{build_compensator, default_blocks};
    use mmred_core::siggen::SignalGenerator;
    let mut rng = rng(seed);
    loop {
        let n = rng.random_range(2..=4);
        let a = randn(&mut rng, n, n);
        let b = randn(&mut rng, n, 1);
        let cc = randn(&mut rng, 1, n);
        let Ok(plant) = Realization::new(a, b, cc, 0.0) else { continue };
        if !plant.is_minimal() {
            continue;
        }
        let poles: Vec<Complex64> = (0..2 * n).map(|_| c(-rng.random_range(0.5..3.0), 0.0)).collect();
        let Ok(comp) = build_compensator(&plant, &poles) else { continue };
        let reference = if n >= 2 && rng.random_bool(0.5) { SignalGenerator::polynomial(1) } else { SignalGenerator::polynomial(0) };
        let nu_c = rng.random_range(1..=2);
        let Ok(generator) = default_blocks(&reference, n, nu_c, 0.0) else { continue };
        return DesignInputs { plant, controller: comp.controller, generator, reference };
    }
}
