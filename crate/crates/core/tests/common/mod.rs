//! Shared fixtures and independent oracles for the acceptance suite.
//!
//! The oracles deliberately avoid the library's closed forms: the witness
//! minimizer works on the raw three-variable objective, and the symplectic
//! spectrum comes from a dense eigensolve of `Omega * Sigma`.

use entsim_core::gaussian::{apply_loss, apply_transform, GaussianState, SymplecticTransform};
use entsim_core::rng::SplitRng;
use entsim_core::squeezer::{predict_covariance, SqueezerParams};
use nalgebra::{Matrix2, Matrix4, Vector4};
use std::f64::consts::{FRAC_PI_2, TAU};

/// Reference operating point used throughout the suite: squeeze factor 5.41,
/// channel participations 0.1304 and 0.202, aligned phases, unit gains.
pub fn reference_params() -> SqueezerParams {
    SqueezerParams {
        s: 5.41,
        alpha: 0.1304,
        beta: 0.202,
        phi1: 0.0,
        phi2: 0.0,
        g1: 1.0,
        g2: 1.0,
    }
}

/// Covariance model at the reference operating point.
pub fn reference_state() -> GaussianState {
    predict_covariance(&reference_params(), 0.51, true).unwrap()
}

pub fn uniform(rng: &mut SplitRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

/// A random physical two-mode state: a squeezed pair, rotated, mixed on a
/// coupler, rotated again, attenuated, plus an isotropic classical noise
/// floor per mode.  The floor keeps both single-mode traces comfortably
/// above the vacuum value, so the witness gain optimum stays interior.
pub fn random_physical_state(rng: &mut SplitRng) -> GaussianState {
    let chain = SymplecticTransform::squeeze_pair(uniform(rng, 1.0, 4.0), uniform(rng, 1.0, 4.0))
        .unwrap()
        .then(&SymplecticTransform::phase(
            uniform(rng, 0.0, TAU),
            uniform(rng, 0.0, TAU),
        ))
        .then(&SymplecticTransform::beamsplitter(uniform(rng, 0.2, 0.8)).unwrap())
        .then(&SymplecticTransform::phase(
            uniform(rng, 0.0, TAU),
            uniform(rng, 0.0, TAU),
        ));
    let st = apply_transform(&GaussianState::vacuum(), &chain);
    let st = apply_loss(&st, uniform(rng, 0.4, 0.95), uniform(rng, 0.4, 0.95)).unwrap();
    let mut sigma = *st.sigma();
    let n1 = uniform(rng, 0.05, 0.5);
    let n2 = uniform(rng, 0.05, 0.5);
    for i in 0..2 {
        sigma[(i, i)] += n1;
        sigma[(i + 2, i + 2)] += n2;
    }
    GaussianState::new(Vector4::zeros(), sigma).unwrap()
}

/// A random separable state: a product of two independently squeezed,
/// rotated, attenuated modes, optionally blurred by classically correlated
/// displacement noise (a convex mixture of displaced product states, which
/// keeps the state separable by construction).
pub fn random_separable_state(rng: &mut SplitRng) -> GaussianState {
    let chain = SymplecticTransform::squeeze_pair(uniform(rng, 1.0, 3.0), uniform(rng, 1.0, 3.0))
        .unwrap()
        .then(&SymplecticTransform::phase(
            uniform(rng, 0.0, TAU),
            uniform(rng, 0.0, TAU),
        ));
    let st = apply_transform(&GaussianState::vacuum(), &chain);
    let st = apply_loss(&st, uniform(rng, 0.3, 0.99), uniform(rng, 0.3, 0.99)).unwrap();
    let mut sigma = *st.sigma();
    let n1 = uniform(rng, 0.0, 0.4);
    let n2 = uniform(rng, 0.0, 0.4);
    for i in 0..2 {
        sigma[(i, i)] += n1;
        sigma[(i + 2, i + 2)] += n2;
    }
    if rng.next_f64() < 0.5 {
        let v = Vector4::new(
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        );
        sigma += uniform(rng, 0.0, 0.5) * v * v.transpose();
    }
    GaussianState::new(Vector4::zeros(), sigma).unwrap()
}

/// Rotated second moments read straight off the covariance entries.
fn rotated_moments(sg: &Matrix4<f64>, t1: f64, t2: f64) -> (f64, f64, f64) {
    let (c1, s1) = (t1.cos(), t1.sin());
    let (c2, s2) = (t2.cos(), t2.sin());
    let v1 = c1 * c1 * sg[(0, 0)] + 2.0 * c1 * s1 * sg[(0, 1)] + s1 * s1 * sg[(1, 1)];
    let v2 = c2 * c2 * sg[(2, 2)] + 2.0 * c2 * s2 * sg[(2, 3)] + s2 * s2 * sg[(3, 3)];
    let cv = c1 * c2 * sg[(0, 2)]
        + c1 * s2 * sg[(0, 3)]
        + s1 * c2 * sg[(1, 2)]
        + s1 * s2 * sg[(1, 3)];
    (v1, v2, cv)
}

/// The raw witness objective
/// `Var[a W1(t1) + W2(t2)/a] + Var[a W1(t1+pi/2) - W2(t2+pi/2)/a] - (a^2 + 1/a^2)`,
/// evaluated literally from the covariance entries.
fn witness_objective(sg: &Matrix4<f64>, a: f64, t1: f64, t2: f64) -> f64 {
    let (v1, v2, cv) = rotated_moments(sg, t1, t2);
    let (u1, u2, cu) = rotated_moments(sg, t1 + FRAC_PI_2, t2 + FRAC_PI_2);
    let aa = a * a;
    aa * (v1 + u1) + (v2 + u2) / aa + 2.0 * (cv - cu) - (aa + 1.0 / aa)
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-12 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Dense-grid minimization of the raw witness objective over gain and both
/// measurement phases, polished by cyclic golden-section passes.  No trace
/// collapse, no phase-combination reduction — independent of the library's
/// closed form.
pub fn grid_witness_min(state: &GaussianState) -> (f64, f64) {
    let sg = state.sigma();
    let (a_lo, a_hi) = (0.1f64, 10.0f64);
    let (na, nt) = (73usize, 96usize);
    let mut best = (f64::INFINITY, 1.0, 0.0, 0.0);
    for i in 0..na {
        let a = a_lo * (a_hi / a_lo).powf(i as f64 / (na - 1) as f64);
        for j in 0..nt {
            let t1 = TAU * j as f64 / nt as f64;
            for k in 0..nt {
                let t2 = TAU * k as f64 / nt as f64;
                let v = witness_objective(sg, a, t1, t2);
                if v < best.0 {
                    best = (v, a, t1, t2);
                }
            }
        }
    }
    let (mut val, mut a, mut t1, mut t2) = best;
    let da = (a_hi / a_lo).powf(1.0 / (na - 1) as f64);
    let dt = TAU / nt as f64;
    for _ in 0..24 {
        let (x, _) = golden(|x| witness_objective(sg, x, t1, t2), a / da, a * da);
        a = x;
        let (x, _) = golden(|x| witness_objective(sg, a, x, t2), t1 - dt, t1 + dt);
        t1 = x;
        let (x, v) = golden(|x| witness_objective(sg, a, t1, x), t2 - dt, t2 + dt);
        t2 = x;
        val = v;
    }
    (val, a)
}

/// Symplectic spectrum via the eigenvalues of `Omega * Sigma`, which come in
/// conjugate pure-imaginary pairs `+-(i nu)` for a positive-definite Sigma.
pub fn omega_spectrum(sigma: &Matrix4<f64>) -> (f64, f64) {
    let mut omega = Matrix4::zeros();
    omega[(0, 1)] = 1.0;
    omega[(1, 0)] = -1.0;
    omega[(2, 3)] = 1.0;
    omega[(3, 2)] = -1.0;
    let eig = (omega * sigma).complex_eigenvalues();
    let scale = eig.iter().fold(1.0f64, |m, z| m.max(z.im.abs()));
    for z in eig.iter() {
        assert!(
            z.re.abs() <= 1e-9 * scale,
            "eigenvalue of Omega*Sigma has a real part: {z}"
        );
    }
    let mut mags: Vec<f64> = eig.iter().map(|z| z.im.abs()).collect();
    mags.sort_by(f64::total_cmp);
    (0.5 * (mags[0] + mags[1]), 0.5 * (mags[2] + mags[3]))
}

/// Smallest eigenvalue of a symmetric 2x2 block — the minimum variance of a
/// rotated single-channel quadrature.
pub fn min_block_variance(block: &Matrix2<f64>) -> f64 {
    let half_tr = 0.5 * (block[(0, 0)] + block[(1, 1)]);
    let dev = 0.5 * (block[(0, 0)] - block[(1, 1)]);
    half_tr - dev.hypot(block[(0, 1)])
}

/// Minimum over both measurement phases of `(1/2) Var(W1 + W2)`, by dense
/// grid plus golden-section polish.
pub fn min_half_sum_variance(state: &GaussianState) -> f64 {
    let sg = state.sigma();
    let obj = |t1: f64, t2: f64| {
        let (v1, v2, cv) = rotated_moments(sg, t1, t2);
        0.5 * (v1 + v2 + 2.0 * cv)
    };
    let nt = 720usize;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for j in 0..nt {
        let t1 = TAU * j as f64 / nt as f64;
        for k in 0..nt {
            let t2 = TAU * k as f64 / nt as f64;
            let v = obj(t1, t2);
            if v < best.0 {
                best = (v, t1, t2);
            }
        }
    }
    let (mut val, mut t1, mut t2) = best;
    let dt = TAU / nt as f64;
    for _ in 0..12 {
        let (x, _) = golden(|x| obj(x, t2), t1 - dt, t1 + dt);
        t1 = x;
        let (x, v) = golden(|x| obj(t1, x), t2 - dt, t2 + dt);
        t2 = x;
        val = v;
    }
    val
}
