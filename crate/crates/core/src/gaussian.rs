//! Two-mode Gaussian states and the symplectic/entanglement toolbox.
//!
//! States are `(mu, sigma)` pairs over the quadrature ordering
//! `(X1, Y1, X2, Y2)` with vacuum variance 1/2.  The module provides the
//! standard single-mode squeeze, beam-splitter, and phase transforms, the
//! per-mode loss channel, symplectic spectra (plain and partially
//! transposed), an EPR-variance entanglement witness minimized in closed
//! form, and the negativity-style measure `(1/2 - nu~_1) / (2 nu~_1)`.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Variance of each vacuum quadrature in the convention used throughout.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Convention tag stored in state JSON files.
pub const STATE_CONVENTION: &str = "vacuum=0.5";

const SYMPLECTIC_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-9;
const SPECTRUM_TOL: f64 = 1e-9;
const PHYSICALITY_TOL: f64 = 1e-9;
/// Closed-form witness needs Tr(A) - 1 and Tr(B) - 1 nonnegative; anything
/// below this is treated as a genuinely unphysical block and sent to the
/// bounded grid search.
const WITNESS_C_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("state entries must be finite")]
    NonFinite,
    #[error("covariance matrix asymmetric beyond tolerance (max |S - S^T| = {0:.3e})")]
    Asymmetric(f64),
    #[error("matrix is not symplectic (max |M Omega M^T - Omega| = {0:.3e})")]
    NotSymplectic(f64),
    #[error("squeeze factor must be positive and finite, got {0}")]
    BadSqueeze(f64),
    #[error("beam-splitter transmissivity must lie strictly inside (0, 1), got {0}")]
    BadTransmissivity(f64),
    #[error("loss efficiencies must lie in [0, 1], got ({0}, {1})")]
    BadEfficiency(f64, f64),
    #[error("no real symplectic spectrum: discriminant {0:.3e} below tolerance")]
    ComplexSpectrum(f64),
    #[error("negative argument {0:.3e} under symplectic square root, beyond tolerance")]
    NegativeRoot(f64),
    #[error("unsupported state convention {0:?}, expected \"vacuum=0.5\"")]
    BadConvention(String),
}

/// A two-mode Gaussian state: mean vector and 4x4 covariance matrix.
///
/// Construction symmetrizes the covariance exactly, so `sigma()` always
/// returns a symmetric matrix.  Positivity and Heisenberg physicality are
/// *not* enforced here — the moment estimator can legitimately produce
/// unphysical matrices, which must be reportable as-is.  Use
/// [`check_physicality`] or validate at the point of use (sampling does).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mu: Vector4<f64>,
    sigma: Matrix4<f64>,
}

impl GaussianState {
    pub fn new(mu: Vector4<f64>, sigma: Matrix4<f64>) -> Result<Self, GaussianError> {
        if !mu.iter().all(|x| x.is_finite()) || !sigma.iter().all(|x| x.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let asym = (sigma - sigma.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(GaussianError::Asymmetric(asym));
        }
        let sym = (sigma + sigma.transpose()) * 0.5;
        Ok(GaussianState { mu, sigma: sym })
    }

    /// Both modes in vacuum: zero mean, covariance I/2.
    pub fn vacuum() -> Self {
        GaussianState {
            mu: Vector4::zeros(),
            sigma: Matrix4::identity() * VACUUM_VARIANCE,
        }
    }

    pub fn mu(&self) -> &Vector4<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix4<f64> {
        &self.sigma
    }

    /// Mode-1 diagonal block of the covariance.
    pub fn block_a(&self) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Mode-2 diagonal block.
    pub fn block_b(&self) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(2, 2).into_owned()
    }

    /// Cross-mode block (rows mode 1, columns mode 2).
    pub fn block_gamma(&self) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(0, 2).into_owned()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    mu: [f64; 4],
    sigma: [[f64; 4]; 4],
    convention: String,
}

impl Serialize for GaussianState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut sigma = [[0.0; 4]; 4];
        for (i, row) in sigma.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.sigma[(i, j)];
            }
        }
        StateJson {
            mu: [self.mu[0], self.mu[1], self.mu[2], self.mu[3]],
            sigma,
            convention: STATE_CONVENTION.to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GaussianState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = StateJson::deserialize(deserializer)?;
        if raw.convention != STATE_CONVENTION {
            return Err(D::Error::custom(GaussianError::BadConvention(raw.convention)));
        }
        let mu = Vector4::from_row_slice(&raw.mu);
        let sigma = Matrix4::from_fn(|i, j| raw.sigma[i][j]);
        GaussianState::new(mu, sigma).map_err(D::Error::custom)
    }
}

/// The symplectic form Omega for (X1, Y1, X2, Y2).
pub fn omega() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// A linear phase-space transform with M Omega M^T = Omega.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticTransform {
    m: Matrix4<f64>,
}

impl SymplecticTransform {
    /// Validate and wrap an arbitrary matrix.
    pub fn new(m: Matrix4<f64>) -> Result<Self, GaussianError> {
        let dev = (m * omega() * m.transpose() - omega()).abs().max();
        if !dev.is_finite() || dev > SYMPLECTIC_TOL {
            return Err(GaussianError::NotSymplectic(dev));
        }
        Ok(SymplecticTransform { m })
    }

    /// Single-mode squeeze of mode 1: X1 scaled by 1/sqrt(s), Y1 by sqrt(s),
    /// so the squeezed X1 variance of vacuum becomes 1/(2s).
    pub fn squeeze(s: f64) -> Result<Self, GaussianError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(GaussianError::BadSqueeze(s));
        }
        let r = s.sqrt();
        Ok(SymplecticTransform {
            m: Matrix4::from_diagonal(&Vector4::new(1.0 / r, r, 1.0, 1.0)),
        })
    }

    /// Independent squeezes of both modes.
    pub fn squeeze_pair(s1: f64, s2: f64) -> Result<Self, GaussianError> {
        for s in [s1, s2] {
            if !(s.is_finite() && s > 0.0) {
                return Err(GaussianError::BadSqueeze(s));
            }
        }
        let (r1, r2) = (s1.sqrt(), s2.sqrt());
        Ok(SymplecticTransform {
            m: Matrix4::from_diagonal(&Vector4::new(1.0 / r1, r1, 1.0 / r2, r2)),
        })
    }

    /// Beam splitter / hybrid coupler with power transmissivity t in (0, 1).
    pub fn beamsplitter(t: f64) -> Result<Self, GaussianError> {
        if !(t.is_finite() && t > 0.0 && t < 1.0) {
            return Err(GaussianError::BadTransmissivity(t));
        }
        let (c, s) = (t.sqrt(), (1.0 - t).sqrt());
        Ok(SymplecticTransform {
            m: Matrix4::new(
                c, 0.0, -s, 0.0, //
                0.0, c, 0.0, -s, //
                s, 0.0, c, 0.0, //
                0.0, s, 0.0, c,
            ),
        })
    }

    /// Independent phase rotations of the two modes.
    pub fn phase(phi1: f64, phi2: f64) -> Self {
        let r = |p: f64| {
            let (s, c) = p.sin_cos();
            Matrix2::new(c, s, -s, c)
        };
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&r(phi1));
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&r(phi2));
        SymplecticTransform { m }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    /// Composition: `self.then(&g)` applies `self` first, then `g`.
    pub fn then(&self, g: &SymplecticTransform) -> SymplecticTransform {
        SymplecticTransform { m: g.m * self.m }
    }
}

/// Evolve a state: mu -> M mu, sigma -> M sigma M^T.
pub fn apply_transform(state: &GaussianState, transform: &SymplecticTransform) -> GaussianState {
    let m = transform.m;
    let sigma = m * state.sigma * m.transpose();
    GaussianState {
        mu: m * state.mu,
        sigma: (sigma + sigma.transpose()) * 0.5,
    }
}

/// Per-mode attenuation: each mode is mixed with vacuum on a virtual beam
/// splitter of power efficiency eta, so diagonal blocks scale by eta, the
/// cross block by sqrt(eta1 eta2), vacuum refills the rest, and means scale
/// by sqrt(eta).  Vacuum is a fixed point for every efficiency pair.
pub fn apply_loss(
    state: &GaussianState,
    eta1: f64,
    eta2: f64,
) -> Result<GaussianState, GaussianError> {
    let ok = |e: f64| e.is_finite() && (0.0..=1.0).contains(&e);
    if !ok(eta1) || !ok(eta2) {
        return Err(GaussianError::BadEfficiency(eta1, eta2));
    }
    let root = [eta1.sqrt(), eta1.sqrt(), eta2.sqrt(), eta2.sqrt()];
    let eta = [eta1, eta1, eta2, eta2];
    let mut sigma = state.sigma;
    for i in 0..4 {
        for j in 0..4 {
            sigma[(i, j)] *= root[i] * root[j];
        }
        sigma[(i, i)] += (1.0 - eta[i]) * VACUUM_VARIANCE;
    }
    let mut mu = state.mu;
    for i in 0..4 {
        mu[i] *= root[i];
    }
    Ok(GaussianState { mu, sigma })
}

/// Variances and covariance of the rotated quadratures
/// W1 = X1 cos(th1) + Y1 sin(th1), W2 = X2 cos(th2) + Y2 sin(th2).
pub fn quadrature_variance(state: &GaussianState, theta1: f64, theta2: f64) -> (f64, f64, f64) {
    let u1 = Vector2::new(theta1.cos(), theta1.sin());
    let u2 = Vector2::new(theta2.cos(), theta2.sin());
    let var1 = (u1.transpose() * state.block_a() * u1)[0];
    let var2 = (u2.transpose() * state.block_b() * u2)[0];
    let cov = (u1.transpose() * state.block_gamma() * u2)[0];
    (var1, var2, cov)
}

/// The three squeezing figures of a covariance matrix: the minimum rotated
/// variance of each channel and the minimum over both phases of
/// `(1/2) Var(W1 + W2)`.
///
/// The per-channel minima are the small eigenvalues of the diagonal blocks.
/// The joint minimum is constrained to a product of two phase circles, which
/// has no closed form; it is found on a dense grid and polished with
/// alternating golden-section passes.
pub fn squeezing_minima(state: &GaussianState) -> (f64, f64, f64) {
    let small_eig = |m: &Matrix2<f64>| {
        let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
        let dev = 0.5 * (m[(0, 0)] - m[(1, 1)]);
        half_tr - dev.hypot(m[(0, 1)])
    };
    let min1 = small_eig(&state.block_a());
    let min2 = small_eig(&state.block_b());

    let obj = |t1: f64, t2: f64| {
        let (v1, v2, cov) = quadrature_variance(state, t1, t2);
        0.5 * (v1 + v2 + 2.0 * cov)
    };
    let n = 360;
    let step = std::f64::consts::TAU / n as f64;
    let mut best = (f64::INFINITY, 0.0f64, 0.0f64);
    for j in 0..n {
        let t1 = j as f64 * step;
        for k in 0..n {
            let t2 = k as f64 * step;
            let v = obj(t1, t2);
            if v < best.0 {
                best = (v, t1, t2);
            }
        }
    }
    let (mut val, mut t1, mut t2) = best;
    for _ in 0..12 {
        let (x, _) = golden_min(|x| obj(x, t2), t1 - step, t1 + step, 1e-12);
        t1 = x;
        let (x, v) = golden_min(|x| obj(t1, x), t2 - step, t2 + step, 1e-12);
        t2 = x;
        val = v;
    }
    (min1, min2, val)
}

fn det2(m: &Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// 4x4 determinant by Laplace expansion in complementary 2x2 minors — exact
/// arithmetic structure, no pivoting.
fn det4(m: &Matrix4<f64>) -> f64 {
    let top = |j: usize, k: usize| m[(0, j)] * m[(1, k)] - m[(0, k)] * m[(1, j)];
    let bot = |j: usize, k: usize| m[(2, j)] * m[(3, k)] - m[(2, k)] * m[(3, j)];
    top(0, 1) * bot(2, 3) - top(0, 2) * bot(1, 3) + top(0, 3) * bot(1, 2)
        + top(1, 2) * bot(0, 3)
        - top(1, 3) * bot(0, 2)
        + top(2, 3) * bot(0, 1)
}

/// Symplectic eigenvalues (nu_minus, nu_plus) of a 4x4 covariance matrix,
/// from the two-mode invariants: nu^2 = (Delta -+ sqrt(Delta^2 - 4 det S))/2
/// with Delta = det A + det B + 2 det Gamma.
pub fn symplectic_eigenvalues(sigma: &Matrix4<f64>) -> Result<(f64, f64), GaussianError> {
    let a = det2(&sigma.fixed_view::<2, 2>(0, 0).into_owned());
    let b = det2(&sigma.fixed_view::<2, 2>(2, 2).into_owned());
    let g = det2(&sigma.fixed_view::<2, 2>(0, 2).into_owned());
    let delta = a + b + 2.0 * g;
    let det = det4(sigma);
    let mut disc = delta * delta - 4.0 * det;
    if disc < 0.0 {
        if disc < -SPECTRUM_TOL {
            return Err(GaussianError::ComplexSpectrum(disc));
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let clamp = |x: f64| {
        if x < 0.0 {
            if x < -SPECTRUM_TOL {
                return Err(GaussianError::NegativeRoot(x));
            }
            return Ok(0.0);
        }
        Ok(x)
    };
    let lo = clamp((delta - root) * 0.5)?;
    let hi = clamp((delta + root) * 0.5)?;
    Ok((lo.sqrt(), hi.sqrt()))
}

/// Outcome of the Heisenberg physicality check nu_minus >= 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityCheck {
    pub physical: bool,
    /// Smallest symplectic eigenvalue; absent when the matrix has no real
    /// symplectic spectrum (certainly unphysical).
    pub min_symplectic_eigenvalue: Option<f64>,
}

/// Check nu_minus >= 1/2 within tolerance.  Never fails: matrices without a
/// real symplectic spectrum are reported as unphysical.
pub fn check_physicality(state: &GaussianState) -> PhysicalityCheck {
    match symplectic_eigenvalues(state.sigma()) {
        Ok((lo, _)) => PhysicalityCheck {
            physical: lo >= VACUUM_VARIANCE - PHYSICALITY_TOL,
            min_symplectic_eigenvalue: Some(lo),
        },
        Err(_) => PhysicalityCheck {
            physical: false,
            min_symplectic_eigenvalue: None,
        },
    }
}

/// Entanglement measure from the partial transpose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityResult {
    /// Symplectic spectrum (nu_minus, nu_plus) of sigma.
    pub nu: (f64, f64),
    /// Symplectic spectrum of the partially transposed sigma.
    pub nu_tilde: (f64, f64),
    /// max(0, (1/2 - nu~_minus) / (2 nu~_minus)); positive iff entangled by
    /// the PPT criterion.
    pub negativity: f64,
}

/// Negativity-style entanglement measure.  Partial transposition flips the
/// sign of Y2, i.e. negates the last row and column of sigma.
pub fn negativity(state: &GaussianState) -> Result<NegativityResult, GaussianError> {
    let nu = symplectic_eigenvalues(state.sigma())?;
    let mut pt = state.sigma;
    for i in 0..4 {
        pt[(3, i)] = -pt[(3, i)];
        pt[(i, 3)] = -pt[(i, 3)];
    }
    let nu_tilde = symplectic_eigenvalues(&pt)?;
    let n = ((VACUUM_VARIANCE - nu_tilde.0) / (2.0 * nu_tilde.0)).max(0.0);
    Ok(NegativityResult {
        nu,
        nu_tilde,
        negativity: n,
    })
}

/// How the witness minimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessMethod {
    /// Analytic minimum, valid when Tr(A) >= 1 and Tr(B) >= 1.
    ClosedForm,
    /// Bounded grid search with golden-section refinement; engaged when a
    /// single-mode block is unphysical (Tr < 1) and flagged here.
    BoundedGrid,
}

/// Minimized EPR-variance witness.
///
/// The witness is the minimum over gains a and measurement phases of
/// `Var[a W1 + W2/a] + Var[a W1' - W2'/a] - (a^2 + 1/a^2)`, where primes are
/// the conjugate (phase + pi/2) quadratures.  Negative values certify
/// entanglement.  The phase enters only through the combined angle
/// theta1 + theta2 under the rotation convention of this crate; `phase_star`
/// reports that combined angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessResult {
    /// Minimized witness value E_W.
    pub e_w: f64,
    /// Optimal gain a (1 when a diagonal block is exactly at the vacuum
    /// trace, where the infimum is approached at extreme gain).
    pub a_star: f64,
    /// Optimal combined phase theta1 + theta2 in [0, 2 pi).
    pub phase_star: f64,
    /// Half the minimized EPR variance sum at unit gain; < 1 witnesses
    /// EPR-type correlations, vacuum gives exactly 1.
    pub delta_epr: f64,
    pub method: WitnessMethod,
}

/// One-dimensional golden-section minimization on [lo, hi].
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
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

/// Minimize the witness objective over the bounded box a in [0.2, 5],
/// psi in [0, 2 pi): coarse grid (121 log-spaced gains x 721 phases), then
/// alternating golden-section refinement to 1e-9.
fn witness_grid_min(c1: f64, c2: f64, k: f64, l: f64) -> (f64, f64, f64) {
    let obj = |a: f64, psi: f64| {
        a * a * c1 + c2 / (a * a) + 2.0 * (k * psi.cos() + l * psi.sin())
    };
    let (a_lo, a_hi) = (0.2f64, 5.0f64);
    let na = 121;
    let npsi = 721;
    let mut best = (a_lo, 0.0, f64::INFINITY);
    for i in 0..na {
        let a = a_lo * (a_hi / a_lo).powf(i as f64 / (na - 1) as f64);
        for j in 0..npsi {
            let psi = std::f64::consts::TAU * j as f64 / npsi as f64;
            let v = obj(a, psi);
            if v < best.2 {
                best = (a, psi, v);
            }
        }
    }
    let da = (a_hi / a_lo).powf(1.0 / (na - 1) as f64);
    let dpsi = std::f64::consts::TAU / npsi as f64;
    let (mut a, mut psi, mut val) = best;
    for _ in 0..3 {
        let (p, _) = golden_min(|p| obj(a, p), psi - dpsi, psi + dpsi, 1e-9);
        psi = p;
        let (aa, v) = golden_min(
            |x| obj(x, psi),
            (a / da).max(a_lo),
            (a * da).min(a_hi),
            1e-9,
        );
        a = aa;
        val = v;
    }
    (val, a, psi.rem_euclid(std::f64::consts::TAU))
}

/// Minimize the EPR-variance witness over gain and phases.
///
/// Closed form: with c1 = Tr(A) - 1, c2 = Tr(B) - 1,
/// c3_min = -2 sqrt((G_xx - G_yy)^2 + (G_xy + G_yx)^2), the minimum is
/// `2 sqrt(c1 c2) + c3_min` at gain a* = (c2/c1)^(1/4).  When either trace
/// falls below the vacuum value (possible for estimated, unphysical states)
/// the objective is unbounded in the gain and the bounded grid search is
/// used instead, flagged via `method`.
pub fn entanglement_witness(state: &GaussianState) -> WitnessResult {
    let a = state.block_a();
    let b = state.block_b();
    let g = state.block_gamma();
    let c1 = a.trace() - 1.0;
    let c2 = b.trace() - 1.0;
    let k = g[(0, 0)] - g[(1, 1)];
    let l = g[(0, 1)] + g[(1, 0)];
    let c3_min = -2.0 * k.hypot(l);
    let delta_epr = 0.5 * (a.trace() + b.trace() + c3_min);
    let mut phase_star = (-l).atan2(-k);
    if phase_star < 0.0 {
        phase_star += std::f64::consts::TAU;
    }
    if c1 >= -WITNESS_C_TOL && c2 >= -WITNESS_C_TOL {
        let (c1, c2) = (c1.max(0.0), c2.max(0.0));
        let a_star = if c1 > 0.0 && c2 > 0.0 {
            (c2 / c1).powf(0.25)
        } else {
            1.0
        };
        WitnessResult {
            e_w: 2.0 * (c1 * c2).sqrt() + c3_min,
            a_star,
            phase_star,
            delta_epr,
            method: WitnessMethod::ClosedForm,
        }
    } else {
        let (e_w, a_star, psi) = witness_grid_min(c1, c2, k, l);
        WitnessResult {
            e_w,
            a_star,
            phase_star: psi,
            delta_epr,
            method: WitnessMethod::BoundedGrid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_state_is_half_identity() {
        let v = GaussianState::vacuum();
        assert_eq!(v.mu(), &Vector4::zeros());
        assert_eq!(v.sigma(), &(Matrix4::identity() * 0.5));
    }

    #[test]
    fn construction_symmetrizes_and_rejects_gross_asymmetry() {
        let mut m = Matrix4::identity() * 0.5;
        m[(0, 1)] = 0.1 + 1e-12;
        m[(1, 0)] = 0.1;
        let s = GaussianState::new(Vector4::zeros(), m).unwrap();
        assert_eq!(s.sigma()[(0, 1)], s.sigma()[(1, 0)]);
        m[(0, 1)] = 0.2;
        assert!(matches!(
            GaussianState::new(Vector4::zeros(), m),
            Err(GaussianError::Asymmetric(_))
        ));
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            GaussianState::new(Vector4::zeros(), m),
            Err(GaussianError::NonFinite)
        ));
    }

    #[test]
    fn squeeze_scales_vacuum_variances() {
        let s = 5.41;
        let sq = SymplecticTransform::squeeze(s).unwrap();
        let out = apply_transform(&GaussianState::vacuum(), &sq);
        assert_abs_diff_eq!(out.sigma()[(0, 0)], 1.0 / (2.0 * s), epsilon = 1e-12);
        assert_abs_diff_eq!(out.sigma()[(1, 1)], s / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.sigma()[(2, 2)], 0.5, epsilon = 1e-15);
        // s = 1 is the identity.
        let id = SymplecticTransform::squeeze(1.0).unwrap();
        assert_eq!(id.matrix(), &Matrix4::identity());
        assert!(SymplecticTransform::squeeze(0.0).is_err());
        assert!(SymplecticTransform::squeeze(-2.0).is_err());
    }

    #[test]
    fn beamsplitter_matrix_and_bounds() {
        let b = SymplecticTransform::beamsplitter(0.51).unwrap();
        assert_abs_diff_eq!(b.matrix()[(0, 0)], 0.51f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.matrix()[(0, 2)], -(0.49f64.sqrt()), epsilon = 1e-15);
        for t in [0.0, 1.0, -0.2, 1.3] {
            assert!(SymplecticTransform::beamsplitter(t).is_err());
        }
        // t -> 1 limit approaches the identity.
        let near = SymplecticTransform::beamsplitter(1.0 - 1e-12).unwrap();
        assert!((near.matrix() - Matrix4::identity()).abs().max() < 2e-6);
    }

    #[test]
    fn half_splitter_correlates_squeezed_input() {
        let s = 4.0;
        let sq = SymplecticTransform::squeeze(s).unwrap();
        let b = SymplecticTransform::beamsplitter(0.5).unwrap();
        let out = apply_transform(&apply_transform(&GaussianState::vacuum(), &sq), &b);
        let expect = 0.5 * (1.0 / (2.0 * s) - 0.5);
        assert_abs_diff_eq!(out.sigma()[(0, 2)], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(out.sigma()[(1, 3)], 0.5 * (s / 2.0 - 0.5), epsilon = 1e-12);
    }

    #[test]
    fn quarter_phase_swaps_quadratures() {
        let sq = SymplecticTransform::squeeze(3.0).unwrap();
        let st = apply_transform(&GaussianState::vacuum(), &sq);
        let rot = apply_transform(&st, &SymplecticTransform::phase(std::f64::consts::FRAC_PI_2, 0.0));
        assert_abs_diff_eq!(rot.sigma()[(0, 0)], st.sigma()[(1, 1)], epsilon = 1e-12);
        assert_abs_diff_eq!(rot.sigma()[(1, 1)], st.sigma()[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn transform_validation_catches_non_symplectic() {
        assert!(SymplecticTransform::new(Matrix4::identity()).is_ok());
        assert!(matches!(
            SymplecticTransform::new(Matrix4::identity() * 1.1),
            Err(GaussianError::NotSymplectic(_))
        ));
    }

    #[test]
    fn constructors_are_symplectic() {
        for m in [
            SymplecticTransform::squeeze(5.41).unwrap(),
            SymplecticTransform::beamsplitter(0.51).unwrap(),
            SymplecticTransform::phase(-1.07, -0.176),
        ] {
            assert!(SymplecticTransform::new(*m.matrix()).is_ok());
        }
    }

    #[test]
    fn loss_endpoints_and_vacuum_fixed_point() {
        let sq = SymplecticTransform::squeeze(6.0).unwrap();
        let st = apply_transform(&GaussianState::vacuum(), &sq);
        let kept = apply_loss(&st, 1.0, 1.0).unwrap();
        assert!((kept.sigma() - st.sigma()).abs().max() < 1e-15);
        let gone = apply_loss(&st, 0.0, 0.0).unwrap();
        assert!((gone.sigma() - GaussianState::vacuum().sigma()).abs().max() < 1e-15);
        let vac = apply_loss(&GaussianState::vacuum(), 0.37, 0.81).unwrap();
        assert!((vac.sigma() - GaussianState::vacuum().sigma()).abs().max() < 1e-15);
        assert!(apply_loss(&st, -0.1, 0.5).is_err());
        assert!(apply_loss(&st, 0.5, 1.2).is_err());
    }

    #[test]
    fn loss_scales_means_by_root_efficiency() {
        let st = GaussianState::new(Vector4::new(2.0, 0.0, -1.0, 3.0), Matrix4::identity() * 0.5)
            .unwrap();
        let out = apply_loss(&st, 0.25, 0.81).unwrap();
        assert_abs_diff_eq!(out.mu()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.mu()[2], -0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(out.mu()[3], 2.7, epsilon = 1e-15);
    }

    #[test]
    fn vacuum_spectrum_and_physicality() {
        let v = GaussianState::vacuum();
        let (lo, hi) = symplectic_eigenvalues(v.sigma()).unwrap();
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.5, epsilon = 1e-15);
        assert!(check_physicality(&v).physical);
        // Pure squeezed states stay at nu = 1/2.
        let sq = SymplecticTransform::squeeze(9.0).unwrap();
        let st = apply_transform(&v, &sq);
        let (lo, hi) = symplectic_eigenvalues(st.sigma()).unwrap();
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.5, epsilon = 1e-12);
        // A thermal mode raises its eigenvalue.
        let th = GaussianState::new(
            Vector4::zeros(),
            Matrix4::from_diagonal(&Vector4::new(0.8, 0.8, 0.5, 0.5)),
        )
        .unwrap();
        let (lo, hi) = symplectic_eigenvalues(th.sigma()).unwrap();
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn zero_matrix_is_unphysical_not_an_error() {
        let z = GaussianState::new(Vector4::zeros(), Matrix4::zeros()).unwrap();
        let check = check_physicality(&z);
        assert!(!check.physical);
        assert_eq!(check.min_symplectic_eigenvalue, Some(0.0));
    }

    #[test]
    fn vacuum_witness_and_negativity_vanish() {
        let v = GaussianState::vacuum();
        let w = entanglement_witness(&v);
        assert_abs_diff_eq!(w.e_w, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.delta_epr, 1.0, epsilon = 1e-15);
        assert_eq!(w.a_star, 1.0);
        assert_eq!(w.method, WitnessMethod::ClosedForm);
        let n = negativity(&v).unwrap();
        assert_eq!(n.negativity, 0.0);
        assert_abs_diff_eq!(n.nu_tilde.0, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn witness_falls_back_to_grid_for_subvacuum_traces() {
        // Not reachable from physical states: Tr(A) < 1 forces the flagged
        // bounded search, and the objective runs to the gain boundary.
        let sigma = Matrix4::from_diagonal(&Vector4::new(0.3, 0.3, 0.5, 0.5));
        let st = GaussianState::new(Vector4::zeros(), sigma).unwrap();
        let w = entanglement_witness(&st);
        assert_eq!(w.method, WitnessMethod::BoundedGrid);
        assert_abs_diff_eq!(w.a_star, 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(w.e_w, 25.0 * (-0.4) + 0.0 / 25.0, epsilon = 1e-6);
    }

    #[test]
    fn quadrature_variance_projects_blocks() {
        let sigma = Matrix4::new(
            0.4, 0.1, 0.2, 0.0, //
            0.1, 0.9, 0.0, -0.3, //
            0.2, 0.0, 0.6, 0.05, //
            0.0, -0.3, 0.05, 0.7,
        );
        let st = GaussianState::new(Vector4::zeros(), sigma).unwrap();
        let (v1, v2, c) = quadrature_variance(&st, 0.0, 0.0);
        assert_abs_diff_eq!(v1, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(v2, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.2, epsilon = 1e-15);
        let (v1, v2, c) = quadrature_variance(&st, std::f64::consts::FRAC_PI_2, 0.0);
        assert_abs_diff_eq!(v1, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(v2, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn state_json_round_trip_and_convention_guard() {
        let sq = SymplecticTransform::squeeze(2.5).unwrap();
        let st = apply_transform(&GaussianState::vacuum(), &sq);
        let text = st.to_json_string();
        assert!(text.contains("vacuum=0.5"));
        let back = GaussianState::from_json_str(&text).unwrap();
        assert_eq!(&st, &back);
        let bad = text.replace("vacuum=0.5", "vacuum=1");
        assert!(GaussianState::from_json_str(&bad).is_err());
        let extra = text.replacen('{', "{\"extra\":1,", 1);
        assert!(GaussianState::from_json_str(&extra).is_err());
    }

    #[test]
    fn det4_matches_known_values() {
        assert_abs_diff_eq!(det4(&Matrix4::identity()), 1.0, epsilon = 1e-15);
        let d = Matrix4::from_diagonal(&Vector4::new(2.0, 3.0, 4.0, 0.5));
        assert_abs_diff_eq!(det4(&d), 12.0, epsilon = 1e-12);
        let m = Matrix4::new(
            1.0, 2.0, 0.5, -1.0, //
            0.0, 1.5, 2.0, 0.3, //
            -0.7, 0.2, 1.1, 0.0, //
            0.4, -0.5, 0.0, 0.9,
        );
        // Oracle: nalgebra's LU determinant.
        assert_abs_diff_eq!(det4(&m), m.determinant(), epsilon = 1e-12);
    }
}
