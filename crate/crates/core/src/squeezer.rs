//! Squeezer model: predicted variance traces, predicted covariance, and the
//! seven-parameter model fit.
//!
//! The model describes a single squeezed mode split on a beam splitter, with
//! per-channel efficiencies folded into participation factors `alpha` and
//! `beta`, detection phases `phi1`/`phi2`, and detection gains `g1`/`g2`.
//! Variance traces are expressed in vacuum = 1 normalization and measure the
//! phase from the amplified quadrature axis; the covariance constructor works
//! in the vacuum = 1/2 normalization of [`GaussianState`].  The two
//! conventions differ by a fixed pi/2 phase offset, pinned by
//! `traces(theta) == 2 * covariance quadrature variance at (theta + pi/2)`
//! (see the `trace_and_covariance_conventions_agree` test).

use crate::fit::{least_squares, FitError, FitOptions};
use crate::gaussian::{
    apply_loss, apply_transform, GaussianError, GaussianState, SymplecticTransform,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SqueezerError {
    #[error("parameters contain non-finite values")]
    NonFinite,
    #[error("squeeze factor must be positive and finite, got {0}")]
    BadSqueeze(f64),
    #[error("participation factors must lie in [0, 1] with alpha + beta <= 1, got alpha={0}, beta={1}")]
    BadParticipation(f64, f64),
    #[error("gains must be positive, got g1={0}, g2={1}")]
    BadGain(f64, f64),
    #[error("participation alpha={alpha} exceeds the transmissivity budget {budget} for this splitter arm")]
    InfeasibleSplit { alpha: f64, budget: f64 },
    #[error("trace arrays must share one length >= 1, all finite and positive")]
    MalformedTraces,
    #[error("model fit needs a joint (sum or difference) variance trace")]
    MissingJointTrace,
    #[error("phase values cluster too tightly for a fit (second-harmonic concentration {0:.3})")]
    PhaseCoverage(f64),
    #[error("traces carry no phase modulation; the squeeze factor is unidentifiable")]
    Unidentifiable,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Physical parameters of the split-squeezer model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezerParams {
    /// Squeeze factor (variance ratio of the two principal axes); 1 = vacuum.
    pub s: f64,
    /// Squeezed-light participation in channel 1.
    pub alpha: f64,
    /// Squeezed-light participation in channel 2.
    pub beta: f64,
    /// Detection phase of channel 1, radians.
    pub phi1: f64,
    /// Detection phase of channel 2, radians.
    pub phi2: f64,
    /// Detection gain of channel 1 (vacuum trace level).
    pub g1: f64,
    /// Detection gain of channel 2.
    pub g2: f64,
}

/// Per-parameter standard errors for a [`SqueezerFit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezerErrors {
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub g1: f64,
    pub g2: f64,
}

/// Measured or predicted variance traces over a list of phase pairs,
/// in the vacuum = 1 normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTraces {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub var1: Vec<f64>,
    pub var2: Vec<f64>,
    pub var_sum: Option<Vec<f64>>,
    pub var_diff: Option<Vec<f64>>,
}

/// Result of fitting the squeezer model to variance traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqueezerFit {
    pub params: SqueezerParams,
    pub standard_errors: Option<SqueezerErrors>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub used_fallback: bool,
    pub n_rows: usize,
}

impl SqueezerParams {
    pub fn validate(&self) -> Result<(), SqueezerError> {
        let all = [self.s, self.alpha, self.beta, self.phi1, self.phi2, self.g1, self.g2];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(SqueezerError::NonFinite);
        }
        if self.s <= 0.0 {
            return Err(SqueezerError::BadSqueeze(self.s));
        }
        let (a, b) = (self.alpha, self.beta);
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a + b > 1.0 + 1e-12 {
            return Err(SqueezerError::BadParticipation(a, b));
        }
        if self.g1 <= 0.0 || self.g2 <= 0.0 {
            return Err(SqueezerError::BadGain(self.g1, self.g2));
        }
        Ok(())
    }

    fn to_vec(self) -> [f64; 7] {
        [self.s, self.alpha, self.beta, self.phi1, self.phi2, self.g1, self.g2]
    }

    fn from_vec(p: &[f64]) -> Self {
        SqueezerParams {
            s: p[0],
            alpha: p[1],
            beta: p[2],
            phi1: p[3],
            phi2: p[4],
            g1: p[5],
            g2: p[6],
        }
    }
}

impl VarianceTraces {
    pub fn len(&self) -> usize {
        self.theta1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta1.is_empty()
    }

    pub fn validate(&self) -> Result<(), SqueezerError> {
        let n = self.theta1.len();
        let lengths_ok = self.theta2.len() == n
            && self.var1.len() == n
            && self.var2.len() == n
            && self.var_sum.as_ref().map_or(true, |v| v.len() == n)
            && self.var_diff.as_ref().map_or(true, |v| v.len() == n);
        if n == 0 || !lengths_ok {
            return Err(SqueezerError::MalformedTraces);
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0);
        if !finite(&self.theta1)
            || !finite(&self.theta2)
            || !(finite(&self.var1) && positive(&self.var1))
            || !(finite(&self.var2) && positive(&self.var2))
            || self.var_sum.as_ref().is_some_and(|v| !(finite(v) && positive(v)))
            || self.var_diff.as_ref().is_some_and(|v| !(finite(v) && positive(v)))
        {
            return Err(SqueezerError::MalformedTraces);
        }
        Ok(())
    }
}

/// Excess-variance shape factors of a squeezer with factor `s`:
/// `q = (s-1)^2 / s` (phase-averaged excess) and `w = (s^2-1)/s`
/// (modulation amplitude).
fn shape_factors(s: f64) -> (f64, f64) {
    (s - 2.0 + 1.0 / s, s - 1.0 / s)
}

/// d/ds of the shape factors.
fn shape_factor_derivatives(s: f64) -> (f64, f64) {
    let inv2 = 1.0 / (s * s);
    (1.0 - inv2, 1.0 + inv2)
}

/// Model variance traces at the given phase pairs (vacuum = 1 units).
pub fn predict_traces(
    params: &SqueezerParams,
    theta1: &[f64],
    theta2: &[f64],
) -> Result<VarianceTraces, SqueezerError> {
    params.validate()?;
    if theta1.len() != theta2.len() || theta1.is_empty() {
        return Err(SqueezerError::MalformedTraces);
    }
    let (q, w) = shape_factors(params.s);
    let gcross = (params.g1 * params.g2).sqrt() * (params.alpha * params.beta).sqrt();
    let n = theta1.len();
    let mut var1 = Vec::with_capacity(n);
    let mut var2 = Vec::with_capacity(n);
    let mut var_sum = Vec::with_capacity(n);
    let mut var_diff = Vec::with_capacity(n);
    for k in 0..n {
        let (t1, t2) = (theta1[k], theta2[k]);
        let v1 = params.g1
            * (1.0 + 0.5 * params.alpha * (q + w * (2.0 * t1 + 2.0 * params.phi1).cos()));
        let v2 = params.g2
            * (1.0 + 0.5 * params.beta * (q + w * (2.0 * t2 + 2.0 * params.phi2).cos()));
        let cross = gcross
            * (w * (t1 + t2 + params.phi1 + params.phi2).cos()
                + q * (t2 - t1 + params.phi2 - params.phi1).cos());
        var1.push(v1);
        var2.push(v2);
        var_sum.push(v1 + v2 + cross);
        var_diff.push(v1 + v2 - cross);
    }
    Ok(VarianceTraces {
        theta1: theta1.to_vec(),
        theta2: theta2.to_vec(),
        var1,
        var2,
        var_sum: Some(var_sum),
        var_diff: Some(var_diff),
    })
}

/// Two-mode covariance implied by the model parameters (vacuum = 1/2 units,
/// zero mean).  Detection gains do not enter: they describe the readout
/// chain, not the optical state.
///
/// With `split = true` the state is a single squeezed mode split on a beam
/// splitter of transmissivity `t`; channel efficiencies are recovered as
/// `alpha / t` and `beta / (1 - t)`, so `alpha <= t` and `beta <= 1 - t`
/// must hold.  The result is independent of any feasible `t`.  With
/// `split = false` the channels are modeled as two independent squeezed
/// modes sharing the squeeze factor, which reproduces the same marginal
/// traces with zero cross-covariance; `t` is ignored.
pub fn predict_covariance(
    params: &SqueezerParams,
    t: f64,
    split: bool,
) -> Result<GaussianState, SqueezerError> {
    params.validate()?;
    let vacuum = GaussianState::vacuum();
    let phase = SymplecticTransform::phase(params.phi1, params.phi2);
    if split {
        let (eta1, eta2) = (params.alpha / t, params.beta / (1.0 - t));
        if eta1 > 1.0 + 1e-12 {
            return Err(SqueezerError::InfeasibleSplit { alpha: params.alpha, budget: t });
        }
        if eta2 > 1.0 + 1e-12 {
            return Err(SqueezerError::InfeasibleSplit {
                alpha: params.beta,
                budget: 1.0 - t,
            });
        }
        let chain = SymplecticTransform::squeeze(params.s)?
            .then(&SymplecticTransform::beamsplitter(t)?)
            .then(&phase);
        let pure = apply_transform(&vacuum, &chain);
        Ok(apply_loss(&pure, eta1.min(1.0), eta2.min(1.0))?)
    } else {
        let chain = SymplecticTransform::squeeze_pair(params.s, params.s)?.then(&phase);
        let pure = apply_transform(&vacuum, &chain);
        Ok(apply_loss(&pure, params.alpha, params.beta)?)
    }
}

/// Second-harmonic projection of `values` against `angle`:
/// mean, amplitude, and phase `phi` such that
/// `values ~ mean + amp * cos(angle + phi)` (for pre-doubled angles).
fn harmonic_projection(values: &[f64], angles: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut ac = 0.0;
    let mut as_ = 0.0;
    for (v, a) in values.iter().zip(angles) {
        ac += v * a.cos();
        as_ += v * a.sin();
    }
    ac = 2.0 * ac / n;
    as_ = 2.0 * as_ / n;
    let amp = ac.hypot(as_);
    (mean, amp, (-as_).atan2(ac))
}

fn circular_concentration(angles: impl Iterator<Item = f64>) -> f64 {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0u64);
    for a in angles {
        c += a.cos();
        s += a.sin();
        n += 1;
    }
    (c / n as f64).hypot(s / n as f64)
}

/// Map parameters to the canonical sheet: `s >= 1`, `phi1` in
/// `[-pi/2, pi/2)`, `phi2` in `[-pi, pi)`.  The model is exactly invariant
/// under `(s, phi1, phi2) -> (1/s, phi1 + pi/2, phi2 + pi/2)` and under
/// shifting both phases by pi, which is what makes this sheet reachable.
/// Standard errors transform alongside (`se_s / s^2` under inversion).
fn canonicalize(params: &mut SqueezerParams, errors: &mut Option<SqueezerErrors>) {
    if params.s < 1.0 {
        if let Some(e) = errors.as_mut() {
            e.s /= params.s * params.s;
        }
        params.s = 1.0 / params.s;
        params.phi1 += FRAC_PI_2;
        params.phi2 += FRAC_PI_2;
    }
    let wrapped1 = (params.phi1 + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    let shifts = ((params.phi1 - wrapped1) / PI).round();
    params.phi1 = wrapped1;
    // A lone pi shift of one phase is not a symmetry; both must move.
    if (shifts as i64) % 2 != 0 {
        params.phi2 += PI;
    }
    params.phi2 = (params.phi2 + PI).rem_euclid(TAU) - PI;
}

struct TraceLayout {
    n: usize,
    has_sum: bool,
    has_diff: bool,
}

impl TraceLayout {
    fn rows(&self) -> usize {
        self.n * (2 + usize::from(self.has_sum) + usize::from(self.has_diff))
    }
}

fn fill_residuals(p: &[f64], traces: &VarianceTraces, layout: &TraceLayout, r: &mut DVector<f64>) {
    let [s, alpha, beta, phi1, phi2, g1, g2] = [p[0], p[1], p[2], p[3], p[4], p[5], p[6]];
    if s <= 0.0 || alpha < 0.0 || beta < 0.0 || alpha > 1.0 || beta > 1.0 || g1 <= 0.0 || g2 <= 0.0
    {
        r.fill(f64::INFINITY);
        return;
    }
    let (q, w) = shape_factors(s);
    let gcross = (g1 * g2).sqrt() * (alpha * beta).sqrt();
    let n = layout.n;
    for k in 0..n {
        let (t1, t2) = (traces.theta1[k], traces.theta2[k]);
        let v1 = g1 * (1.0 + 0.5 * alpha * (q + w * (2.0 * t1 + 2.0 * phi1).cos()));
        let v2 = g2 * (1.0 + 0.5 * beta * (q + w * (2.0 * t2 + 2.0 * phi2).cos()));
        r[k] = v1 - traces.var1[k];
        r[n + k] = v2 - traces.var2[k];
        let mut row = 2 * n + k;
        if layout.has_sum || layout.has_diff {
            let cross = gcross
                * (w * (t1 + t2 + phi1 + phi2).cos() + q * (t2 - t1 + phi2 - phi1).cos());
            if layout.has_sum {
                r[row] = v1 + v2 + cross - traces.var_sum.as_ref().unwrap()[k];
                row += n;
            }
            if layout.has_diff {
                r[row] = v1 + v2 - cross - traces.var_diff.as_ref().unwrap()[k];
            }
        }
    }
}

fn fill_jacobian(p: &[f64], traces: &VarianceTraces, layout: &TraceLayout, j: &mut DMatrix<f64>) {
    let [s, alpha, beta, phi1, phi2, g1, g2] = [p[0], p[1], p[2], p[3], p[4], p[5], p[6]];
    let (q, w) = shape_factors(s);
    let (dq, dw) = shape_factor_derivatives(s);
    let gcross = (g1 * g2).sqrt() * (alpha * beta).sqrt();
    let n = layout.n;
    j.fill(0.0);
    for k in 0..n {
        let (t1, t2) = (traces.theta1[k], traces.theta2[k]);
        let (sin1, cos1) = (2.0 * t1 + 2.0 * phi1).sin_cos();
        let (sin2, cos2) = (2.0 * t2 + 2.0 * phi2).sin_cos();
        let (sp, cp) = (t1 + t2 + phi1 + phi2).sin_cos();
        let (sm, cm) = (t2 - t1 + phi2 - phi1).sin_cos();

        let shape1 = q + w * cos1;
        let shape2 = q + w * cos2;
        // Channel rows.
        let d1 = [
            g1 * 0.5 * alpha * (dq + dw * cos1),
            g1 * 0.5 * shape1,
            0.0,
            -g1 * alpha * w * sin1,
            0.0,
            1.0 + 0.5 * alpha * shape1,
            0.0,
        ];
        let d2 = [
            g2 * 0.5 * beta * (dq + dw * cos2),
            0.0,
            g2 * 0.5 * shape2,
            0.0,
            -g2 * beta * w * sin2,
            0.0,
            1.0 + 0.5 * beta * shape2,
        ];
        for col in 0..7 {
            j[(k, col)] = d1[col];
            j[(n + k, col)] = d2[col];
        }
        if layout.has_sum || layout.has_diff {
            let bracket = w * cp + q * cm;
            let cross = gcross * bracket;
            let dcross = [
                gcross * (dw * cp + dq * cm),
                if alpha > 0.0 { 0.5 * cross / alpha } else { 0.0 },
                if beta > 0.0 { 0.5 * cross / beta } else { 0.0 },
                gcross * (-w * sp + q * sm),
                gcross * (-w * sp - q * sm),
                0.5 * cross / g1,
                0.5 * cross / g2,
            ];
            let mut row = 2 * n + k;
            if layout.has_sum {
                for col in 0..7 {
                    j[(row, col)] = d1[col] + d2[col] + dcross[col];
                }
                row += n;
            }
            if layout.has_diff {
                for col in 0..7 {
                    j[(row, col)] = d1[col] + d2[col] - dcross[col];
                }
            }
        }
    }
}

fn initial_guess(traces: &VarianceTraces, layout: &TraceLayout) -> Result<SqueezerParams, SqueezerError> {
    let n = layout.n;
    let doubled1: Vec<f64> = traces.theta1.iter().map(|t| 2.0 * t).collect();
    let doubled2: Vec<f64> = traces.theta2.iter().map(|t| 2.0 * t).collect();
    let (m1, amp1, ph1) = harmonic_projection(&traces.var1, &doubled1);
    let (m2, amp2, ph2) = harmonic_projection(&traces.var2, &doubled2);

    // Cross trace reconstructed from whichever joint trace exists.
    let cross: Vec<f64> = if let Some(sum) = &traces.var_sum {
        (0..n).map(|k| sum[k] - traces.var1[k] - traces.var2[k]).collect()
    } else {
        let diff = traces.var_diff.as_ref().unwrap();
        (0..n).map(|k| traces.var1[k] + traces.var2[k] - diff[k]).collect()
    };
    let angles_p: Vec<f64> = (0..n).map(|k| traces.theta1[k] + traces.theta2[k]).collect();
    let angles_m: Vec<f64> = (0..n).map(|k| traces.theta2[k] - traces.theta1[k]).collect();
    let (_, amp_p, ph_p) = harmonic_projection(&cross, &angles_p);
    let (_, amp_m, _) = harmonic_projection(&cross, &angles_m);

    // Flatness is judged on the raw spread, not the projections: on an
    // uneven phase grid a constant trace still leaks into the harmonics.
    let spread = |v: &[f64]| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        hi - lo
    };
    let scale = m1.abs().max(m2.abs()).max(1.0);
    if spread(&traces.var1) < 1e-9 * scale
        && spread(&traces.var2) < 1e-9 * scale
        && spread(&cross) < 1e-9 * scale
    {
        return Err(SqueezerError::Unidentifiable);
    }

    // amp_p/amp_m estimate w/q = (s+1)/(s-1), hence s.
    let s0 = if amp_m > 1e-12 && amp_p > amp_m {
        ((amp_p + amp_m) / (amp_p - amp_m)).clamp(1.001, 1e4)
    } else {
        10.0
    };
    let (q0, w0) = shape_factors(s0);
    let g1_0 = (m1 - amp1 * q0 / w0).max(1e-6);
    let g2_0 = (m2 - amp2 * q0 / w0).max(1e-6);
    let alpha0 = (2.0 * amp1 / (g1_0 * w0)).clamp(1e-6, 1.0);
    let beta0 = (2.0 * amp2 / (g2_0 * w0)).clamp(1e-6, 1.0);

    // Per-channel projections pin each phase modulo pi; the sum-harmonic
    // phase of the cross trace resolves the relative pi ambiguity.
    let phi1_0 = 0.5 * ph1;
    let mut phi2_0 = 0.5 * ph2;
    if amp_p > 1e-9 * scale && (phi1_0 + phi2_0 - ph_p).cos() < 0.0 {
        phi2_0 += PI;
    }

    Ok(SqueezerParams {
        s: s0,
        alpha: alpha0,
        beta: beta0,
        phi1: phi1_0,
        phi2: phi2_0,
        g1: g1_0,
        g2: g2_0,
    })
}

/// Fit the seven-parameter model to measured variance traces.
///
/// At least one joint trace (sum or difference) must be present: without
/// one, the squeeze factor is degenerate with the per-channel participation
/// and gain.  When `init` is `None` a starting point is derived from
/// harmonic projections of the traces.
pub fn fit_model(
    traces: &VarianceTraces,
    init: Option<SqueezerParams>,
) -> Result<SqueezerFit, SqueezerError> {
    traces.validate()?;
    let layout = TraceLayout {
        n: traces.len(),
        has_sum: traces.var_sum.is_some(),
        has_diff: traces.var_diff.is_some(),
    };
    if !layout.has_sum && !layout.has_diff {
        return Err(SqueezerError::MissingJointTrace);
    }
    for doubled in [
        circular_concentration(traces.theta1.iter().map(|t| 2.0 * t)),
        circular_concentration(traces.theta2.iter().map(|t| 2.0 * t)),
    ] {
        if doubled > 0.9 {
            return Err(SqueezerError::PhaseCoverage(doubled));
        }
    }

    let start = match init {
        Some(p) => {
            p.validate()?;
            p
        }
        None => initial_guess(traces, &layout)?,
    };

    let outcome = least_squares(
        layout.rows(),
        &start.to_vec(),
        &[false; 7],
        &FitOptions::default(),
        |p, r| fill_residuals(p, traces, &layout, r),
        |p, j| fill_jacobian(p, traces, &layout, j),
    )?;

    let mut params = SqueezerParams::from_vec(&outcome.params);
    let mut errors = outcome.standard_errors.map(|se| SqueezerErrors {
        s: se[0],
        alpha: se[1],
        beta: se[2],
        phi1: se[3],
        phi2: se[4],
        g1: se[5],
        g2: se[6],
    });
    canonicalize(&mut params, &mut errors);
    Ok(SqueezerFit {
        params,
        standard_errors: errors,
        residual_rms: outcome.residual_rms,
        iterations: outcome.iterations,
        used_fallback: outcome.used_fallback,
        n_rows: layout.rows(),
    })
}
