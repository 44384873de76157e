//! Thermal self-calibration of the detection chains.
//!
//! A known-temperature thermal input sweeps the fridge plate temperature
//! `T_F`; the observed raw variance of each channel follows
//!
//! ```text
//! Var(V) = G * ( sigma(T_in) + A0 + A2 * T_F^2 ),
//! sigma(T) = 0.5 * coth( h f_s / (2 k_B T) ),
//! T_in    = sqrt(T_F^2 + T_e^2),
//! ```
//!
//! with per-channel gain `G` and additive noise terms `A0`, `A2`, and one
//! excess input temperature `T_e` shared by both channels.  Fitting the
//! sweep pins the gains in absolute vacuum units, which is what lets raw
//! voltage records be rescaled into calibrated quadratures.

use crate::fit::{least_squares, FitError, FitOptions, FitOutcome};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Planck constant, J s (exact SI).
pub const H_PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J / K (exact SI).
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
/// Readout frequency of the reference instrument, Hz.
pub const DEFAULT_SIGNAL_FREQ_HZ: f64 = 6.327e9;
/// Below this input temperature the thermal occupation correction to the
/// vacuum variance is under 1e-4 and is ignored unless explicitly requested.
pub const COLD_INPUT_THRESHOLD_K: f64 = 0.0297;

/// 95% quantile of the chi-squared distribution with one degree of freedom,
/// used for the profile-likelihood bound on `T_e`.
const CHI2_95_1DF: f64 = 3.841_458_820_694_124;

const SWEEP_HEADER: &str = "channel,t_fridge_kelvin,var_raw,repeat_index";

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("sweep values must be finite, with t_fridge >= 0 and var_raw > 0")]
    MalformedPoint,
    #[error("signal frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("channel must be 1 or 2, got {0}")]
    BadChannel(u8),
    #[error("no sweep points for channel {0}")]
    MissingChannel(u8),
    #[error("channel {channel} has {found} distinct temperatures; at least {needed} are required")]
    TooFewTemperatures { channel: u8, found: usize, needed: usize },
    #[error("channel {0} has no point in the quantum regime (T_F <= h f_s / 2 k_B); the gain cannot be separated from the additive offset")]
    NoQuantumRegime(u8),
    #[error("channel {channel}: thermal occupation varies by only {variation:.2e} across the sweep; temperature leverage is insufficient")]
    InsufficientCothVariation { channel: u8, variation: f64 },
    #[error("on/off records must be non-empty, with at least two off samples")]
    EmptyRecord,
    #[error("off (input-off) record has zero variance; cannot normalize")]
    DegenerateOffRecord,
    #[error("gains must be positive and finite, got ({0}, {1})")]
    BadGain(f64, f64),
    #[error("input occupation sigma must be finite and >= 0.5, got {0}")]
    BadSigma(f64),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// One row of a thermal sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSweepPoint {
    pub channel: u8,
    pub t_fridge_kelvin: f64,
    pub var_raw: f64,
    pub repeat_index: u32,
}

/// Calibration constants of one detection channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelCalibration {
    pub gain: f64,
    pub a0: f64,
    pub a2: f64,
}

/// Full two-channel thermal calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalCalibration {
    pub channels: [ChannelCalibration; 2],
    pub t_e_kelvin: f64,
    /// 95% profile-likelihood upper bound on `t_e_kelvin`.
    pub t_e_upper_bound: f64,
    pub f_s_hz: f64,
}

/// Standard errors accompanying a [`ThermalFit`], same layout as the
/// calibration itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalFitErrors {
    pub channels: [ChannelCalibration; 2],
    pub t_e_kelvin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalFit {
    pub calibration: ThermalCalibration,
    pub standard_errors: Option<ThermalFitErrors>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub n_points: usize,
}

/// Raw records rescaled into calibrated quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedQuadratures {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    /// Sample variance of each input-off record.
    pub off_variance: (f64, f64),
    /// Multiplicative factor applied to each channel's raw samples.
    pub scale: (f64, f64),
    /// Input occupation used for the rescaling.
    pub sigma: f64,
}

/// Temperature at which `h f_s = 2 k_B T`; the crossover into the quantum
/// regime where the occupation saturates at the vacuum value.
pub fn quantum_scale_temperature(f_s_hz: f64) -> f64 {
    H_PLANCK * f_s_hz / (2.0 * K_BOLTZMANN)
}

/// Mean occupation `sigma(T) = 0.5 coth(h f_s / 2 k_B T)`; `0.5` at `T <= 0`.
pub fn mean_occupation_sigma(t_in_kelvin: f64, f_s_hz: f64) -> f64 {
    if t_in_kelvin <= 0.0 {
        return 0.5;
    }
    let x = quantum_scale_temperature(f_s_hz) / t_in_kelvin;
    0.5 * coth_positive(x)
}

/// coth(x) for x > 0, stable at both ends.
fn coth_positive(x: f64) -> f64 {
    let u = (-2.0 * x).exp();
    (1.0 + u) / (1.0 - u)
}

/// csch^2(x) for x > 0.
fn csch_squared(x: f64) -> f64 {
    let u = (-2.0 * x).exp();
    let d = 1.0 - u;
    4.0 * u / (d * d)
}

/// Effective input temperature from the fridge plate and excess components.
pub fn input_temperature(t_fridge_kelvin: f64, t_excess_kelvin: f64) -> f64 {
    t_fridge_kelvin.hypot(t_excess_kelvin)
}

/// Input occupation with the cold-input policy applied: below
/// [`COLD_INPUT_THRESHOLD_K`] the occupation is taken as exactly 0.5 unless
/// `exact` is set.
pub fn input_sigma(t_in_kelvin: f64, f_s_hz: f64, exact: bool) -> f64 {
    if !exact && t_in_kelvin < COLD_INPUT_THRESHOLD_K {
        0.5
    } else {
        mean_occupation_sigma(t_in_kelvin, f_s_hz)
    }
}

/// Raw variance predicted by the thermal model for one channel.
pub fn thermal_variance(
    gain: f64,
    a0: f64,
    a2: f64,
    t_e_kelvin: f64,
    t_fridge_kelvin: f64,
    f_s_hz: f64,
) -> f64 {
    let t_in = input_temperature(t_fridge_kelvin, t_e_kelvin);
    gain * (mean_occupation_sigma(t_in, f_s_hz) + a0 + a2 * t_fridge_kelvin * t_fridge_kelvin)
}

fn validate_design(points: &[ThermalSweepPoint], f_s_hz: f64) -> Result<(), CalibrationError> {
    if !(f_s_hz.is_finite() && f_s_hz > 0.0) {
        return Err(CalibrationError::BadFrequency(f_s_hz));
    }
    for p in points {
        if !(p.t_fridge_kelvin.is_finite() && p.t_fridge_kelvin >= 0.0)
            || !(p.var_raw.is_finite() && p.var_raw > 0.0)
        {
            return Err(CalibrationError::MalformedPoint);
        }
        if p.channel != 1 && p.channel != 2 {
            return Err(CalibrationError::BadChannel(p.channel));
        }
    }
    let t_q = quantum_scale_temperature(f_s_hz);
    for channel in [1u8, 2u8] {
        let mut temps: Vec<f64> = points
            .iter()
            .filter(|p| p.channel == channel)
            .map(|p| p.t_fridge_kelvin)
            .collect();
        if temps.is_empty() {
            return Err(CalibrationError::MissingChannel(channel));
        }
        temps.sort_by(f64::total_cmp);
        temps.dedup();
        if temps.len() < 5 {
            return Err(CalibrationError::TooFewTemperatures {
                channel,
                found: temps.len(),
                needed: 5,
            });
        }
        if temps[0] > t_q {
            return Err(CalibrationError::NoQuantumRegime(channel));
        }
        let sig_lo = mean_occupation_sigma(temps[0], f_s_hz);
        let sig_hi = mean_occupation_sigma(*temps.last().unwrap(), f_s_hz);
        let variation = (sig_hi - sig_lo) / sig_lo;
        if variation < 0.01 {
            return Err(CalibrationError::InsufficientCothVariation { channel, variation });
        }
    }
    Ok(())
}

fn initial_guess(points: &[ThermalSweepPoint], f_s_hz: f64) -> [f64; 7] {
    let t_e0 = 0.005;
    let mut p0 = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, t_e0];
    for (ci, channel) in [1u8, 2u8].into_iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.channel == channel)
            .map(|p| (p.t_fridge_kelvin, p.var_raw))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (t_lo, v_lo) = pts[0];
        let (t_hi, v_hi) = *pts.last().unwrap();
        let s_lo = mean_occupation_sigma(input_temperature(t_lo, t_e0), f_s_hz);
        let s_hi = mean_occupation_sigma(input_temperature(t_hi, t_e0), f_s_hz);
        // Two-point solve with the quadratic term ignored.
        let mut g = (v_hi - v_lo) / (s_hi - s_lo);
        let mut a0 = v_lo / g - s_lo;
        if !(g.is_finite() && g > 0.0) {
            g = v_hi / s_hi;
            a0 = 0.0;
        }
        p0[3 * ci] = g;
        p0[3 * ci + 1] = a0;
        p0[3 * ci + 2] = 0.0;
    }
    p0
}

fn run_thermal_fit(
    points: &[ThermalSweepPoint],
    f_s_hz: f64,
    p0: &[f64; 7],
    fixed: &[bool; 7],
) -> Result<FitOutcome, FitError> {
    let t_q = quantum_scale_temperature(f_s_hz);
    least_squares(
        points.len(),
        p0,
        fixed,
        &FitOptions::default(),
        |p, r| {
            for (i, pt) in points.iter().enumerate() {
                let base = if pt.channel == 1 { 0 } else { 3 };
                r[i] = thermal_variance(
                    p[base],
                    p[base + 1],
                    p[base + 2],
                    p[6],
                    pt.t_fridge_kelvin,
                    f_s_hz,
                ) - pt.var_raw;
            }
        },
        |p, j| {
            j.fill(0.0);
            for (i, pt) in points.iter().enumerate() {
                let base = if pt.channel == 1 { 0 } else { 3 };
                let (g, t_e, t_f) = (p[base], p[6], pt.t_fridge_kelvin);
                let t_in = input_temperature(t_f, t_e);
                let sigma = mean_occupation_sigma(t_in, f_s_hz);
                j[(i, base)] = sigma + p[base + 1] + p[base + 2] * t_f * t_f;
                j[(i, base + 1)] = g;
                j[(i, base + 2)] = g * t_f * t_f;
                j[(i, 6)] = if t_in > 0.0 {
                    let x = t_q / t_in;
                    g * 0.5 * csch_squared(x) * t_q * t_e / (t_in * t_in * t_in)
                } else {
                    0.0
                };
            }
        },
    )
}

/// Fit the seven-parameter thermal model to a two-channel sweep and compute
/// the 95% profile-likelihood upper bound on the excess input temperature.
pub fn fit_thermal(
    points: &[ThermalSweepPoint],
    f_s_hz: f64,
) -> Result<ThermalFit, CalibrationError> {
    validate_design(points, f_s_hz)?;
    let p0 = initial_guess(points, f_s_hz);
    let out = run_thermal_fit(points, f_s_hz, &p0, &[false; 7])?;

    let mut best = out.params.clone();
    // The model is even in t_e; report the physical branch.
    best[6] = best[6].abs();
    let t_e_upper_bound = profile_upper_bound(points, f_s_hz, &best, out.cost)?;

    let channels = [
        ChannelCalibration { gain: best[0], a0: best[1], a2: best[2] },
        ChannelCalibration { gain: best[3], a0: best[4], a2: best[5] },
    ];
    let standard_errors = out.standard_errors.map(|se| ThermalFitErrors {
        channels: [
            ChannelCalibration { gain: se[0], a0: se[1], a2: se[2] },
            ChannelCalibration { gain: se[3], a0: se[4], a2: se[5] },
        ],
        t_e_kelvin: se[6],
    });
    Ok(ThermalFit {
        calibration: ThermalCalibration {
            channels,
            t_e_kelvin: best[6],
            t_e_upper_bound,
            f_s_hz,
        },
        standard_errors,
        residual_rms: out.residual_rms,
        iterations: out.iterations,
        n_points: points.len(),
    })
}

/// Smallest t_e above the fitted value whose profile SSR crosses the 95%
/// chi-squared threshold.  The nuisance parameters are refit at each trial
/// temperature.  Capped at 1 K if the data never reject a larger value.
fn profile_upper_bound(
    points: &[ThermalSweepPoint],
    f_s_hz: f64,
    best: &[f64],
    ssr_min: f64,
) -> Result<f64, CalibrationError> {
    const CAP_K: f64 = 1.0;
    let dof = (points.len().saturating_sub(7)).max(1);
    let threshold = ssr_min * (1.0 + CHI2_95_1DF / dof as f64);
    let fixed = [false, false, false, false, false, false, true];
    let mut warm: Vec<f64> = best.to_vec();
    let ssr_at = |t_e: f64, warm: &mut Vec<f64>| -> Result<f64, CalibrationError> {
        warm[6] = t_e;
        let p0: [f64; 7] = warm.as_slice().try_into().unwrap();
        let out = run_thermal_fit(points, f_s_hz, &p0, &fixed)?;
        warm.copy_from_slice(&out.params);
        Ok(out.cost)
    };

    let t_hat = best[6];
    let mut lo = t_hat;
    let mut step = (t_hat * 0.5).max(0.002);
    let mut hi = t_hat + step;
    loop {
        if ssr_at(hi, &mut warm)? > threshold {
            break;
        }
        lo = hi;
        step *= 2.0;
        hi = t_hat + step;
        if hi > CAP_K {
            return Ok(CAP_K);
        }
    }
    for _ in 0..60 {
        if hi - lo < 1e-7 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ssr_at(mid, &mut warm)? > threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Rescale raw on-records into calibrated quadratures:
/// `W = V_on * sqrt(sigma / (g * Var(V_off)))`.
///
/// Dividing by the off-record variance removes the arbitrary digitizer
/// scale; the factor `sqrt(sigma / g)` then converts to units where vacuum
/// has variance 1/2.  With a vacuum input and unit gain this reproduces
/// `Var(W) = sigma` identically (self-calibration).
pub fn normalize_and_calibrate(
    v_on: (&[f64], &[f64]),
    v_off: (&[f64], &[f64]),
    gains: (f64, f64),
    sigma_in: f64,
) -> Result<CalibratedQuadratures, CalibrationError> {
    if v_on.0.is_empty() || v_on.1.is_empty() || v_off.0.len() < 2 || v_off.1.len() < 2 {
        return Err(CalibrationError::EmptyRecord);
    }
    let ok = |g: f64| g.is_finite() && g > 0.0;
    if !ok(gains.0) || !ok(gains.1) {
        return Err(CalibrationError::BadGain(gains.0, gains.1));
    }
    if !sigma_in.is_finite() || sigma_in < 0.5 - 1e-9 {
        return Err(CalibrationError::BadSigma(sigma_in));
    }
    let off_var = (sample_variance(v_off.0), sample_variance(v_off.1));
    if off_var.0 <= 0.0 || off_var.1 <= 0.0 {
        return Err(CalibrationError::DegenerateOffRecord);
    }
    let scale = (
        (sigma_in / (gains.0 * off_var.0)).sqrt(),
        (sigma_in / (gains.1 * off_var.1)).sqrt(),
    );
    Ok(CalibratedQuadratures {
        w1: v_on.0.iter().map(|v| v * scale.0).collect(),
        w2: v_on.1.iter().map(|v| v * scale.1).collect(),
        off_variance: off_var,
        scale,
        sigma: sigma_in,
    })
}

/// Write a thermal sweep as CSV with the `channel,t_fridge_kelvin,var_raw,
/// repeat_index` schema.
pub fn write_thermal_sweep<W: Write>(
    mut out: W,
    points: &[ThermalSweepPoint],
) -> Result<(), CalibrationError> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{:.9e},{:.9e},{}",
            p.channel, p.t_fridge_kelvin, p.var_raw, p.repeat_index
        )?;
    }
    Ok(())
}

/// Read a thermal sweep CSV (exact header required).
pub fn read_thermal_sweep<R: Read>(input: R) -> Result<Vec<ThermalSweepPoint>, CalibrationError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    {
        let headers = reader.headers().map_err(|e| CalibrationError::Csv(e.to_string()))?;
        let joined = headers.iter().collect::<Vec<_>>().join(",");
        if joined != SWEEP_HEADER {
            return Err(CalibrationError::Csv(format!(
                "expected header `{SWEEP_HEADER}`, found `{joined}`"
            )));
        }
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CalibrationError::Csv(e.to_string()))?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str, CalibrationError> {
            record.get(k).ok_or_else(|| {
                CalibrationError::Csv(format!("line {line}: missing field {k}"))
            })
        };
        let parse_f = |k: usize| -> Result<f64, CalibrationError> {
            field(k)?.trim().parse::<f64>().map_err(|e| {
                CalibrationError::Csv(format!("line {line}, field {k}: {e}"))
            })
        };
        points.push(ThermalSweepPoint {
            channel: field(0)?.trim().parse::<u8>().map_err(|e| {
                CalibrationError::Csv(format!("line {line}, field 0: {e}"))
            })?,
            t_fridge_kelvin: parse_f(1)?,
            var_raw: parse_f(2)?,
            repeat_index: field(3)?.trim().parse::<u32>().map_err(|e| {
                CalibrationError::Csv(format!("line {line}, field 3: {e}"))
            })?,
        });
    }
    Ok(points)
}
