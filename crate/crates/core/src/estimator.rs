//! Moment-based estimation of the two-mode state from phase-swept records.
//!
//! With measurement phases sweeping uniformly, products of the measured
//! quadratures with low-order trig functions of the phases average to the
//! state's first and second moments up to fixed combinatorial factors; this
//! module accumulates exactly those products and inverts the relations.
//!
//! Accumulation is compensated (Neumaier summation) and strictly
//! record-structured: one accumulator per record, merged in record order.
//! Any parallel schedule therefore produces bit-identical results, and the
//! streaming bootstrap below reproduces the materialized two-pass estimate
//! bit for bit.

use crate::gaussian::{
    check_physicality, entanglement_witness, negativity, GaussianError, GaussianState,
    PhysicalityCheck,
};
use crate::rng::{SplitRng, DOMAIN_RECORD, DOMAIN_REPLICATE, DOMAIN_TRIAL};
use crate::squeezer::VarianceTraces;
use crate::synth::{AcquisitionConfig, QuadratureDataset, SynthError, SynthTable};
use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Maximum tolerated concentration of the phase distribution's first and
/// second circular harmonics; above this the moment inversion is biased.
pub const PHASE_COVERAGE_LIMIT: f64 = 0.1;
/// Covariance matrices whose smallest eigenvalue is at or below this cannot
/// seed a parametric bootstrap.
pub const SAMPLEABLE_EIGENVALUE_FLOOR: f64 = 1e-12;

const VARIANCES_HEADER: &str = "sample,theta1,theta2,var_w1,var_w2,var_joint,count";

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dataset is empty")]
    Empty,
    #[error("dataset arrays disagree with the declared record shape")]
    LengthMismatch,
    #[error("{0} samples are too few to estimate second moments")]
    TooFewSamples(u64),
    #[error("channel {channel} phases are too concentrated (harmonic {harmonic} magnitude {concentration:.3}); the sweep does not cover the circle")]
    DegeneratePhases { channel: u8, harmonic: u8, concentration: f64 },
    #[error("per-phase variances need at least two records, got {0}")]
    InsufficientRecords(u32),
    #[error("state covariance has minimum eigenvalue {0:.3e}; it cannot be sampled for a bootstrap")]
    Unsampleable(f64),
    #[error("bootstrap needs at least two replicates, got {0}")]
    TooFewReplicates(u32),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const N_SUMS: usize = 22;

// Indices into the accumulator: products of the phase-projected samples
// a = w1 cos(t1), b = w1 sin(t1), d = w2 cos(t2), e = w2 sin(t2),
// then the phase-coverage harmonics.
const I_A: usize = 0;
const I_B: usize = 1;
const I_D: usize = 2;
const I_E: usize = 3;
const I_AA: usize = 4;
const I_BB: usize = 5;
const I_AB: usize = 6;
const I_DD: usize = 7;
const I_EE: usize = 8;
const I_DE: usize = 9;
const I_AD: usize = 10;
const I_AE: usize = 11;
const I_BD: usize = 12;
const I_BE: usize = 13;
const I_C1: usize = 14;
const I_S1: usize = 15;
const I_C1_2: usize = 16;
const I_S1_2: usize = 17;
const I_C2: usize = 18;
const I_S2: usize = 19;
const I_C2_2: usize = 20;
const I_S2_2: usize = 21;

/// Streaming accumulator of the moment products needed to reconstruct a
/// two-mode Gaussian state.
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator {
    n: u64,
    sums: [KahanSum; N_SUMS],
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_samples(&self) -> u64 {
        self.n
    }

    /// Fold in one phase-pair observation.
    #[inline]
    pub fn accumulate(&mut self, theta1: f64, w1: f64, theta2: f64, w2: f64) {
        self.accumulate_trig(theta1.cos(), theta1.sin(), theta2.cos(), theta2.sin(), w1, w2);
    }

    /// Same, with the phase trig precomputed (the values must be the cos/sin
    /// of the actual phases; synthesis tables reuse this to avoid
    /// recomputing trig per draw).
    #[inline]
    pub fn accumulate_trig(&mut self, c1: f64, s1: f64, c2: f64, s2: f64, w1: f64, w2: f64) {
        let a = w1 * c1;
        let b = w1 * s1;
        let d = w2 * c2;
        let e = w2 * s2;
        let s = &mut self.sums;
        s[I_A].add(a);
        s[I_B].add(b);
        s[I_D].add(d);
        s[I_E].add(e);
        s[I_AA].add(a * a);
        s[I_BB].add(b * b);
        s[I_AB].add(a * b);
        s[I_DD].add(d * d);
        s[I_EE].add(e * e);
        s[I_DE].add(d * e);
        s[I_AD].add(a * d);
        s[I_AE].add(a * e);
        s[I_BD].add(b * d);
        s[I_BE].add(b * e);
        s[I_C1].add(c1);
        s[I_S1].add(s1);
        s[I_C1_2].add(c1 * c1 - s1 * s1);
        s[I_S1_2].add(2.0 * c1 * s1);
        s[I_C2].add(c2);
        s[I_S2].add(s2);
        s[I_C2_2].add(c2 * c2 - s2 * s2);
        s[I_S2_2].add(2.0 * c2 * s2);
        self.n += 1;
    }

    /// Merge another accumulator (record-ordered merging keeps results
    /// independent of the parallel schedule).
    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.n += other.n;
        for (lhs, rhs) in self.sums.iter_mut().zip(&other.sums) {
            lhs.merge(rhs);
        }
    }

    /// Invert the accumulated products into mean and covariance estimates.
    pub fn finalize(&self) -> Result<EstimatedState, EstimatorError> {
        if self.n == 0 {
            return Err(EstimatorError::Empty);
        }
        if self.n < 2 {
            return Err(EstimatorError::TooFewSamples(self.n));
        }
        let n = self.n as f64;
        let m = |i: usize| self.sums[i].value() / n;

        for (channel, first, second) in [
            (1u8, (I_C1, I_S1), (I_C1_2, I_S1_2)),
            (2u8, (I_C2, I_S2), (I_C2_2, I_S2_2)),
        ] {
            for (harmonic, (ci, si)) in [(1u8, first), (2u8, second)] {
                let concentration = m(ci).hypot(m(si));
                if concentration >= PHASE_COVERAGE_LIMIT {
                    return Err(EstimatorError::DegeneratePhases {
                        channel,
                        harmonic,
                        concentration,
                    });
                }
            }
        }

        let mu_x1 = 2.0 * m(I_A);
        let mu_y1 = 2.0 * m(I_B);
        let mu_x2 = 2.0 * m(I_D);
        let mu_y2 = 2.0 * m(I_E);

        let xx1 = 3.0 * m(I_AA) - m(I_BB) - mu_x1 * mu_x1;
        let yy1 = 3.0 * m(I_BB) - m(I_AA) - mu_y1 * mu_y1;
        let xy1 = 4.0 * m(I_AB) - mu_x1 * mu_y1;
        let xx2 = 3.0 * m(I_DD) - m(I_EE) - mu_x2 * mu_x2;
        let yy2 = 3.0 * m(I_EE) - m(I_DD) - mu_y2 * mu_y2;
        let xy2 = 4.0 * m(I_DE) - mu_x2 * mu_y2;
        let x1x2 = 4.0 * m(I_AD) - mu_x1 * mu_x2;
        let x1y2 = 4.0 * m(I_AE) - mu_x1 * mu_y2;
        let y1x2 = 4.0 * m(I_BD) - mu_y1 * mu_x2;
        let y1y2 = 4.0 * m(I_BE) - mu_y1 * mu_y2;

        let mu = Vector4::new(mu_x1, mu_y1, mu_x2, mu_y2);
        let sigma = Matrix4::new(
            xx1, xy1, x1x2, x1y2, //
            xy1, yy1, y1x2, y1y2, //
            x1x2, y1x2, xx2, xy2, //
            x1y2, y1y2, xy2, yy2,
        );
        let state = GaussianState::new(mu, sigma)?;
        let physicality = check_physicality(&state);
        Ok(EstimatedState { state, physicality, n_samples: self.n })
    }
}

/// A state reconstructed from data, with its physicality diagnosis.  No
/// projection is applied: downstream consumers see the raw moment inversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatedState {
    pub state: GaussianState,
    pub physicality: PhysicalityCheck,
    pub n_samples: u64,
}

fn check_shape(ds: &QuadratureDataset) -> Result<(usize, usize), EstimatorError> {
    let spr = ds.samples_per_record as usize;
    let recs = ds.n_records as usize;
    let n = spr * recs;
    if n == 0 {
        return Err(EstimatorError::Empty);
    }
    if ds.theta1.len() != n || ds.w1.len() != n || ds.theta2.len() != n || ds.w2.len() != n {
        return Err(EstimatorError::LengthMismatch);
    }
    Ok((recs, spr))
}

/// Estimate the state from a dataset.  One accumulator per record, merged
/// in record order.
pub fn estimate_state(ds: &QuadratureDataset) -> Result<EstimatedState, EstimatorError> {
    let (recs, spr) = check_shape(ds)?;
    let per_record: Vec<MomentAccumulator> = (0..recs)
        .into_par_iter()
        .map(|r| {
            let mut acc = MomentAccumulator::new();
            let base = r * spr;
            for k in 0..spr {
                let i = base + k;
                acc.accumulate(ds.theta1[i], ds.w1[i], ds.theta2[i], ds.w2[i]);
            }
            acc
        })
        .collect();
    let mut total = MomentAccumulator::new();
    for acc in &per_record {
        total.merge(acc);
    }
    total.finalize()
}

/// Normalization of the joint (sum) variance column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointConvention {
    /// `0.5 * Var(W1 + W2)`: vacuum level 0.5.
    HalfVarianceSum,
    /// `Var(W1 + W2)`, i.e. half the variance of the sum in vacuum = 1
    /// units: vacuum level 1.
    VacuumNormalized,
}

/// Per-phase-pair sample variances across records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedVariances {
    pub convention: JointConvention,
    pub sample: Vec<u32>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub var_w1: Vec<f64>,
    pub var_w2: Vec<f64>,
    pub var_joint: Vec<f64>,
    pub count: Vec<u32>,
}

struct Welford {
    mean: f64,
    m2: f64,
}

impl Welford {
    fn new() -> Self {
        Welford { mean: 0.0, m2: 0.0 }
    }

    #[inline]
    fn push(&mut self, x: f64, n: f64) {
        let d = x - self.mean;
        self.mean += d / n;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self, count: usize) -> f64 {
        self.m2 / (count as f64 - 1.0)
    }
}

struct BinStats {
    w1: Vec<Welford>,
    w2: Vec<Welford>,
    sum: Vec<Welford>,
    diff: Vec<Welford>,
}

fn bin_stats(ds: &QuadratureDataset) -> Result<(BinStats, usize, usize), EstimatorError> {
    let (recs, spr) = check_shape(ds)?;
    if recs < 2 {
        return Err(EstimatorError::InsufficientRecords(recs as u32));
    }
    let mut st = BinStats {
        w1: (0..spr).map(|_| Welford::new()).collect(),
        w2: (0..spr).map(|_| Welford::new()).collect(),
        sum: (0..spr).map(|_| Welford::new()).collect(),
        diff: (0..spr).map(|_| Welford::new()).collect(),
    };
    for r in 0..recs {
        let n = (r + 1) as f64;
        let base = r * spr;
        for k in 0..spr {
            let (a, b) = (ds.w1[base + k], ds.w2[base + k]);
            st.w1[k].push(a, n);
            st.w2[k].push(b, n);
            st.sum[k].push(a + b, n);
            st.diff[k].push(a - b, n);
        }
    }
    Ok((st, recs, spr))
}

/// Sample variances per phase-pair index (unbiased across records).
pub fn bin_variances(
    ds: &QuadratureDataset,
    convention: JointConvention,
) -> Result<BinnedVariances, EstimatorError> {
    let (st, recs, spr) = bin_stats(ds)?;
    let joint_scale = match convention {
        JointConvention::HalfVarianceSum => 0.5,
        JointConvention::VacuumNormalized => 1.0,
    };
    let mut out = BinnedVariances {
        convention,
        sample: Vec::with_capacity(spr),
        theta1: Vec::with_capacity(spr),
        theta2: Vec::with_capacity(spr),
        var_w1: Vec::with_capacity(spr),
        var_w2: Vec::with_capacity(spr),
        var_joint: Vec::with_capacity(spr),
        count: Vec::with_capacity(spr),
    };
    for k in 0..spr {
        out.sample.push(k as u32);
        out.theta1.push(ds.theta1[k]);
        out.theta2.push(ds.theta2[k]);
        out.var_w1.push(st.w1[k].variance(recs));
        out.var_w2.push(st.w2[k].variance(recs));
        out.var_joint.push(joint_scale * st.sum[k].variance(recs));
        out.count.push(recs as u32);
    }
    Ok(out)
}

/// Write binned variances as CSV
/// (`sample,theta1,theta2,var_w1,var_w2,var_joint,count`).
pub fn write_variances_csv<W: Write>(
    mut out: W,
    bins: &BinnedVariances,
) -> Result<(), std::io::Error> {
    writeln!(out, "{VARIANCES_HEADER}")?;
    for k in 0..bins.sample.len() {
        writeln!(
            out,
            "{},{:.11e},{:.11e},{:.8e},{:.8e},{:.8e},{}",
            bins.sample[k],
            bins.theta1[k],
            bins.theta2[k],
            bins.var_w1[k],
            bins.var_w2[k],
            bins.var_joint[k],
            bins.count[k]
        )?;
    }
    Ok(())
}

/// Convert a dataset into squeezer-model variance traces (vacuum = 1
/// units, with both sum and difference joint traces).
pub fn traces_from_dataset(ds: &QuadratureDataset) -> Result<VarianceTraces, EstimatorError> {
    let (st, recs, spr) = bin_stats(ds)?;
    let mut tr = VarianceTraces {
        theta1: ds.theta1[..spr].to_vec(),
        theta2: ds.theta2[..spr].to_vec(),
        var1: Vec::with_capacity(spr),
        var2: Vec::with_capacity(spr),
        var_sum: Some(Vec::with_capacity(spr)),
        var_diff: Some(Vec::with_capacity(spr)),
    };
    for k in 0..spr {
        tr.var1.push(2.0 * st.w1[k].variance(recs));
        tr.var2.push(2.0 * st.w2[k].variance(recs));
        tr.var_sum.as_mut().unwrap().push(2.0 * st.sum[k].variance(recs));
        tr.var_diff.as_mut().unwrap().push(2.0 * st.diff[k].variance(recs));
    }
    Ok(tr)
}

/// Replicate values of one scalar statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSeries {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; absent with fewer than two values.
    pub std: Option<f64>,
}

impl StatSeries {
    fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() >= 2 {
            Some(
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
                    .sqrt(),
            )
        } else {
            None
        };
        StatSeries { values, mean, std }
    }
}

/// Scope note attached to analysis reports.
///
/// Bootstrap spreads quantify statistical uncertainty only.  On instrument
/// data this same analysis has shown model-constrained and unconstrained
/// covariance estimates differing by roughly 0.03 in the witness E_W and
/// 0.01 in the negativity N — systematic shifts from calibration drift and
/// amplifier-model mismatch that synthetic data cannot reproduce.  Agreement
/// between simulated and re-analyzed values is therefore a consistency check
/// of the pipeline, not a bound on systematic error.
pub const SYSTEMATICS_NOTE: &str = "Bootstrap spreads quantify statistical uncertainty only. \
On instrument data this analysis has shown model-constrained and unconstrained covariance \
estimates differing by roughly 0.03 in the witness E_W and 0.01 in the negativity N; such \
systematic shifts (calibration drift, amplifier-model mismatch) are outside the scope of \
synthetic data, so simulated-vs-analyzed agreement is a pipeline consistency check, not a \
bound on systematic error.";

/// Spread of the witness and negativity under re-synthesis from a fixed
/// state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: u32,
    pub e_w: StatSeries,
    pub delta_epr: StatSeries,
    pub negativity: StatSeries,
}

/// Same statistics under independent re-runs of the full experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub trials: u32,
    pub e_w: StatSeries,
    pub delta_epr: StatSeries,
    pub negativity: StatSeries,
}

fn min_covariance_eigenvalue(state: &GaussianState) -> f64 {
    state
        .sigma()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e))
}

/// One synthesized-and-reestimated run.  Streams records straight into the
/// accumulator — nothing is materialized — and reproduces
/// `estimate_state(generate_dataset(...))` bit for bit because the record
/// structure, RNG streams, and merge order are identical.
fn replicate_statistics(
    table: &SynthTable,
    config: &AcquisitionConfig,
    run_seed: u64,
) -> Result<(f64, f64, f64), EstimatorError> {
    let spr = config.samples_per_record as usize;
    let mut total = MomentAccumulator::new();
    for r in 0..config.n_records as u64 {
        let mut rng = SplitRng::stream(run_seed, DOMAIN_RECORD, r);
        let mut acc = MomentAccumulator::new();
        for k in 0..spr {
            let (w1, w2) = table.draw(k, &mut rng);
            acc.accumulate_trig(
                table.cos1[k],
                table.sin1[k],
                table.cos2[k],
                table.sin2[k],
                w1,
                w2,
            );
        }
        total.merge(&acc);
    }
    let est = total.finalize()?;
    let witness = entanglement_witness(&est.state);
    let neg = negativity(&est.state)?;
    Ok((witness.e_w, witness.delta_epr, neg.negativity))
}

fn sampled_statistics(
    state: &GaussianState,
    config: &AcquisitionConfig,
    runs: u32,
    domain: u64,
) -> Result<Vec<(f64, f64, f64)>, EstimatorError> {
    config.validate()?;
    let min_eig = min_covariance_eigenvalue(state);
    if !(min_eig > SAMPLEABLE_EIGENVALUE_FLOOR) {
        return Err(EstimatorError::Unsampleable(min_eig));
    }
    let table = SynthTable::build(state, config)?;
    (0..runs)
        .into_par_iter()
        .map(|j| {
            let run_seed = SplitRng::stream(config.seed, domain, j as u64).next_u64();
            replicate_statistics(&table, config, run_seed)
        })
        .collect()
}

/// Parametric bootstrap: re-synthesize `replicates` datasets from `state`
/// (usually an estimate) with the acquisition geometry of `config`,
/// re-estimate each, and report the spread of the witness, EPR variance,
/// and negativity.  Replicate `j` derives its seed from
/// `(config.seed, replicate domain, j)`.
pub fn parametric_bootstrap(
    state: &GaussianState,
    config: &AcquisitionConfig,
    replicates: u32,
) -> Result<BootstrapReport, EstimatorError> {
    if replicates < 2 {
        return Err(EstimatorError::TooFewReplicates(replicates));
    }
    let stats = sampled_statistics(state, config, replicates, DOMAIN_REPLICATE)?;
    Ok(BootstrapReport {
        replicates,
        e_w: StatSeries::from_values(stats.iter().map(|s| s.0).collect()),
        delta_epr: StatSeries::from_values(stats.iter().map(|s| s.1).collect()),
        negativity: StatSeries::from_values(stats.iter().map(|s| s.2).collect()),
    })
}

/// Independent full-experiment repetitions from a known state.  With a
/// single trial the standard deviations are absent, not zero.
pub fn repeatability_trials(
    state: &GaussianState,
    config: &AcquisitionConfig,
    trials: u32,
) -> Result<RepeatabilityReport, EstimatorError> {
    if trials == 0 {
        return Err(EstimatorError::Empty);
    }
    let stats = sampled_statistics(state, config, trials, DOMAIN_TRIAL)?;
    Ok(RepeatabilityReport {
        trials,
        e_w: StatSeries::from_values(stats.iter().map(|s| s.0).collect()),
        delta_epr: StatSeries::from_values(stats.iter().map(|s| s.1).collect()),
        negativity: StatSeries::from_values(stats.iter().map(|s| s.2).collect()),
    })
}
