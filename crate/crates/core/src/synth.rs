//! Synthesis of phase-swept dual-channel quadrature datasets.
//!
//! Both channels ramp their measurement phase linearly in time at fixed
//! detune frequencies.  Records restart the ramp, so each detune must
//! complete a whole number of cycles per record; that keeps every record
//! statistically identical and makes the per-record phase schedule a single
//! shared table.  Sampling is record-parallel with one splittable RNG
//! stream per record, so outputs are bit-identical for any thread count.

use crate::gaussian::{quadrature_variance, GaussianState};
use crate::rng::{SplitRng, DOMAIN_RECORD};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Read, Write};
use thiserror::Error;

/// Largest admissible deviation of `detune * interval * samples_per_record`
/// from a whole number of cycles.
pub const CYCLE_TOL: f64 = 1e-9;
/// How far below zero a projected 2x2 covariance eigenvalue may sit before
/// sampling refuses the state (anything above is clamped to zero).
pub const PROJECTION_TOL: f64 = 1e-12;

const DATASET_HEADER: &str = "record,sample,theta1,w1,theta2,w2";
const SIDECAR_SCHEMA: &str = "quadrature-dataset/v1";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config values must be finite; sample interval must be positive")]
    BadConfig,
    #[error("records and samples per record must both be at least 1")]
    EmptyShape,
    #[error("channel {channel} completes {cycles} phase cycles per record; a whole number is required")]
    NonIntegerCycles { channel: u8, cycles: f64 },
    #[error("projected covariance at phases ({theta1}, {theta2}) has eigenvalue {lambda:.3e} below tolerance; state cannot be sampled")]
    NonPsdProjection { theta1: f64, theta2: f64, lambda: f64 },
    #[error("dataset schema: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Acquisition geometry and seeding for one synthetic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Seconds between consecutive samples.
    pub sample_interval: f64,
    /// Phase-ramp frequency of channel 1, Hz.
    pub detune1: f64,
    /// Phase-ramp frequency of channel 2, Hz.
    pub detune2: f64,
    pub samples_per_record: u32,
    pub n_records: u32,
    pub seed: u64,
}

impl AcquisitionConfig {
    /// The reference sweep: 10 MS/s, 1 kHz / 50 kHz detunes, 10^4-sample
    /// records, 1000 records.
    pub fn standard(seed: u64) -> Self {
        AcquisitionConfig {
            sample_interval: 1e-7,
            detune1: 1e3,
            detune2: 5e4,
            samples_per_record: 10_000,
            n_records: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0)
            || !self.detune1.is_finite()
            || !self.detune2.is_finite()
        {
            return Err(SynthError::BadConfig);
        }
        if self.samples_per_record == 0 || self.n_records == 0 {
            return Err(SynthError::EmptyShape);
        }
        for (channel, detune) in [(1u8, self.detune1), (2u8, self.detune2)] {
            let cycles = detune * self.sample_interval * self.samples_per_record as f64;
            if (cycles - cycles.round()).abs() > CYCLE_TOL {
                return Err(SynthError::NonIntegerCycles { channel, cycles });
            }
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.n_records as usize * self.samples_per_record as usize
    }

    /// Measurement phases at sample `k` of any record.
    pub fn phase_pair(&self, k: u32) -> (f64, f64) {
        let turn = |detune: f64| {
            (detune * self.sample_interval * k as f64).rem_euclid(1.0) * TAU
        };
        (turn(self.detune1), turn(self.detune2))
    }
}

/// Per-phase sampler: projected means and the symmetric square root of the
/// projected 2x2 covariance.
struct PairSampler {
    m1: f64,
    m2: f64,
    l00: f64,
    l01: f64,
    l11: f64,
}

impl PairSampler {
    fn build(state: &GaussianState, theta1: f64, theta2: f64) -> Result<Self, SynthError> {
        let (v1, v2, c) = quadrature_variance(state, theta1, theta2);
        let tr = v1 + v2;
        let disc = ((v1 - v2) * (v1 - v2) + 4.0 * c * c).sqrt();
        let lambda_min = 0.5 * (tr - disc);
        if lambda_min < -PROJECTION_TOL {
            return Err(SynthError::NonPsdProjection { theta1, theta2, lambda: lambda_min });
        }
        // Closed-form PSD square root (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)),
        // with tiny negative eigenvalues clamped away.
        let det = (v1 * v2 - c * c).max(0.0);
        let s = det.sqrt();
        let denom_sq = (tr + 2.0 * s).max(0.0);
        let denom = denom_sq.sqrt();
        let (l00, l01, l11) = if denom > 0.0 {
            ((v1 + s) / denom, c / denom, (v2 + s) / denom)
        } else {
            (0.0, 0.0, 0.0)
        };
        let mu = state.mu();
        Ok(PairSampler {
            m1: mu[0] * theta1.cos() + mu[1] * theta1.sin(),
            m2: mu[2] * theta2.cos() + mu[3] * theta2.sin(),
            l00,
            l01,
            l11,
        })
    }

    #[inline]
    fn draw(&self, rng: &mut SplitRng) -> (f64, f64) {
        let (z1, z2) = rng.next_normal_pair();
        (
            self.m1 + self.l00 * z1 + self.l01 * z2,
            self.m2 + self.l01 * z1 + self.l11 * z2,
        )
    }
}

/// Draw one correlated quadrature pair at the given phases.
pub fn sample_pair(
    state: &GaussianState,
    theta1: f64,
    theta2: f64,
    rng: &mut SplitRng,
) -> Result<(f64, f64), SynthError> {
    Ok(PairSampler::build(state, theta1, theta2)?.draw(rng))
}

/// Per-record sampling table: phases, their trig values, and one sampler
/// per phase pair.  Shared by dataset generation and the streaming
/// re-estimation paths so that both consume RNG streams identically.
pub(crate) struct SynthTable {
    pub(crate) theta1: Vec<f64>,
    pub(crate) theta2: Vec<f64>,
    pub(crate) cos1: Vec<f64>,
    pub(crate) sin1: Vec<f64>,
    pub(crate) cos2: Vec<f64>,
    pub(crate) sin2: Vec<f64>,
    samplers: Vec<PairSampler>,
}

impl SynthTable {
    pub(crate) fn build(
        state: &GaussianState,
        config: &AcquisitionConfig,
    ) -> Result<Self, SynthError> {
        config.validate()?;
        let spr = config.samples_per_record as usize;
        let mut table = SynthTable {
            theta1: Vec::with_capacity(spr),
            theta2: Vec::with_capacity(spr),
            cos1: Vec::with_capacity(spr),
            sin1: Vec::with_capacity(spr),
            cos2: Vec::with_capacity(spr),
            sin2: Vec::with_capacity(spr),
            samplers: Vec::with_capacity(spr),
        };
        for k in 0..config.samples_per_record {
            let (t1, t2) = config.phase_pair(k);
            table.samplers.push(PairSampler::build(state, t1, t2)?);
            table.theta1.push(t1);
            table.theta2.push(t2);
            table.cos1.push(t1.cos());
            table.sin1.push(t1.sin());
            table.cos2.push(t2.cos());
            table.sin2.push(t2.sin());
        }
        Ok(table)
    }

    #[inline]
    pub(crate) fn draw(&self, k: usize, rng: &mut SplitRng) -> (f64, f64) {
        self.samplers[k].draw(rng)
    }
}

/// A phase-swept dual-channel dataset in row-major (record, sample) order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    pub n_records: u32,
    pub samples_per_record: u32,
    pub theta1: Vec<f64>,
    pub w1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub w2: Vec<f64>,
    /// Present when the dataset was synthesized (or loaded from a sidecar
    /// that recorded it).
    pub config: Option<AcquisitionConfig>,
}

impl QuadratureDataset {
    pub fn len(&self) -> usize {
        self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1.is_empty()
    }
}

/// Synthesize a dataset from a state.  Record `r` consumes the dedicated
/// RNG stream `(seed, DOMAIN_RECORD, r)`, so the output is independent of
/// how records are scheduled across threads.
pub fn generate_dataset(
    state: &GaussianState,
    config: &AcquisitionConfig,
) -> Result<QuadratureDataset, SynthError> {
    let table = SynthTable::build(state, config)?;
    let spr = config.samples_per_record as usize;
    let n = config.total_samples();

    let mut theta1 = vec![0.0; n];
    let mut theta2 = vec![0.0; n];
    for r in 0..config.n_records as usize {
        theta1[r * spr..(r + 1) * spr].copy_from_slice(&table.theta1);
        theta2[r * spr..(r + 1) * spr].copy_from_slice(&table.theta2);
    }

    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    {
        use rayon::prelude::*;
        let seed = config.seed;
        w1.par_chunks_mut(spr)
            .zip(w2.par_chunks_mut(spr))
            .enumerate()
            .for_each(|(r, (c1, c2))| {
                let mut rng = SplitRng::stream(seed, DOMAIN_RECORD, r as u64);
                for k in 0..spr {
                    let (a, b) = table.draw(k, &mut rng);
                    c1[k] = a;
                    c2[k] = b;
                }
            });
    }

    Ok(QuadratureDataset {
        n_records: config.n_records,
        samples_per_record: config.samples_per_record,
        theta1,
        w1,
        theta2,
        w2,
        config: Some(*config),
    })
}

/// Write as CSV: `record,sample,theta1,w1,theta2,w2`, phases at 12 and
/// values at 9 significant digits.
pub fn write_dataset_csv<W: Write>(mut out: W, ds: &QuadratureDataset) -> Result<(), SynthError> {
    writeln!(out, "{DATASET_HEADER}")?;
    let spr = ds.samples_per_record as usize;
    for i in 0..ds.len() {
        writeln!(
            out,
            "{},{},{:.11e},{:.8e},{:.11e},{:.8e}",
            i / spr,
            i % spr,
            ds.theta1[i],
            ds.w1[i],
            ds.theta2[i],
            ds.w2[i]
        )?;
    }
    Ok(())
}

/// Read a dataset CSV, enforcing the exact header and strict row-major
/// record/sample ordering.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<QuadratureDataset, SynthError> {
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == DATASET_HEADER => {}
        Some(Ok(h)) => {
            return Err(SynthError::Schema(format!(
                "expected header `{DATASET_HEADER}`, found `{h}`"
            )))
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(SynthError::Schema("empty file".into())),
    }

    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut theta1 = Vec::new();
    let mut w1 = Vec::new();
    let mut theta2 = Vec::new();
    let mut w2 = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| SynthError::Csv(format!("line {lineno}: missing {name}")))
        };
        let rec: u32 = next("record")?
            .parse()
            .map_err(|e| SynthError::Csv(format!("line {lineno}, record: {e}")))?;
        let sample: u32 = next("sample")?
            .parse()
            .map_err(|e| SynthError::Csv(format!("line {lineno}, sample: {e}")))?;
        let mut parse_f = |name: &str| -> Result<f64, SynthError> {
            let text = fields
                .next()
                .ok_or_else(|| SynthError::Csv(format!("line {lineno}: missing {name}")))?;
            text.parse()
                .map_err(|e| SynthError::Csv(format!("line {lineno}, {name}: {e}")))
        };
        records.push(rec);
        samples.push(sample);
        theta1.push(parse_f("theta1")?);
        w1.push(parse_f("w1")?);
        theta2.push(parse_f("theta2")?);
        w2.push(parse_f("w2")?);
    }
    if records.is_empty() {
        return Err(SynthError::Schema("no data rows".into()));
    }

    let spr = records.iter().take_while(|&&r| r == 0).count();
    if spr == 0 {
        return Err(SynthError::Schema("first row must belong to record 0".into()));
    }
    if records.len() % spr != 0 {
        return Err(SynthError::Schema(format!(
            "{} rows is not a whole number of {spr}-sample records",
            records.len()
        )));
    }
    for (i, (&rec, &sample)) in records.iter().zip(&samples).enumerate() {
        let (want_r, want_s) = ((i / spr) as u32, (i % spr) as u32);
        if rec != want_r || sample != want_s {
            return Err(SynthError::Schema(format!(
                "line {}: expected record {want_r} sample {want_s}, found {rec} {sample}",
                i + 2
            )));
        }
    }

    Ok(QuadratureDataset {
        n_records: (records.len() / spr) as u32,
        samples_per_record: spr as u32,
        theta1,
        w1,
        theta2,
        w2,
        config: None,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarMeta {
    schema: String,
    n_records: u32,
    samples_per_record: u32,
    config: Option<AcquisitionConfig>,
}

/// Write the binary container: little-endian f64 rows `[theta1, w1, theta2,
/// w2]` plus a JSON sidecar carrying the shape (and config when known).
pub fn write_dataset_binary<W1: Write, W2: Write>(
    mut data: W1,
    sidecar: W2,
    ds: &QuadratureDataset,
) -> Result<(), SynthError> {
    let mut buf = Vec::with_capacity(32 * 4096);
    for chunk_start in (0..ds.len()).step_by(4096) {
        buf.clear();
        for i in chunk_start..(chunk_start + 4096).min(ds.len()) {
            for v in [ds.theta1[i], ds.w1[i], ds.theta2[i], ds.w2[i]] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        data.write_all(&buf)?;
    }
    let meta = SidecarMeta {
        schema: SIDECAR_SCHEMA.to_string(),
        n_records: ds.n_records,
        samples_per_record: ds.samples_per_record,
        config: ds.config,
    };
    serde_json::to_writer_pretty(sidecar, &meta)
        .map_err(|e| SynthError::Schema(e.to_string()))?;
    Ok(())
}

/// Read the binary container written by [`write_dataset_binary`].
pub fn read_dataset_binary<R1: Read, R2: Read>(
    mut data: R1,
    sidecar: R2,
) -> Result<QuadratureDataset, SynthError> {
    let meta: SidecarMeta = serde_json::from_reader(sidecar)
        .map_err(|e| SynthError::Schema(format!("sidecar: {e}")))?;
    if meta.schema != SIDECAR_SCHEMA {
        return Err(SynthError::Schema(format!(
            "unsupported schema `{}`; this reader handles `{SIDECAR_SCHEMA}`",
            meta.schema
        )));
    }
    if meta.n_records == 0 || meta.samples_per_record == 0 {
        return Err(SynthError::Schema("sidecar declares an empty dataset".into()));
    }
    let n = meta.n_records as usize * meta.samples_per_record as usize;
    let mut bytes = Vec::new();
    data.read_to_end(&mut bytes)?;
    if bytes.len() != 32 * n {
        return Err(SynthError::Schema(format!(
            "payload is {} bytes; sidecar shape requires {}",
            bytes.len(),
            32 * n
        )));
    }
    let mut theta1 = Vec::with_capacity(n);
    let mut w1 = Vec::with_capacity(n);
    let mut theta2 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    for row in bytes.chunks_exact(32) {
        let f = |o: usize| f64::from_le_bytes(row[o..o + 8].try_into().unwrap());
        theta1.push(f(0));
        w1.push(f(8));
        theta2.push(f(16));
        w2.push(f(24));
    }
    Ok(QuadratureDataset {
        n_records: meta.n_records,
        samples_per_record: meta.samples_per_record,
        theta1,
        w1,
        theta2,
        w2,
        config: meta.config,
    })
}
