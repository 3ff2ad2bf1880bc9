//! Chaotic ODE systems and trajectory records.
//!
//! Defines the Rössler and coupled FitzHugh–Nagumo vector fields together
//! with a general adaptive Runge–Kutta integrator ([`integrate`]) that
//! produces uniformly sampled [`TrajectoryRecord`]s.

mod dopri5;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dopri5::{integrate, integrate_with, IntegrateOptions, Tolerances};

/// Rössler system parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosslerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for RosslerParams {
    fn default() -> Self {
        RosslerParams { a: 0.2, b: 0.2, c: 5.7 }
    }
}

/// Coupled FitzHugh–Nagumo network parameters.
///
/// Unit `i` carries a voltage `v_i` and recovery variable `w_i`; units are
/// coupled through the symmetric binary adjacency matrix with strength `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhnParams {
    pub n_units: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub k: f64,
    /// Row-major `n_units x n_units` symmetric binary adjacency, zero diagonal.
    pub adjacency: Vec<f64>,
}

impl FhnParams {
    /// The chaotic 101-unit completely coupled network used throughout.
    pub fn standard() -> Self {
        Self::complete(101)
    }

    /// `n` completely coupled units with the standard per-unit parameters.
    pub fn complete(n: usize) -> Self {
        assert!(n >= 1);
        let b = (0..n)
            .map(|i| {
                if n == 1 {
                    0.006
                } else {
                    0.006 + 0.008 * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let mut adjacency = vec![1.0; n * n];
        for i in 0..n {
            adjacency[i * n + i] = 0.0;
        }
        FhnParams {
            n_units: n,
            a: vec![-0.02651; n],
            b,
            c: vec![0.02; n],
            k: 0.00128,
            adjacency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_units;
        if self.a.len() != n || self.b.len() != n || self.c.len() != n {
            return Err(Error::Shape(format!(
                "per-unit parameter arrays must have length {n}"
            )));
        }
        if self.adjacency.len() != n * n {
            return Err(Error::Shape(format!("adjacency must be {n}x{n}")));
        }
        for i in 0..n {
            if self.adjacency[i * n + i] != 0.0 {
                return Err(Error::Config("adjacency diagonal must be zero".into()));
            }
            for j in 0..i {
                if self.adjacency[i * n + j] != self.adjacency[j * n + i] {
                    return Err(Error::Config("adjacency must be symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

impl Default for FhnParams {
    fn default() -> Self {
        Self::standard()
    }
}

/// Identifies which simulation produced a [`TrajectoryRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemTag {
    Rossler,
    Fhn,
    /// Rows hold the physical vorticity grid, flattened row-major.
    Kolmogorov,
    /// Rows hold the canonical flow observables (see `spectral_flow`).
    KolmogorovObservables,
    Custom,
}

/// Uniformly sampled full-state time series from one simulation run.
///
/// Row `k` of `states` is the state at time `t0 + k*dt`. Sample times are
/// always reconstructed as `index * dt` so successive times differ by
/// exactly `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub system_tag: SystemTag,
    pub t0: f64,
    pub dt: f64,
    /// `K x n` states, one row per sample.
    pub states: Array2<f64>,
}

impl TrajectoryRecord {
    pub fn new(system_tag: SystemTag, t0: f64, dt: f64, states: Array2<f64>) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if states.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "trajectory record needs at least 2 rows, got {}",
                states.nrows()
            )));
        }
        if !states.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("trajectory states".into()));
        }
        Ok(TrajectoryRecord { system_tag, t0, dt, states })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn times(&self) -> Array1<f64> {
        Array1::from_iter((0..self.len()).map(|k| self.time(k)))
    }

    /// Truncate to the first `rows` samples.
    pub fn prefix(&self, rows: usize) -> Result<TrajectoryRecord> {
        if rows > self.len() {
            return Err(Error::InsufficientData(format!(
                "prefix of {rows} rows requested from a {}-row record",
                self.len()
            )));
        }
        TrajectoryRecord::new(
            self.system_tag,
            self.t0,
            self.dt,
            self.states.slice(ndarray::s![..rows, ..]).to_owned(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct TrajHeader {
    system_tag: SystemTag,
    n: usize,
    dt: f64,
    t0: f64,
    #[serde(rename = "K")]
    k: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Persist a record as `<path>` (raw little-endian f64 matrix, row-major)
/// plus a `<path>.json` sidecar header.
pub fn save_traj(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    let header = TrajHeader {
        system_tag: record.system_tag,
        n: record.dim(),
        dt: record.dt,
        t0: record.t0,
        k: record.len(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&header)?)?;
    let mut file = fs::File::create(path)?;
    let mut buf = Vec::with_capacity(record.states.len() * 8);
    for v in record.states.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf)?;
    Ok(())
}

/// Load a record written by [`save_traj`].
pub fn load_traj(path: &Path) -> Result<TrajectoryRecord> {
    let header: TrajHeader = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let mut raw = Vec::new();
    fs::File::open(path)?.read_to_end(&mut raw)?;
    let expected = header.k * header.n * 8;
    if raw.len() != expected {
        return Err(Error::Format(format!(
            "{} holds {} bytes, header implies {expected}",
            path.display(),
            raw.len()
        )));
    }
    let mut data = Vec::with_capacity(header.k * header.n);
    for chunk in raw.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let states = Array2::from_shape_vec((header.k, header.n), data)
        .map_err(|e| Error::Format(e.to_string()))?;
    TrajectoryRecord::new(header.system_tag, header.t0, header.dt, states)
}

/// A right-hand side `dx/dt = f(t, x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F: Fn(f64, &[f64], &mut [f64])> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(t, state, out);
        Ok(())
    }
}

/// Rössler right-hand side at `state = (x1, x2, x3)`.
pub fn rossler_rhs(state: &[f64; 3], params: &RosslerParams) -> Result<[f64; 3]> {
    if !state.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("rossler state".into()));
    }
    let [x1, x2, x3] = *state;
    Ok([
        -x2 - x3,
        x1 + params.a * x2,
        params.b + x3 * (x1 - params.c),
    ])
}

/// FitzHugh–Nagumo right-hand side; `state` is ordered `[v1, w1, ..., vn, wn]`.
pub fn fhn_rhs(state: &[f64], params: &FhnParams, out: &mut [f64]) -> Result<()> {
    let n = params.n_units;
    if state.len() != 2 * n || out.len() != 2 * n {
        return Err(Error::Shape(format!(
            "fhn state must have length {}, got {}",
            2 * n,
            state.len()
        )));
    }
    for i in 0..n {
        let v = state[2 * i];
        let w = state[2 * i + 1];
        let mut coupling = 0.0;
        let row = &params.adjacency[i * n..(i + 1) * n];
        for (j, &a_ij) in row.iter().enumerate() {
            if a_ij != 0.0 {
                coupling += a_ij * (state[2 * j] - v);
            }
        }
        out[2 * i] = v * (params.a[i] - v) * (v - 1.0) - w + params.k * coupling;
        out[2 * i + 1] = params.b[i] * v - params.c[i] * w;
    }
    Ok(())
}

/// Rössler system as a [`VectorField`].
pub struct Rossler(pub RosslerParams);

impl VectorField for Rossler {
    fn dim(&self) -> usize {
        3
    }
    fn eval(&self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        let s: &[f64; 3] = state
            .try_into()
            .map_err(|_| Error::Shape("rossler state must be a 3-vector".into()))?;
        let d = rossler_rhs(s, &self.0)?;
        out.copy_from_slice(&d);
        Ok(())
    }
}

/// FitzHugh–Nagumo network as a [`VectorField`].
pub struct Fhn(pub FhnParams);

impl VectorField for Fhn {
    fn dim(&self) -> usize {
        2 * self.0.n_units
    }
    fn eval(&self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<()> {
        fhn_rhs(state, &self.0, out)
    }
}
