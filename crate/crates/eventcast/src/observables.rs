//! Partial-observation datasets.
//!
//! Converts full-state trajectories into the observable/QoI series the
//! predictors train on: observable extraction, proportional noise injection,
//! delay embedding, train/test partitioning, and extreme-event counting.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seeds;
use crate::spectral_flow::{self, obs_columns, FlowParams, FlowSnapshot};
use crate::systems::{SystemTag, TrajectoryRecord};
use crate::{Error, Result};

/// Which measurable quantities form the observation vector `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ObservableKind {
    /// Selected coordinates of the state vector.
    StateCoordinates { indices: Vec<usize> },
    /// Real and imaginary part of one velocity Fourier mode.
    FourierMode { k: (i64, i64) },
    /// Vorticity sampled at fixed spatial points.
    VorticityProbes { points: Vec<(f64, f64)> },
}

/// Which scalar quantity of interest `q` is predicted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum QoiKind {
    /// One coordinate of the state vector.
    Coordinate { index: usize },
    /// Mean of the voltage components of a FitzHugh–Nagumo state.
    MeanVoltage,
    /// Energy dissipation rate of the flow.
    DissipationRate,
}

/// Observable map plus QoI map for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub observables: ObservableKind,
    pub qoi: QoiKind,
}

impl ObservableSpec {
    /// Rössler: p = (x1, x2), q = x3.
    pub fn rossler() -> Self {
        ObservableSpec {
            observables: ObservableKind::StateCoordinates { indices: vec![0, 1] },
            qoi: QoiKind::Coordinate { index: 2 },
        }
    }

    /// FitzHugh–Nagumo: p = (v1, w1), q = mean voltage.
    pub fn fhn() -> Self {
        ObservableSpec {
            observables: ObservableKind::StateCoordinates { indices: vec![0, 1] },
            qoi: QoiKind::MeanVoltage,
        }
    }

    /// Kolmogorov flow with the a(1,0) precursor mode as observable.
    pub fn kolmogorov_fourier() -> Self {
        ObservableSpec {
            observables: ObservableKind::FourierMode { k: (1, 0) },
            qoi: QoiKind::DissipationRate,
        }
    }

    /// Kolmogorov flow observed through the default 3x3 vorticity probes.
    pub fn kolmogorov_vorticity() -> Self {
        ObservableSpec {
            observables: ObservableKind::VorticityProbes {
                points: spectral_flow::default_probe_points(),
            },
            qoi: QoiKind::DissipationRate,
        }
    }

    /// The extreme-event threshold conventionally paired with each system.
    pub fn default_threshold(tag: SystemTag) -> Option<f64> {
        match tag {
            SystemTag::Rossler => Some(10.0),
            SystemTag::Fhn => Some(0.3),
            SystemTag::Kolmogorov | SystemTag::KolmogorovObservables => Some(0.194),
            SystemTag::Custom => None,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.observables {
            ObservableKind::StateCoordinates { indices } => indices.len(),
            ObservableKind::FourierMode { .. } => 2,
            ObservableKind::VorticityProbes { points } => points.len(),
        }
    }
}

/// Delay-embedding geometry: `m` copies spaced `s_steps` samples apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayEmbedding {
    pub m: usize,
    pub s_steps: usize,
}

impl DelayEmbedding {
    pub fn new(m: usize, s_steps: usize) -> Result<Self> {
        if m < 1 || s_steps < 1 {
            return Err(Error::Config(format!(
                "delay embedding needs m >= 1 and s_steps >= 1, got m={m}, s_steps={s_steps}"
            )));
        }
        Ok(DelayEmbedding { m, s_steps })
    }

    /// Number of leading rows that lack history.
    pub fn history(&self) -> usize {
        (self.m - 1) * self.s_steps
    }
}

/// Extract `(p, q)` series from a trajectory according to `spec`.
pub fn extract(traj: &TrajectoryRecord, spec: &ObservableSpec) -> Result<(Array2<f64>, Array1<f64>)> {
    let k = traj.len();
    let p = match (&spec.observables, traj.system_tag) {
        (ObservableKind::StateCoordinates { indices }, tag) => {
            if matches!(tag, SystemTag::Kolmogorov | SystemTag::KolmogorovObservables) {
                return Err(Error::Config(
                    "state-coordinate observables do not apply to flow records".into(),
                ));
            }
            for &i in indices {
                if i >= traj.dim() {
                    return Err(Error::Config(format!(
                        "observable index {i} outside state dimension {}",
                        traj.dim()
                    )));
                }
            }
            let mut p = Array2::zeros((k, indices.len()));
            for (col, &i) in indices.iter().enumerate() {
                p.column_mut(col).assign(&traj.states.column(i));
            }
            p
        }
        (ObservableKind::FourierMode { k: mode }, SystemTag::KolmogorovObservables) => {
            if *mode != (1, 0) {
                return Err(Error::Config(
                    "observable records carry only the (1,0) mode; simulate with full grids for other modes"
                        .into(),
                ));
            }
            let mut p = Array2::zeros((k, 2));
            p.column_mut(0).assign(&traj.states.column(obs_columns::RE_A10));
            p.column_mut(1).assign(&traj.states.column(obs_columns::IM_A10));
            p
        }
        (ObservableKind::VorticityProbes { points }, SystemTag::KolmogorovObservables) => {
            let default_points = spectral_flow::default_probe_points();
            if !points_match(points, &default_points) {
                return Err(Error::Config(
                    "observable records carry only the default 3x3 probe set".into(),
                ));
            }
            traj.states
                .slice(s![
                    ..,
                    obs_columns::PROBE_FIRST..obs_columns::PROBE_FIRST + obs_columns::PROBE_COUNT
                ])
                .to_owned()
        }
        (ObservableKind::FourierMode { k: mode }, SystemTag::Kolmogorov) => {
            let mut p = Array2::zeros((k, 2));
            for row in 0..k {
                let snap = grid_snapshot(traj, row)?;
                let a = spectral_flow::extract_fourier_mode(&snap, *mode)?.a;
                p[[row, 0]] = a.re;
                p[[row, 1]] = a.im;
            }
            p
        }
        (ObservableKind::VorticityProbes { points }, SystemTag::Kolmogorov) => {
            let mut p = Array2::zeros((k, points.len()));
            for row in 0..k {
                let snap = grid_snapshot(traj, row)?;
                let vals = spectral_flow::probe_vorticity(&snap, points)?;
                for (col, v) in vals.into_iter().enumerate() {
                    p[[row, col]] = v;
                }
            }
            p
        }
        (kind, tag) => {
            return Err(Error::Config(format!(
                "observable {kind:?} incompatible with {tag:?} records"
            )))
        }
    };

    let q = match (spec.qoi, traj.system_tag) {
        (QoiKind::Coordinate { index }, tag)
            if !matches!(tag, SystemTag::Kolmogorov | SystemTag::KolmogorovObservables) =>
        {
            if index >= traj.dim() {
                return Err(Error::Config(format!(
                    "QoI index {index} outside state dimension {}",
                    traj.dim()
                )));
            }
            traj.states.column(index).to_owned()
        }
        (QoiKind::MeanVoltage, SystemTag::Fhn | SystemTag::Custom) => {
            let n_units = traj.dim() / 2;
            Array1::from_iter((0..k).map(|row| {
                let state = traj.states.row(row);
                (0..n_units).map(|i| state[2 * i]).sum::<f64>() / n_units as f64
            }))
        }
        (QoiKind::DissipationRate, SystemTag::KolmogorovObservables) => {
            traj.states.column(obs_columns::DISSIPATION).to_owned()
        }
        (QoiKind::DissipationRate, SystemTag::Kolmogorov) => {
            let params = FlowParams { grid: grid_side(traj.dim())?, ..Default::default() };
            let mut q = Array1::zeros(k);
            for row in 0..k {
                let snap = grid_snapshot(traj, row)?;
                q[row] = spectral_flow::energy_dissipation(&snap, &params)?;
            }
            q
        }
        (kind, tag) => {
            return Err(Error::Config(format!("QoI {kind:?} incompatible with {tag:?} records")))
        }
    };

    Ok((p, q))
}

fn points_match(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12)
}

fn grid_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::Shape(format!("row length {dim} is not a square grid")));
    }
    Ok(side)
}

fn grid_snapshot(traj: &TrajectoryRecord, row: usize) -> Result<FlowSnapshot> {
    let side = grid_side(traj.dim())?;
    let grid = Array2::from_shape_vec((side, side), traj.states.row(row).to_vec())
        .map_err(|e| Error::Shape(e.to_string()))?;
    spectral_flow::snapshot_from_grid(traj.time(row), &grid)
}

/// Add proportional Gaussian noise: `p~_i = p_i + alpha * xi_i` with
/// `xi_i ~ N(0, sigma_i)` and `sigma_i` the standard deviation of column `i`
/// of `p` itself. Constant columns stay untouched.
pub fn add_noise(p: &Array2<f64>, alpha: f64, seed: u64) -> Result<Array2<f64>> {
    if alpha < 0.0 {
        return Err(Error::Config(format!("noise intensity must be >= 0, got {alpha}")));
    }
    let mut out = p.clone();
    if alpha == 0.0 || p.nrows() == 0 {
        return Ok(out);
    }
    let sigmas: Vec<f64> = (0..p.ncols())
        .map(|c| {
            let col = p.column(c).to_vec();
            crate::linalg::population_std(&col)
        })
        .collect();
    let mut rng = seeds::substream_rng(seed, "noise", 0);
    for mut row in out.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            *v += alpha * sigmas[c] * xi;
        }
    }
    Ok(out)
}

/// Delay-embed a series: row `t` of the output is
/// `[p(t), p(t-s), ..., p(t-(m-1)s)]`; rows lacking history are dropped.
pub fn delay_embed(p: &Array2<f64>, emb: &DelayEmbedding) -> Result<Array2<f64>> {
    let k = p.nrows();
    let r = p.ncols();
    let hist = emb.history();
    if hist >= k {
        return Err(Error::InsufficientData(format!(
            "embedding needs {} rows of history, series has {k}",
            hist + 1
        )));
    }
    let mut out = Array2::zeros((k - hist, r * emb.m));
    for t in hist..k {
        for d in 0..emb.m {
            let src = p.row(t - d * emb.s_steps);
            for c in 0..r {
                out[[t - hist, d * r + c]] = src[c];
            }
        }
    }
    Ok(out)
}

/// Count maximal contiguous excursions with `q > q_e`.
pub fn count_events(q: &[f64], q_e: f64) -> usize {
    let mut events = 0;
    let mut inside = false;
    for &v in q {
        let above = v > q_e;
        if above && !inside {
            events += 1;
        }
        inside = above;
    }
    events
}

/// Aligned observable/QoI dataset with its split and noise bookkeeping.
///
/// `p` holds the (possibly noisy) continuous observable series; `q` holds the
/// clean QoI. A training pair is `(input row t, target q[t + tau_steps])` with
/// `t + tau_steps < split_index`; a test pair has `t >= split_index`. Noise is
/// applied per portion with that portion's own column deviations, so test
/// noise never peeks at training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDataset {
    pub dt: f64,
    pub p: Array2<f64>,
    pub q: Array1<f64>,
    pub tau_steps: usize,
    pub split_index: usize,
    pub q_e: f64,
    pub noise_alpha_train: f64,
    pub noise_alpha_test: f64,
    pub seed: u64,
    /// Delay-embedding recipe for feedforward inputs; recurrent predictors
    /// consume the raw series.
    pub embedding: Option<DelayEmbedding>,
}

/// Everything needed to build an [`ObservationDataset`] besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub tau_steps: usize,
    /// Fraction of rows used for training (first portion). Default 0.75.
    pub split_fraction: f64,
    pub q_e: f64,
    pub noise_alpha_train: f64,
    pub noise_alpha_test: f64,
    pub seed: u64,
    pub embedding: Option<DelayEmbedding>,
}

impl DatasetOptions {
    pub fn new(tau_steps: usize, q_e: f64) -> Self {
        DatasetOptions {
            tau_steps,
            split_fraction: 0.75,
            q_e,
            noise_alpha_train: 0.0,
            noise_alpha_test: 0.0,
            seed: 0,
            embedding: None,
        }
    }
}

/// Build the aligned dataset from a trajectory.
pub fn make_dataset(
    traj: &TrajectoryRecord,
    spec: &ObservableSpec,
    opts: &DatasetOptions,
) -> Result<ObservationDataset> {
    let (p_clean, q) = extract(traj, spec)?;
    ObservationDataset::from_series(p_clean, q, traj.dt, opts)
}

impl ObservationDataset {
    /// Assemble from already-extracted clean series.
    pub fn from_series(
        p_clean: Array2<f64>,
        q: Array1<f64>,
        dt: f64,
        opts: &DatasetOptions,
    ) -> Result<Self> {
        let k = p_clean.nrows();
        if q.len() != k {
            return Err(Error::Shape(format!(
                "p has {k} rows but q has {} entries",
                q.len()
            )));
        }
        if !(0.0..1.0).contains(&opts.split_fraction) && opts.split_fraction != 0.75 {
            return Err(Error::Config("split fraction must lie in (0, 1)".into()));
        }
        let split_index = (opts.split_fraction * k as f64).floor() as usize;
        if split_index == 0 || split_index >= k {
            return Err(Error::InsufficientData(format!(
                "split index {split_index} degenerate for {k} rows"
            )));
        }
        if opts.tau_steps >= k - split_index {
            return Err(Error::InsufficientData(format!(
                "prediction horizon {} leaves no test pairs in {} test rows",
                opts.tau_steps,
                k - split_index
            )));
        }
        if !p_clean.iter().all(|v| v.is_finite()) || !q.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset series".into()));
        }

        // noise per portion, each with its own column statistics and stream
        let train_block = p_clean.slice(s![..split_index, ..]).to_owned();
        let test_block = p_clean.slice(s![split_index.., ..]).to_owned();
        let train_seed = seeds::substream_u64(opts.seed, seeds::labels::NOISE_TRAIN, 0);
        let test_seed = seeds::substream_u64(opts.seed, seeds::labels::NOISE_TEST, 0);
        let train_noisy = add_noise(&train_block, opts.noise_alpha_train, train_seed)?;
        let test_noisy = add_noise(&test_block, opts.noise_alpha_test, test_seed)?;
        let mut p = p_clean;
        p.slice_mut(s![..split_index, ..]).assign(&train_noisy);
        p.slice_mut(s![split_index.., ..]).assign(&test_noisy);

        Ok(ObservationDataset {
            dt,
            p,
            q,
            tau_steps: opts.tau_steps,
            split_index,
            q_e: opts.q_e,
            noise_alpha_train: opts.noise_alpha_train,
            noise_alpha_test: opts.noise_alpha_test,
            seed: opts.seed,
            embedding: opts.embedding,
        })
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.p.ncols()
    }

    /// Prediction horizon in time units.
    pub fn tau(&self) -> f64 {
        self.tau_steps as f64 * self.dt
    }

    /// Input-row indices of the training pairs: enough embedding history and
    /// targets strictly inside the training portion.
    pub fn train_rows(&self) -> Vec<usize> {
        let start = self.embedding.map(|e| e.history()).unwrap_or(0);
        let end = self.split_index.saturating_sub(self.tau_steps);
        (start..end).collect()
    }

    /// Input-row indices of the test pairs.
    pub fn test_rows(&self) -> Vec<usize> {
        (self.split_index..self.len() - self.tau_steps).collect()
    }

    /// Target value paired with input row `t`.
    pub fn target(&self, t: usize) -> f64 {
        self.q[t + self.tau_steps]
    }

    /// Targets for a set of input rows.
    pub fn targets(&self, rows: &[usize]) -> Array1<f64> {
        Array1::from_iter(rows.iter().map(|&t| self.target(t)))
    }

    /// Input vector for row `t`: the embedded history when an embedding is
    /// configured (history may reach across the split boundary; past
    /// observations are always available at prediction time), else `p(t)`.
    pub fn input_row(&self, t: usize) -> Array1<f64> {
        match self.embedding {
            None => self.p.row(t).to_owned(),
            Some(emb) => {
                let r = self.input_dim();
                let mut out = Array1::zeros(r * emb.m);
                for d in 0..emb.m {
                    let src = self.p.row(t - d * emb.s_steps);
                    for c in 0..r {
                        out[d * r + c] = src[c];
                    }
                }
                out
            }
        }
    }

    /// Stacked input matrix for the given rows.
    pub fn input_matrix(&self, rows: &[usize]) -> Array2<f64> {
        let width = self.input_dim() * self.embedding.map(|e| e.m).unwrap_or(1);
        let mut out = Array2::zeros((rows.len(), width));
        for (i, &t) in rows.iter().enumerate() {
            out.row_mut(i).assign(&self.input_row(t));
        }
        out
    }

    /// Number of extreme events in the training-target window.
    pub fn train_event_count(&self) -> usize {
        let targets: Vec<f64> = self.train_rows().iter().map(|&t| self.target(t)).collect();
        count_events(&targets, self.q_e)
    }

    /// Persist as CSV (`time, p_1..p_r, q`) plus a JSON metadata sidecar.
    /// Floats use shortest round-trip encoding, so a load is bit-exact.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut out = String::new();
        out.push_str("time");
        for c in 0..self.input_dim() {
            out.push_str(&format!(",p_{}", c + 1));
        }
        out.push_str(",q\n");
        for t in 0..self.len() {
            out.push_str(&format!("{}", t as f64 * self.dt));
            for c in 0..self.input_dim() {
                out.push_str(&format!(",{}", self.p[[t, c]]));
            }
            out.push_str(&format!(",{}\n", self.q[t]));
        }
        fs::write(path, out)?;

        let meta = DatasetMeta {
            dt: self.dt,
            tau_steps: self.tau_steps,
            split_index: self.split_index,
            q_e: self.q_e,
            noise_alpha_train: self.noise_alpha_train,
            noise_alpha_test: self.noise_alpha_test,
            seed: self.seed,
            embedding: self.embedding,
        };
        let meta_path = sidecar(path);
        fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Load a dataset written by [`ObservationDataset::save_csv`].
    pub fn load_csv(path: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty dataset csv".into()))?;
        let cols = header.split(',').count();
        if cols < 3 {
            return Err(Error::Format("dataset csv needs time, p_*, q columns".into()));
        }
        let r = cols - 2;
        let mut p_data = Vec::new();
        let mut q_data = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Format(format!("ragged csv row: {line}")));
            }
            for f in &fields[1..=r] {
                p_data.push(
                    f.parse::<f64>().map_err(|e| Error::Format(format!("bad float {f}: {e}")))?,
                );
            }
            q_data.push(
                fields[cols - 1]
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad float: {e}")))?,
            );
        }
        let k = q_data.len();
        let p = Array2::from_shape_vec((k, r), p_data).map_err(|e| Error::Format(e.to_string()))?;
        Ok(ObservationDataset {
            dt: meta.dt,
            p,
            q: Array1::from(q_data),
            tau_steps: meta.tau_steps,
            split_index: meta.split_index,
            q_e: meta.q_e,
            noise_alpha_train: meta.noise_alpha_train,
            noise_alpha_test: meta.noise_alpha_test,
            seed: meta.seed,
            embedding: meta.embedding,
        })
    }
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    dt: f64,
    tau_steps: usize,
    split_index: usize,
    q_e: f64,
    noise_alpha_train: f64,
    noise_alpha_test: f64,
    seed: u64,
    embedding: Option<DelayEmbedding>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_record(k: usize, dim: usize) -> TrajectoryRecord {
        let states = Array2::from_shape_fn((k, dim), |(i, j)| (i * dim + j) as f64);
        TrajectoryRecord::new(SystemTag::Rossler, 0.0, 0.05, states).unwrap()
    }

    #[test]
    fn rossler_extraction_projects_coordinates() {
        let states = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let traj = TrajectoryRecord::new(SystemTag::Rossler, 0.0, 0.05, states).unwrap();
        let (p, q) = extract(&traj, &ObservableSpec::rossler()).unwrap();
        assert_eq!(p.row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(q[0], 3.0);
    }

    #[test]
    fn fhn_mean_voltage_of_constants() {
        let mut states = Array2::zeros((2, 6));
        for i in 0..3 {
            states[[0, 2 * i]] = 0.3;
            states[[1, 2 * i]] = 0.3;
        }
        let traj = TrajectoryRecord::new(SystemTag::Fhn, 0.0, 1.0, states).unwrap();
        let (_, q) = extract(&traj, &ObservableSpec::fhn()).unwrap();
        assert_abs_diff_eq!(q[0], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn kolmogorov_laminar_extraction_gives_laminar_dissipation() {
        let params = FlowParams { grid: 32, ..Default::default() };
        let lam = FlowSnapshot::laminar(&params);
        let grid = spectral_flow::snapshot_to_grid(&lam).unwrap();
        let flat: Vec<f64> = grid.iter().cloned().collect();
        let mut states = Array2::zeros((2, flat.len()));
        states.row_mut(0).assign(&Array1::from(flat.clone()));
        states.row_mut(1).assign(&Array1::from(flat));
        let traj = TrajectoryRecord::new(SystemTag::Kolmogorov, 0.0, 0.2, states).unwrap();
        let (p, q) = extract(&traj, &ObservableSpec::kolmogorov_fourier()).unwrap();
        assert_abs_diff_eq!(q[0], 1.25, epsilon = 1e-9);
        assert_abs_diff_eq!(p[[0, 0]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let traj = toy_record(4, 3);
        assert!(extract(&traj, &ObservableSpec::kolmogorov_fourier()).is_err());
        let bad = ObservableSpec {
            observables: ObservableKind::StateCoordinates { indices: vec![7] },
            qoi: QoiKind::Coordinate { index: 2 },
        };
        assert!(extract(&traj, &bad).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = Array2::from_shape_fn((50, 2), |(i, j)| (i + j) as f64);
        let noisy = add_noise(&p, 0.0, 7).unwrap();
        assert_eq!(p, noisy);
    }

    #[test]
    fn constant_columns_stay_constant() {
        let mut p = Array2::zeros((100, 2));
        p.column_mut(0).fill(3.25);
        for (i, v) in p.column_mut(1).iter_mut().enumerate() {
            *v = i as f64;
        }
        let noisy = add_noise(&p, 0.5, 7).unwrap();
        assert!(noisy.column(0).iter().all(|&v| v == 3.25));
        assert!(noisy.column(1).iter().zip(p.column(1)).any(|(a, b)| a != b));
    }

    #[test]
    fn noise_magnitude_matches_intensity() {
        // Monte Carlo: empirical std of the perturbation within 3% of alpha*sigma
        let k = 100_000;
        let p = Array2::from_shape_fn((k, 1), |(i, _)| (i as f64 * 0.1).sin());
        let sigma = crate::linalg::population_std(p.column(0).as_slice().unwrap());
        let alpha = 0.2;
        let noisy = add_noise(&p, alpha, 123).unwrap();
        let diff: Vec<f64> = noisy
            .column(0)
            .iter()
            .zip(p.column(0))
            .map(|(a, b)| a - b)
            .collect();
        let actual = crate::linalg::population_std(&diff);
        let expected = alpha * sigma;
        assert!(
            (actual - expected).abs() / expected < 0.03,
            "noise std {actual:.5} vs target {expected:.5}"
        );
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let p = Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64);
        let a = add_noise(&p, 0.1, 9).unwrap();
        let b = add_noise(&p, 0.1, 9).unwrap();
        let c = add_noise(&p, 0.1, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn embedding_with_m1_is_identity() {
        let p = Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64);
        let emb = DelayEmbedding::new(1, 1).unwrap();
        assert_eq!(delay_embed(&p, &emb).unwrap(), p);
    }

    #[test]
    fn embedding_indexes_history() {
        // scalar series p(k) = k with m=3, s=1: row for t=10 is [10, 9, 8]
        let p = Array2::from_shape_fn((12, 1), |(i, _)| i as f64);
        let emb = DelayEmbedding::new(3, 1).unwrap();
        let e = delay_embed(&p, &emb).unwrap();
        assert_eq!(e.nrows(), 10);
        assert_eq!(e.row(10 - emb.history()).to_vec(), vec![10.0, 9.0, 8.0]);
        // r=2, m=2 gives 4 columns
        let p2 = Array2::zeros((5, 2));
        let e2 = delay_embed(&p2, &DelayEmbedding::new(2, 1).unwrap()).unwrap();
        assert_eq!(e2.ncols(), 4);
    }

    #[test]
    fn embedding_blocks_recover_shifted_series() {
        let p = Array2::from_shape_fn((40, 2), |(i, j)| (i as f64).sin() + j as f64);
        let emb = DelayEmbedding::new(4, 3).unwrap();
        let e = delay_embed(&p, &emb).unwrap();
        let hist = emb.history();
        for t in hist..p.nrows() {
            for d in 0..emb.m {
                for c in 0..2 {
                    assert_eq!(e[[t - hist, d * 2 + c]], p[[t - d * emb.s_steps, c]]);
                }
            }
        }
    }

    #[test]
    fn embedding_rejects_short_series() {
        let p = Array2::zeros((5, 1));
        let emb = DelayEmbedding::new(3, 3).unwrap();
        assert!(delay_embed(&p, &emb).is_err());
    }

    #[test]
    fn event_counting_uses_excursions() {
        assert_eq!(count_events(&[0.0, 11.0, 12.0, 0.0, 11.0], 10.0), 2);
        assert_eq!(count_events(&[1.0, 2.0, 3.0], 10.0), 0);
        assert_eq!(count_events(&[11.0, 12.0, 13.0], 10.0), 1);
        assert_eq!(count_events(&[], 10.0), 0);
    }

    #[test]
    fn dataset_split_and_alignment() {
        let traj = toy_record(1000, 3);
        let opts = DatasetOptions { seed: 5, ..DatasetOptions::new(10, 10.0) };
        let ds = make_dataset(&traj, &ObservableSpec::rossler(), &opts).unwrap();
        assert_eq!(ds.split_index, 750);
        // alignment: input time + tau = target time exactly
        for &t in ds.train_rows().iter().chain(ds.test_rows().iter()) {
            assert_eq!(ds.target(t), ds.q[t + 10]);
        }
        // zero horizon pairs rows with contemporaneous targets
        let opts0 = DatasetOptions::new(0, 10.0);
        let ds0 = make_dataset(&traj, &ObservableSpec::rossler(), &opts0).unwrap();
        assert_eq!(ds0.target(5), ds0.q[5]);
        // unit conversion
        assert_abs_diff_eq!(ds.tau(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn no_leakage_between_train_inputs_and_test_targets() {
        let traj = toy_record(400, 3);
        let opts = DatasetOptions {
            embedding: Some(DelayEmbedding::new(3, 2).unwrap()),
            ..DatasetOptions::new(7, 10.0)
        };
        let ds = make_dataset(&traj, &ObservableSpec::rossler(), &opts).unwrap();
        let max_train_input = *ds.train_rows().last().unwrap();
        let min_test_target = ds.test_rows()[0] + ds.tau_steps;
        assert!(min_test_target > max_train_input + ds.tau_steps);
        // train targets stay strictly inside the training portion
        assert!(max_train_input + ds.tau_steps < ds.split_index);
    }

    #[test]
    fn portion_noise_uses_portion_statistics() {
        // train block constant, test block varying: with train sigma = 0 the
        // training rows must stay clean even at high alpha
        let k = 200;
        let mut p = Array2::zeros((k, 1));
        for i in 150..k {
            p[[i, 0]] = (i as f64).sin();
        }
        let q = Array1::zeros(k);
        let opts = DatasetOptions {
            noise_alpha_train: 0.5,
            noise_alpha_test: 0.5,
            seed: 3,
            ..DatasetOptions::new(1, 1.0)
        };
        let ds = ObservationDataset::from_series(p.clone(), q, 1.0, &opts).unwrap();
        for t in 0..150 {
            assert_eq!(ds.p[[t, 0]], 0.0, "train row {t} was polluted");
        }
        let changed = (150..k).filter(|&t| ds.p[[t, 0]] != p[[t, 0]]).count();
        assert!(changed > 40);
    }

    #[test]
    fn embedded_input_rows_match_delay_embed() {
        let traj = toy_record(60, 3);
        let emb = DelayEmbedding::new(3, 2).unwrap();
        let opts = DatasetOptions { embedding: Some(emb), ..DatasetOptions::new(2, 10.0) };
        let ds = make_dataset(&traj, &ObservableSpec::rossler(), &opts).unwrap();
        let embedded = delay_embed(&ds.p, &emb).unwrap();
        for &t in &ds.train_rows() {
            assert_eq!(ds.input_row(t).to_vec(), embedded.row(t - emb.history()).to_vec());
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let traj = toy_record(50, 3);
        let opts = DatasetOptions {
            noise_alpha_train: 0.1,
            noise_alpha_test: 0.2,
            seed: 11,
            embedding: Some(DelayEmbedding::new(2, 1).unwrap()),
            ..DatasetOptions::new(3, 10.0)
        };
        let ds = make_dataset(&traj, &ObservableSpec::rossler(), &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.save_csv(&path).unwrap();
        let back = ObservationDataset::load_csv(&path).unwrap();
        assert_eq!(ds, back);
    }
}
