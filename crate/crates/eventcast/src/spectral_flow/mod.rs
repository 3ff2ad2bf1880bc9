//! 2-D Kolmogorov flow in vorticity–streamfunction form.
//!
//! The incompressible Navier–Stokes equations on the doubly periodic
//! `[0, 2pi)^2` box with sinusoidal shear forcing `sin(k_f y) e1` are solved
//! pseudospectrally (2/3-rule dealiasing) with fixed-step RK4. Pressure is
//! eliminated by the vorticity formulation; the diagnostics exposed here —
//! the energy dissipation rate, velocity Fourier modes and vorticity point
//! probes — do not depend on the formulation.

mod fft;
mod stepper;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeds;
use crate::systems::{SystemTag, TrajectoryRecord};
use crate::{Error, Result};

use fft::{signed_wavenumber, Fft2, HalfGrid};
use stepper::FlowStepper;

/// Column layout of [`simulate_flow_observables`] records.
pub mod obs_columns {
    /// Real part of the velocity mode a(1,0).
    pub const RE_A10: usize = 0;
    /// Imaginary part of the velocity mode a(1,0).
    pub const IM_A10: usize = 1;
    /// Nine vorticity probes on the uniform 3x3 grid, row-major.
    pub const PROBE_FIRST: usize = 2;
    pub const PROBE_COUNT: usize = 9;
    /// Energy dissipation rate.
    pub const DISSIPATION: usize = 11;
    pub const WIDTH: usize = 12;
}

/// Solver configuration for the Kolmogorov flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Modes per dimension; must be a power of two.
    pub grid: usize,
    pub reynolds: f64,
    pub forcing_wavenumber: u32,
    /// Fixed RK4 step.
    pub dt_solver: f64,
    /// Output sampling step; must be an integer multiple of `dt_solver`.
    pub dt_sample: f64,
    /// Transient dropped from records, in time units.
    pub discard: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            grid: 128,
            reynolds: 40.0,
            forcing_wavenumber: 4,
            dt_solver: 0.005,
            dt_sample: 0.2,
            discard: 20.0,
        }
    }
}

impl FlowParams {
    pub fn nu(&self) -> f64 {
        1.0 / self.reynolds
    }

    /// 2/3-rule band limit: modes with `|k| > grid/3` are zeroed.
    pub fn dealias_kmax(&self) -> usize {
        self.grid / 3
    }

    pub fn steps_per_sample(&self) -> Result<u64> {
        let ratio = self.dt_sample / self.dt_solver;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > 1e-9 * ratio.abs() || rounded < 1.0 {
            return Err(Error::Config(format!(
                "dt_sample {} is not an integer multiple of dt_solver {}",
                self.dt_sample, self.dt_solver
            )));
        }
        Ok(rounded as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.grid.is_power_of_two() || self.grid < 16 {
            return Err(Error::Config(format!(
                "grid must be a power of two >= 16, got {}",
                self.grid
            )));
        }
        if self.reynolds <= 0.0 || self.dt_solver <= 0.0 || self.dt_sample <= 0.0 {
            return Err(Error::Config("reynolds and time steps must be positive".into()));
        }
        if self.forcing_wavenumber == 0 || self.forcing_wavenumber as usize > self.dealias_kmax() {
            return Err(Error::Config(format!(
                "forcing wavenumber {} outside the dealiased band",
                self.forcing_wavenumber
            )));
        }
        if self.discard < 0.0 {
            return Err(Error::Config("discard must be non-negative".into()));
        }
        self.steps_per_sample()?;
        Ok(())
    }
}

/// Vorticity spectrum at one instant.
///
/// `omega_hat` is `grid x grid`, indexed `[kx_idx, ky_idx]` in FFT order
/// (index `i` means wavenumber `i` for `i <= grid/2`, else `i - grid`).
/// Invariants: conjugate symmetry `w(-k) = conj(w(k))`, zero mean mode, and
/// exact zeros outside the 2/3 dealiasing band.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSnapshot {
    pub time: f64,
    pub omega_hat: Array2<Complex64>,
}

impl FlowSnapshot {
    /// Zero field.
    pub fn zero(params: &FlowParams) -> Self {
        FlowSnapshot { time: 0.0, omega_hat: Array2::default((params.grid, params.grid)) }
    }

    /// The laminar equilibrium `omega = -(Re / k_f) cos(k_f y) / ... `, i.e.
    /// coefficients `-Re/(2 k_f)` at `(0, ±k_f)`; for the standard forcing
    /// this is `omega = -(Re/4) cos(4y)`.
    pub fn laminar(params: &FlowParams) -> Self {
        let n = params.grid;
        let kf = params.forcing_wavenumber as usize;
        let mut omega_hat = Array2::default((n, n));
        let amp = Complex64::new(-params.reynolds / (2.0 * params.forcing_wavenumber as f64), 0.0);
        omega_hat[[0, kf]] = amp;
        omega_hat[[0, n - kf]] = amp;
        FlowSnapshot { time: 0.0, omega_hat }
    }

    /// Seeded random divergence-free initial condition: Gaussian spectral
    /// coefficients on `1 <= |k| <= 8` with amplitude proportional to
    /// `|k|^-2`, conjugate-symmetrized and normalized to unit enstrophy.
    pub fn random_initial(params: &FlowParams, seed: u64) -> Self {
        let mut rng = seeds::substream_rng(seed, seeds::labels::SIMULATION, 0);
        let n = params.grid;
        let mut half = HalfGrid::zeros(n);
        let band = 8i64.min(params.dealias_kmax() as i64);
        for kx in 0..=band {
            for ky in -band..=band {
                let k2 = kx * kx + ky * ky;
                if k2 == 0 || k2 > band * band {
                    continue;
                }
                if kx == 0 && ky < 0 {
                    continue; // conjugate of the ky > 0 entry
                }
                let g1: f64 = rng.sample(rand_distr::StandardNormal);
                let g2: f64 = rng.sample(rand_distr::StandardNormal);
                let amp = 1.0 / k2 as f64;
                let idx = ky.rem_euclid(n as i64) as usize;
                *half.at_mut(kx as usize, idx) = Complex64::new(g1, g2) * amp;
            }
        }
        stepper::project(&mut half, params.dealias_kmax());
        let enstrophy = half.sum_sq_full();
        if enstrophy > 0.0 {
            let scale = 1.0 / enstrophy.sqrt();
            for c in &mut half.data {
                *c *= scale;
            }
        }
        FlowSnapshot::from_half(0.0, &half)
    }

    pub fn grid(&self) -> usize {
        self.omega_hat.nrows()
    }

    pub(crate) fn from_half(time: f64, half: &HalfGrid) -> Self {
        let n = half.n;
        let mut full = Array2::default((n, n));
        for kx in 0..half.nh() {
            for j in 0..n {
                full[[kx, j]] = half.at(kx, j);
            }
        }
        for i in half.nh()..n {
            // kx = i - n < 0: fill from the conjugate of (n - i, -ky)
            for j in 0..n {
                let j_conj = (n - j) % n;
                full[[i, j]] = half.at(n - i, j_conj).conj();
            }
        }
        FlowSnapshot { time, omega_hat: full }
    }

    pub(crate) fn to_half(&self) -> Result<HalfGrid> {
        let n = self.grid();
        if self.omega_hat.ncols() != n {
            return Err(Error::Shape("omega_hat must be square".into()));
        }
        if !self.omega_hat.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Divergence { t: self.time });
        }
        let mut half = HalfGrid::zeros(n);
        for kx in 0..half.nh() {
            for j in 0..n {
                *half.at_mut(kx, j) = self.omega_hat[[kx, j]];
            }
        }
        Ok(half)
    }

    /// Largest deviation from conjugate symmetry `w(-k) = conj(w(k))`.
    pub fn max_conjugate_asymmetry(&self) -> f64 {
        let n = self.grid();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let ic = (n - i) % n;
                let jc = (n - j) % n;
                let d = self.omega_hat[[i, j]] - self.omega_hat[[ic, jc]].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }
}

/// One velocity-expansion coefficient `a(k)` of
/// `u = sum a(k)/|k|^2 (ky, -kx) exp(i k.x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub k: (i64, i64),
    pub a: Complex64,
}

/// Default 3x3 vorticity probe lattice `{pi/3, pi, 5pi/3}^2`, row-major in x.
pub fn default_probe_points() -> Vec<(f64, f64)> {
    let pi = std::f64::consts::PI;
    let ticks = [pi / 3.0, pi, 5.0 * pi / 3.0];
    let mut pts = Vec::with_capacity(9);
    for &x in &ticks {
        for &y in &ticks {
            pts.push((x, y));
        }
    }
    pts
}

/// Tendency of the vorticity spectrum for one snapshot.
pub fn vorticity_rhs(snapshot: &FlowSnapshot, params: &FlowParams) -> Result<Array2<Complex64>> {
    let half = snapshot.to_half()?;
    let mut stepper = FlowStepper::new(params, half, 0)?;
    let mut out = HalfGrid::zeros(params.grid);
    stepper.eval_rhs(&mut out)?;
    Ok(FlowSnapshot::from_half(snapshot.time, &out).omega_hat)
}

/// Advance a snapshot by one RK4 step of `dt_solver`.
pub fn step_rk4(snapshot: &FlowSnapshot, params: &FlowParams) -> Result<FlowSnapshot> {
    let half = snapshot.to_half()?;
    let mut stepper = FlowStepper::new(params, half, 0)?;
    stepper.step()?;
    let mut out = FlowSnapshot::from_half(snapshot.time + params.dt_solver, &stepper.omega);
    out.time = snapshot.time + params.dt_solver;
    Ok(out)
}

/// Energy dissipation rate `nu <|grad u|^2> = nu sum_k |a(k)|^2`.
pub fn energy_dissipation(snapshot: &FlowSnapshot, params: &FlowParams) -> Result<f64> {
    let half = snapshot.to_half()?;
    Ok(params.nu() * half.sum_sq_full())
}

/// Mean kinetic energy `<|u|^2>/2 = sum_k |a(k)|^2 / (2 |k|^2)`.
pub fn kinetic_energy(snapshot: &FlowSnapshot) -> Result<f64> {
    let half = snapshot.to_half()?;
    let n = half.n;
    let mut total = 0.0;
    for kx in 0..half.nh() {
        let weight = if kx == 0 || kx == n / 2 { 1.0 } else { 2.0 };
        for j in 0..n {
            let ky = signed_wavenumber(j, n);
            let k2 = (kx * kx) as f64 + (ky * ky) as f64;
            if k2 > 0.0 {
                total += weight * half.at(kx, j).norm_sqr() / k2;
            }
        }
    }
    Ok(0.5 * total)
}

/// Mean rate of work done by the forcing, `<u . F>`.
pub fn energy_input(snapshot: &FlowSnapshot, params: &FlowParams) -> Result<f64> {
    let half = snapshot.to_half()?;
    let kf = params.forcing_wavenumber as f64;
    Ok(-half.coeff(0, params.forcing_wavenumber as i64).re / kf)
}

/// Extract the velocity-expansion coefficient `a(k) = i omega_hat(k)`.
pub fn extract_fourier_mode(snapshot: &FlowSnapshot, k: (i64, i64)) -> Result<FourierMode> {
    let n = snapshot.grid();
    let kmax = (n / 3) as i64;
    if k == (0, 0) {
        return Err(Error::Config("mode (0,0) carries no velocity".into()));
    }
    if k.0.abs() > kmax || k.1.abs() > kmax {
        return Err(Error::Config(format!(
            "mode ({}, {}) outside the dealiased band |k| <= {kmax}",
            k.0, k.1
        )));
    }
    let half = snapshot.to_half()?;
    Ok(FourierMode { k, a: Complex64::new(0.0, 1.0) * half.coeff(k.0, k.1) })
}

/// Spectral interpolation of the vorticity at arbitrary points.
pub fn probe_vorticity(snapshot: &FlowSnapshot, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let half = snapshot.to_half()?;
    Ok(stepper::probe_half(&half, snapshot.grid() / 3, points))
}

/// Inverse-transform the snapshot onto the physical grid (`[iy][ix]` layout).
pub fn snapshot_to_grid(snapshot: &FlowSnapshot) -> Result<Array2<f64>> {
    let half = snapshot.to_half()?;
    let n = half.n;
    let fft = Fft2::new(n, n / 3);
    let mut scratch = fft.scratch();
    let mut phys = vec![0.0; n * n];
    fft.inverse(&half, &mut phys, &mut scratch);
    Ok(Array2::from_shape_vec((n, n), phys).expect("grid shape"))
}

/// Forward-transform a physical vorticity grid into a snapshot.
pub fn snapshot_from_grid(time: f64, grid: &Array2<f64>) -> Result<FlowSnapshot> {
    let n = grid.nrows();
    if grid.ncols() != n || !n.is_power_of_two() {
        return Err(Error::Shape("physical grid must be square power-of-two".into()));
    }
    let fft = Fft2::new(n, n / 3);
    let mut scratch = fft.scratch();
    let mut phys: Vec<f64> = grid.iter().cloned().collect();
    let mut half = HalfGrid::zeros(n);
    fft.forward(&mut phys, &mut half, &mut scratch);
    stepper::project(&mut half, n / 3);
    Ok(FlowSnapshot::from_half(time, &half))
}

/// Spectra of the velocity components `(u_hat, v_hat)` reconstructed from
/// the snapshot, in the same full-grid layout.
pub fn velocity_spectra(snapshot: &FlowSnapshot) -> (Array2<Complex64>, Array2<Complex64>) {
    let n = snapshot.grid();
    let mut u = Array2::default((n, n));
    let mut v = Array2::default((n, n));
    for i in 0..n {
        let kx = signed_wavenumber(i, n) as f64;
        for j in 0..n {
            let ky = signed_wavenumber(j, n) as f64;
            let k2 = kx * kx + ky * ky;
            if k2 > 0.0 {
                let psi = snapshot.omega_hat[[i, j]] / k2;
                u[[i, j]] = Complex64::new(0.0, ky) * psi;
                v[[i, j]] = Complex64::new(0.0, -kx) * psi;
            }
        }
    }
    (u, v)
}

fn sampling_plan(params: &FlowParams, duration: f64) -> Result<(u64, u64, usize)> {
    params.validate()?;
    if duration <= params.discard {
        return Err(Error::Config(format!(
            "duration {duration} must exceed the discarded transient {}",
            params.discard
        )));
    }
    let steps_per_sample = params.steps_per_sample()?;
    let discard_ratio = params.discard / params.dt_sample;
    if (discard_ratio - discard_ratio.round()).abs() > 1e-9 {
        return Err(Error::Config(
            "discard must be an integer multiple of dt_sample".into(),
        ));
    }
    let discard_samples = discard_ratio.round() as u64;
    let n_samples = ((duration - params.discard) / params.dt_sample + 1e-9).floor() as usize + 1;
    if n_samples < 2 {
        return Err(Error::Config("sampling window shorter than one interval".into()));
    }
    Ok((steps_per_sample, discard_samples, n_samples))
}

fn run_flow<FRow>(
    params: &FlowParams,
    seed: u64,
    duration: f64,
    width: usize,
    mut emit: FRow,
) -> Result<(Array2<f64>, f64)>
where
    FRow: FnMut(&mut FlowStepper, &mut [f64]),
{
    let (steps_per_sample, discard_samples, n_samples) = sampling_plan(params, duration)?;
    let ic = FlowSnapshot::random_initial(params, seed);
    let mut stepper = FlowStepper::new(params, ic.to_half()?, 0)?;
    let mut rows = Array2::zeros((n_samples, width));
    let total_steps = (discard_samples + n_samples as u64 - 1) * steps_per_sample;
    let mut emitted = 0usize;
    for step in 0..=total_steps {
        if step % steps_per_sample == 0 && step / steps_per_sample >= discard_samples {
            let mut row = rows.row_mut(emitted);
            emit(&mut stepper, row.as_slice_mut().expect("contiguous row"));
            emitted += 1;
        }
        if step < total_steps {
            stepper.step()?;
        }
    }
    debug_assert_eq!(emitted, n_samples);
    Ok((rows, discard_samples as f64 * params.dt_sample))
}

/// Simulate from a seeded random initial condition, recording the full
/// physical vorticity grid at every sample (rows are `grid x grid` flattened
/// row-major). `duration` is the total integrated time, including the
/// discarded transient.
///
/// Long runs at the default resolution do not fit in memory as full-grid
/// records; use [`simulate_flow_observables`] for those.
pub fn simulate_flow(params: &FlowParams, seed: u64, duration: f64) -> Result<TrajectoryRecord> {
    let n = params.grid;
    let (_, discard_samples, n_samples) = sampling_plan(params, duration)?;
    let _ = discard_samples;
    let bytes = n_samples as u128 * (n * n) as u128 * 8;
    if bytes > 2 << 30 {
        return Err(Error::Config(format!(
            "full-grid record would need {:.1} GiB; use simulate_flow_observables for long runs",
            bytes as f64 / (1u64 << 30) as f64
        )));
    }
    let (rows, t0) = run_flow(params, seed, duration, n * n, |stepper, row| {
        stepper.physical_vorticity(row);
    })?;
    TrajectoryRecord::new(SystemTag::Kolmogorov, t0, params.dt_sample, rows)
}

/// Simulate like [`simulate_flow`] but record only the canonical observable
/// bundle per sample: `Re a(1,0)`, `Im a(1,0)`, the nine default vorticity
/// probes, and the dissipation rate (see [`obs_columns`]). This keeps
/// multi-thousand-unit runs at megabyte scale.
pub fn simulate_flow_observables(
    params: &FlowParams,
    seed: u64,
    duration: f64,
) -> Result<TrajectoryRecord> {
    let probes = default_probe_points();
    let (rows, t0) = run_flow(params, seed, duration, obs_columns::WIDTH, |stepper, row| {
        let a10 = stepper.fourier_coefficient(1, 0);
        row[obs_columns::RE_A10] = a10.re;
        row[obs_columns::IM_A10] = a10.im;
        let w = stepper.probe(&probes);
        row[obs_columns::PROBE_FIRST..obs_columns::PROBE_FIRST + obs_columns::PROBE_COUNT]
            .copy_from_slice(&w);
        row[obs_columns::DISSIPATION] = stepper.dissipation();
    })?;
    TrajectoryRecord::new(SystemTag::KolmogorovObservables, t0, params.dt_sample, rows)
}
