//! RK4 time stepper for the vorticity equation on the half-spectrum.

use num_complex::Complex64;

use super::fft::{signed_wavenumber, Fft2, FftScratch, HalfGrid};
use super::FlowParams;
use crate::{Error, Result};

const CFL_LIMIT: f64 = 0.5;

/// Owns the spectral state plus all transform buffers for one simulation.
///
/// All spectral buffers keep rows beyond the dealiasing band identically
/// zero; the kernels only ever write rows `kx <= kmax`.
pub(crate) struct FlowStepper {
    pub params: FlowParams,
    pub fft: Fft2,
    nu: f64,
    /// time = step_count * dt_solver (index arithmetic keeps sampling exact)
    step_count: u64,
    pub omega: HalfGrid,
    k1: HalfGrid,
    k2: HalfGrid,
    k3: HalfGrid,
    k4: HalfGrid,
    stage: HalfGrid,
    work: RhsWorkspace,
    /// |k|^2 per half-grid slot.
    k2_table: Vec<f64>,
    /// 1/|k|^2 per slot, zero at the mean mode.
    inv_k2: Vec<f64>,
    /// signed ky per column index.
    ky_signed: Vec<f64>,
}

/// Scratch fields shared by the four stage evaluations of a step.
pub(crate) struct RhsWorkspace {
    u_hat: HalfGrid,
    v_hat: HalfGrid,
    flux_x: HalfGrid,
    flux_y: HalfGrid,
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    prod_x: Vec<f64>,
    prod_y: Vec<f64>,
    s0: FftScratch,
    s1: FftScratch,
    s2: FftScratch,
}

impl FlowStepper {
    pub fn new(params: &FlowParams, omega: HalfGrid, step_count: u64) -> Result<Self> {
        params.validate()?;
        let n = params.grid;
        if omega.n != n {
            return Err(Error::Shape(format!(
                "spectrum is for grid {}, params say {n}",
                omega.n
            )));
        }
        let fft = Fft2::new(n, params.dealias_kmax());
        let nh = n / 2 + 1;
        let ky_signed: Vec<f64> = (0..n).map(|j| signed_wavenumber(j, n) as f64).collect();
        let mut k2_table = vec![0.0; nh * n];
        let mut inv_k2 = vec![0.0; nh * n];
        for kx in 0..nh {
            let kx2 = (kx * kx) as f64;
            for j in 0..n {
                let k2 = kx2 + ky_signed[j] * ky_signed[j];
                k2_table[kx * n + j] = k2;
                inv_k2[kx * n + j] = if k2 > 0.0 { 1.0 / k2 } else { 0.0 };
            }
        }
        let work = RhsWorkspace {
            u_hat: HalfGrid::zeros(n),
            v_hat: HalfGrid::zeros(n),
            flux_x: HalfGrid::zeros(n),
            flux_y: HalfGrid::zeros(n),
            u: vec![0.0; n * n],
            v: vec![0.0; n * n],
            w: vec![0.0; n * n],
            prod_x: vec![0.0; n * n],
            prod_y: vec![0.0; n * n],
            s0: fft.scratch(),
            s1: fft.scratch(),
            s2: fft.scratch(),
        };
        Ok(FlowStepper {
            nu: 1.0 / params.reynolds,
            params: params.clone(),
            fft,
            step_count,
            omega,
            k1: HalfGrid::zeros(n),
            k2: HalfGrid::zeros(n),
            k3: HalfGrid::zeros(n),
            k4: HalfGrid::zeros(n),
            stage: HalfGrid::zeros(n),
            work,
            k2_table,
            inv_k2,
            ky_signed,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_count as f64 * self.params.dt_solver
    }

    /// Tendency `d omega/dt = -div(u omega) - nu |k|^2 omega + curl F`.
    ///
    /// With `check_cfl = Some(dt)` the advective CFL estimate is guarded
    /// against the stability limit before the products are formed.
    #[allow(clippy::too_many_arguments)]
    fn rhs_into(
        omega: &HalfGrid,
        out: &mut HalfGrid,
        fft: &Fft2,
        params: &FlowParams,
        nu: f64,
        work: &mut RhsWorkspace,
        tables: (&[f64], &[f64], &[f64]),
        check_cfl: Option<f64>,
        time: f64,
    ) -> Result<()> {
        let n = fft.n;
        let kmax = fft.kmax;
        let (k2_table, inv_k2, ky_signed) = tables;

        if !omega.data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Divergence { t: time });
        }

        // u_hat = i ky omega / k^2, v_hat = -i kx omega / k^2
        for kx in 0..=kmax {
            let kxf = kx as f64;
            let base = kx * n;
            for j in 0..n {
                let i = base + j;
                let om = omega.data[i];
                let ik2 = inv_k2[i];
                let psi_re = om.re * ik2;
                let psi_im = om.im * ik2;
                let ky = ky_signed[j];
                work.u_hat.data[i] = Complex64::new(-ky * psi_im, ky * psi_re);
                work.v_hat.data[i] = Complex64::new(kxf * psi_im, -kxf * psi_re);
            }
        }

        // three independent inverse transforms (u, v, omega)
        {
            let RhsWorkspace { u_hat, v_hat, u, v, w, s0, s1, s2, .. } = work;
            let (u, v, w) = (&mut u[..], &mut v[..], &mut w[..]);
            fft.inverse(u_hat, u, s0);
            fft.inverse(v_hat, v, s1);
            fft.inverse(omega, w, s2);
        }

        if let Some(dt) = check_cfl {
            let mut vmax = 0.0f64;
            for (&a, &b) in work.u.iter().zip(work.v.iter()) {
                vmax = vmax.max(a.abs()).max(b.abs());
            }
            let dx = 2.0 * std::f64::consts::PI / n as f64;
            let cfl = vmax * dt / dx;
            if cfl >= CFL_LIMIT {
                return Err(Error::CflViolation { cfl, limit: CFL_LIMIT });
            }
        }

        for i in 0..n * n {
            work.prod_x[i] = work.u[i] * work.w[i];
            work.prod_y[i] = work.v[i] * work.w[i];
        }

        {
            let RhsWorkspace { flux_x, flux_y, prod_x, prod_y, s0, s1, .. } = work;
            fft.forward(prod_x, flux_x, s0);
            fft.forward(prod_y, flux_y, s1);
        }

        // assemble: out = -(i kx Fx + i ky Fy) - nu k^2 omega + forcing;
        // all inputs are band-masked, so out-of-band slots write exact zeros
        for kx in 0..=kmax {
            let kxf = kx as f64;
            let base = kx * n;
            for j in 0..n {
                let i = base + j;
                let fx = work.flux_x.data[i];
                let fy = work.flux_y.data[i];
                let ky = ky_signed[j];
                let om = omega.data[i];
                let nk2 = nu * k2_table[i];
                out.data[i] = Complex64::new(
                    kxf * fx.im + ky * fy.im - nk2 * om.re,
                    -(kxf * fx.re + ky * fy.re) - nk2 * om.im,
                );
            }
        }
        // curl of sin(kf y) e1 is -kf cos(kf y): coefficients -kf/2 at (0, ±kf)
        let kf = params.forcing_wavenumber as usize;
        let amp = Complex64::new(-(kf as f64) / 2.0, 0.0);
        *out.at_mut(0, kf) += amp;
        *out.at_mut(0, n - kf) += amp;
        *out.at_mut(0, 0) = Complex64::default();
        Ok(())
    }

    pub fn eval_rhs(&mut self, out: &mut HalfGrid) -> Result<()> {
        let t = self.time();
        Self::rhs_into(
            &self.omega,
            out,
            &self.fft,
            &self.params,
            self.nu,
            &mut self.work,
            (&self.k2_table, &self.inv_k2, &self.ky_signed),
            None,
            t,
        )
    }

    /// One classical RK4 step of `dt_solver`; re-enforces the invariants.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.params.dt_solver;
        let t = self.time();

        macro_rules! rhs {
            ($input:expr, $out:expr, $cfl:expr) => {
                Self::rhs_into(
                    $input,
                    $out,
                    &self.fft,
                    &self.params,
                    self.nu,
                    &mut self.work,
                    (&self.k2_table, &self.inv_k2, &self.ky_signed),
                    $cfl,
                    t,
                )?
            };
        }

        rhs!(&self.omega, &mut self.k1, Some(dt));
        axpy(&mut self.stage, &self.omega, &self.k1, 0.5 * dt);
        rhs!(&self.stage, &mut self.k2, None);
        axpy(&mut self.stage, &self.omega, &self.k2, 0.5 * dt);
        rhs!(&self.stage, &mut self.k3, None);
        axpy(&mut self.stage, &self.omega, &self.k3, dt);
        rhs!(&self.stage, &mut self.k4, None);

        let w6 = dt / 6.0;
        for i in 0..self.omega.data.len() {
            self.omega.data[i] += w6
                * (self.k1.data[i]
                    + 2.0 * self.k2.data[i]
                    + 2.0 * self.k3.data[i]
                    + self.k4.data[i]);
        }
        self.project_invariants();
        self.step_count += 1;

        if !self.omega.data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::Divergence { t: self.time() });
        }
        Ok(())
    }

    /// Enforce zero mean, the dealias mask, and self-symmetry of the kx = 0 row.
    pub fn project_invariants(&mut self) {
        project(&mut self.omega, self.fft.kmax);
    }

    /// Energy dissipation rate `nu * sum_k |omega_hat(k)|^2`.
    pub fn dissipation(&self) -> f64 {
        self.nu * self.omega.sum_sq_full()
    }

    /// Velocity-expansion coefficient `a(k) = i omega_hat(k)`.
    pub fn fourier_coefficient(&self, kx: i64, ky: i64) -> Complex64 {
        Complex64::new(0.0, 1.0) * self.omega.coeff(kx, ky)
    }

    /// Trigonometric (spectral) interpolation of the vorticity at `points`.
    pub fn probe(&self, points: &[(f64, f64)]) -> Vec<f64> {
        probe_half(&self.omega, self.fft.kmax, points)
    }

    /// Inverse-transform the current state onto the physical grid.
    pub fn physical_vorticity(&mut self, out: &mut [f64]) {
        self.fft.inverse(&self.omega, out, &mut self.work.s0);
    }
}

/// `out = base + scale * k`
fn axpy(out: &mut HalfGrid, base: &HalfGrid, k: &HalfGrid, scale: f64) {
    for ((o, b), kk) in out.data.iter_mut().zip(&base.data).zip(&k.data) {
        *o = b + scale * kk;
    }
}

pub(crate) fn project(omega: &mut HalfGrid, kmax: usize) {
    let n = omega.n;
    let nh = omega.nh();
    for kx in 0..nh {
        for j in 0..n {
            let ky = signed_wavenumber(j, n);
            if kx > kmax || ky.unsigned_abs() as usize > kmax {
                *omega.at_mut(kx, j) = Complex64::default();
            }
        }
    }
    *omega.at_mut(0, 0) = Complex64::default();
    // the kx = 0 row must satisfy w(0,-ky) = conj(w(0,ky)) on its own
    for j in 1..n / 2 {
        let avg = 0.5 * (omega.at(0, j) + omega.at(0, n - j).conj());
        *omega.at_mut(0, j) = avg;
        *omega.at_mut(0, n - j) = avg.conj();
    }
}

/// Spectral interpolation of the real field represented by `spec` at
/// arbitrary points of the `[0, 2pi)^2` torus.
pub(crate) fn probe_half(spec: &HalfGrid, kmax: usize, points: &[(f64, f64)]) -> Vec<f64> {
    let n = spec.n;
    points
        .iter()
        .map(|&(x, y)| {
            // contract over ky per kx row, then fold the negative-kx half in
            // through 2*Re
            let mut total = 0.0;
            for kx in 0..=kmax {
                let mut row_sum = Complex64::default();
                for j in 0..n {
                    let ky = signed_wavenumber(j, n);
                    if ky.unsigned_abs() as usize > kmax {
                        continue;
                    }
                    let phase = Complex64::from_polar(1.0, ky as f64 * y);
                    row_sum += spec.at(kx, j) * phase;
                }
                let term = row_sum * Complex64::from_polar(1.0, kx as f64 * x);
                total += if kx == 0 { term.re } else { 2.0 * term.re };
            }
            total
        })
        .collect()
}
