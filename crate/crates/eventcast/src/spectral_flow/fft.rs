//! Half-spectrum 2-D FFT machinery for real periodic fields.
//!
//! Physical fields are `n x n` real grids (row-major, `[iy][ix]`). Spectra are
//! stored as `(n/2 + 1) x n` complex arrays indexed `[kx][ky_idx]`, where the
//! missing negative-`kx` half is implied by conjugate symmetry
//! `w(-k) = conj(w(k))`. Rows with `kx` beyond the dealiasing band are never
//! transformed; they are identically zero by construction.

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Signed wavenumber for an FFT-ordered index.
pub(crate) fn signed_wavenumber(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Half-spectrum storage: `(n/2 + 1)` rows of length `n`, row `kx`, column `ky_idx`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HalfGrid {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl HalfGrid {
    pub fn zeros(n: usize) -> Self {
        HalfGrid { n, data: vec![Complex64::default(); (n / 2 + 1) * n] }
    }

    #[inline]
    pub fn nh(&self) -> usize {
        self.n / 2 + 1
    }

    #[inline]
    pub fn at(&self, kx: usize, ky_idx: usize) -> Complex64 {
        self.data[kx * self.n + ky_idx]
    }

    #[inline]
    pub fn at_mut(&mut self, kx: usize, ky_idx: usize) -> &mut Complex64 {
        &mut self.data[kx * self.n + ky_idx]
    }

    pub fn row(&self, kx: usize) -> &[Complex64] {
        &self.data[kx * self.n..(kx + 1) * self.n]
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(Complex64::default());
    }

    /// Sum of |w(k)|^2 over the full wavevector lattice (negative-`kx` half
    /// counted through conjugate symmetry).
    pub fn sum_sq_full(&self) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for (kx, chunk) in self.data.chunks_exact(n).enumerate() {
            let row_sum: f64 = chunk.iter().map(|c| c.norm_sqr()).sum();
            let weight = if kx == 0 || kx == n / 2 { 1.0 } else { 2.0 };
            total += weight * row_sum;
        }
        total
    }

    /// Coefficient at a signed wavevector, resolving negative `kx` through
    /// conjugate symmetry. Panics if out of lattice range.
    pub fn coeff(&self, kx: i64, ky: i64) -> Complex64 {
        let n = self.n as i64;
        let wrap = |k: i64| -> usize { k.rem_euclid(n) as usize };
        if kx >= 0 {
            self.at(kx as usize, wrap(ky))
        } else {
            self.at((-kx) as usize, wrap(-ky)).conj()
        }
    }
}

/// Per-call scratch buffers so plans can run concurrently.
///
/// Invariant: `lines` rows beyond the band limit stay zero between calls;
/// both transforms only touch rows `0..=kmax`.
pub(crate) struct FftScratch {
    rowhalf: Vec<Complex64>, // n x nh, [iy][kx]
    lines: Vec<Complex64>,   // nh x n, [kx][iy]
    real_scratch: Vec<Complex64>,
    col_scratch: Vec<Complex64>,
}

/// Planned transforms for one grid size with a dealiasing band limit.
pub(crate) struct Fft2 {
    pub n: usize,
    pub kmax: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize, kmax: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 4);
        assert!(kmax < n / 2);
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Fft2 {
            n,
            kmax,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            col_fwd: cp.plan_fft_forward(n),
            col_inv: cp.plan_fft_inverse(n),
        }
    }

    pub fn scratch(&self) -> FftScratch {
        let n = self.n;
        let nh = n / 2 + 1;
        FftScratch {
            rowhalf: vec![Complex64::default(); n * nh],
            lines: vec![Complex64::default(); nh * n],
            real_scratch: vec![
                Complex64::default();
                self.r2c.get_scratch_len().max(self.c2r.get_scratch_len())
            ],
            col_scratch: vec![
                Complex64::default();
                self.col_fwd
                    .get_inplace_scratch_len()
                    .max(self.col_inv.get_inplace_scratch_len())
            ],
        }
    }

    /// Is the signed wavenumber pair inside the dealiasing band?
    #[inline]
    pub fn in_band(&self, kx: i64, ky: i64) -> bool {
        kx.unsigned_abs() as usize <= self.kmax && ky.unsigned_abs() as usize <= self.kmax
    }

    /// Physical grid -> band-limited spectrum (series coefficients, so the
    /// transform is scaled by `1/n^2`). Modes outside the 2/3 band are set to
    /// exactly zero. The input buffer is clobbered.
    pub fn forward(&self, phys: &mut [f64], spec: &mut HalfGrid, scratch: &mut FftScratch) {
        let n = self.n;
        let nh = n / 2 + 1;
        let kmax = self.kmax;
        debug_assert_eq!(phys.len(), n * n);
        for (iy, row) in phys.chunks_exact_mut(n).enumerate() {
            self.r2c
                .process_with_scratch(
                    row,
                    &mut scratch.rowhalf[iy * nh..(iy + 1) * nh],
                    &mut scratch.real_scratch,
                )
                .expect("r2c transform");
        }
        // only columns kx <= kmax are ever used downstream
        transpose_keep_rows(&scratch.rowhalf, &mut scratch.lines, n, nh, kmax + 1);
        let scale = 1.0 / (n * n) as f64;
        for kx in 0..=kmax {
            let line = &mut scratch.lines[kx * n..(kx + 1) * n];
            self.col_fwd.process_with_scratch(line, &mut scratch.col_scratch);
            let out = &mut spec.data[kx * n..(kx + 1) * n];
            for (dst, src) in out[..=kmax].iter_mut().zip(line[..=kmax].iter()) {
                *dst = src * scale;
            }
            out[kmax + 1..n - kmax].fill(Complex64::default());
            for (dst, src) in out[n - kmax..].iter_mut().zip(line[n - kmax..].iter()) {
                *dst = src * scale;
            }
        }
        for row in spec.data[(kmax + 1) * n..].chunks_exact_mut(n) {
            row.fill(Complex64::default());
        }
    }

    /// Band-limited spectrum -> physical grid. Rows beyond the band are
    /// assumed zero and skipped.
    pub fn inverse(&self, spec: &HalfGrid, phys: &mut [f64], scratch: &mut FftScratch) {
        let n = self.n;
        let nh = n / 2 + 1;
        debug_assert_eq!(phys.len(), n * n);
        for kx in 0..=self.kmax {
            let line = &mut scratch.lines[kx * n..(kx + 1) * n];
            line.copy_from_slice(spec.row(kx));
            self.col_inv.process_with_scratch(line, &mut scratch.col_scratch);
        }
        transpose(&scratch.lines, &mut scratch.rowhalf, nh, n);
        for (iy, out_row) in phys.chunks_exact_mut(n).enumerate() {
            let row = &mut scratch.rowhalf[iy * nh..(iy + 1) * nh];
            // DC and Nyquist bins are mathematically real; drop rounding residue.
            row[0].im = 0.0;
            row[nh - 1].im = 0.0;
            self.c2r
                .process_with_scratch(row, out_row, &mut scratch.real_scratch)
                .expect("c2r transform");
        }
    }
}

/// Blocked out-of-place transpose of a `rows x cols` complex matrix.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    transpose_keep_rows(src, dst, rows, cols, cols)
}

/// Transpose, producing only the first `keep` output rows (input columns).
fn transpose_keep_rows(
    src: &[Complex64],
    dst: &mut [Complex64],
    rows: usize,
    cols: usize,
    keep: usize,
) {
    const B: usize = 16;
    for rb in (0..rows).step_by(B) {
        let r_hi = (rb + B).min(rows);
        for cb in (0..keep).step_by(B) {
            let c_hi = (cb + B).min(keep);
            for r in rb..r_hi {
                for c in cb..c_hi {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
