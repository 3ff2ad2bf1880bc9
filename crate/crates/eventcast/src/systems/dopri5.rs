//! Adaptive Dormand–Prince 5(4) integrator with dense output.
//!
//! Samples are taken from the continuous extension (the classic 4th-order
//! interpolant built from the stage derivatives), so the sampling grid never
//! constrains the adaptive step size. Sample times are generated as
//! `t_record + index * dt_sample`.

use ndarray::Array2;

use super::{SystemTag, TrajectoryRecord, VectorField};
use crate::{Error, Result};

/// Relative/absolute error tolerances for the adaptive controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rel: 1e-8, abs: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub tol: Tolerances,
    /// Upper bound on the step size; also used to force fixed-step runs.
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    pub system_tag: SystemTag,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: Tolerances::default(),
            max_step: None,
            initial_step: None,
            max_steps: 100_000_000,
            system_tag: SystemTag::Custom,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights equal A[6]; the 7th stage is FSAL.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output coefficients (Hairer, Nørsett & Wanner II.6).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2; // largest allowed shrink factor h_new/h
const FAC_MAX: f64 = 10.0; // largest allowed growth factor

/// Integrate `rhs` over `t_span`, sampling every `dt_sample` time units after
/// dropping the first `discard` time units.
pub fn integrate<F: VectorField>(
    rhs: &F,
    x0: &[f64],
    t_span: (f64, f64),
    dt_sample: f64,
    tol: Tolerances,
    discard: f64,
) -> Result<TrajectoryRecord> {
    integrate_with(
        rhs,
        x0,
        t_span,
        dt_sample,
        discard,
        &IntegrateOptions { tol, ..Default::default() },
    )
}

/// [`integrate`] with full control over the stepper.
pub fn integrate_with<F: VectorField>(
    rhs: &F,
    x0: &[f64],
    t_span: (f64, f64),
    dt_sample: f64,
    discard: f64,
    opts: &IntegrateOptions,
) -> Result<TrajectoryRecord> {
    let (t_start, t_end) = t_span;
    let dim = rhs.dim();
    if x0.len() != dim {
        return Err(Error::Shape(format!(
            "initial state has length {}, vector field expects {dim}",
            x0.len()
        )));
    }
    if dt_sample <= 0.0 {
        return Err(Error::Config("dt_sample must be positive".into()));
    }
    if discard < 0.0 || t_end - t_start <= discard {
        return Err(Error::Config(format!(
            "integration span ({t_start}, {t_end}) must exceed the discarded transient {discard}"
        )));
    }

    let t_record = t_start + discard;
    let n_samples = ((t_end - t_record) / dt_sample + 1e-9).floor() as usize + 1;
    if n_samples < 2 {
        return Err(Error::Config(
            "post-transient window shorter than one sampling interval".into(),
        ));
    }
    let sample_time = |j: usize| t_record + j as f64 * dt_sample;

    let mut states = Array2::zeros((n_samples, dim));
    let mut next_sample = 0usize;

    let mut t = t_start;
    let mut y = x0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut cont = vec![[0.0f64; 5]; dim];

    eval_or_reject(rhs, t, &y, &mut k[0])?.ok_or_else(|| Error::NonFinite(
        "vector field non-finite at the initial state".into(),
    ))?;

    // Emit the initial sample if the transient is empty.
    if discard == 0.0 {
        states.row_mut(0).assign(&ndarray::ArrayView1::from(&y[..]));
        next_sample = 1;
    }

    let span = t_end - t_start;
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(rhs, t, &y, &k[0], &opts.tol, span))
        .min(span);
    if let Some(max_h) = opts.max_step {
        h = h.min(max_h);
    }

    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { t });
        }
        steps += 1;
        let step_floor = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < step_floor {
            return Err(Error::StepSizeUnderflow { t });
        }
        if t + h > t_end {
            h = t_end - t;
        }

        // Stages 2..=7 (stage 1 is the FSAL derivative already in k[0]).
        let mut stage_failed = false;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, k_j) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * k_j[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let target = if s == 6 {
                // stage 7 evaluates at (t+h, y_new): record y_new first
                y_new.copy_from_slice(&y_stage);
                &mut k[6]
            } else {
                &mut k[s]
            };
            match eval_or_reject(rhs, t + C[s] * h, &y_stage, target)? {
                Some(()) => {}
                None => {
                    stage_failed = true;
                    break;
                }
            }
        }

        // Error norm scaled by atol + rtol * max(|y|, |y_new|).
        let err = if stage_failed {
            f64::INFINITY
        } else {
            let mut acc = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for (j, k_j) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += E[j] * k_j[i];
                    }
                }
                let sk = opts.tol.abs + opts.tol.rel * y[i].abs().max(y_new[i].abs());
                acc += (h * e / sk).powi(2);
            }
            let err = (acc / dim as f64).sqrt();
            if err.is_finite() { err } else { f64::INFINITY }
        };

        if err <= 1.0 {
            // Accept: build the dense-output coefficients before advancing.
            facold = err.max(1e-4);
            for i in 0..dim {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                let mut dsum = 0.0;
                for (j, k_j) in k.iter().enumerate() {
                    if D[j] != 0.0 {
                        dsum += D[j] * k_j[i];
                    }
                }
                cont[i] = [y[i], ydiff, bspl, ydiff - h * k[6][i] - bspl, h * dsum];
            }
            let t_new = t + h;

            // Interpolate every sample inside (t, t_new].
            while next_sample < n_samples {
                let ts = sample_time(next_sample);
                if ts > t_new + 1e-12 * t_new.abs().max(1.0) {
                    break;
                }
                let s = ((ts - t) / h).clamp(0.0, 1.0);
                let s1 = 1.0 - s;
                for i in 0..dim {
                    let c = &cont[i];
                    states[[next_sample, i]] =
                        c[0] + s * (c[1] + s1 * (c[2] + s * (c[3] + s1 * c[4])));
                }
                next_sample += 1;
            }

            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL
            t = t_new;

            let fac11 = err.powf(0.2 - BETA * 0.75);
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
                last_rejected = false;
            }
            h = h_new;
        } else {
            let fac11 = if err.is_finite() {
                err.powf(0.2 - BETA * 0.75)
            } else {
                FAC_MAX
            };
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
        if let Some(max_h) = opts.max_step {
            h = h.min(max_h);
        }
    }

    if next_sample != n_samples {
        return Err(Error::Config(format!(
            "only {next_sample} of {n_samples} samples produced; sampling grid inconsistent"
        )));
    }

    TrajectoryRecord::new(opts.system_tag, t_record, dt_sample, states)
}

/// Evaluate the vector field; a non-finite result is reported as `None` so
/// the stepper can shrink the step instead of aborting outright.
fn eval_or_reject<F: VectorField>(
    rhs: &F,
    t: f64,
    y: &[f64],
    out: &mut [f64],
) -> Result<Option<()>> {
    if !y.iter().all(|v| v.is_finite()) {
        return Ok(None);
    }
    match rhs.eval(t, y, out) {
        Ok(()) => {
            if out.iter().all(|v| v.is_finite()) {
                Ok(Some(()))
            } else {
                Ok(None)
            }
        }
        Err(Error::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Hairer's starting-step heuristic for a 5th-order method.
fn initial_step<F: VectorField>(
    rhs: &F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    tol: &Tolerances,
    span: f64,
) -> f64 {
    let dim = y.len();
    let sk: Vec<f64> = y.iter().map(|v| tol.abs + tol.rel * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        let s: f64 = v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum();
        (s / dim as f64).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);

    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; dim];
    let d2 = match rhs.eval(t + h0, &y1, &mut f1) {
        Ok(()) if f1.iter().all(|v| v.is_finite()) => {
            let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
            rms(&diff) / h0
        }
        _ => d1.max(1.0),
    };

    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{FnField, Rossler, RosslerParams};
    use approx::assert_abs_diff_eq;

    fn decay() -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField { dim: 1, f: |_t, y: &[f64], out: &mut [f64]| out[0] = -y[0] }
    }

    #[test]
    fn exponential_decay_hits_closed_form() {
        let rec = integrate(&decay(), &[1.0], (0.0, 1.0), 1.0, Tolerances::default(), 0.0).unwrap();
        assert_eq!(rec.len(), 2);
        assert_abs_diff_eq!(rec.states[[1, 0]], (-1.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn dense_samples_hit_closed_form() {
        // Interior samples come from the interpolant, not step endpoints.
        let rec =
            integrate(&decay(), &[1.0], (0.0, 2.0), 0.037, Tolerances::default(), 0.0).unwrap();
        for j in 0..rec.len() {
            let t = rec.time(j);
            assert_abs_diff_eq!(rec.states[[j, 0]], (-t).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_field_stays_constant() {
        let rhs = FnField { dim: 2, f: |_t, _y: &[f64], out: &mut [f64]| out.fill(0.0) };
        let rec = integrate(&rhs, &[3.5, -1.0], (0.0, 5.0), 0.5, Tolerances::default(), 0.0).unwrap();
        for j in 0..rec.len() {
            assert_eq!(rec.states[[j, 0]], 3.5);
            assert_eq!(rec.states[[j, 1]], -1.0);
        }
    }

    #[test]
    fn discard_drops_the_transient() {
        let rec = integrate(&decay(), &[1.0], (0.0, 3.0), 0.5, Tolerances::default(), 1.0).unwrap();
        assert_eq!(rec.t0, 1.0);
        assert_eq!(rec.len(), 5);
        assert_abs_diff_eq!(rec.states[[0, 0]], (-1.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn tolerance_ladder_reduces_error_monotonically() {
        let mut errors = Vec::new();
        for k in 0..6 {
            let tol = Tolerances { rel: 1e-4 / 2f64.powi(2 * k), abs: 1e-6 / 2f64.powi(2 * k) };
            let rec = integrate(&decay(), &[1.0], (0.0, 1.0), 1.0, tol, 0.0).unwrap();
            errors.push((rec.states[[1, 0]] - (-1.0f64).exp()).abs());
        }
        for w in errors.windows(2) {
            assert!(w[1] <= w[0], "ladder {errors:?} not monotone");
        }
    }

    #[test]
    fn fixed_step_convergence_order_at_least_four() {
        // Force fixed steps via loose tolerances plus a hard step-size cap.
        let endpoint = |h: f64| -> f64 {
            let opts = IntegrateOptions {
                tol: Tolerances { rel: 1e30, abs: 1e30 },
                max_step: Some(h),
                initial_step: Some(h),
                ..Default::default()
            };
            let rec = integrate_with(&decay(), &[1.0], (0.0, 1.0), 1.0, 0.0, &opts).unwrap();
            rec.states[[1, 0]]
        };
        let exact = (-1.0f64).exp();
        let e1 = (endpoint(0.1) - exact).abs();
        let e2 = (endpoint(0.05) - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 4.0, "observed order {order:.2} (errors {e1:.3e}, {e2:.3e})");
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let sys = Rossler(RosslerParams::default());
        let run = || {
            integrate(&sys, &[0.0, 1.0, 0.1], (0.0, 50.0), 0.05, Tolerances::default(), 0.0)
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn rossler_bursts_past_threshold() {
        let sys = Rossler(RosslerParams::default());
        let rec = integrate(&sys, &[0.0, 1.0, 0.1], (0.0, 500.0), 0.05, Tolerances::default(), 0.0)
            .unwrap();
        assert_eq!(rec.len(), 10001);
        let max_x3 = rec.states.column(2).iter().cloned().fold(f64::MIN, f64::max);
        assert!(max_x3 > 10.0, "x3 never exceeded 10 (max {max_x3:.2})");
    }

    #[test]
    fn blow_up_reports_step_underflow() {
        // dx/dt = x^2 from x(0)=1 blows up at t=1.
        let rhs = FnField { dim: 1, f: |_t, y: &[f64], out: &mut [f64]| out[0] = y[0] * y[0] };
        let err = integrate(&rhs, &[1.0], (0.0, 2.0), 0.1, Tolerances::default(), 0.0).unwrap_err();
        match err {
            Error::StepSizeUnderflow { t } => assert!((0.9..=1.1).contains(&t), "t = {t}"),
            other => panic!("expected step-size underflow, got {other:?}"),
        }
    }

    #[test]
    fn sampling_grid_is_exact_index_arithmetic() {
        let rec = integrate(&decay(), &[1.0], (0.0, 10.0), 0.1, Tolerances::default(), 0.0).unwrap();
        assert_eq!(rec.len(), 101);
        assert_eq!(rec.time(100), 10.0 * 0.1 * 10.0);
    }
}
