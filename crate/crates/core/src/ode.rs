//! Adaptive Dormand–Prince 5(4) for linear, non-stiff, oscillatory systems.
//!
//! Steps are clamped so that every requested output point is hit exactly;
//! there is no interpolation. The error norm is the RMS of the embedded error
//! scaled by `atol + rtol·max(|y|, |y_new|)`.

use crate::error::{Error, Result};

/// Integrator tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeTolerances {
    fn default() -> Self {
        OdeTolerances {
            rtol: 1e-11,
            atol: 1e-13,
            max_steps: 2_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
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
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_HAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y′ = f(x, y)` from `x0` through each of `outputs` (monotone in
/// the direction of travel), returning the state at every output point.
///
/// `f(x, y, dy)` must write the derivative into `dy`.
pub fn integrate_dp45<F>(
    mut f: F,
    x0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: OdeTolerances,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(outputs.len());
    if outputs.is_empty() {
        return Ok(out);
    }
    let dir = if outputs.last().copied().unwrap() >= x0 {
        1.0
    } else {
        -1.0
    };
    if outputs
        .iter()
        .zip(std::iter::once(&x0).chain(outputs.iter()))
        .any(|(&b, &a)| (b - a) * dir < 0.0)
    {
        return Err(Error::Integration(
            "output points must be monotone in the direction of travel".into(),
        ));
    }

    let mut x = x0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let span = (outputs.last().unwrap() - x0).abs();
    let mut h = (span * 1e-3).max(1e-6) * dir;
    let mut steps = 0usize;
    let mut fsal_valid = false;

    for &target in outputs {
        while (target - x) * dir > 0.0 {
            steps += 1;
            if steps > tol.max_steps {
                return Err(Error::Integration(format!(
                    "exceeded {} steps; the system is too oscillatory for the requested tolerances",
                    tol.max_steps
                )));
            }
            let remaining = target - x;
            let clamped = (h - remaining) * dir >= 0.0;
            let h_try = if clamped { remaining } else { h };
            if h_try.abs() <= 1e-14 * x.abs().max(1.0) {
                if clamped {
                    // Round-off sized remainder: snap onto the output point.
                    x = target;
                    break;
                }
                return Err(Error::Integration(format!(
                    "step size underflow at x = {x}; seed closer to the singular time or loosen tolerances"
                )));
            }
            if !fsal_valid {
                f(x, &y, &mut k[0]);
                fsal_valid = true;
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    tmp[i] = y[i] + h_try * acc;
                }
                f(x + C[s] * h_try, &tmp, &mut k[s]);
            }
            let mut err = 0.0;
            for i in 0..n {
                let mut acc = 0.0;
                let mut acc_hat = 0.0;
                for s in 0..7 {
                    acc += B[s] * k[s][i];
                    acc_hat += B_HAT[s] * k[s][i];
                }
                y_new[i] = y[i] + h_try * acc;
                let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                let e = h_try * (acc - acc_hat) / sc;
                err += e * e;
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration(format!("non-finite state at x = {x}")));
            }
            if err <= 1.0 {
                x = if clamped { target } else { x + h_try };
                std::mem::swap(&mut y, &mut y_new);
                // FSAL: the last stage is f at the accepted point.
                k.swap(0, 6);
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // A clamped step may only shrink the step size, never grow it.
                if !clamped || fac < 1.0 {
                    h = h_try * fac;
                }
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let w = 7.0;
        let outs: Vec<f64> = (1..=10).map(|i| i as f64 * 0.3).collect();
        let ys = integrate_dp45(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -w * w * y[0];
            },
            0.0,
            &[1.0, 0.0],
            &outs,
            OdeTolerances::default(),
        )
        .unwrap();
        for (x, y) in outs.iter().zip(&ys) {
            assert!((y[0] - (w * x).cos()).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn backward_exponential() {
        let ys = integrate_dp45(
            |_, y, dy| dy[0] = y[0],
            1.0,
            &[1.0],
            &[0.5, 0.0],
            OdeTolerances::default(),
        )
        .unwrap();
        assert!((ys[1][0] - (-1f64).exp()).abs() < 1e-11);
    }
}
