//! Adaptive Dormand–Prince 5(4) integration of linear complex systems.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen from the derivative norm when `None`.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            h_init: None,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0`, returning the state at each of the
/// (increasing) `t_out`. Steps are clipped to land exactly on output times.
pub fn dopri45<F>(
    mut f: F,
    t0: f64,
    y0: &Array1<C64>,
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Array1<C64>>, OdeStats)>
where
    F: FnMut(f64, &Array1<C64>, &mut Array1<C64>),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0.clone();
    let mut k: Vec<Array1<C64>> = (0..7).map(|_| Array1::zeros(n)).collect();
    let mut ytmp = Array1::<C64>::zeros(n);
    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            let d0 = rms(&y, &y, opts);
            let d1 = rms(&k[0], &y, opts);
            if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }
        }
    }
    .min(opts.h_max);

    let mut out = Vec::with_capacity(t_out.len());
    for &target in t_out {
        if target < t {
            return Err(Error::InvalidParams("output times must be increasing".into()));
        }
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::NoConvergence {
                    iterations: opts.max_steps,
                    residual: target - t,
                });
            }
            let last = t + h >= target;
            let hs = if last { target - t } else { h };
            for s in 1..7 {
                {
                    let yt = ytmp.as_slice_mut().expect("contiguous");
                    let y0s = y.as_slice().expect("contiguous");
                    yt.copy_from_slice(y0s);
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            let ha = hs * a;
                            for (o, kj) in yt.iter_mut().zip(k[j].iter()) {
                                *o += kj * ha;
                            }
                        }
                    }
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                f(t + C[s] * hs, &ytmp, &mut tail[0]);
                stats.evaluations += 1;
            }
            // ytmp now holds the fifth-order solution (stage 7 = FSAL point).
            let mut err = 0.0;
            for i in 0..n {
                let e = k[0][i] * E[0]
                    + k[2][i] * E[2]
                    + k[3][i] * E[3]
                    + k[4][i] * E[4]
                    + k[5][i] * E[5]
                    + k[6][i] * E[6];
                let sc = opts.atol + opts.rtol * y[i].norm().max(ytmp[i].norm());
                err += (e.norm() * hs / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if err <= 1.0 || hs <= opts.h_min {
                t = if last { target } else { t + hs };
                std::mem::swap(&mut y, &mut ytmp);
                k.swap(0, 6);
                stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = (hs * fac).min(opts.h_max);
                }
            } else {
                stats.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < opts.h_min {
                    return Err(Error::StepSizeUnderflow(t));
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn rms(x: &Array1<C64>, y: &Array1<C64>, opts: &OdeOptions) -> f64 {
    let n = x.len().max(1) as f64;
    (x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a.norm() / (opts.atol + opts.rtol * b.norm())).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}
