//! Dormand–Prince 5(4) with FSAL and the fourth-order continuous extension.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 {
            rtol: 1e-9,
            atol: 1e-12,
            h_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Stats {
    pub fn add(&mut self, o: Stats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

/// Continuous extension of one accepted step.
pub struct DenseStep<'a> {
    pub t0: f64,
    pub h: f64,
    r: &'a [Vec<f64>; 5],
}

impl DenseStep<'_> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            h_max: f64::INFINITY,
        }
    }

    fn initial_step<F>(&self, f: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let sc: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d0 = rms(y);
        let d1 = rms(f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span).min(self.h_max);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; n];
        f(t + h0, &y1, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.h_max)
    }

    /// Integrate from `t0` to `t1` in place. `h` carries the step size across
    /// calls (zero requests an automatic initial step). `observe` sees every
    /// accepted step's continuous extension.
    pub fn solve<F, O>(
        &self,
        f: &mut F,
        t0: f64,
        y: &mut [f64],
        t1: f64,
        h: &mut f64,
        mut observe: O,
    ) -> Result<Stats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(&DenseStep),
    {
        let n = y.len();
        let mut stats = Stats::default();
        if t1 <= t0 {
            return Ok(stats);
        }
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        let mut y1 = vec![0.0; n];
        let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

        let mut t = t0;
        f(t, y, &mut k[0]);
        stats.evaluations += 1;
        if !(*h > 0.0) {
            *h = self.initial_step(f, t, y, &k[0], t1 - t0);
            stats.evaluations += 1;
        }
        let mut hh = h.min(self.h_max);
        let mut last = false;

        loop {
            if t + hh >= t1 || t + 1.01 * hh >= t1 {
                hh = t1 - t;
                last = true;
            }
            if hh < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h: hh });
            }

            for i in 0..n {
                tmp[i] = y[i] + hh * A21 * k[0][i];
            }
            f(t + C2 * hh, &tmp, &mut k[1]);
            for i in 0..n {
                tmp[i] = y[i] + hh * (A31 * k[0][i] + A32 * k[1][i]);
            }
            f(t + C3 * hh, &tmp, &mut k[2]);
            for i in 0..n {
                tmp[i] = y[i] + hh * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            f(t + C4 * hh, &tmp, &mut k[3]);
            for i in 0..n {
                tmp[i] = y[i] + hh * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            f(t + C5 * hh, &tmp, &mut k[4]);
            for i in 0..n {
                tmp[i] = y[i]
                    + hh * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
            }
            f(t + hh, &tmp, &mut k[5]);
            for i in 0..n {
                y1[i] = y[i]
                    + hh * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
            }
            f(t + hh, &y1, &mut k[6]);
            stats.evaluations += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = hh
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y1[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                last = false;
                hh *= 0.2;
                stats.rejected += 1;
                continue;
            }

            if err <= 1.0 {
                stats.accepted += 1;
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = hh * k[0][i] - ydiff;
                    r[0][i] = y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - hh * k[6][i] - bspl;
                    r[4][i] = hh
                        * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                            + D7 * k[6][i]);
                }
                observe(&DenseStep { t0: t, h: hh, r: &r });
                t = if last { t1 } else { t + hh };
                y.copy_from_slice(&y1);
                k.swap(0, 6);
                let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                let next = (hh * fac).min(self.h_max);
                if last {
                    // keep the unclipped proposal for the next segment
                    *h = next.max(*h * 0.2).min(self.h_max);
                    return Ok(stats);
                }
                *h = next;
                hh = next;
            } else {
                stats.rejected += 1;
                last = false;
                hh *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
        }
    }

    /// Integrate and record the state at each of the sorted `times`.
    pub fn solve_sampled<F>(
        &self,
        f: &mut F,
        t0: f64,
        y: &mut [f64],
        times: &[f64],
        h: &mut f64,
    ) -> Result<(Vec<Vec<f64>>, Stats)>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let mut out = Vec::with_capacity(times.len());
        let mut idx = 0;
        while idx < times.len() && times[idx] <= t0 {
            out.push(y.to_vec());
            idx += 1;
        }
        let Some(&t_end) = times.last() else {
            return Ok((out, Stats::default()));
        };
        let mut buf = vec![0.0; n];
        let stats = self.solve(f, t0, y, t_end, h, |step| {
            while idx < times.len() && times[idx] <= step.t1() {
                step.eval(times[idx], &mut buf);
                out.push(buf.clone());
                idx += 1;
            }
        })?;
        // the final sample lands exactly on the endpoint
        if let Some(last) = out.last_mut() {
            last.copy_from_slice(y);
        }
        Ok((out, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_accuracy() {
        let solver = Dopri5::new(1e-10, 1e-12);
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut y = vec![1.0, 0.0];
        let mut h = 0.0;
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let (samples, stats) = solver.solve_sampled(&mut f, 0.0, &mut y, &times, &mut h).unwrap();
        for (t, s) in times.iter().zip(&samples) {
            assert!((s[0] - t.cos()).abs() < 1e-8, "t={t}: {}", s[0]);
        }
        assert!(stats.accepted > 10);
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn exponential_decay_with_dense_output() {
        let solver = Dopri5::new(1e-9, 1e-14);
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0];
        let mut y = vec![1.0];
        let mut h = 0.0;
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.031).collect();
        let (samples, _) = solver.solve_sampled(&mut f, 0.0, &mut y, &times, &mut h).unwrap();
        for (t, s) in times.iter().zip(&samples) {
            let exact = (-2.0 * t).exp();
            assert!((s[0] - exact).abs() < 1e-8 * exact.max(1e-3), "{t}");
        }
    }

    #[test]
    fn underflow_is_reported() {
        let solver = Dopri5::new(1e-12, 1e-14);
        // finite-time blow-up at t = 1
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let mut y = vec![1.0];
        let mut h = 0.0;
        let r = solver.solve(&mut f, 0.0, &mut y, 2.0, &mut h, |_| {});
        assert!(r.is_err());
    }
}
