//! Dormand–Prince 5(4) with Hairer's fourth-order dense output.

use nalgebra::DVector;

use super::Matrix;
use crate::{Error, Result};

const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 0.2;
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
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

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on `|h|`; defaults to the span length.
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_step: None,
            initial_step: None,
            max_steps: 500_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    cont: [DVector<f64>; 5],
}

impl Segment {
    fn lo(&self) -> f64 {
        self.t0.min(self.t0 + self.h)
    }

    fn hi(&self) -> f64 {
        self.t0.max(self.t0 + self.h)
    }

    fn value(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [c0, c1, c2, c3, c4] = &self.cont;
        c0 + (c1 + (c2 + (c3 + c4 * s1) * s) * s1) * s
    }

    fn derivative(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [_, c1, c2, c3, c4] = &self.cont;
        let inner = c3 + c4 * s1;
        let mid = c2 + &inner * s;
        let g = c1 + &mid * s1;
        let dinner = -c4;
        let dmid = &inner + dinner * s;
        let dg = -&mid + dmid * s1;
        (g + dg * s) / self.h
    }
}

/// Dense trajectory returned by [`integrate`].
#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// Ascending, containing both span endpoints.
    pub sample_times: Vec<f64>,
    pub sample_states: Vec<Matrix>,
    pub stats: SolverStats,
    shape: (usize, usize),
    /// Ordered by ascending time.
    segments: Vec<Segment>,
    lo: f64,
    hi: f64,
}

impl OdeSolution {
    pub fn span(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn segment(&self, t: f64) -> Result<&Segment> {
        let slack = 1e-12 * (self.hi - self.lo).abs().max(1.0);
        if !(t >= self.lo - slack && t <= self.hi + slack) {
            return Err(Error::Domain(format!(
                "time {t} outside integrated span [{}, {}]",
                self.lo, self.hi
            )));
        }
        let k = self.segments.partition_point(|s| s.hi() < t);
        Ok(&self.segments[k.min(self.segments.len() - 1)])
    }

    fn reshape(&self, v: DVector<f64>) -> Matrix {
        Matrix::from_vec(self.shape.0, self.shape.1, v.data.into())
    }

    /// State at any time within the span.
    pub fn eval(&self, t: f64) -> Result<Matrix> {
        let seg = self.segment(t)?;
        Ok(self.reshape(seg.value(t.clamp(seg.lo(), seg.hi()))))
    }

    /// Time derivative of the dense interpolant.
    pub fn eval_derivative(&self, t: f64) -> Result<Matrix> {
        let seg = self.segment(t)?;
        Ok(self.reshape(seg.derivative(t.clamp(seg.lo(), seg.hi()))))
    }

    /// Final state of the integration (the `t_b` end of the requested span).
    pub fn terminal(&self, forward: bool) -> &Matrix {
        if forward {
            self.sample_states.last().unwrap()
        } else {
            &self.sample_states[0]
        }
    }
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Integrates `ẋ = f(t, x)` from `span.0` to `span.1`; `span.1 < span.0` runs
/// backward. The returned samples are the requested `samples` that lie in the
/// span plus both endpoints, in ascending time.
pub fn integrate<F>(
    mut f: F,
    x0: &Matrix,
    span: (f64, f64),
    samples: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &Matrix) -> Matrix,
{
    let (ta, tb) = span;
    if !(ta.is_finite() && tb.is_finite()) || ta == tb {
        return Err(Error::Domain(format!(
            "invalid integration span [{ta}, {tb}]"
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let shape = x0.shape();
    let dir = (tb - ta).signum();
    let length = (tb - ta).abs();
    let hmax = opts.max_step.unwrap_or(length).min(length);
    let mut stats = SolverStats::default();

    let mut rhs = |t: f64, y: &DVector<f64>, stats: &mut SolverStats| -> Result<DVector<f64>> {
        stats.evaluations += 1;
        let m = Matrix::from_vec(shape.0, shape.1, y.as_slice().to_vec());
        let d = f(t, &m);
        if d.shape() != shape {
            return Err(Error::Dimension(format!(
                "derivative shape {:?} differs from state shape {:?}",
                d.shape(),
                shape
            )));
        }
        if !d.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration {
                t,
                reason: "non-finite derivative".into(),
            });
        }
        Ok(DVector::from_vec(d.data.into()))
    };

    let mut t = ta;
    let mut y = DVector::from_vec(x0.as_slice().to_vec());
    let mut k1 = rhs(t, &y, &mut stats)?;

    let mut h = match opts.initial_step {
        Some(h0) => h0.abs().min(hmax),
        None => {
            let sc = |v: &DVector<f64>| {
                let n = v.len().max(1) as f64;
                let s: f64 = v
                    .iter()
                    .zip(y.iter())
                    .map(|(a, b)| (a / (opts.abs_tol + opts.rel_tol * b.abs())).powi(2))
                    .sum();
                (s / n).sqrt()
            };
            let d0 = sc(&y);
            let d1 = sc(&k1);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 {
                1e-6
            } else {
                0.01 * d0 / d1
            };
            let h0 = h0.min(hmax);
            let y1 = &y + &k1 * (dir * h0);
            let k = rhs(t + dir * h0, &y1, &mut stats)?;
            let d2 = sc(&(k - &k1)) / h0;
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0).min(h1).min(hmax)
        }
    };

    let mut segments: Vec<Segment> = Vec::new();
    let mut last_rejected = false;
    loop {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let remaining = (tb - t).abs();
        let mut finishing = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            finishing = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let hs = dir * h;
        let k2 = rhs(t + C[0] * hs, &(&y + &k1 * (hs * A21)), &mut stats)?;
        let k3 = rhs(
            t + C[1] * hs,
            &(&y + (&k1 * A31 + &k2 * A32) * hs),
            &mut stats,
        )?;
        let k4 = rhs(
            t + C[2] * hs,
            &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs),
            &mut stats,
        )?;
        let k5 = rhs(
            t + C[3] * hs,
            &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs),
            &mut stats,
        )?;
        let k6 = rhs(
            t + C[4] * hs,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs),
            &mut stats,
        )?;
        let y_new = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * hs;
        let t_new = if finishing { tb } else { t + hs };
        let k7 = rhs(t_new, &y_new, &mut stats)?;
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;
        let err = error_norm(&err_vec, &y, &y_new, opts);

        if err <= 1.0 {
            stats.steps += 1;
            let ydiff = &y_new - &y;
            let bspl = &k1 * hs - &ydiff;
            let c3 = &ydiff - &k7 * hs - &bspl;
            let c4 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * hs;
            segments.push(Segment {
                t0: t,
                h: t_new - t,
                cont: [y.clone(), ydiff, bspl, c3, c4],
            });
            t = t_new;
            y = y_new;
            k1 = k7;
            if finishing {
                break;
            }
            let mut fac = if err == 0.0 {
                10.0
            } else {
                0.9 * err.powf(-0.2)
            };
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(hmax);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }

    if dir < 0.0 {
        segments.reverse();
    }
    let (lo, hi) = (ta.min(tb), ta.max(tb));
    let mut times: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|s| s.is_finite() && *s > lo && *s < hi)
        .collect();
    times.push(lo);
    times.push(hi);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut sol = OdeSolution {
        sample_times: Vec::new(),
        sample_states: Vec::new(),
        stats,
        shape,
        segments,
        lo,
        hi,
    };
    let x_end = Matrix::from_vec(shape.0, shape.1, y.data.into());
    let mut states = Vec::with_capacity(times.len());
    for &s in &times {
        let m = if s == ta {
            x0.clone()
        } else if s == tb {
            x_end.clone()
        } else {
            sol.eval(s)?
        };
        states.push(m);
    }
    sol.sample_times = times;
    sol.sample_states = states;
    Ok(sol)
}
