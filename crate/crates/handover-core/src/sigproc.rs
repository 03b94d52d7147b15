//! Analysis-side preprocessing: cubic-spline resampling to 90 Hz, low-pass
//! Butterworth filtering, and numerical differentiation.

use crate::frames::Vec3;
use thiserror::Error;

/// Analysis sampling rate in Hz; also the engine's native frame rate.
pub const ANALYSIS_RATE_HZ: f64 = 90.0;

#[derive(Debug, Error)]
pub enum SigprocError {
    #[error("need at least {need} samples, found {found}")]
    TooFewSamples { need: usize, found: usize },
    #[error("timestamps must be strictly increasing (sample {0})")]
    NonMonotonicTime(usize),
    #[error("series must be uniformly sampled (sample {index}: dt {got} vs {want})")]
    NonUniform { index: usize, got: f64, want: f64 },
    #[error("non-finite value at sample {0}")]
    NonFinite(usize),
    #[error("filter order must be a positive even number, got {0}")]
    BadFilterOrder(usize),
    #[error("cutoff must lie in (0, fs/2), got {cutoff} Hz at fs {fs} Hz")]
    BadCutoff { cutoff: f64, fs: f64 },
}

/// Natural cubic spline through a set of strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<NaturalCubicSpline, crate::trajectory::TrajectoryError> {
        use crate::trajectory::TrajectoryError;
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(TrajectoryError::TooFewSamples(n.min(y.len())));
        }
        for i in 1..n {
            if !(x[i] > x[i - 1]) {
                return Err(TrajectoryError::NonMonotonicTime(i));
            }
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior tridiagonal system.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (1..k).rev() {
                m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
            }
        }
        Ok(NaturalCubicSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    /// Spline value at `t`; clamps to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        // Binary search for the bracketing interval.
        let i = match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let s = t - self.x[i];
        let b = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        let c = self.m[i] / 2.0;
        let d = (self.m[i + 1] - self.m[i]) / (6.0 * h);
        self.y[i] + s * (b + s * (c + s * d))
    }
}

/// Fixed-size view of a sample type as scalar channels, so the same
/// preprocessing runs on scalar and 3-vector series.
pub trait Sample: Copy {
    const DIM: usize;
    fn channel(&self, i: usize) -> f64;
    fn assemble(get: impl Fn(usize) -> f64) -> Self;
}

impl Sample for f64 {
    const DIM: usize = 1;
    fn channel(&self, _: usize) -> f64 {
        *self
    }
    fn assemble(get: impl Fn(usize) -> f64) -> Self {
        get(0)
    }
}

impl Sample for Vec3 {
    const DIM: usize = 3;
    fn channel(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
    fn assemble(get: impl Fn(usize) -> f64) -> Self {
        Vec3::new(get(0), get(1), get(2))
    }
}

/// Timestamped samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T: Sample> {
    pub t: Vec<f64>,
    pub values: Vec<T>,
}

impl<T: Sample> TimeSeries<T> {
    pub fn new(t: Vec<f64>, values: Vec<T>) -> Result<TimeSeries<T>, SigprocError> {
        if t.len() != values.len() || t.is_empty() {
            return Err(SigprocError::TooFewSamples { need: 1, found: t.len().min(values.len()) });
        }
        for i in 0..t.len() {
            if !t[i].is_finite() || (0..T::DIM).any(|c| !values[i].channel(c).is_finite()) {
                return Err(SigprocError::NonFinite(i));
            }
            if i > 0 && !(t[i] > t[i - 1]) {
                return Err(SigprocError::NonMonotonicTime(i));
            }
        }
        Ok(TimeSeries { t, values })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn channel_vec(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v.channel(c)).collect()
    }

    fn uniform_dt(&self) -> Result<f64, SigprocError> {
        if self.len() < 2 {
            return Err(SigprocError::TooFewSamples { need: 2, found: self.len() });
        }
        let dt = (self.t[self.len() - 1] - self.t[0]) / (self.len() - 1) as f64;
        for i in 1..self.len() {
            let got = self.t[i] - self.t[i - 1];
            if (got - dt).abs() > 1e-9 * dt.max(1e-9) {
                return Err(SigprocError::NonUniform { index: i, got, want: dt });
            }
        }
        Ok(dt)
    }
}

/// Resamples onto a uniform 1/90 s grid spanning the input range, using a
/// natural cubic spline through all input samples. Requires >= 4 samples.
pub fn resample_90<T: Sample>(series: &TimeSeries<T>) -> Result<TimeSeries<T>, SigprocError> {
    if series.len() < 4 {
        return Err(SigprocError::TooFewSamples { need: 4, found: series.len() });
    }
    let t0 = series.t[0];
    let t_last = *series.t.last().unwrap();
    let count = ((t_last - t0) * ANALYSIS_RATE_HZ + 1e-6).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| t0 + k as f64 / ANALYSIS_RATE_HZ).collect();

    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(T::DIM);
    for c in 0..T::DIM {
        let spline = NaturalCubicSpline::new(&series.t, &series.channel_vec(c))
            .expect("validated series");
        channels.push(grid.iter().map(|&g| spline.eval(g)).collect());
    }
    let values: Vec<T> = (0..count).map(|i| T::assemble(|c| channels[c][i])).collect();
    TimeSeries::new(grid, values)
}

/// Single-pass causal filtering (the literal reading of a recursive filter)
/// or zero-phase dual-pass filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    #[default]
    Causal,
    ZeroPhase,
}

impl FilterMode {
    pub fn label(self) -> &'static str {
        match self {
            FilterMode::Causal => "causal",
            FilterMode::ZeroPhase => "zero-phase",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Bilinear transform of an analog second-order lowpass section with
    /// damping `zeta`, prewarped so the -3 dB point of the cascade lands on
    /// `cutoff_hz` exactly.
    fn lowpass(zeta: f64, cutoff_hz: f64, fs: f64) -> Biquad {
        let wa = (std::f64::consts::PI * cutoff_hz / fs).tan();
        let wa2 = wa * wa;
        let d = wa2 + 2.0 * zeta * wa + 1.0;
        Biquad {
            b0: wa2 / d,
            b1: 2.0 * wa2 / d,
            b2: wa2 / d,
            a1: 2.0 * (wa2 - 1.0) / d,
            a2: (wa2 - 2.0 * zeta * wa + 1.0) / d,
        }
    }

    /// Runs the section over `x` in place, with the internal state primed to
    /// the steady state of the first sample (no startup transient on signals
    /// with nonzero initial value).
    fn run(&self, x: &mut [f64]) {
        let x0 = x[0];
        // Direct form II transposed; steady state for constant input x0
        // (unit DC gain makes the steady output x0 as well).
        let mut s2 = (self.b2 - self.a2) * x0;
        let mut s1 = (self.b1 - self.a1) * x0 + s2;
        for v in x.iter_mut() {
            let xi = *v;
            let y = self.b0 * xi + s1;
            s1 = self.b1 * xi - self.a1 * y + s2;
            s2 = self.b2 * xi - self.a2 * y;
            *v = y;
        }
    }
}

/// Low-pass Butterworth filter over a uniformly sampled series.
///
/// `order` must be even (cascaded second-order sections). The default
/// analysis configuration is order 4, 10 Hz cutoff, causal.
pub fn butter_lowpass<T: Sample>(
    series: &TimeSeries<T>,
    order: usize,
    cutoff_hz: f64,
    mode: FilterMode,
) -> Result<TimeSeries<T>, SigprocError> {
    let dt = series.uniform_dt()?;
    let fs = 1.0 / dt;
    if order == 0 || order % 2 != 0 {
        return Err(SigprocError::BadFilterOrder(order));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(SigprocError::BadCutoff { cutoff: cutoff_hz, fs });
    }
    let sections: Vec<Biquad> = (0..order / 2)
        .map(|k| {
            let zeta = ((2 * k + 1) as f64 * std::f64::consts::PI / (2.0 * order as f64)).sin();
            Biquad::lowpass(zeta, cutoff_hz, fs)
        })
        .collect();

    let mut channels: Vec<Vec<f64>> = (0..T::DIM).map(|c| series.channel_vec(c)).collect();
    for ch in channels.iter_mut() {
        for s in &sections {
            s.run(ch);
        }
        if mode == FilterMode::ZeroPhase {
            ch.reverse();
            for s in &sections {
                s.run(ch);
            }
            ch.reverse();
        }
    }
    let values: Vec<T> = (0..series.len()).map(|i| T::assemble(|c| channels[c][i])).collect();
    TimeSeries::new(series.t.clone(), values)
}

/// Time derivative with central differences in the interior and one-sided
/// differences at the two ends (the MATLAB `gradient` convention).
pub fn gradient_velocity<T: Sample>(series: &TimeSeries<T>) -> Result<TimeSeries<T>, SigprocError> {
    let dt = series.uniform_dt()?;
    let n = series.len();
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(T::DIM);
    for c in 0..T::DIM {
        let y = series.channel_vec(c);
        let mut v = vec![0.0; n];
        v[0] = (y[1] - y[0]) / dt;
        v[n - 1] = (y[n - 1] - y[n - 2]) / dt;
        for i in 1..n - 1 {
            v[i] = (y[i + 1] - y[i - 1]) / (2.0 * dt);
        }
        channels.push(v);
    }
    let values: Vec<T> = (0..n).map(|i| T::assemble(|c| channels[c][i])).collect();
    TimeSeries::new(series.t.clone(), values)
}
