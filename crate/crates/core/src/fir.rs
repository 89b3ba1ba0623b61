//! Windowed-sinc FIR filter design, same-length convolution with exact
//! adjoint, and arbitrary-rate sinc resampling.

use std::f64::consts::PI;

/// Taps used by the spectral filtering attacks.
pub(crate) const FILTER_TAPS: usize = 511;

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc lowpass, odd length, unit DC gain.
/// `cutoff` is in cycles per sample, 0 < cutoff < 0.5.
pub(crate) fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    debug_assert!(taps % 2 == 1);
    debug_assert!(cutoff > 0.0 && cutoff < 0.5);
    let center = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - center;
            2.0 * cutoff * sinc(2.0 * cutoff * x) * hamming(n, taps)
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Highpass by spectral inversion of the complementary lowpass.
pub(crate) fn highpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let mut h: Vec<f64> = lowpass_taps(cutoff, taps).iter().map(|v| -v).collect();
    h[taps / 2] += 1.0;
    h
}

/// Bandpass as the difference of two lowpass designs.
pub(crate) fn bandpass_taps(low: f64, high: f64, taps: usize) -> Vec<f64> {
    debug_assert!(low < high);
    let lo = lowpass_taps(low, taps);
    let hi = lowpass_taps(high, taps);
    hi.iter().zip(&lo).map(|(a, b)| a - b).collect()
}

/// Uniform moving-average kernel.
pub(crate) fn moving_average_taps(window: usize) -> Vec<f64> {
    vec![1.0 / window as f64; window]
}

/// Same-length convolution with the kernel centered at `center`
/// (zero-padded edges): `y[n] = sum_j h[j] * x[n - j + center]`.
pub(crate) fn convolve_same(x: &[f64], h: &[f64], center: usize) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    for (i, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        // j ranges where 0 <= i - j + center < n
        let j_lo = (i + center + 1).saturating_sub(n);
        let j_hi = (i + center).min(h.len() - 1);
        for j in j_lo..=j_hi {
            acc += h[j] * x[i + center - j];
        }
        *out = acc;
    }
    y
}

/// Adjoint of [`convolve_same`]: correlation with the same kernel,
/// `xbar[m] = sum_j h[j] * ybar[m + j - center]`.
pub(crate) fn convolve_same_adjoint(ybar: &[f64], h: &[f64], center: usize) -> Vec<f64> {
    let n = ybar.len();
    let mut xbar = vec![0.0; n];
    for (m, out) in xbar.iter_mut().enumerate() {
        let mut acc = 0.0;
        // j ranges where 0 <= m + j - center < n
        let j_lo = center.saturating_sub(m);
        let j_hi = (center + n - 1 - m).min(h.len() - 1);
        for j in j_lo..=j_hi {
            acc += h[j] * ybar[m + j - center];
        }
        *out = acc;
    }
    xbar
}

/// Blackman window on [-1, 1].
fn blackman(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let x = PI * (t + 1.0); // map [-1,1] to [0, 2pi]
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

/// Windowed-sinc resampling kernel description.
pub(crate) struct SincResampler {
    /// Output position advance per output sample, in input samples.
    step: f64,
    /// Anti-alias cutoff in cycles per input sample.
    cutoff: f64,
    /// Kernel half-width in input samples.
    half_width: f64,
    out_len: usize,
    in_len: usize,
}

/// Zero crossings retained on each side of the sinc kernel.
const SINC_ZERO_CROSSINGS: f64 = 32.0;
/// Cutoff safety factor below the tighter Nyquist.
const SINC_ROLLOFF: f64 = 0.945;

impl SincResampler {
    pub fn new(in_len: usize, from_rate: u32, to_rate: u32) -> Self {
        let ratio = to_rate as f64 / from_rate as f64;
        let cutoff = 0.5 * ratio.min(1.0) * SINC_ROLLOFF;
        let half_width = SINC_ZERO_CROSSINGS / (2.0 * cutoff);
        let step = 1.0 / ratio;
        let out_len = ((in_len as f64) * ratio).floor() as usize;
        Self {
            step,
            cutoff,
            half_width,
            out_len,
            in_len,
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    #[inline]
    fn kernel(&self, t: f64) -> f64 {
        // includes the 2*cutoff gain so unit-DC input stays unit
        2.0 * self.cutoff * sinc(2.0 * self.cutoff * t) * blackman(t / self.half_width)
    }

    /// `y[i] = sum_j K(i*step - j) x[j]`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_len);
        let mut y = vec![0.0; self.out_len];
        for (i, out) in y.iter_mut().enumerate() {
            let pos = i as f64 * self.step;
            let j_lo = ((pos - self.half_width).ceil() as isize).max(0) as usize;
            let j_hi = ((pos + self.half_width).floor() as isize).min(self.in_len as isize - 1);
            if j_hi < 0 {
                continue;
            }
            let mut acc = 0.0;
            for j in j_lo..=j_hi as usize {
                acc += self.kernel(pos - j as f64) * x[j];
            }
            *out = acc;
        }
        y
    }

    /// Adjoint of [`Self::forward`]: `xbar[j] = sum_i K(i*step - j) ybar[i]`.
    pub fn adjoint(&self, ybar: &[f64]) -> Vec<f64> {
        debug_assert_eq!(ybar.len(), self.out_len);
        let mut xbar = vec![0.0; self.in_len];
        for (j, out) in xbar.iter_mut().enumerate() {
            // |i*step - j| < half_width
            let i_lo = (((j as f64 - self.half_width) / self.step).ceil() as isize).max(0) as usize;
            let i_hi = (((j as f64 + self.half_width) / self.step).floor() as isize)
                .min(self.out_len as isize - 1);
            if i_hi < 0 {
                continue;
            }
            let mut acc = 0.0;
            for i in i_lo..=i_hi as usize {
                acc += self.kernel(i as f64 * self.step - j as f64) * ybar[i];
            }
            *out = acc;
        }
        xbar
    }
}
