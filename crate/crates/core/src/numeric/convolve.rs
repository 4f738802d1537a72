use super::{GridFunction, NumericError};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Convolve a grid-sampled function with a kernel density.
///
/// The kernel is sampled on the same step at offsets -m..=m where
/// m = ceil(kernel_halfwidth / step), then normalized to unit discrete
/// mass so constants pass through unchanged. The returned grid is the
/// input trimmed by m points on each side: only points whose full kernel
/// window lies inside the input span are kept.
///
/// `kernel_halfwidth` should cover essentially all kernel mass (six
/// standard deviations for a Gaussian); the input grid must be padded
/// by at least that much on both sides of the region of interest.
pub fn fft_convolve_grid(
    f: &GridFunction,
    kernel_density: impl Fn(f64) -> f64,
    kernel_halfwidth: f64,
) -> Result<GridFunction, NumericError> {
    if !kernel_halfwidth.is_finite() || kernel_halfwidth <= 0.0 {
        return Err(NumericError::Domain {
            context: format!("kernel halfwidth {kernel_halfwidth} (must be positive)"),
        });
    }
    let h = f.step();
    let n = f.len();
    let m = (kernel_halfwidth / h).ceil() as usize;

    // Resolution guard: a kernel with only a handful of samples across
    // its central two scales aliases badly. Halfwidth is read as six
    // scales, matching the Gaussian default.
    let central = 2.0 * kernel_halfwidth / 6.0;
    let samples = 2 * (central / h).floor() as usize + 1;
    if samples < 8 {
        return Err(NumericError::GridTooCoarse { step: h, samples });
    }
    if n < 2 * m + 2 {
        return Err(NumericError::GridTooShort { len: n, pad: m });
    }

    let mut weights = Vec::with_capacity(2 * m + 1);
    for j in -(m as isize)..=(m as isize) {
        let w = kernel_density(j as f64 * h);
        if !w.is_finite() || w < 0.0 {
            return Err(NumericError::Domain {
                context: format!("kernel density {w} at offset {}", j as f64 * h),
            });
        }
        weights.push(w);
    }
    let mass: f64 = weights.iter().sum();
    if mass <= 0.0 {
        return Err(NumericError::Domain {
            context: "kernel density sums to zero on the grid".to_string(),
        });
    }
    for w in &mut weights {
        *w /= mass;
    }

    // Full linear convolution via zero-padded FFT; with the kernel stored
    // at indices 0..=2m, entry k of the trimmed result is conv[k + 2m].
    let full_len = n + 2 * m;
    let fft_len = full_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);

    let mut fa: Vec<Complex<f64>> = f
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    let mut fb: Vec<Complex<f64>> = weights
        .iter()
        .map(|&w| Complex::new(w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (a, b) in fa.iter_mut().zip(&fb) {
        *a *= b;
    }
    inverse.process(&mut fa);

    let scale = 1.0 / fft_len as f64;
    let out: Vec<f64> = (0..n - 2 * m).map(|i| fa[i + 2 * m].re * scale).collect();
    GridFunction::new(f.start() + m as f64 * h, h, out)
}
