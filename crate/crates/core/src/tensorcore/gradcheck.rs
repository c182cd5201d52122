//! Central finite differences, used as an independent check on reverse-mode
//! gradients.

use super::tensor::Tensor;

/// Numerical gradient of `f` at `x` by central differences with step `h`.
pub fn finite_difference(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f32) -> Tensor {
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + h;
        let fp = f(&xp);
        xp.data_mut()[i] = orig - h;
        let fm = f(&xp);
        xp.data_mut()[i] = orig;
        let step = (orig + h) as f64 - (orig - h) as f64;
        out.push(((fp - fm) / step) as f32);
    }
    Tensor::new(x.shape(), out).expect("same shape")
}

/// Largest element-wise relative error `|a-n| / max(|a|, |n|, floor)` where
/// `floor = floor_frac * max|n|` absorbs entries whose true gradient is near
/// zero and therefore dominated by `f32` rounding in the difference quotient.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor_frac: f32) -> f32 {
    assert_eq!(analytic.shape(), numeric.shape());
    let floor = (floor_frac * numeric.max_abs()).max(1e-6);
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f32::max)
}

/// Outcome of [`piecewise_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiecewiseCheck {
    pub max_rel_err: f32,
    pub checked: usize,
    pub total: usize,
}

impl PiecewiseCheck {
    pub fn smooth_fraction(&self) -> f32 {
        if self.total == 0 {
            1.0
        } else {
            self.checked as f32 / self.total as f32
        }
    }
}

/// Central differences for piecewise-smooth functions (ReLU, max-pool,
/// nearest neighbours). For each entry the steps `h, h/3, h/10` are tried in
/// turn; a step is usable when its forward and backward quotients agree to
/// within `kink_frac · max|analytic|` plus their rounding noise, i.e. no
/// switch lies inside it. Entries with no usable step are
/// skipped; the rest are compared like [`max_relative_error`] with the floor
/// taken relative to `max|analytic|`.
pub fn piecewise_check(
    analytic: &Tensor,
    f: impl Fn(&Tensor) -> f64,
    x: &Tensor,
    h: f32,
    kink_frac: f32,
    floor_frac: f32,
) -> PiecewiseCheck {
    assert_eq!(analytic.shape(), x.shape());
    let f0 = f(x);
    let scale = analytic.max_abs().max(1e-6) as f64;
    // Quantization of an f32-valued function near f0.
    let rounding = f32::EPSILON as f64 * f0.abs();
    let mut report = PiecewiseCheck { max_rel_err: 0.0, checked: 0, total: x.len() };
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        for step in [h, h / 3.0, h / 10.0] {
            xp.data_mut()[i] = orig + step;
            let fp = f(&xp);
            let up = xp.data()[i] as f64 - orig as f64;
            xp.data_mut()[i] = orig - step;
            let fm = f(&xp);
            let down = orig as f64 - xp.data()[i] as f64;
            xp.data_mut()[i] = orig;
            let (fwd, bwd) = ((fp - f0) / up, (f0 - fm) / down);
            if (fwd - bwd).abs() > kink_frac as f64 * scale + 2.0 * rounding / up.min(down) {
                continue;
            }
            report.checked += 1;
            let num = (fp - fm) / (up + down);
            let a = analytic.data()[i] as f64;
            // Differences below the quantization noise of the difference quotient are unresolvable.
            let noise = 4.0 * rounding / (up + down);
            let err = ((a - num).abs() - noise).max(0.0) / a.abs().max(num.abs()).max(floor_frac as f64 * scale);
            report.max_rel_err = report.max_rel_err.max(err as f32);
            break;
        }
    }
    report
}
