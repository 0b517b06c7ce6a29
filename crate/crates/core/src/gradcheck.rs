//! Central finite differences against tape gradients.

use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-3;

/// Coordinates whose gradients are both below this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Central-difference gradient of a scalar function at `x`.
pub fn central_difference(x: &Tensor, step: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.data().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&Tensor::new(x.shape().to_vec(), probe.clone()).expect("shape"));
        probe[i] = orig - step;
        let down = f(&Tensor::new(x.shape().to_vec(), probe.clone()).expect("shape"));
        probe[i] = orig;
        g[i] = (up - down) / (2.0 * step);
    }
    Tensor::new(x.shape().to_vec(), g).expect("shape")
}

/// Relative disagreement between central differences at `h` and `h / 2`
/// above which the probe is taken to straddle a kink.
pub const KINK_TOL: f64 = 1e-4;

/// Central differences at `step`, plus whether any coordinate sits within
/// `step` of a point where the function is not smooth (a top-k switch, a
/// clamp, a min tie). On smooth stretches central differences at `h` and
/// `h / 2` agree to second order and the second difference halves with
/// `h`; a kink inside the probe, or exactly at `x`, breaks one of the two.
pub fn central_difference_checked(x: &Tensor, step: f64, mut f: impl FnMut(&Tensor) -> f64) -> (Tensor, bool) {
    let base = f(x);
    let mut probe = x.data().to_vec();
    let mut eval = |i: usize, d: f64, probe: &mut Vec<f64>| {
        let orig = probe[i];
        probe[i] = orig + d;
        let v = f(&Tensor::new(x.shape().to_vec(), probe.clone()).expect("shape"));
        probe[i] = orig;
        v
    };
    let mut g = vec![0.0; x.len()];
    let mut kinked = false;
    for i in 0..x.len() {
        let (up, down) = (eval(i, step, &mut probe), eval(i, -step, &mut probe));
        let (up2, down2) = (eval(i, step / 2.0, &mut probe), eval(i, -step / 2.0, &mut probe));
        let wide = (up - down) / (2.0 * step);
        let narrow = (up2 - down2) / step;
        let curve = (up - 2.0 * base + down) / step;
        let curve2 = (up2 - 2.0 * base + down2) / (step / 2.0);
        let scale = wide.abs().max(narrow.abs()).max(REL_FLOOR);
        kinked |= (wide - narrow).abs() > KINK_TOL * scale || (curve2 - curve / 2.0).abs() > KINK_TOL * scale;
        g[i] = wide;
    }
    (Tensor::new(x.shape().to_vec(), g).expect("shape"), kinked)
}

/// Worst per-coordinate relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub points: usize,
    pub worst_rel_error: f64,
    /// Random points redrawn because they sat next to a kink.
    pub redrawn: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst_rel_error <= FD_REL_TOL
    }
}
