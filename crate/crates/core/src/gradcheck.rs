//! Central finite-difference gradient checking.

use serde::Serialize;

/// Outcome of comparing an analytic gradient to central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub coords_checked: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`, or 0 when both
    /// norms fall below `1e-8`.
    pub rel_error: f64,
    pub max_abs_error: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error < tol
    }
}

/// Central difference `(f(x + h e_i) − f(x − h e_i)) / 2h` at each index in `coords`.
pub fn numeric_gradient(x: &[f64], coords: &[usize], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    let rel = if scale < 1e-8 { 0.0 } else { diff / scale };
    let max_abs = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    GradCheck {
        coords_checked: analytic.len(),
        rel_error: rel,
        max_abs_error: max_abs,
    }
}

/// Check `analytic` (full gradient of `f` at `x`) on the listed coordinates.
pub fn check(x: &[f64], analytic: &[f64], coords: &[usize], h: f64, f: impl FnMut(&[f64]) -> f64) -> GradCheck {
    let numeric = numeric_gradient(x, coords, h, f);
    let picked: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
    compare(&picked, &numeric)
}
