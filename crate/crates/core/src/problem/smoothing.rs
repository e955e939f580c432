//! Bump kernel, the convex barrier built from it, and kernel smoothing of
//! bounded functions.
//!
//! All convolutions use tensor-product Gauss–Legendre rules on the kernel
//! support `[-1, 1]^d`. The discrete kernel weights are renormalized to sum to
//! one, so smoothing is an average: it preserves constants exactly and never
//! increases the sup norm.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::quadrature::{composite, gauss_legendre, tensor};

fn unit_ball_integral(d: usize) -> f64 {
    // |S^{d-1}| * int_0^1 r^{d-1} exp(1/(r^2-1)) dr
    let surface = 2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d);
    let (r, w) = composite(0.0, 1.0, 64, 16);
    let radial: f64 = r
        .iter()
        .zip(&w)
        .map(|(&r, &w)| w * r.powi(d as i32 - 1) * (1.0 / (r * r - 1.0)).exp())
        .sum();
    surface * radial
}

/// `Gamma(d/2)` for positive integers `d`.
fn gamma_half(d: usize) -> f64 {
    if d.is_multiple_of(2) {
        (1..d / 2).map(|k| k as f64).product()
    } else {
        // Gamma(1/2) * prod_{k=0}^{(d-3)/2} (k + 1/2)
        let mut g = PI.sqrt();
        let mut a = 0.5;
        while a < d as f64 / 2.0 - 1e-12 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

/// Normalizing constant of the bump kernel in dimension `d`.
pub fn bump_normalizer(d: usize) -> f64 {
    static CACHE: OnceLock<[f64; 4]> = OnceLock::new();
    if (1..=4).contains(&d) {
        CACHE.get_or_init(|| [1, 2, 3, 4].map(|d| 1.0 / unit_ball_integral(d)))[d - 1]
    } else {
        1.0 / unit_ball_integral(d)
    }
}

/// Mass of the normalized bump on `[-1, 1]^d` by a composite Gauss rule that
/// does not reuse the radial normalization (`d <= 2`).
pub fn bump_mass(d: usize) -> f64 {
    assert!((1..=2).contains(&d), "bump_mass supports d = 1 or 2");
    let (x, w) = if d == 1 { composite(-1.0, 1.0, 40, 20) } else { composite(-1.0, 1.0, 20, 16) };
    if d == 1 {
        return x.iter().zip(&w).map(|(x, w)| w * bump(&[*x])).sum();
    }
    let mut m = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for (xj, wj) in x.iter().zip(&w) {
            m += wi * wj * bump(&[*xi, *xj]);
        }
    }
    m
}

fn bump_unnormalized(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// Unit-mass bump `c * exp(1/(|x|^2 - 1))` on the open unit ball, zero outside.
pub fn bump(x: &[f64]) -> f64 {
    let v = bump_unnormalized(x);
    if v == 0.0 {
        0.0
    } else {
        bump_normalizer(x.len()) * v
    }
}

fn bump_gradient(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 >= 1.0 {
        return vec![0.0; x.len()];
    }
    let rho = bump(x);
    let s = -2.0 * rho / ((r2 - 1.0) * (r2 - 1.0));
    x.iter().map(|v| s * v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierConfig {
    pub delta: f64,
    pub points_per_axis: usize,
}

impl Default for MollifierConfig {
    fn default() -> Self {
        MollifierConfig { delta: 0.1, points_per_axis: 32 }
    }
}

/// Discrete unit-mass kernel: support points in `[-1,1]^d` with weights
/// `w_i * rho(u_i)` normalized to sum to one, and matching gradient weights.
#[derive(Debug, Clone)]
struct Kernel {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    grad_weights: Vec<Vec<f64>>,
}

impl Kernel {
    fn new(d: usize, per_axis: usize) -> Self {
        let (x, w) = gauss_legendre(per_axis);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut grad_weights = Vec::new();
        for (p, qw) in tensor(&x, &w, d) {
            let r = bump(&p);
            if r > 0.0 {
                weights.push(qw * r);
                grad_weights.push(bump_gradient(&p).into_iter().map(|g| qw * g).collect::<Vec<_>>());
                points.push(p);
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        for g in &mut grad_weights {
            for v in g.iter_mut() {
                *v /= total;
            }
        }
        Kernel { points, weights, grad_weights }
    }
}

/// Smoothed version of a bounded function: `phi_delta(x) = sum_i w_i phi(x - delta u_i)`.
pub struct Mollified<F> {
    phi: F,
    delta: f64,
    kernel: Kernel,
}

impl<F: Fn(&[f64]) -> f64> Mollified<F> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut shifted = vec![0.0; x.len()];
        let mut acc = 0.0;
        for (u, w) in self.kernel.points.iter().zip(&self.kernel.weights) {
            for ((s, xi), ui) in shifted.iter_mut().zip(x).zip(u) {
                *s = xi - self.delta * ui;
            }
            acc += w * (self.phi)(&shifted);
        }
        acc
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Kernel smoothing of `phi: R^d -> R` at radius `config.delta`.
pub fn mollify<F: Fn(&[f64]) -> f64>(phi: F, d: usize, config: MollifierConfig) -> Mollified<F> {
    assert!(config.delta > 0.0, "mollifier radius must be positive");
    Mollified { phi, delta: config.delta, kernel: Kernel::new(d, config.points_per_axis) }
}

/// `g`, `Dg`, `D^2 g` at one point. The Hessian is row-major `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// Double convolution of `(|y| - 2)^+` with the bump kernel.
///
/// `g(x) = sum_{i,j} w_i w_j h(x - u_i - u_j)`, a positive combination of
/// translates of a convex function, so the discrete barrier is convex as well.
/// `Dg` differentiates `h` under the sum; `D^2 g` moves the second derivative
/// onto one kernel factor so that every integrand stays bounded.
#[derive(Debug, Clone)]
pub struct Barrier {
    d: usize,
    kernel: Kernel,
}

impl Barrier {
    pub fn new(d: usize, points_per_axis: usize) -> Self {
        Barrier { d, kernel: Kernel::new(d, points_per_axis) }
    }

    /// Defaults: 32 points per axis for `d = 1`, 16 otherwise.
    pub fn with_default_rule(d: usize) -> Self {
        Self::new(d, if d == 1 { 32 } else { 16 })
    }

    pub fn eval(&self, x: &[f64]) -> BarrierEval {
        let d = self.d;
        assert_eq!(x.len(), d);
        let k = &self.kernel;
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut s = vec![0.0; d];
        for (ui, wi) in k.points.iter().zip(&k.weights) {
            for ((uj, wj), gj) in k.points.iter().zip(&k.weights).zip(&k.grad_weights) {
                for a in 0..d {
                    s[a] = x[a] - ui[a] - uj[a];
                }
                let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r <= 2.0 {
                    continue;
                }
                let w = wi * wj;
                value += w * (r - 2.0);
                for a in 0..d {
                    let dh = s[a] / r;
                    grad[a] += w * dh;
                    for b in 0..d {
                        hess[a * d + b] += wi * dh * gj[b];
                    }
                }
            }
        }
        for a in 0..d {
            for b in (a + 1)..d {
                let avg = 0.5 * (hess[a * d + b] + hess[b * d + a]);
                hess[a * d + b] = avg;
                hess[b * d + a] = avg;
            }
        }
        BarrierEval { value, grad, hess }
    }

    /// Sup of `|Dg| + |D^2 g|` (Euclidean and Frobenius norms) over the probe points.
    pub fn derivative_bound<'a>(&self, probes: impl IntoIterator<Item = &'a [f64]>) -> f64 {
        probes
            .into_iter()
            .map(|x| {
                let e = self.eval(x);
                let g = e.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                let h = e.hess.iter().map(|v| v * v).sum::<f64>().sqrt();
                g + h
            })
            .fold(0.0, f64::max)
    }
}

/// One-off barrier evaluation with the default rule.
pub fn barrier_g(x: &[f64]) -> BarrierEval {
    Barrier::with_default_rule(x.len()).eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bump_support_and_symmetry() {
        assert_eq!(bump(&[1.0]), 0.0);
        assert_eq!(bump(&[0.6, 0.8]), 0.0);
        assert_eq!(bump(&[3.0, 0.0]), 0.0);
        assert!(bump(&[0.99]) > 0.0);
        assert!(bump(&[0.5, -0.5]) > 0.0);
        for x in [[0.1, 0.2], [-0.7, 0.3], [0.0, 0.95]] {
            assert_eq!(bump(&x), bump(&[-x[0], -x[1]]));
        }
    }

    #[test]
    fn bump_has_unit_mass_on_the_box() {
        // Independent of the radial normalization: composite rule on [-1,1]^d.
        let (x, w) = composite(-1.0, 1.0, 40, 20);
        let m1: f64 = x.iter().zip(&w).map(|(x, w)| w * bump(&[*x])).sum();
        assert!((m1 - 1.0).abs() < 1e-6, "{m1}");
        let (x, w) = composite(-1.0, 1.0, 20, 16);
        let mut m2 = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                m2 += wi * wj * bump(&[*xi, *xj]);
            }
        }
        assert!((m2 - 1.0).abs() < 1e-6, "{m2}");
    }

    #[test]
    fn gamma_half_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(3) - 0.5 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(4), 1.0);
        assert_eq!(gamma_half(6), 2.0);
    }

    #[test]
    fn barrier_basic_shape() {
        let g = Barrier::with_default_rule(1);
        assert_eq!(g.eval(&[0.0]).value, 0.0);
        for r in [0.0f64, 2.0, 5.0, 10.0] {
            for s in [-1.0, 1.0] {
                let v = g.eval(&[s * r]).value;
                assert!(v > r - 3.0, "g({}) = {v}", s * r);
            }
        }
        let g2 = Barrier::with_default_rule(2);
        assert_eq!(g2.eval(&[0.0, 0.0]).value, 0.0);
        assert!(g2.eval(&[3.0, 4.0]).value > 2.0);
    }

    #[test]
    fn barrier_derivatives_match_differences() {
        let g = Barrier::with_default_rule(1);
        for x in [2.3, 3.1, -2.7, 6.0] {
            let e = g.eval(&[x]);
            let h = 1e-4;
            let fd = (g.eval(&[x + h]).value - g.eval(&[x - h]).value) / (2.0 * h);
            assert!((e.grad[0] - fd).abs() < 1e-3, "x={x}: {} vs {fd}", e.grad[0]);
            // The discrete gradient is piecewise constant between quadrature
            // breakpoints, so difference it over a window spanning many of them.
            let fd2 = (g.eval(&[x + 0.1]).grad[0] - g.eval(&[x - 0.1]).grad[0]) / 0.2;
            assert!((e.hess[0] - fd2).abs() < 0.05, "x={x}: {} vs {fd2}", e.hess[0]);
        }
    }

    #[test]
    fn mollify_preserves_constants_and_sup() {
        let c = mollify(|_: &[f64]| 2.5, 1, MollifierConfig { delta: 0.3, points_per_axis: 32 });
        for x in [-3.0, 0.0, 1.7] {
            assert!((c.eval(&[x]) - 2.5).abs() < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let knots: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pl = |x: &[f64]| {
            let t = (x[0] + 4.0).clamp(0.0, 8.0);
            let i = (t.floor() as usize).min(7);
            knots[i] + (t - i as f64) * (knots[i + 1] - knots[i])
        };
        let sup = knots.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let m = mollify(pl, 1, MollifierConfig { delta: 0.5, points_per_axis: 32 });
        for i in 0..200 {
            let x = -5.0 + 10.0 * i as f64 / 199.0;
            assert!(m.eval(&[x]).abs() <= sup + 1e-12);
        }
    }
}
