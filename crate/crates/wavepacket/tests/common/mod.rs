//! Shared analytic oracles for the integration tests. Everything here is
//! derived in closed form and evaluated independently of the library's
//! computational paths (plain Riemann sums over analytic expressions).

#![allow(dead_code)]

use num_complex::Complex64;

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: actual {actual:.12e}, expected {expected:.12e}, |diff| {:.3e} > {tol:.1e}",
        (actual - expected).abs()
    );
}

pub fn assert_rel_close(actual: f64, expected: f64, rel: f64, what: &str) {
    let denom = expected.abs().max(1e-300);
    assert!(
        ((actual - expected) / denom).abs() <= rel,
        "{what}: actual {actual:.12e}, expected {expected:.12e}, rel {:.3e} > {rel:.1e}",
        ((actual - expected) / denom).abs()
    );
}

/// Free 1-D Gaussian packet, analytic solution. `sigma0` is the initial
/// standard deviation of the *density*.
pub struct FreeGaussianOracle {
    pub x0: f64,
    pub p0: f64,
    pub sigma0: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl FreeGaussianOracle {
    pub fn spread_rate(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.sigma0 * self.sigma0)
    }

    /// Density variance at time `t`.
    pub fn variance(&self, t: f64) -> f64 {
        let a = self.spread_rate();
        self.sigma0 * self.sigma0 * (1.0 + (a * t).powi(2))
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.x0 + self.p0 * t / self.mass
    }

    /// Bohm velocity field `v(x, t) = p0/m + (x - mean) * beta(t)`.
    pub fn velocity_field(&self, x: f64, t: f64) -> f64 {
        let a = self.spread_rate();
        let beta = a * a * t / (1.0 + (a * t).powi(2));
        self.p0 / self.mass + (x - self.mean(t)) * beta
    }
}

/// Coherent state of a harmonic oscillator: classical centre motion with a
/// rigid minimal-width envelope.
pub struct CoherentOracle {
    pub x0: f64,
    pub p0: f64,
    pub omega: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl CoherentOracle {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn mean_x(&self, t: f64) -> f64 {
        self.x0 * (self.omega * t).cos() + self.p0 / (self.mass * self.omega) * (self.omega * t).sin()
    }

    pub fn mean_p(&self, t: f64) -> f64 {
        self.p0 * (self.omega * t).cos() - self.mass * self.omega * self.x0 * (self.omega * t).sin()
    }

    pub fn sigma_sq(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.omega)
    }
}

/// Normalized 1-D oscillator eigenfunction with explicit low-order Hermite
/// polynomials (independent of the library's recurrence).
pub fn oscillator_eigenfunction(n: usize, m: f64, omega: f64, hbar: f64, x: f64) -> f64 {
    let u = (m * omega / hbar).sqrt() * x;
    let h = match n {
        0 => 1.0,
        1 => 2.0 * u,
        2 => 4.0 * u * u - 2.0,
        3 => 8.0 * u.powi(3) - 12.0 * u,
        _ => panic!("oracle covers n <= 3"),
    };
    let norm = (m * omega / (std::f64::consts::PI * hbar)).powf(0.25)
        / (2.0f64.powi(n as i32) * (1..=n).map(|k| k as f64).product::<f64>().max(1.0)).sqrt();
    norm * h * (-0.5 * u * u).exp()
}

/// Independent quadrature of `f` over `[a, b]` with `n` midpoint cells.
pub fn midpoint_quadrature<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Complex analytic Gaussian with momentum boost, as sampled by the tests.
pub fn gaussian_sample(x: f64, x0: f64, p0: f64, sigma: f64, hbar: f64) -> Complex64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).powf(0.25);
    let arg = -(x - x0).powi(2) / (4.0 * sigma * sigma);
    Complex64::from_polar(norm * arg.exp(), p0 * x / hbar)
}
