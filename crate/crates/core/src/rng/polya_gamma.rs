//! Exact Pólya-gamma draws.
//!
//! `PG(1, c)` is sampled with Devroye's alternating-series rejection method
//! (truncation point 0.64) on the Jacobi variable `J*(1, c/2) = 4 PG(1, c)`.
//! Integer shapes `b` are handled as sums of `b` independent `PG(1, c)` draws.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;

/// Precomputed proposal constants for `PG(1, c)`; reusable across draws that
/// share `c`.
#[derive(Debug, Clone, Copy)]
pub struct PolyaGamma {
    /// `|c| / 2`
    z: f64,
    /// `pi^2 / 8 + z^2 / 2`
    k: f64,
    /// Probability of proposing from the exponential tail.
    p_exp: f64,
}

impl PolyaGamma {
    pub fn new(c: f64) -> Self {
        let z = 0.5 * c.abs();
        let k = 0.125 * PI * PI + 0.5 * z * z;
        PolyaGamma {
            z,
            k,
            p_exp: exponential_mass(z, k),
        }
    }

    /// Mean of `PG(b, c)`: `b tanh(c/2) / (2c)`, `b/4` at `c = 0`.
    pub fn mean(b: f64, c: f64) -> f64 {
        if c.abs() < 1e-8 {
            b * (0.25 - c * c / 48.0)
        } else {
            b * (0.5 * c).tanh() / (2.0 * c)
        }
    }

    /// One `PG(1, c)` draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = if rng.random::<f64>() < self.p_exp {
                let e: f64 = Exp1.sample(rng);
                TRUNC + e / self.k
            } else {
                truncated_inverse_gaussian(self.z, rng)
            };
            // Alternating series squeeze.
            let mut s = series_term(0, x);
            let y = rng.random::<f64>() * s;
            let mut n = 0;
            loop {
                n += 1;
                if n % 2 == 1 {
                    s -= series_term(n, x);
                    if y <= s {
                        return 0.25 * x;
                    }
                } else {
                    s += series_term(n, x);
                    if y > s {
                        break;
                    }
                }
            }
        }
    }

    /// Sum of `b` independent `PG(1, c)` draws.
    pub fn draw_sum<R: Rng + ?Sized>(&self, b: u32, rng: &mut R) -> f64 {
        (0..b).map(|_| self.draw(rng)).sum()
    }
}

/// Draws `PG(b, c)` for a positive integer shape `b`.
pub fn sample_polya_gamma<R: Rng + ?Sized>(b: u32, c: f64, rng: &mut R) -> Result<f64> {
    if b == 0 {
        return Err(Error::Precondition(
            "Pólya-gamma shape must be at least 1".into(),
        ));
    }
    if !c.is_finite() {
        return Err(Error::Precondition(format!(
            "Pólya-gamma tilt must be finite, got {c}"
        )));
    }
    Ok(PolyaGamma::new(c).draw_sum(b, rng))
}

/// Coefficient `a_n(x)` of the alternating series for the `J*(1)` density.
fn series_term(n: u32, x: f64) -> f64 {
    let kn = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        kn * (-0.5 * kn * kn * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * (0.5 * PI * x).ln() + kn.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// `log Phi(x)` for the standard normal CDF.
fn log_norm_cdf(x: f64) -> f64 {
    if x > -35.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Mixture weight of the exponential proposal, `p / (p + q)`.
fn exponential_mass(z: f64, k: f64) -> f64 {
    let inv_sqrt_t = (1.0 / TRUNC).sqrt();
    let b = inv_sqrt_t * (TRUNC * z - 1.0);
    let a = -inv_sqrt_t * (TRUNC * z + 1.0);
    let x0 = k.ln() + k * TRUNC;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let q_over_p = 2.0 * FRAC_2_PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse-Gaussian draw with mean `1/z`, shape 1, truncated to `(0, TRUNC]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    if z < 1.0 / TRUNC {
        // Mean beyond the truncation point: propose from the truncated
        // Levy law (z = 0) and accept with exp(-z^2 x / 2).
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    let d = 1.0 + e1 * TRUNC;
                    break TRUNC / (d * d);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}
