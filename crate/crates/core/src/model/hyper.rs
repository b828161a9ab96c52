use serde::{Deserialize, Serialize};

use super::logit;
use crate::data::{edge_count, Dataset};
use crate::error::{Error, Result};

/// Prior settings and truncation bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    /// CRP concentration.
    pub alpha_c: f64,
    /// Dirichlet parameters of the choice probabilities, length `V`.
    pub alpha: Vec<f64>,
    /// Prior means of the similarities, length `L`.
    pub mu: Vec<f64>,
    /// Prior variances of the similarities, length `L`.
    pub sigma2: Vec<f64>,
    pub a1: f64,
    pub a2: f64,
    /// Upper bound on mixture components.
    #[serde(rename = "H")]
    pub h: usize,
    /// Upper bound on latent dimensions.
    #[serde(rename = "R")]
    pub r: usize,
}

/// Optional replacements for individual hyperparameters, read from a JSON
/// file and applied over the empirical defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub alpha_c: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    #[serde(rename = "H")]
    pub h: Option<usize>,
    #[serde(rename = "R")]
    pub r: Option<usize>,
}

impl Hyperparameters {
    pub const DEFAULT_A1: f64 = 2.5;
    pub const DEFAULT_A2: f64 = 3.5;
    pub const DEFAULT_SIGMA2: f64 = 10.0;
    pub const DEFAULT_H: usize = 15;
    pub const DEFAULT_R: usize = 10;
    pub const ALPHA_FLOOR: f64 = 0.01;

    /// Data-driven defaults: `mu_l` is the logit of the observed edge
    /// frequency, clamped to `[logit(1/2n), logit(1 - 1/2n)]`, and `alpha_v` the
    /// mean count per agency floored at 0.01.
    pub fn empirical(data: &Dataset, h: usize, r: usize, alpha_c: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidData("dataset has no agencies".into()));
        }
        let n = data.len() as f64;
        let v = data.v_count();
        let l = data.edge_count();
        let mut alpha = vec![0.0; v];
        let mut freq = vec![0.0; l];
        for a in data.agencies() {
            for (s, &c) in alpha.iter_mut().zip(&a.counts) {
                *s += c as f64;
            }
            for e in a.network.edges() {
                freq[e] += 1.0;
            }
        }
        let alpha = alpha
            .iter()
            .map(|s| (s / n).max(Self::ALPHA_FLOOR))
            .collect();
        let lo = 1.0 / (2.0 * n);
        let mu = freq
            .iter()
            .map(|f| logit((f / n).clamp(lo, 1.0 - lo)))
            .collect();
        let hp = Hyperparameters {
            alpha_c,
            alpha,
            mu,
            sigma2: vec![Self::DEFAULT_SIGMA2; l],
            a1: Self::DEFAULT_A1,
            a2: Self::DEFAULT_A2,
            h,
            r,
        };
        hp.validate(v)?;
        Ok(hp)
    }

    /// Replaces every field set in `overrides`, then revalidates.
    pub fn apply(mut self, overrides: &HyperOverrides, v_count: usize) -> Result<Self> {
        let o = overrides.clone();
        if let Some(x) = o.alpha_c {
            self.alpha_c = x;
        }
        if let Some(x) = o.alpha {
            self.alpha = x;
        }
        if let Some(x) = o.mu {
            self.mu = x;
        }
        if let Some(x) = o.sigma2 {
            self.sigma2 = x;
        }
        if let Some(x) = o.a1 {
            self.a1 = x;
        }
        if let Some(x) = o.a2 {
            self.a2 = x;
        }
        if let Some(x) = o.h {
            self.h = x;
        }
        if let Some(x) = o.r {
            self.r = x;
        }
        self.validate(v_count)?;
        Ok(self)
    }

    pub fn v_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn edge_count(&self) -> usize {
        self.mu.len()
    }

    /// Checks positivity constraints and that vector lengths match `V`.
    pub fn validate(&self, v_count: usize) -> Result<()> {
        let l = edge_count(v_count);
        let fail = |m: String| Err(Error::Precondition(format!("hyperparameters: {m}")));
        if !(self.alpha_c > 0.0 && self.alpha_c.is_finite()) {
            return fail(format!("alpha_c must be positive, got {}", self.alpha_c));
        }
        if self.alpha.len() != v_count {
            return fail(format!(
                "alpha has length {}, expected V={v_count}",
                self.alpha.len()
            ));
        }
        if let Some(v) = self.alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return fail(format!("alpha[{}] must be positive", v + 1));
        }
        if self.mu.len() != l || self.sigma2.len() != l {
            return fail(format!("mu and sigma2 must have length L={l}"));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return fail("mu must be finite".into());
        }
        if let Some(e) = self
            .sigma2
            .iter()
            .position(|&s| !(s > 0.0 && s.is_finite()))
        {
            return fail(format!("sigma2[{}] must be positive", e + 1));
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0) {
            return fail("a1 and a2 must be positive".into());
        }
        if self.h < 1 || self.r < 1 {
            return fail("H and R must be at least 1".into());
        }
        Ok(())
    }
}
