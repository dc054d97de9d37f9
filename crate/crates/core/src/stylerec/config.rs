use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of the feed drawn from each source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedMix {
    pub cfcbf: f64,
    pub weekly_best: f64,
    pub segment_best: f64,
}

impl Default for FeedMix {
    fn default() -> Self {
        Self { cfcbf: 0.6, weekly_best: 0.2, segment_best: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderMix {
    pub latent: f64,
    pub graph: f64,
    pub segment: f64,
    pub popular: f64,
}

impl Default for LeaderMix {
    fn default() -> Self {
        Self { latent: 0.4, graph: 0.3, segment: 0.15, popular: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecConfig {
    pub lambda_o: f64,
    pub lambda_u: f64,
    pub lambda_cf: f64,
    /// Shrinkage added to the CF cosine denominator.
    pub shrinkage: f64,
    /// Recency exponent of the user style weights.
    pub alpha: f64,
    /// Daily decay rate of interaction weights.
    pub beta: f64,
    /// History window for user style vectors.
    pub history: usize,
    pub mix: FeedMix,
    /// A user whose freshest interaction decays below this is served the global lists.
    pub eps_decay: f64,
    pub view_weight: f64,
    pub like_weight: f64,
    /// Neighbors consulted by user-based CF.
    pub neighbor_count: usize,
    /// Fraction of the CF slots given to the user-based list; the rest go to item-based.
    pub user_based_share: f64,
    pub weekly_window_days: i64,
    pub leader_mix: LeaderMix,
    pub walks: usize,
    pub walk_seed: u64,
}

impl Default for RecConfig {
    fn default() -> Self {
        Self {
            lambda_o: 0.5,
            lambda_u: 0.5,
            lambda_cf: 0.5,
            shrinkage: 10.0,
            alpha: 0.5,
            beta: 0.9,
            history: 50,
            mix: FeedMix::default(),
            eps_decay: 1e-3,
            view_weight: 1.0,
            like_weight: 3.0,
            neighbor_count: 20,
            user_based_share: 0.5,
            weekly_window_days: 7,
            leader_mix: LeaderMix::default(),
            walks: 100,
            walk_seed: 7,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config { key: name.into(), message: format!("{v} is outside [0, 1]") })
    }
}

fn ratios(name: &str, parts: &[f64]) -> Result<()> {
    if parts.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::Config { key: name.into(), message: format!("ratios {parts:?} must be non-negative") });
    }
    let sum: f64 = parts.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config { key: name.into(), message: format!("ratios {parts:?} sum to {sum}, not 1") });
    }
    Ok(())
}

impl RecConfig {
    pub fn validate(&self) -> Result<()> {
        unit("lambda_o", self.lambda_o)?;
        unit("lambda_u", self.lambda_u)?;
        unit("lambda_cf", self.lambda_cf)?;
        unit("user_based_share", self.user_based_share)?;
        let open = |key: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config { key: key.into(), message: format!("{v} is outside (0, 1)") })
            }
        };
        // alpha = 1 is allowed so the hand-checkable linear weights can be used
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config { key: "alpha".into(), message: format!("{} is outside (0, 1]", self.alpha) });
        }
        open("beta", self.beta)?;
        if !(self.shrinkage >= 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::Config { key: "shrinkage".into(), message: "must be >= 0".into() });
        }
        if self.history == 0 {
            return Err(Error::Config { key: "history".into(), message: "must be >= 1".into() });
        }
        if !(self.eps_decay >= 0.0) {
            return Err(Error::Config { key: "eps_decay".into(), message: "must be >= 0".into() });
        }
        if !(self.view_weight >= 0.0 && self.like_weight >= 0.0) {
            return Err(Error::Config { key: "view_weight".into(), message: "kind weights must be >= 0".into() });
        }
        if self.weekly_window_days < 1 {
            return Err(Error::Config { key: "weekly_window_days".into(), message: "must be >= 1".into() });
        }
        ratios("mix", &[self.mix.cfcbf, self.mix.weekly_best, self.mix.segment_best])?;
        let l = self.leader_mix;
        ratios("leader_mix", &[l.latent, l.graph, l.segment, l.popular])
    }
}
