use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default smallest positive inverse temperature of a geometric schedule.
pub const DEFAULT_BETA_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScheduleKind {
    Uniform,
    Geometric { beta_min: f64 },
}

/// Inverse temperatures `0 = β₀ < β₁ < … < βₙ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealingSchedule {
    betas: Vec<f64>,
}

impl AnnealingSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 || betas[0] != 0.0 || *betas.last().unwrap() != 1.0 {
            return Err(Error::Configuration(
                "schedule must start at 0 and end at 1".into(),
            ));
        }
        if betas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Configuration(
                "schedule must be strictly increasing".into(),
            ));
        }
        Ok(AnnealingSchedule { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Number of annealed distributions n (excluding β₀).
    pub fn rungs(&self) -> usize {
        self.betas.len() - 1
    }
}

pub fn build_schedule(kind: ScheduleKind, n: usize) -> Result<AnnealingSchedule> {
    if n == 0 {
        return Err(Error::Configuration(
            "schedule needs at least one rung".into(),
        ));
    }
    let betas = match kind {
        ScheduleKind::Uniform => (0..=n)
            .map(|j| if j == n { 1.0 } else { j as f64 / n as f64 })
            .collect(),
        ScheduleKind::Geometric { beta_min } => {
            if !(beta_min > 0.0 && beta_min < 1.0) {
                return Err(Error::Configuration(format!(
                    "geometric β_min must lie in (0, 1), got {beta_min}"
                )));
            }
            let mut betas = vec![0.0];
            if n == 1 {
                betas.push(1.0);
            } else {
                let span = (n - 1) as f64;
                betas.extend((1..=n).map(|j| {
                    if j == n {
                        1.0
                    } else {
                        beta_min.powf((n - j) as f64 / span)
                    }
                }));
            }
            betas
        }
    };
    AnnealingSchedule::from_betas(betas)
}
