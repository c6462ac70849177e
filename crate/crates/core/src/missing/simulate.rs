use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::pattern::{generate_mar, MissingPattern};
use super::selection::{generate_mnar, SelectionModel};
use crate::error::{invalid, Result};
use crate::spatial::{build_rook_grid_weights, SemParams, SemPrecision, SpatialWeights};

/// Missingness used by the simulation harness.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE", deny_unknown_fields))]
pub enum SimMechanism {
    Mar {
        missing_fraction: f64,
    },
    /// `covariate_index` selects column `k` (1-based, excluding the
    /// intercept) of `X` as the selection covariate.
    Mnar {
        psi_0: f64,
        psi_xstar: f64,
        psi_y: f64,
        covariate_index: usize,
    },
}

/// Simulation settings. `beta_true = None` draws each coefficient
/// uniformly from {1, ..., 5} once per dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimConfig {
    pub side: usize,
    pub r: usize,
    pub beta_true: Option<Vec<f64>>,
    pub sigma2_true: f64,
    pub rho_true: f64,
    pub mechanism: SimMechanism,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            side: 25,
            r: 10,
            beta_true: None,
            sigma2_true: 1.0,
            rho_true: 0.8,
            mechanism: SimMechanism::Mar { missing_fraction: 0.75 },
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return invalid("side must be at least 2");
        }
        if !(self.sigma2_true > 0.0) {
            return invalid("sigma2_true must be positive");
        }
        if let Some(b) = &self.beta_true {
            if b.len() != self.r + 1 {
                return invalid("beta_true must have r + 1 entries");
            }
        }
        match self.mechanism {
            SimMechanism::Mar { missing_fraction } => {
                if !(missing_fraction > 0.0 && missing_fraction < 1.0) {
                    return invalid("missing_fraction must lie in (0, 1)");
                }
            }
            SimMechanism::Mnar { covariate_index, .. } => {
                if covariate_index == 0 || covariate_index > self.r {
                    return invalid("covariate_index must lie in 1..=r");
                }
            }
        }
        Ok(())
    }
}

/// A complete simulated SEM dataset.
#[derive(Debug, Clone)]
pub struct SimulatedSem {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub w: SpatialWeights,
    pub truth: SemParams,
}

/// `y = Xβ + A⁻¹e` on a row-normalised rook grid. `X` has an intercept
/// column followed by `r` standard normal covariates.
pub fn simulate_sem<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimulatedSem> {
    cfg.validate()?;
    let w = build_rook_grid_weights(cfg.side)?.row_normalize()?;
    let n = w.n();
    let prec = SemPrecision::new(&w)?;
    prec.check_rho(cfg.rho_true)?;

    let beta = match &cfg.beta_true {
        Some(b) => b.clone(),
        None => (0..=cfg.r).map(|_| rng.random_range(1..=5) as f64).collect(),
    };
    let mut x = DMatrix::zeros(n, cfg.r + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for j in 1..=cfg.r {
        for i in 0..n {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let sd = cfg.sigma2_true.sqrt();
    let e: Vec<f64> = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    // A⁻¹e = M⁻¹Aᵀe
    let ate = {
        let wte = w.matrix().tr_mul_vec(&e);
        e.iter().zip(&wte).map(|(a, b)| a - cfg.rho_true * b).collect::<Vec<_>>()
    };
    let v = prec.factor(cfg.rho_true)?.solve(&ate);
    let y = (0..n).map(|i| v[i] + (0..=cfg.r).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).collect();
    Ok(SimulatedSem { y, x, w, truth: SemParams { beta, sigma2_y: cfg.sigma2_true, rho: cfg.rho_true } })
}

/// Simulated data together with its missingness.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub sem: SimulatedSem,
    pub pattern: MissingPattern,
    /// Present under MNAR.
    pub selection: Option<SelectionModel>,
}

/// Runs [`simulate_sem`] and then draws the missingness pattern.
pub fn simulate_dataset<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimulatedData> {
    let sem = simulate_sem(cfg, rng)?;
    let n = sem.y.len();
    let (pattern, selection) = match cfg.mechanism {
        SimMechanism::Mar { missing_fraction } => (generate_mar(n, missing_fraction, rng)?, None),
        SimMechanism::Mnar { psi_0, psi_xstar, psi_y, covariate_index } => {
            let x_star = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { sem.x[(i, covariate_index)] });
            let sel = SelectionModel::new(alloc::vec![psi_0, psi_xstar], psi_y, x_star)?;
            (generate_mnar(&sem.y, &sel, rng)?, Some(sel))
        }
    };
    Ok(SimulatedData { sem, pattern, selection })
}
