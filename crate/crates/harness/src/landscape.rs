use poison_core::baselines::{bilevel_attack_implicit, bilevel_grid_oracle, BilevelConfig, GridOracleSpec, GridSurface};
use poison_core::{train, BandwidthRule, KdeEstimate, LossKind, Matrix, TrainConfig};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::presets::{DataContext, Preset, GAUSS_MEANS, GAUSS_SIGMA};
use poison_core::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeConfig {
    pub seed: u64,
    pub resolution: usize,
    pub reg_c: f64,
    /// Label the poison point is injected with.
    pub poison_label: usize,
    /// Class whose density the KDE surface shows.
    pub target_class: usize,
}

impl LandscapeConfig {
    /// Logistic C = 1, poison labelled 1, density of class 0.
    pub fn new(seed: u64, resolution: usize) -> Self {
        Self {
            seed,
            resolution,
            reg_c: 1.0,
            poison_label: 1,
            target_class: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Boundary {
    /// `w . x + b = 0`; the positive side is class 1.
    pub weights: [f64; 2],
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeSummary {
    pub seed: u64,
    pub resolution: usize,
    pub reg_c: f64,
    pub poison_label: usize,
    pub target_class: usize,
    pub clean_val_loss: f64,
    pub oracle_argmax_cell: [usize; 2],
    pub oracle_argmax: [f64; 2],
    pub oracle_max: f64,
    pub kde_argmax_cell: [usize; 2],
    pub kde_argmax: [f64; 2],
    pub kde_max: f64,
    pub bandwidth: f64,
    /// Distance of the density peak from the target-class mean, in units of sigma.
    pub kde_argmax_sigmas_from_mean: f64,
    pub argmax_cells_differ: bool,
    pub argmax_distance: f64,
    /// Point returned by the implicit-gradient attack and its validation loss.
    pub bilevel_point: [f64; 2],
    pub bilevel_loss: f64,
    pub bilevel_over_oracle: f64,
}

#[derive(Debug, Clone)]
pub struct Landscape {
    pub oracle: GridSurface<f64>,
    pub kde: GridSurface<f64>,
    pub boundary: Boundary,
    pub summary: LandscapeSummary,
}

fn cell(s: &GridSurface<f64>) -> ([usize; 2], [f64; 2]) {
    let (i, j) = s.argmax();
    ([i, j], [s.x0[i], s.x1[j]])
}

/// Bilevel objective and KDE objective over the same grid of the two-Gaussian toy.
pub fn run_landscape(cfg: &LandscapeConfig, ctx: &DataContext) -> Result<Landscape> {
    let split = ctx.split(Preset::Gauss2d, cfg.seed, derive_seed(cfg.seed, &[0]))?;
    let (tr, val) = (&split.train, &split.val);
    let spec = GridOracleSpec::over(tr, cfg.resolution).map_err(HarnessError::core("grid"))?;
    spec.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
    let oracle = bilevel_grid_oracle(tr, val, cfg.poison_label, &spec, LossKind::Logistic, cfg.reg_c)
        .map_err(HarnessError::core("bilevel oracle"))?;
    let kde_est = KdeEstimate::fit(val, cfg.target_class, BandwidthRule::default()).map_err(HarnessError::core("density"))?;
    let kde = GridSurface::evaluate(spec.axis(0), spec.axis(1), |a, b| kde_est.likelihood(&[a, b]))
        .map_err(HarnessError::core("density surface"))?;

    let mut tcfg = TrainConfig::new(LossKind::Logistic, cfg.reg_c);
    tcfg.tol = spec.retrain_tol;
    let val_loss = |poison: Option<&[f64]>| -> Result<f64> {
        let data = match poison {
            Some(p) => tr
                .append(&Matrix::new(1, 2, p.to_vec()).map_err(HarnessError::core("poison"))?, &[cfg.poison_label])
                .map_err(HarnessError::core("poison"))?,
            None => tr.clone(),
        };
        let (model, _) = train(&data, &tcfg).map_err(HarnessError::core("training"))?;
        model.mean_loss(val).map_err(HarnessError::core("validation loss"))
    };
    let (clean, _) = train(tr, &tcfg).map_err(HarnessError::core("training"))?;
    let boundary = Boundary {
        weights: [clean.weights[0][0], clean.weights[0][1]],
        bias: clean.bias[0],
    };

    let bcfg = BilevelConfig::for_dataset(tr, derive_seed(cfg.seed, &[1]));
    let (point, _) = bilevel_attack_implicit(tr, val, cfg.poison_label, &bcfg, LossKind::Logistic, cfg.reg_c)
        .map_err(HarnessError::core("bilevel attack"))?;
    let bilevel_loss = val_loss(Some(&point))?;

    let (oc, op) = cell(&oracle);
    let (kc, kp) = cell(&kde);
    let mean = GAUSS_MEANS[cfg.target_class];
    let summary = LandscapeSummary {
        seed: cfg.seed,
        resolution: cfg.resolution,
        reg_c: cfg.reg_c,
        poison_label: cfg.poison_label,
        target_class: cfg.target_class,
        clean_val_loss: val_loss(None)?,
        oracle_argmax_cell: oc,
        oracle_argmax: op,
        oracle_max: oracle.max(),
        kde_argmax_cell: kc,
        kde_argmax: kp,
        kde_max: kde.max(),
        bandwidth: kde_est.bandwidth(),
        kde_argmax_sigmas_from_mean: ((kp[0] - mean[0]).powi(2) + (kp[1] - mean[1]).powi(2)).sqrt() / GAUSS_SIGMA,
        argmax_cells_differ: oc != kc,
        argmax_distance: ((op[0] - kp[0]).powi(2) + (op[1] - kp[1]).powi(2)).sqrt(),
        bilevel_point: [point[0], point[1]],
        bilevel_loss,
        bilevel_over_oracle: bilevel_loss / oracle.max(),
    };
    Ok(Landscape { oracle, kde, boundary, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_landscape_is_consistent() {
        let ctx = DataContext::new("/nonexistent");
        let l = run_landscape(&LandscapeConfig::new(3, 12), &ctx).unwrap();
        assert_eq!((l.oracle.values.rows(), l.oracle.values.cols()), (12, 12));
        assert_eq!((l.kde.values.rows(), l.kde.values.cols()), (12, 12));
        assert_eq!(l.oracle.x0, l.kde.x0);
        assert!(l.summary.kde_max > 0.0 && l.summary.oracle_max >= l.summary.clean_val_loss * 0.9);
        assert!(l.summary.kde_argmax_sigmas_from_mean < 2.0);
    }
}
