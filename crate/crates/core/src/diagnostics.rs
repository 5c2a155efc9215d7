//! Posterior summaries and cross-sampler comparison tools.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{interpolated_quantile, radial_cubic_basis, Design, SplineTerm};
use crate::error::{Error, Result};
use crate::model::Family;

/// Weighted mean, sd and equal-tailed 95% interval of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

fn check_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::dim(format!("{} weights for {n} draws", w.len())));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid("weights must be finite and non-negative"));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::invalid("weights sum to zero"));
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

/// Weighted mean and variance (weights normalised internally).
pub fn weighted_mean_var(x: &[f64], weights: Option<&[f64]>) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(Error::invalid("no draws"));
    }
    let w = check_weights(x.len(), weights)?;
    let mean: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
    let var: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mean).powi(2)).sum();
    Ok((mean, var))
}

/// Weighted quantile by CDF inversion. Draw `i` (sorted) sits at cumulative
/// level `C_i − w_i/2`; levels in between are linearly interpolated and
/// levels outside the first/last midpoint clamp to the extreme draws.
pub fn weighted_quantile(x: &[f64], weights: Option<&[f64]>, p: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("no draws"));
    }
    let w = check_weights(x.len(), weights)?;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(w).filter(|(_, w)| *w > 0.0).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut levels = Vec::with_capacity(pairs.len());
    let mut cum = 0.0;
    for &(_, w) in &pairs {
        levels.push(cum + 0.5 * w);
        cum += w;
    }
    if p <= levels[0] {
        return Ok(pairs[0].0);
    }
    let last = pairs.len() - 1;
    if p >= levels[last] {
        return Ok(pairs[last].0);
    }
    let idx = levels.partition_point(|&l| l <= p);
    let (l0, l1) = (levels[idx - 1], levels[idx]);
    let (x0, x1) = (pairs[idx - 1].0, pairs[idx].0);
    Ok(x0 + (p - l0) / (l1 - l0) * (x1 - x0))
}

/// Per-column summaries of a draws matrix.
pub fn summarize(draws: &DMatrix<f64>, weights: Option<&[f64]>) -> Result<Vec<Summary>> {
    if draws.nrows() == 0 {
        return Err(Error::invalid("no draws to summarise"));
    }
    draws
        .column_iter()
        .map(|col| {
            let x: Vec<f64> = col.iter().copied().collect();
            let (mean, var) = weighted_mean_var(&x, weights)?;
            Ok(Summary {
                mean,
                sd: var.sqrt(),
                lower: weighted_quantile(&x, weights, 0.025)?,
                upper: weighted_quantile(&x, weights, 0.975)?,
            })
        })
        .collect()
}

/// Cross-run effective sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarpenterEss {
    pub value: f64,
    /// All run means were identical; `value` is `+∞`.
    pub identical_runs: bool,
}

/// Mean within-run posterior variance divided by the across-run variance of
/// the posterior means (divisor `R − 1`).
pub fn carpenter_ess(run_means: &[f64], run_var_estimates: &[f64]) -> Result<CarpenterEss> {
    let r = run_means.len();
    if r < 2 {
        return Err(Error::invalid(format!("need at least 2 runs, got {r}")));
    }
    if run_var_estimates.len() != r {
        return Err(Error::dim("one variance estimate per run"));
    }
    let avg_var = run_var_estimates.iter().sum::<f64>() / r as f64;
    let m = run_means.iter().sum::<f64>() / r as f64;
    let between = run_means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1) as f64;
    if between == 0.0 {
        return Ok(CarpenterEss {
            value: f64::INFINITY,
            identical_runs: true,
        });
    }
    Ok(CarpenterEss {
        value: avg_var / between,
        identical_runs: false,
    })
}

/// Kish effective size of normalised weights.
fn weight_ess(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|v| v * v).sum::<f64>()
}

/// Weighted Gaussian kernel density estimate. Bandwidth
/// `0.9 · min(sd, IQR/1.34) · n_eff^(−1/5)` with `n_eff` the weight ESS.
pub fn kde(draws: &[f64], weights: Option<&[f64]>, grid: &[f64]) -> Result<Vec<f64>> {
    let w = check_weights(draws.len(), weights)?;
    let first = draws.first().ok_or_else(|| Error::invalid("no draws"))?;
    if draws.iter().all(|v| v == first) {
        return Err(Error::invalid(
            "all draws are identical (duplicated particles); no bandwidth can be chosen",
        ));
    }
    let (_, var) = weighted_mean_var(draws, Some(&w))?;
    let sd = var.sqrt();
    let iqr = weighted_quantile(draws, Some(&w), 0.75)? - weighted_quantile(draws, Some(&w), 0.25)?;
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * weight_ess(&w).powf(-0.2);
    if !(h > 0.0) {
        return Err(Error::invalid("degenerate bandwidth"));
    }
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            draws
                .iter()
                .zip(&w)
                .map(|(&x, &wi)| wi * (-0.5 * ((g - x) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Matched empirical quantiles at levels `(i − 0.5)/n_quantiles`.
pub fn qq_pairs(a: &[f64], b: &[f64], n_quantiles: usize) -> Result<Vec<(f64, f64)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("QQ comparison needs two non-empty samples"));
    }
    let sort = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (sa, sb) = (sort(a), sort(b));
    Ok((1..=n_quantiles)
        .map(|i| {
            let p = (i as f64 - 0.5) / n_quantiles as f64;
            (interpolated_quantile(&sa, p), interpolated_quantile(&sb, p))
        })
        .collect())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS statistic needs two non-empty samples"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
pub fn batch_means_se(series: &[f64], n_batches: usize) -> Result<f64> {
    if n_batches < 2 || series.len() < 2 * n_batches {
        return Err(Error::invalid("series too short for batch means"));
    }
    let size = series.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    Ok((var / n_batches as f64).sqrt())
}

/// Fitted smooth `f̂(x) = β̂_x x_std + Z(x_std) û` on a raw-scale grid.
pub fn curve_estimate(design: &Design, term: &SplineTerm, nu_mean: &DVector<f64>, grid: &[f64]) -> Result<Vec<f64>> {
    if nu_mean.len() != design.n_coef() {
        return Err(Error::dim(format!(
            "coefficient vector has {} entries, design has {}",
            nu_mean.len(),
            design.n_coef()
        )));
    }
    if term.block >= design.block_widths.len() || design.block_widths[term.block] != term.basis.n_knots() {
        return Err(Error::dim("spline term does not match the design"));
    }
    let xs = term.standardisation.apply_all(grid);
    let z = radial_cubic_basis(&xs, &term.basis);
    let u = nu_mean.rows(design.block_offset(term.block), term.basis.n_knots());
    let beta = nu_mean[term.linear_col];
    let zu = z * u;
    Ok(xs.iter().zip(zu.iter()).map(|(x, s)| beta * x + s).collect())
}

/// Mean response along a spline term with every other fixed covariate at its
/// average and random intercepts at zero.
pub fn mean_response_curve(
    design: &Design,
    family: Family,
    term: &SplineTerm,
    nu_mean: &DVector<f64>,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let f = curve_estimate(design, term, nu_mean, grid)?;
    let offset: f64 = (0..design.q_beta)
        .filter(|&k| k != term.linear_col)
        .map(|k| nu_mean[k] * design.fixed_means[k])
        .sum();
    Ok(f.iter().map(|v| family.mean(v + offset)).collect())
}
