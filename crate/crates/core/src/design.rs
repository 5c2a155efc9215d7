//! Design matrices: standardisation, knot placement, the radial cubic spline
//! basis, and assembly of `C = [X Z]` with its random-effect block layout.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff used when forming `Ω^(−1/2)`.
pub const EIGEN_DROP_TOL: f64 = 1e-10;

/// Centre/scale of one continuous predictor (population sd, divisor n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardisation {
    pub mean: f64,
    pub sd: f64,
}

impl Standardisation {
    pub fn fit(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("cannot standardise an empty column"));
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::invalid("cannot standardise a constant column"));
        }
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }

    pub fn apply_all(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }
}

fn sorted_unique(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("predictor has non-finite values"));
    }
    let mut u = x.to_vec();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u.dedup();
    Ok(u)
}

/// Linear-interpolation quantile of sorted values at level `p ∈ [0, 1]`.
pub(crate) fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Knots at the `(k+1)/(K+2)` quantiles of the unique predictor values.
pub fn select_knots(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 knots, got {k}")));
    }
    let unique = sorted_unique(x)?;
    if unique.len() < 2 {
        return Err(Error::invalid(format!(
            "predictor has {} unique value(s); at least 2 are needed for knots",
            unique.len()
        )));
    }
    let knots: Vec<f64> = (1..=k)
        .map(|j| interpolated_quantile(&unique, (j + 1) as f64 / (k + 2) as f64))
        .collect();
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("knots are not strictly increasing"));
    }
    Ok(knots)
}

/// Knot vector with the matching `Ω^(−1/2)`, `Ω = [|κ_k − κ_k'|³]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasisSpec {
    knots: Vec<f64>,
    omega_inv_sqrt: DMatrix<f64>,
}

impl SplineBasisSpec {
    /// `Ω^(−1/2) = U diag(|λ|^(−1/2)) Uᵀ`, dropping eigenvalues below
    /// `EIGEN_DROP_TOL · max|λ|`. The cubic kernel is only conditionally
    /// positive definite, so eigenvalue magnitudes are used.
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("spline basis needs at least 2 knots"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        let omega = Self::omega_of(&knots);
        let eig = SymmetricEigen::new(omega);
        let max_abs = eig.eigenvalues.amax();
        let scaled = DVector::from_iterator(
            knots.len(),
            eig.eigenvalues.iter().map(|&l| {
                if l.abs() < EIGEN_DROP_TOL * max_abs {
                    0.0
                } else {
                    l.abs().powf(-0.5)
                }
            }),
        );
        let u = &eig.eigenvectors;
        let mut omega_inv_sqrt = u * DMatrix::from_diagonal(&scaled) * u.transpose();
        crate::numerics::symmetrize(&mut omega_inv_sqrt);
        Ok(Self {
            knots,
            omega_inv_sqrt,
        })
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn omega_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.omega_inv_sqrt
    }

    /// `Ω = [|κ_k − κ_k'|³]`.
    pub fn omega(&self) -> DMatrix<f64> {
        Self::omega_of(&self.knots)
    }

    fn omega_of(knots: &[f64]) -> DMatrix<f64> {
        let k = knots.len();
        DMatrix::from_fn(k, k, |i, j| (knots[i] - knots[j]).abs().powi(3))
    }
}

/// `Z = R Ω^(−1/2)` with `R_ik = |x_i − κ_k|³`.
pub fn radial_cubic_basis(x: &[f64], spec: &SplineBasisSpec) -> DMatrix<f64> {
    let r = DMatrix::from_fn(x.len(), spec.n_knots(), |i, k| (x[i] - spec.knots[k]).abs().powi(3));
    r * &spec.omega_inv_sqrt
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledDesign {
    pub c: DMatrix<f64>,
    pub q_beta: usize,
    pub block_widths: Vec<usize>,
}

/// `C = [1? X Z₁ … Z_L]`.
pub fn assemble_design(
    fixed_columns: &DMatrix<f64>,
    random_blocks: &[DMatrix<f64>],
    intercept: bool,
) -> Result<AssembledDesign> {
    let n = fixed_columns.nrows();
    if let Some(bad) = random_blocks.iter().find(|b| b.nrows() != n) {
        return Err(Error::dim(format!(
            "random block has {} rows, fixed effects have {n}",
            bad.nrows()
        )));
    }
    let q_beta = fixed_columns.ncols() + usize::from(intercept);
    let block_widths: Vec<usize> = random_blocks.iter().map(|b| b.ncols()).collect();
    let p = q_beta + block_widths.iter().sum::<usize>();
    let mut c = DMatrix::zeros(n, p);
    let mut col = 0;
    if intercept {
        c.column_mut(0).fill(1.0);
        col = 1;
    }
    c.columns_mut(col, fixed_columns.ncols()).copy_from(fixed_columns);
    col += fixed_columns.ncols();
    for b in random_blocks {
        c.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    Ok(AssembledDesign {
        c,
        q_beta,
        block_widths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Standardised linear term, optionally with a spline block.
    Continuous,
    /// 0/1 indicator entered as-is.
    Binary,
    /// Grouping factor; contributes one random intercept per level.
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub name: String,
    pub kind: PredictorKind,
    /// Knot count `K` for a radial cubic spline block (continuous only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spline_knots: Option<usize>,
}

/// What a random-effect block models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockClass {
    RandomIntercept,
    Spline,
}

/// A penalised-spline term `f(x) = β_x x_std + Z(x_std) u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub predictor: String,
    pub standardisation: Standardisation,
    pub linear_col: usize,
    pub block: usize,
    pub basis: SplineBasisSpec,
    /// Raw-scale range of the predictor in the data.
    pub range: (f64, f64),
}

/// Column data used to build a design.
pub trait ColumnSource {
    fn numeric(&self, name: &str) -> Result<Vec<f64>>;
    fn text(&self, name: &str) -> Result<Vec<String>>;
    fn n_rows(&self) -> usize;
}

/// A fully built design with everything needed to name coefficients and map
/// fitted curves back to raw predictor scales.
#[derive(Debug, Clone)]
pub struct Design {
    pub c: DMatrix<f64>,
    pub q_beta: usize,
    pub block_widths: Vec<usize>,
    pub block_classes: Vec<BlockClass>,
    pub coef_names: Vec<String>,
    pub variance_names: Vec<String>,
    pub standardisations: BTreeMap<String, Standardisation>,
    pub splines: Vec<SplineTerm>,
    /// Mean of each fixed-effect column of `C`.
    pub fixed_means: Vec<f64>,
}

impl Design {
    pub fn n_coef(&self) -> usize {
        self.c.ncols()
    }

    /// Columns belonging to fixed effects, and to each random block, in order.
    pub fn class_of_coef(&self, k: usize) -> Option<BlockClass> {
        let mut offset = self.q_beta;
        if k < offset {
            return None;
        }
        for (w, class) in self.block_widths.iter().zip(&self.block_classes) {
            if k < offset + w {
                return Some(*class);
            }
            offset += w;
        }
        None
    }

    pub fn block_offset(&self, block: usize) -> usize {
        self.q_beta + self.block_widths[..block].iter().sum::<usize>()
    }

    /// Default one-block-per-term partition: all fixed effects, then each random block.
    pub fn term_partition(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![(0..self.q_beta).collect::<Vec<_>>()];
        let mut offset = self.q_beta;
        for &w in &self.block_widths {
            parts.push((offset..offset + w).collect());
            offset += w;
        }
        parts.retain(|p| !p.is_empty());
        parts
    }
}

/// Builds `C` from typed predictors. Column order: intercept, then fixed
/// terms in predictor order; random blocks follow in predictor order.
pub fn build_design<S: ColumnSource>(source: &S, predictors: &[PredictorSpec], intercept: bool) -> Result<Design> {
    let n = source.n_rows();
    let mut fixed: Vec<Vec<f64>> = Vec::new();
    let mut coef_names = Vec::new();
    if intercept {
        coef_names.push("(Intercept)".to_string());
    }
    let mut blocks: Vec<(DMatrix<f64>, BlockClass, Vec<String>, String)> = Vec::new();
    let mut standardisations = BTreeMap::new();
    let mut pending_splines = Vec::new();

    for spec in predictors {
        match spec.kind {
            PredictorKind::Continuous => {
                let raw = source.numeric(&spec.name)?;
                let st = Standardisation::fit(&raw).map_err(|e| Error::invalid(format!("{}: {e}", spec.name)))?;
                let xs = st.apply_all(&raw);
                standardisations.insert(spec.name.clone(), st);
                let linear_col = usize::from(intercept) + fixed.len();
                fixed.push(xs.clone());
                coef_names.push(spec.name.clone());
                if let Some(k) = spec.spline_knots {
                    let knots = select_knots(&xs, k).map_err(|e| Error::invalid(format!("{}: {e}", spec.name)))?;
                    let basis = SplineBasisSpec::new(knots)?;
                    let z = radial_cubic_basis(&xs, &basis);
                    let names = (1..=k).map(|j| format!("s({})[{j}]", spec.name)).collect();
                    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    pending_splines.push(SplineTerm {
                        predictor: spec.name.clone(),
                        standardisation: st,
                        linear_col,
                        block: blocks.len(),
                        basis,
                        range: (min, max),
                    });
                    blocks.push((z, BlockClass::Spline, names, format!("sigma_sq[s({})]", spec.name)));
                }
            }
            PredictorKind::Binary => {
                if spec.spline_knots.is_some() {
                    return Err(Error::invalid(format!("{}: splines need a continuous predictor", spec.name)));
                }
                let raw = source.numeric(&spec.name)?;
                if raw.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::invalid(format!("{}: binary predictor must be 0/1", spec.name)));
                }
                fixed.push(raw);
                coef_names.push(spec.name.clone());
            }
            PredictorKind::Categorical => {
                let labels = source.text(&spec.name)?;
                let mut levels: Vec<String> = labels.clone();
                levels.sort();
                levels.dedup();
                let index: BTreeMap<&str, usize> =
                    levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                let mut z = DMatrix::zeros(n, levels.len());
                for (i, l) in labels.iter().enumerate() {
                    z[(i, index[l.as_str()])] = 1.0;
                }
                let names = levels.iter().map(|l| format!("u({})[{l}]", spec.name)).collect();
                blocks.push((z, BlockClass::RandomIntercept, names, format!("sigma_sq[{}]", spec.name)));
            }
        }
    }

    let x = DMatrix::from_fn(n, fixed.len(), |i, j| fixed[j][i]);
    let zs: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.0.clone()).collect();
    let assembled = assemble_design(&x, &zs, intercept)?;
    let mut variance_names = Vec::new();
    let mut block_classes = Vec::new();
    for (_, class, names, vname) in blocks {
        coef_names.extend(names);
        variance_names.push(vname);
        block_classes.push(class);
    }
    let fixed_means = (0..assembled.q_beta)
        .map(|k| assembled.c.column(k).mean())
        .collect();
    Ok(Design {
        c: assembled.c,
        q_beta: assembled.q_beta,
        block_widths: assembled.block_widths,
        block_classes,
        coef_names,
        variance_names,
        standardisations,
        splines: pending_splines,
        fixed_means,
    })
}
