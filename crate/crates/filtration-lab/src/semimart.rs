//! Structure condition, the lambda-hat system, the discrete Doleans
//! exponential, the minimal martingale measure, and the transfer of
//! completeness between a semimartingale and its martingale part.
//!
//! For a semimartingale `X = X_0 + M + A` the structure condition asks the
//! drift to be absolutely continuous with respect to the driver's predictable
//! variation: per component, `dA^i_t = alpha^i_t d<M^i>_t`. The predictable
//! vector `lambda-hat` then solves the per-block Gram system
//! `C^M lambda = gamma` with `gamma^i = alpha^i c^M_ii`, and the candidate
//! density of the minimal martingale measure is the stochastic exponential
//! `L_t = prod_{s <= t} (1 - lambda_s' dM_s)`. On a grid there is no
//! continuous part, so the product form is the entire exponential. `L` is
//! always a martingale started at one; the measure exists precisely when every
//! factor stays positive.

use crate::error::{Error, Result};
use crate::linalg::min_norm_solve_psd;
use crate::num::{near_zero, Scalar};
use crate::process::{
    doob_decomposition, is_martingale, require_martingale, AdaptedProcess, DoobDecomposition,
    PredictableProcess,
};
use crate::repr::{prp_check, PrpCheck};
use crate::space::{conditional_expectation, density_process, Filtration, Measure};
use std::sync::Arc;

/// Per-node driver geometry: the conditional covariance increments
/// `d<M^i, M^j>_t` on each block of `P_{t-1}`, and the clock increment
/// `dB_t = sum_i d<M^i>_t`.
#[derive(Debug, Clone)]
pub struct GramNode<S: Scalar> {
    /// `d<M^i, M^j>` on this block.
    pub covariation: Vec<Vec<S>>,
    /// Clock increment: the trace of `covariation`.
    pub clock: S,
}

/// The solved structure condition of a semimartingale under `(mu, f)`.
pub struct StructureCondition<S: Scalar> {
    x: AdaptedProcess<S>,
    mu: Measure<S>,
    f: Arc<Filtration>,
    tol: S,
    decomposition: DoobDecomposition<S>,
    alpha: PredictableProcess<S>,
    lambda_hat: PredictableProcess<S>,
    /// `gram[t-1][block]`.
    gram: Vec<Vec<GramNode<S>>>,
}

impl<S: Scalar> StructureCondition<S> {
    pub fn alpha(&self) -> &PredictableProcess<S> {
        &self.alpha
    }

    pub fn lambda_hat(&self) -> &PredictableProcess<S> {
        &self.lambda_hat
    }

    pub fn decomposition(&self) -> &DoobDecomposition<S> {
        &self.decomposition
    }

    pub fn gram(&self, t: usize, block: usize) -> &GramNode<S> {
        &self.gram[t - 1][block]
    }

    pub fn driver(&self) -> &AdaptedProcess<S> {
        &self.x
    }

    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.f
    }

    pub fn base_measure(&self) -> &Measure<S> {
        &self.mu
    }
}

/// Solves the structure condition for `x` under `(mu, f)`.
///
/// Per block: `alpha^i = dA^i / d<M^i>` wherever `d<M^i> > 0` (a nonzero
/// drift on a zero-variance block is fatal: no strict martingale density can
/// absorb drift without noise), `gamma^i = alpha^i c^M_ii`, and `lambda-hat`
/// is the minimum-norm solution of the Gram system, rejected when the system
/// is inconsistent.
pub fn structure_condition<S: Scalar>(
    x: &AdaptedProcess<S>,
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<StructureCondition<S>, S> {
    let x = x.reindex(f)?;
    let decomposition = doob_decomposition(&x, mu)?;
    let m = &decomposition.martingale_part;
    let dim = x.dim();

    let mut gram: Vec<Vec<GramNode<S>>> = Vec::with_capacity(f.horizon());
    let mut alpha_values: Vec<Vec<Vec<S>>> = Vec::with_capacity(f.horizon());
    let mut lambda_values: Vec<Vec<Vec<S>>> = Vec::with_capacity(f.horizon());

    // Scale for degeneracy decisions: the largest conditional variance seen.
    let mut max_var = S::zero();
    let mut cond_all: Vec<Vec<Vec<Vec<S>>>> = Vec::with_capacity(f.horizon());
    for t in 1..=f.horizon() {
        let part = f.at(t - 1);
        let incs: Vec<_> = (0..dim).map(|k| m.increment_at(t, k)).collect();
        let mut per_block = vec![vec![vec![S::zero(); dim]; dim]; part.n_blocks()];
        for i in 0..dim {
            for j in i..dim {
                let prod = incs[i].mul(&incs[j]);
                let ce = conditional_expectation(&prod, part, mu)?;
                for (b, block) in part.blocks().iter().enumerate() {
                    let v = ce.value(block[0]).clone();
                    if i == j && v.abs() > max_var {
                        max_var = v.abs();
                    }
                    per_block[b][i][j] = v.clone();
                    per_block[b][j][i] = v;
                }
            }
        }
        cond_all.push(per_block);
    }
    let var_thresh = tol.clone() * max_var;

    for t in 1..=f.horizon() {
        let part = f.at(t - 1);
        let mut gram_row = Vec::with_capacity(part.n_blocks());
        let mut alpha_row = Vec::with_capacity(part.n_blocks());
        let mut lambda_row = Vec::with_capacity(part.n_blocks());
        for (b, block) in part.blocks().iter().enumerate() {
            let cond = &cond_all[t - 1][b];
            let clock = (0..dim).fold(S::zero(), |acc, i| acc + cond[i][i].clone());
            let o = block[0];
            let drift: Vec<S> = (0..dim)
                .map(|i| {
                    decomposition.drift_part.at(t, o, i).clone()
                        - decomposition.drift_part.at(t - 1, o, i).clone()
                })
                .collect();

            let mut alpha = vec![S::zero(); dim];
            for i in 0..dim {
                if cond[i][i].abs() <= var_thresh {
                    if !near_zero(&drift[i], tol) {
                        return Err(Error::StructureConditionFails {
                            time: t,
                            block: b,
                            detail: format!(
                                "component {i} has drift {} but zero predictable variation",
                                drift[i]
                            ),
                        });
                    }
                } else {
                    alpha[i] = drift[i].clone() / cond[i][i].clone();
                }
            }

            // Solve cond * lambda = drift; this is the Gram system
            // C lambda = gamma rescaled by the positive clock increment, so
            // the solution sets (and the minimum-norm element) coincide.
            let lambda = if clock.abs() <= var_thresh {
                vec![S::zero(); dim]
            } else {
                min_norm_solve_psd(cond, &drift, tol).ok_or_else(|| {
                    Error::StructureConditionFails {
                        time: t,
                        block: b,
                        detail: "drift is not in the range of the conditional covariance"
                            .to_string(),
                    }
                })?
            };

            gram_row.push(GramNode {
                covariation: cond.clone(),
                clock,
            });
            alpha_row.push(alpha);
            lambda_row.push(lambda);
        }
        gram.push(gram_row);
        alpha_values.push(alpha_row);
        lambda_values.push(lambda_row);
    }

    Ok(StructureCondition {
        x,
        mu: mu.clone(),
        f: f.clone(),
        tol: tol.clone(),
        decomposition,
        alpha: PredictableProcess::new(f.clone(), dim, alpha_values)?,
        lambda_hat: PredictableProcess::new(f.clone(), dim, lambda_values)?,
        gram,
    })
}

/// The minimal martingale measure: the Doleans exponential density and the
/// reweighted measure it induces.
#[derive(Debug, Clone)]
pub struct MinimalMeasure<S: Scalar> {
    /// `L_t = prod_{s <= t} (1 - lambda_s' dM_s)`, a strictly positive
    /// `(mu, f)`-martingale with `L_0 = 1`.
    pub density: AdaptedProcess<S>,
    /// The measure with weights `L_T * mu`.
    pub measure: Measure<S>,
}

/// Builds the Doleans exponential of `-(lambda-hat . M)` and the measure it
/// defines, verifying positivity factor by factor, the martingale property of
/// `L`, and that the driver becomes a martingale under the new measure.
pub fn doleans_exponential<S: Scalar>(sc: &StructureCondition<S>) -> Result<MinimalMeasure<S>, S> {
    let f = &sc.f;
    let tol = &sc.tol;
    let n = f.n_outcomes();
    let m = &sc.decomposition.martingale_part;
    let dim = sc.x.dim();

    let mut per_time: Vec<Vec<Vec<S>>> = vec![vec![vec![S::one()]; n]];
    for t in 1..=f.horizon() {
        let mut slice = per_time[t - 1].clone();
        let incs: Vec<_> = (0..dim).map(|k| m.increment_at(t, k)).collect();
        let part = f.at(t);
        for (b, block) in part.blocks().iter().enumerate() {
            let o = block[0];
            let mut lam_dm = S::zero();
            for k in 0..dim {
                lam_dm = lam_dm + sc.lambda_hat.at(t, o, k).clone() * incs[k].value(o).clone();
            }
            let factor = S::one() - lam_dm;
            if factor <= *tol {
                return Err(Error::MinimalMeasureNotPositive {
                    time: t,
                    block: b,
                    value: factor,
                });
            }
            for &oo in block {
                slice[oo][0] = slice[oo][0].clone() * factor.clone();
            }
        }
        per_time.push(slice);
    }

    let density = AdaptedProcess::from_pointwise(f.clone(), 1, &per_time)?;
    require_martingale(&density, &sc.mu, f, tol)
        .map_err(|e| Error::CheckFailed(format!("Doleans density is not a martingale: {e}")))?;

    let weights: Vec<S> = (0..n)
        .map(|o| density.at(f.horizon(), o, 0).clone() * sc.mu.weight(o).clone())
        .collect();
    let measure = Measure::new(weights, tol)?;

    let check = is_martingale(&sc.x, &measure, f, tol)?;
    if !check.holds {
        return Err(Error::CheckFailed(
            "driver is not a martingale under the minimal measure".into(),
        ));
    }

    Ok(MinimalMeasure { density, measure })
}

/// Girsanov correction: for a `(q, f)`-martingale `x` and an equivalent `p`,
/// removes the `p`-drift
/// `X~^i_t = X^i_t - sum_{s<=t} (1 / L~_{s-1}) E^q[dL~_s dX^i_s | f_{s-1}]`
/// where `L~` is the density process of `p` with respect to `q`. The result
/// is a `(p, f)`-martingale.
pub fn girsanov_martingale_part<S: Scalar>(
    x: &AdaptedProcess<S>,
    q: &Measure<S>,
    p: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<AdaptedProcess<S>, S> {
    let x = x.reindex(f)?;
    require_martingale(&x, q, f, tol)?;
    let density = density_process(p, q, f)?;
    let n = f.n_outcomes();
    let dim = x.dim();

    let mut per_time: Vec<Vec<Vec<S>>> =
        vec![(0..n).map(|o| (0..dim).map(|k| x.at(0, o, k).clone()).collect()).collect()];
    let mut corrections: Vec<Vec<S>> = vec![vec![S::zero(); dim]; n];
    for t in 1..=f.horizon() {
        let dl = density.increment_at(t, 0);
        let part = f.at(t - 1);
        for k in 0..dim {
            let dx = x.increment_at(t, k);
            let cross = conditional_expectation(&dl.mul(&dx), part, q)?;
            for o in 0..n {
                let prev_density = density.at(t - 1, o, 0).clone();
                corrections[o][k] =
                    corrections[o][k].clone() + cross.value(o).clone() / prev_density;
            }
        }
        per_time.push(
            (0..n)
                .map(|o| {
                    (0..dim)
                        .map(|k| x.at(t, o, k).clone() - corrections[o][k].clone())
                        .collect()
                })
                .collect(),
        );
    }
    let out = AdaptedProcess::from_pointwise(f.clone(), dim, &per_time)?;
    require_martingale(&out, p, f, tol).map_err(|e| {
        Error::CheckFailed(format!("Girsanov-corrected process is not a p-martingale: {e}"))
    })?;
    Ok(out)
}

/// Outcome of the completeness-transfer check: completeness of the driver
/// under its minimal measure against completeness of its martingale part
/// under the base measure, plus agreement of the Girsanov correction with the
/// Doob martingale part.
pub struct PrpTransferReport<S: Scalar> {
    /// Structure-condition or positivity failure, when one occurred.
    pub failure: Option<Error<S>>,
    pub prp_driver_under_minimal: Option<PrpCheck>,
    pub prp_martingale_under_base: Option<PrpCheck>,
    /// The two completeness verdicts agree.
    pub equivalent: Option<bool>,
    /// Largest pointwise gap between the Girsanov correction of the driver
    /// (from the minimal measure back to the base one) and the Doob
    /// martingale part.
    pub girsanov_gap: Option<f64>,
}

impl<S: Scalar> PrpTransferReport<S> {
    pub fn holds(&self, tol: &S) -> bool {
        self.failure.is_none()
            && self.equivalent == Some(true)
            && self
                .girsanov_gap
                .map(|g| g <= tol.to_f64().max(f64::EPSILON))
                .unwrap_or(false)
            && self.prp_driver_under_minimal.as_ref().map(|c| c.holds) == Some(true)
    }
}

/// Runs the full transfer check for `x` under `(p, f)`.
pub fn prp_transfer_check<S: Scalar>(
    x: &AdaptedProcess<S>,
    f: &Arc<Filtration>,
    p: &Measure<S>,
    tol: &S,
) -> Result<PrpTransferReport<S>, S> {
    let sc = match structure_condition(x, p, f, tol) {
        Ok(sc) => sc,
        Err(e @ Error::StructureConditionFails { .. }) => {
            return Ok(PrpTransferReport {
                failure: Some(e),
                prp_driver_under_minimal: None,
                prp_martingale_under_base: None,
                equivalent: None,
                girsanov_gap: None,
            })
        }
        Err(e) => return Err(e),
    };
    let m = sc.decomposition().martingale_part.clone();
    let m_components: Vec<AdaptedProcess<S>> = (0..m.dim()).map(|k| m.component(k)).collect();
    let prp_m = prp_check(&m_components, p, f, tol)?;

    let minimal = match doleans_exponential(&sc) {
        Ok(mm) => mm,
        Err(e @ Error::MinimalMeasureNotPositive { .. }) => {
            return Ok(PrpTransferReport {
                failure: Some(e),
                prp_driver_under_minimal: None,
                prp_martingale_under_base: Some(prp_m),
                equivalent: None,
                girsanov_gap: None,
            })
        }
        Err(e) => return Err(e),
    };

    let x_f = x.reindex(f)?;
    let x_components: Vec<AdaptedProcess<S>> =
        (0..x_f.dim()).map(|k| x_f.component(k)).collect();
    let prp_x = prp_check(&x_components, &minimal.measure, f, tol)?;

    let transferred = girsanov_martingale_part(&x_f, &minimal.measure, p, f, tol)?;
    let gap = transferred.max_gap(&m)?.to_f64();

    Ok(PrpTransferReport {
        equivalent: Some(prp_x.holds == prp_m.holds),
        prp_driver_under_minimal: Some(prp_x),
        prp_martingale_under_base: Some(prp_m),
        failure: None,
        girsanov_gap: Some(gap),
    })
}
