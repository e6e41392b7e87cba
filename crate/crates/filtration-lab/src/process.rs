//! Adapted and predictable processes, Doob decomposition, quadratic and
//! predictable covariation, strong orthogonality.
//!
//! Processes store one vector value per block of their filtration, so
//! adaptedness is structural rather than checked. Every operation that reads a
//! process under a different pair (measure, filtration) takes that pair
//! explicitly: the same process is routinely examined under its own filtration,
//! under a joint filtration, and under several equivalent measures.

use crate::error::{Error, Result};
use crate::num::{near_zero, Scalar};
use crate::space::{conditional_expectation, Check, Filtration, Measure, RandomVariable};
use std::sync::Arc;

/// A vector-valued process with `values[t][block][component]`, constant on the
/// blocks of `filtration.at(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess<S: Scalar> {
    filtration: Arc<Filtration>,
    dim: usize,
    values: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> AdaptedProcess<S> {
    pub fn new(
        filtration: Arc<Filtration>,
        dim: usize,
        values: Vec<Vec<Vec<S>>>,
    ) -> Result<Self, S> {
        if dim == 0 {
            return Err(Error::validation("process.dim", "dimension must be at least 1"));
        }
        if values.len() != filtration.horizon() + 1 {
            return Err(Error::validation(
                "process.values",
                format!(
                    "expected {} time slices, got {}",
                    filtration.horizon() + 1,
                    values.len()
                ),
            ));
        }
        for (t, slice) in values.iter().enumerate() {
            if slice.len() != filtration.at(t).n_blocks() {
                return Err(Error::validation(
                    format!("process.values[{t}]"),
                    format!(
                        "expected {} blocks, got {}",
                        filtration.at(t).n_blocks(),
                        slice.len()
                    ),
                ));
            }
            for (b, v) in slice.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
                let _ = b;
            }
        }
        Ok(AdaptedProcess {
            filtration,
            dim,
            values,
        })
    }

    /// Builds a scalar process from per-time pointwise values, verifying that
    /// each slice is constant on the blocks of the filtration.
    pub fn from_scalar_pointwise(
        filtration: Arc<Filtration>,
        per_time: &[RandomVariable<S>],
    ) -> Result<Self, S> {
        let slices: Vec<Vec<Vec<S>>> = per_time
            .iter()
            .map(|rv| rv.values().iter().map(|v| vec![v.clone()]).collect())
            .collect();
        Self::from_pointwise(filtration, 1, &slices)
    }

    /// Builds a process from pointwise values `per_time[t][outcome][component]`,
    /// verifying constancy on blocks (exact equality; adaptedness is not a
    /// tolerance matter).
    pub fn from_pointwise(
        filtration: Arc<Filtration>,
        dim: usize,
        per_time: &[Vec<Vec<S>>],
    ) -> Result<Self, S> {
        if per_time.len() != filtration.horizon() + 1 {
            return Err(Error::validation(
                "process.values",
                format!(
                    "expected {} time slices, got {}",
                    filtration.horizon() + 1,
                    per_time.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(per_time.len());
        for (t, slice) in per_time.iter().enumerate() {
            if slice.len() != filtration.n_outcomes() {
                return Err(Error::MismatchedSpace {
                    left: slice.len(),
                    right: filtration.n_outcomes(),
                });
            }
            let part = filtration.at(t);
            let mut block_values = Vec::with_capacity(part.n_blocks());
            for block in part.blocks() {
                let first = &slice[block[0]];
                for &o in block {
                    if &slice[o] != first {
                        return Err(Error::NotAdapted {
                            detail: format!(
                                "values differ inside a block of the time-{t} partition"
                            ),
                        });
                    }
                }
                block_values.push(first.clone());
            }
            values.push(block_values);
        }
        AdaptedProcess::new(filtration, dim, values)
    }

    /// A process identically zero at all times.
    pub fn zero(filtration: Arc<Filtration>, dim: usize) -> Self {
        let values = (0..=filtration.horizon())
            .map(|t| vec![vec![S::zero(); dim]; filtration.at(t).n_blocks()])
            .collect();
        AdaptedProcess {
            filtration,
            dim,
            values,
        }
    }

    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.filtration.horizon()
    }

    /// Value by (time, outcome, component).
    pub fn at(&self, t: usize, outcome: usize, component: usize) -> &S {
        &self.values[t][self.filtration.at(t).block_of(outcome)][component]
    }

    /// Value by (time, block index, component).
    pub fn at_block(&self, t: usize, block: usize, component: usize) -> &S {
        &self.values[t][block][component]
    }

    /// One component at one time as a pointwise random variable.
    pub fn component_at(&self, t: usize, component: usize) -> RandomVariable<S> {
        let n = self.filtration.n_outcomes();
        RandomVariable::new((0..n).map(|o| self.at(t, o, component).clone()).collect())
    }

    /// Increment `X_t - X_{t-1}` of one component, pointwise. `t >= 1`.
    pub fn increment_at(&self, t: usize, component: usize) -> RandomVariable<S> {
        let n = self.filtration.n_outcomes();
        RandomVariable::new(
            (0..n)
                .map(|o| self.at(t, o, component).clone() - self.at(t - 1, o, component).clone())
                .collect(),
        )
    }

    /// Terminal value of one component.
    pub fn terminal(&self, component: usize) -> RandomVariable<S> {
        self.component_at(self.horizon(), component)
    }

    /// Extracts one component as a scalar process.
    pub fn component(&self, component: usize) -> AdaptedProcess<S> {
        let values = self
            .values
            .iter()
            .map(|slice| slice.iter().map(|v| vec![v[component].clone()]).collect())
            .collect();
        AdaptedProcess {
            filtration: self.filtration.clone(),
            dim: 1,
            values,
        }
    }

    /// Re-reads the process on a finer filtration (same horizon). Fails with
    /// `NotAdapted` when `fine` does not refine the process's own filtration.
    pub fn reindex(&self, fine: &Arc<Filtration>) -> Result<AdaptedProcess<S>, S> {
        if Arc::ptr_eq(fine, &self.filtration) || **fine == *self.filtration {
            let mut copy = self.clone();
            copy.filtration = fine.clone();
            return Ok(copy);
        }
        if fine.horizon() != self.horizon() {
            return Err(Error::HorizonMismatch {
                left: fine.horizon(),
                right: self.horizon(),
            });
        }
        if !fine.refines(&self.filtration) {
            return Err(Error::NotAdapted {
                detail: "target filtration does not refine the process filtration".into(),
            });
        }
        let mut values = Vec::with_capacity(self.values.len());
        for t in 0..=self.horizon() {
            let part = fine.at(t);
            let own = self.filtration.at(t);
            let slice = part
                .blocks()
                .iter()
                .map(|b| self.values[t][own.block_of(b[0])].clone())
                .collect();
            values.push(slice);
        }
        Ok(AdaptedProcess {
            filtration: fine.clone(),
            dim: self.dim,
            values,
        })
    }

    /// Pointwise difference of two processes on the same grid.
    pub fn sub(&self, other: &AdaptedProcess<S>) -> Result<AdaptedProcess<S>, S> {
        self.zip_with(other, |a, b| a.clone() - b.clone())
    }

    /// Pointwise sum.
    pub fn add(&self, other: &AdaptedProcess<S>) -> Result<AdaptedProcess<S>, S> {
        self.zip_with(other, |a, b| a.clone() + b.clone())
    }

    fn zip_with(
        &self,
        other: &AdaptedProcess<S>,
        f: impl Fn(&S, &S) -> S,
    ) -> Result<AdaptedProcess<S>, S> {
        if self.horizon() != other.horizon() {
            return Err(Error::GridMismatch {
                left: self.horizon(),
                right: other.horizon(),
            });
        }
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        // Combine on the common refinement-compatible grid: reindex both to the
        // finer filtration when they differ.
        let filtration = if *self.filtration == *other.filtration {
            self.filtration.clone()
        } else if self.filtration.refines(&other.filtration) {
            self.filtration.clone()
        } else if other.filtration.refines(&self.filtration) {
            other.filtration.clone()
        } else {
            Arc::new(crate::space::join(&self.filtration, &other.filtration)?)
        };
        let a = self.reindex(&filtration)?;
        let b = other.reindex(&filtration)?;
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(sa, sb)| {
                sa.iter()
                    .zip(sb)
                    .map(|(va, vb)| va.iter().zip(vb).map(|(x, y)| f(x, y)).collect())
                    .collect()
            })
            .collect();
        Ok(AdaptedProcess {
            filtration,
            dim: self.dim,
            values,
        })
    }

    /// Largest absolute pointwise gap between two processes on the same grid.
    pub fn max_gap(&self, other: &AdaptedProcess<S>) -> Result<S, S> {
        let diff = self.sub(other)?;
        let mut best = S::zero();
        for slice in &diff.values {
            for v in slice {
                for x in v {
                    if x.abs() > best {
                        best = x.abs();
                    }
                }
            }
        }
        Ok(best)
    }
}

/// A vector-valued process known one step in advance:
/// `values[t-1][block of P_{t-1}][component]` for `t` in `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictableProcess<S: Scalar> {
    filtration: Arc<Filtration>,
    dim: usize,
    values: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> PredictableProcess<S> {
    pub fn new(
        filtration: Arc<Filtration>,
        dim: usize,
        values: Vec<Vec<Vec<S>>>,
    ) -> Result<Self, S> {
        if dim == 0 {
            return Err(Error::validation("predictable.dim", "dimension must be at least 1"));
        }
        if values.len() != filtration.horizon() {
            return Err(Error::validation(
                "predictable.values",
                format!(
                    "expected {} time slices (t = 1..=T), got {}",
                    filtration.horizon(),
                    values.len()
                ),
            ));
        }
        for (i, slice) in values.iter().enumerate() {
            let expected = filtration.at(i).n_blocks();
            if slice.len() != expected {
                return Err(Error::validation(
                    format!("predictable.values[{i}]"),
                    format!("expected {expected} blocks of the time-{i} partition, got {}", slice.len()),
                ));
            }
            for v in slice {
                if v.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
            }
        }
        Ok(PredictableProcess {
            filtration,
            dim,
            values,
        })
    }

    pub fn constant(filtration: Arc<Filtration>, value: Vec<S>) -> Self {
        let dim = value.len();
        let values = (0..filtration.horizon())
            .map(|i| vec![value.clone(); filtration.at(i).n_blocks()])
            .collect();
        PredictableProcess {
            filtration,
            dim,
            values,
        }
    }

    pub fn zero(filtration: Arc<Filtration>, dim: usize) -> Self {
        Self::constant(filtration, vec![S::zero(); dim])
    }

    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value applying to the step ending at `t` (so known at `t - 1`),
    /// by outcome.
    pub fn at(&self, t: usize, outcome: usize, component: usize) -> &S {
        &self.values[t - 1][self.filtration.at(t - 1).block_of(outcome)][component]
    }

    /// Value by (step-ending time `t`, block of `P_{t-1}`, component).
    pub fn at_block(&self, t: usize, block: usize, component: usize) -> &S {
        &self.values[t - 1][block][component]
    }

    pub fn values_mut(&mut self) -> &mut Vec<Vec<Vec<S>>> {
        &mut self.values
    }
}

/// The canonical decomposition `X = X_0 + M + A` with a martingale part `M`
/// (started at zero) and a predictable drift `A` (started at zero, increments
/// known one step in advance).
#[derive(Debug, Clone)]
pub struct DoobDecomposition<S: Scalar> {
    pub martingale_part: AdaptedProcess<S>,
    pub drift_part: AdaptedProcess<S>,
}

/// Doob decomposition of `x` under `mu`, taken along `x`'s own filtration:
/// the drift increment at `t` is `E[dX_t | P_{t-1}]`.
pub fn doob_decomposition<S: Scalar>(
    x: &AdaptedProcess<S>,
    mu: &Measure<S>,
) -> Result<DoobDecomposition<S>, S> {
    let f = x.filtration().clone();
    let n = f.n_outcomes();
    let horizon = f.horizon();
    let dim = x.dim();

    let mut m_point: Vec<Vec<Vec<S>>> = vec![vec![vec![S::zero(); dim]; n]];
    let mut a_point: Vec<Vec<Vec<S>>> = vec![vec![vec![S::zero(); dim]; n]];

    for t in 1..=horizon {
        let mut m_slice = m_point[t - 1].clone();
        let mut a_slice = a_point[t - 1].clone();
        for k in 0..dim {
            let inc = x.increment_at(t, k);
            let drift = conditional_expectation(&inc, f.at(t - 1), mu)?;
            for o in 0..n {
                let d = drift.value(o).clone();
                m_slice[o][k] = m_slice[o][k].clone() + inc.value(o).clone() - d.clone();
                a_slice[o][k] = a_slice[o][k].clone() + d;
            }
        }
        m_point.push(m_slice);
        a_point.push(a_slice);
    }

    Ok(DoobDecomposition {
        martingale_part: AdaptedProcess::from_pointwise(f.clone(), dim, &m_point)?,
        drift_part: AdaptedProcess::from_pointwise(f, dim, &a_point)?,
    })
}

/// Witness of a martingale-property failure.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleWitness<S> {
    pub time: usize,
    pub block: usize,
    pub component: usize,
    pub drift: S,
}

/// Checks that every component of `x` is a `(mu, f)`-martingale:
/// `E[dX_t | f_{t-1}] = 0` within `tol` for all `t`.
///
/// `x` must be `f`-adapted; `f` must refine `x`'s filtration at every time.
pub fn is_martingale<S: Scalar>(
    x: &AdaptedProcess<S>,
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<Check<MartingaleWitness<S>>, S> {
    let x = x.reindex(f)?;
    for t in 1..=f.horizon() {
        let part = f.at(t - 1);
        for k in 0..x.dim() {
            let inc = x.increment_at(t, k);
            let drift = conditional_expectation(&inc, part, mu)?;
            for (b, block) in part.blocks().iter().enumerate() {
                let d = drift.value(block[0]);
                if !near_zero(d, tol) {
                    return Ok(Check::fail(MartingaleWitness {
                        time: t,
                        block: b,
                        component: k,
                        drift: d.clone(),
                    }));
                }
            }
        }
    }
    Ok(Check::pass())
}

/// Convenience: `is_martingale` as a hard precondition.
pub fn require_martingale<S: Scalar>(
    x: &AdaptedProcess<S>,
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<(), S> {
    let check = is_martingale(x, mu, f, tol)?;
    if let Some(w) = check.witness {
        return Err(Error::NotMartingale {
            time: w.time,
            block: w.block,
            drift: w.drift,
        });
    }
    Ok(())
}

/// Pathwise quadratic covariation of two scalar processes:
/// `[x, y]_t = sum_{s <= t} dx_s dy_s`. Measure-free; the result lives on the
/// join of the two filtrations.
pub fn quadratic_covariation<S: Scalar>(
    x: &AdaptedProcess<S>,
    y: &AdaptedProcess<S>,
) -> Result<AdaptedProcess<S>, S> {
    if x.dim() != 1 || y.dim() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            got: x.dim().max(y.dim()),
        });
    }
    if x.horizon() != y.horizon() {
        return Err(Error::GridMismatch {
            left: x.horizon(),
            right: y.horizon(),
        });
    }
    let filtration = if *x.filtration() == *y.filtration() {
        x.filtration().clone()
    } else {
        Arc::new(crate::space::join(x.filtration(), y.filtration())?)
    };
    let n = filtration.n_outcomes();
    let mut per_time: Vec<Vec<Vec<S>>> = vec![vec![vec![S::zero()]; n]];
    for t in 1..=x.horizon() {
        let dx = x.increment_at(t, 0);
        let dy = y.increment_at(t, 0);
        let mut slice = per_time[t - 1].clone();
        for o in 0..n {
            slice[o][0] =
                slice[o][0].clone() + dx.value(o).clone() * dy.value(o).clone();
        }
        per_time.push(slice);
    }
    AdaptedProcess::from_pointwise(filtration, 1, &per_time)
}

/// Predictable covariation `<x, y>_t = sum_{s <= t} E[dx_s dy_s | f_{s-1}]`
/// under `mu` -- the Doob compensator of `[x, y]` along `f`.
pub fn predictable_covariation<S: Scalar>(
    x: &AdaptedProcess<S>,
    y: &AdaptedProcess<S>,
    mu: &Measure<S>,
    f: &Arc<Filtration>,
) -> Result<AdaptedProcess<S>, S> {
    if x.dim() != 1 || y.dim() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            got: x.dim().max(y.dim()),
        });
    }
    let x = x.reindex(f)?;
    let y = y.reindex(f)?;
    let n = f.n_outcomes();
    let mut per_time: Vec<Vec<Vec<S>>> = vec![vec![vec![S::zero()]; n]];
    for t in 1..=f.horizon() {
        let dx = x.increment_at(t, 0);
        let dy = y.increment_at(t, 0);
        let product = dx.mul(&dy);
        let ce = conditional_expectation(&product, f.at(t - 1), mu)?;
        let mut slice = per_time[t - 1].clone();
        for o in 0..n {
            slice[o][0] = slice[o][0].clone() + ce.value(o).clone();
        }
        per_time.push(slice);
    }
    AdaptedProcess::from_pointwise(f.clone(), 1, &per_time)
}

/// Witness of a strong-orthogonality failure: the first nonzero compensator
/// increment.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityWitness<S> {
    pub time: usize,
    pub block: usize,
    pub value: S,
}

/// Two scalar `(mu, f)`-martingales are strongly orthogonal when `[x, y]` is
/// itself a `(mu, f)`-martingale, equivalently `<x, y> == 0`.
pub fn strongly_orthogonal<S: Scalar>(
    x: &AdaptedProcess<S>,
    y: &AdaptedProcess<S>,
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<Check<OrthogonalityWitness<S>>, S> {
    require_martingale(x, mu, f, tol)?;
    require_martingale(y, mu, f, tol)?;
    let sharp = predictable_covariation(x, y, mu, f)?;
    for t in 1..=f.horizon() {
        let part = f.at(t - 1);
        for (b, block) in part.blocks().iter().enumerate() {
            let o = block[0];
            let inc = sharp.at(t, o, 0).clone() - sharp.at(t - 1, o, 0).clone();
            if !near_zero(&inc, tol) {
                return Ok(Check::fail(OrthogonalityWitness {
                    time: t,
                    block: b,
                    value: inc,
                }));
            }
        }
    }
    Ok(Check::pass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rat;
    use crate::space::Partition;

    fn r(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    fn z() -> Rat {
        Rat::from_int(0)
    }

    /// One-step space {up, down} with weights (p, 1-p) and X_1 = (+1, -1).
    fn one_step(p_num: i64, p_den: i64) -> (Arc<Filtration>, Measure<Rat>, AdaptedProcess<Rat>) {
        let f = Arc::new(
            Filtration::new::<Rat>(vec![Partition::trivial(2), Partition::singletons(2)]).unwrap(),
        );
        let mu = Measure::new(
            vec![r(p_num, p_den), r(p_den - p_num, p_den)],
            &z(),
        )
        .unwrap();
        let x = AdaptedProcess::new(
            f.clone(),
            1,
            vec![vec![vec![r(0, 1)]], vec![vec![r(1, 1)], vec![r(-1, 1)]]],
        )
        .unwrap();
        (f, mu, x)
    }

    #[test]
    fn doob_splits_drifted_coin() {
        // S3: X_1 in {+1, -1} with p = (0.6, 0.4): drift 0.2, dM = (0.8, -1.2).
        let (_f, mu, x) = one_step(3, 5);
        let d = doob_decomposition(&x, &mu).unwrap();
        assert_eq!(d.drift_part.at(1, 0, 0), &r(1, 5));
        assert_eq!(d.drift_part.at(1, 1, 0), &r(1, 5));
        assert_eq!(d.martingale_part.at(1, 0, 0), &r(4, 5));
        assert_eq!(d.martingale_part.at(1, 1, 0), &r(-6, 5));
    }

    #[test]
    fn doob_of_martingale_has_zero_drift() {
        let (f, mu, x) = one_step(1, 2);
        let d = doob_decomposition(&x, &mu).unwrap();
        assert_eq!(d.drift_part, AdaptedProcess::zero(f, 1));
        // Re-decomposing the martingale part keeps the drift at zero.
        let d2 = doob_decomposition(&d.martingale_part, &mu).unwrap();
        let zero = AdaptedProcess::zero(d.martingale_part.filtration().clone(), 1);
        assert_eq!(d2.drift_part, zero);
    }

    #[test]
    fn doob_of_deterministic_process_has_zero_martingale_part() {
        let f = Arc::new(
            Filtration::new::<Rat>(vec![Partition::trivial(2), Partition::singletons(2)]).unwrap(),
        );
        let mu = Measure::new(vec![r(1, 2), r(1, 2)], &z()).unwrap();
        let x = AdaptedProcess::new(
            f.clone(),
            1,
            vec![vec![vec![r(1, 1)]], vec![vec![r(3, 1)], vec![r(3, 1)]]],
        )
        .unwrap();
        let d = doob_decomposition(&x, &mu).unwrap();
        assert_eq!(d.martingale_part, AdaptedProcess::zero(f, 1));
        assert_eq!(d.drift_part.at(1, 0, 0), &r(2, 1));
    }

    #[test]
    fn martingale_check_finds_drift() {
        let (f, mu, x) = one_step(3, 5);
        let check = is_martingale(&x, &mu, &f, &z()).unwrap();
        assert!(!check.holds);
        let w = check.witness.unwrap();
        assert_eq!(w.time, 1);
        assert_eq!(w.drift, r(1, 5));

        // Under the reweighted uniform measure the same X is a martingale.
        let uniform = Measure::new(vec![r(1, 2), r(1, 2)], &z()).unwrap();
        assert!(is_martingale(&x, &uniform, &f, &z()).unwrap().holds);
    }

    #[test]
    fn bracket_of_symmetric_walk_is_time() {
        // Two-step +/-1 walk on 4 path outcomes (uu, ud, du, dd).
        let p1 = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let f = Arc::new(
            Filtration::new::<Rat>(vec![Partition::trivial(4), p1, Partition::singletons(4)])
                .unwrap(),
        );
        let x = AdaptedProcess::new(
            f.clone(),
            1,
            vec![
                vec![vec![r(0, 1)]],
                vec![vec![r(1, 1)], vec![r(-1, 1)]],
                vec![vec![r(2, 1)], vec![r(0, 1)], vec![r(0, 1)], vec![r(-2, 1)]],
            ],
        )
        .unwrap();
        let qv = quadratic_covariation(&x, &x).unwrap();
        for o in 0..4 {
            assert_eq!(qv.at(1, o, 0), &r(1, 1));
            assert_eq!(qv.at(2, o, 0), &r(2, 1));
        }
        // Bracket against a constant vanishes.
        let c = AdaptedProcess::new(
            f.clone(),
            1,
            vec![
                vec![vec![r(7, 1)]],
                vec![vec![r(7, 1)], vec![r(7, 1)]],
                vec![vec![r(7, 1)]; 4],
            ],
        )
        .unwrap();
        let qc = quadratic_covariation(&x, &c).unwrap();
        assert_eq!(qc, AdaptedProcess::zero(f, 1));
    }

    #[test]
    fn polarisation_identity_holds_exactly() {
        let p1 = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let f = Arc::new(
            Filtration::new::<Rat>(vec![Partition::trivial(4), p1, Partition::singletons(4)])
                .unwrap(),
        );
        let x = AdaptedProcess::new(
            f.clone(),
            1,
            vec![
                vec![vec![r(0, 1)]],
                vec![vec![r(2, 1)], vec![r(-1, 1)]],
                vec![vec![r(3, 1)], vec![r(1, 2)], vec![r(0, 1)], vec![r(-3, 1)]],
            ],
        )
        .unwrap();
        let y = AdaptedProcess::new(
            f.clone(),
            1,
            vec![
                vec![vec![r(1, 1)]],
                vec![vec![r(1, 2)], vec![r(2, 1)]],
                vec![vec![r(1, 1)], vec![r(-1, 1)], vec![r(5, 2)], vec![r(2, 1)]],
            ],
        )
        .unwrap();
        let xy = quadratic_covariation(&x, &y).unwrap();
        let sum = x.add(&y).unwrap();
        let diff = x.sub(&y).unwrap();
        let q_sum = quadratic_covariation(&sum, &sum).unwrap();
        let q_diff = quadratic_covariation(&diff, &diff).unwrap();
        for t in 0..=2 {
            for o in 0..4 {
                let lhs = xy.at(t, o, 0).clone();
                let rhs = (q_sum.at(t, o, 0).clone() - q_diff.at(t, o, 0).clone()) / r(4, 1);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn compensator_makes_bracket_a_martingale() {
        // S3 one-step: <M>_1 = 0.6*0.64 + 0.4*1.44 = 0.96.
        let (f, mu, x) = one_step(3, 5);
        let d = doob_decomposition(&x, &mu).unwrap();
        let m = &d.martingale_part;
        let sharp = predictable_covariation(m, m, &mu, &f).unwrap();
        assert_eq!(sharp.at(1, 0, 0), &r(24, 25));
        let bracket = quadratic_covariation(m, m).unwrap();
        let centered = bracket.sub(&sharp).unwrap();
        assert!(is_martingale(&centered, &mu, &f, &z()).unwrap().holds);
    }

    #[test]
    fn strong_orthogonality_of_independent_coins_and_its_failure() {
        let fa = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let fb = Partition::new::<Rat>(vec![vec![0, 2], vec![1, 3]], 4).unwrap();
        let g = Arc::new(
            Filtration::new::<Rat>(vec![Partition::trivial(4), fa.join(&fb)]).unwrap(),
        );
        let m = AdaptedProcess::from_pointwise(
            g.clone(),
            1,
            &[
                vec![vec![r(0, 1)]; 4],
                vec![vec![r(1, 1)], vec![r(1, 1)], vec![r(-1, 1)], vec![r(-1, 1)]],
            ],
        )
        .unwrap();
        let n = AdaptedProcess::from_pointwise(
            g.clone(),
            1,
            &[
                vec![vec![r(0, 1)]; 4],
                vec![vec![r(1, 1)], vec![r(-1, 1)], vec![r(1, 1)], vec![r(-1, 1)]],
            ],
        )
        .unwrap();

        let product = Measure::new(vec![r(1, 4); 4], &z()).unwrap();
        assert!(strongly_orthogonal(&m, &n, &product, &g, &z()).unwrap().holds);

        let correlated =
            Measure::new(vec![r(3, 10), r(2, 10), r(2, 10), r(3, 10)], &z()).unwrap();
        let check = strongly_orthogonal(&m, &n, &correlated, &g, &z()).unwrap();
        assert!(!check.holds);
        assert_eq!(check.witness.unwrap().value, r(1, 5));

        // A non-constant martingale is never strongly orthogonal to itself.
        let self_check = strongly_orthogonal(&m, &m, &product, &g, &z()).unwrap();
        assert!(!self_check.holds);
    }

    #[test]
    fn strong_orthogonality_requires_martingales() {
        let (f, mu, x) = one_step(3, 5);
        let err = strongly_orthogonal(&x, &x, &mu, &f, &z()).unwrap_err();
        assert!(matches!(err, Error::NotMartingale { .. }));
    }

    #[test]
    fn integration_by_parts_for_martingales() {
        // E[x_T y_T] - x_0 y_0 = E[[x, y]_T] for martingales.
        let fa = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let fb = Partition::new::<Rat>(vec![vec![0, 2], vec![1, 3]], 4).unwrap();
        let g = Arc::new(
            Filtration::new::<Rat>(vec![Partition::trivial(4), fa.join(&fb)]).unwrap(),
        );
        let mu = Measure::new(vec![r(3, 10), r(2, 10), r(2, 10), r(3, 10)], &z()).unwrap();
        let m = AdaptedProcess::from_pointwise(
            g.clone(),
            1,
            &[
                vec![vec![r(0, 1)]; 4],
                vec![vec![r(1, 1)], vec![r(1, 1)], vec![r(-1, 1)], vec![r(-1, 1)]],
            ],
        )
        .unwrap();
        let n = AdaptedProcess::from_pointwise(
            g.clone(),
            1,
            &[
                vec![vec![r(0, 1)]; 4],
                vec![vec![r(1, 1)], vec![r(-1, 1)], vec![r(1, 1)], vec![r(-1, 1)]],
            ],
        )
        .unwrap();
        let lhs = m.terminal(0).mul(&n.terminal(0)).expectation(&mu);
        let bracket = quadratic_covariation(&m, &n).unwrap();
        let rhs = bracket.terminal(0).expectation(&mu);
        assert_eq!(lhs, rhs);
    }
}
