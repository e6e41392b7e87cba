//! Finite filtered probability spaces.
//!
//! A sample space is a finite list of labelled outcomes with strictly positive
//! weights. Sigma-algebras are represented by their atom partitions only, and
//! a filtration is a refining sequence of partitions starting from the trivial
//! one. Strict positivity of all weights is enforced at construction so that
//! every measure built on a space is equivalent to every other; no null-set
//! bookkeeping exists anywhere in the crate.

use crate::error::{Error, Result};
use crate::num::{near_zero, sum, within, Scalar};
use crate::process::AdaptedProcess;
use std::sync::Arc;

/// A finite outcome set `(Omega, P)` with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteProbSpace<S: Scalar> {
    labels: Vec<String>,
    weights: Vec<S>,
}

impl<S: Scalar> FiniteProbSpace<S> {
    /// Builds a space, rejecting non-positive weights and weight vectors that
    /// do not sum to one within `tol`.
    pub fn new(labels: Vec<String>, weights: Vec<S>, tol: &S) -> Result<Self, S> {
        if labels.is_empty() {
            return Err(Error::validation("outcomes", "outcome set is empty"));
        }
        if labels.len() != weights.len() {
            return Err(Error::validation(
                "weights",
                format!("{} outcomes but {} weights", labels.len(), weights.len()),
            ));
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_positive() {
                return Err(Error::validation(
                    format!("weights[{i}]"),
                    format!("weight {w} of outcome {} is not strictly positive", labels[i]),
                ));
            }
        }
        let total = sum(&weights);
        if !within(&total, &S::one(), tol) {
            return Err(Error::validation(
                "weights",
                format!("weights sum to {total}, not 1"),
            ));
        }
        Ok(FiniteProbSpace { labels, weights })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, outcome: usize) -> &str {
        &self.labels[outcome]
    }

    /// The base measure `P`.
    pub fn measure(&self) -> Measure<S> {
        Measure {
            weights: self.weights.clone(),
        }
    }
}

/// A strictly positive probability measure on a space's outcome set.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure<S: Scalar> {
    weights: Vec<S>,
}

impl<S: Scalar> Measure<S> {
    pub fn new(weights: Vec<S>, tol: &S) -> Result<Self, S> {
        for (i, w) in weights.iter().enumerate() {
            if !w.is_positive() {
                return Err(Error::validation(
                    format!("measure[{i}]"),
                    format!("weight {w} is not strictly positive"),
                ));
            }
        }
        let total = sum(&weights);
        if !within(&total, &S::one(), tol) {
            return Err(Error::validation(
                "measure",
                format!("weights sum to {total}, not 1"),
            ));
        }
        Ok(Measure { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, outcome: usize) -> &S {
        &self.weights[outcome]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Mass of a set of outcomes.
    pub fn mass(&self, outcomes: &[usize]) -> S {
        outcomes
            .iter()
            .fold(S::zero(), |acc, &i| acc + self.weights[i].clone())
    }

    fn check_len(&self, n: usize) -> Result<(), S> {
        if self.weights.len() != n {
            return Err(Error::MismatchedSpace {
                left: self.weights.len(),
                right: n,
            });
        }
        Ok(())
    }
}

/// A scalar random variable: one value per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> RandomVariable<S> {
    pub fn new(values: Vec<S>) -> Self {
        RandomVariable { values }
    }

    pub fn constant(value: S, n: usize) -> Self {
        RandomVariable {
            values: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, outcome: usize) -> &S {
        &self.values[outcome]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn expectation(&self, mu: &Measure<S>) -> S {
        self.values
            .iter()
            .zip(mu.weights())
            .fold(S::zero(), |acc, (v, w)| acc + v.clone() * w.clone())
    }

    /// `E[self * other]` under `mu` -- the L2 inner product.
    pub fn inner(&self, other: &RandomVariable<S>, mu: &Measure<S>) -> S {
        crate::linalg::weighted_inner(mu.weights(), &self.values, &other.values)
    }

    pub fn map<F: Fn(&S) -> S>(&self, f: F) -> Self {
        RandomVariable {
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        RandomVariable {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        RandomVariable {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        RandomVariable {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.clone() * b.clone())
                .collect(),
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        RandomVariable {
            values: self.values.iter().map(|v| c.clone() * v.clone()).collect(),
        }
    }
}

/// Atoms of a sigma-algebra on a finite outcome set.
///
/// Blocks are kept in canonical form: outcomes sorted within each block,
/// blocks sorted by their smallest outcome. This makes partition equality and
/// block indices deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new<S: Scalar>(mut blocks: Vec<Vec<usize>>, n_outcomes: usize) -> Result<Self, S> {
        let mut seen = vec![false; n_outcomes];
        for block in blocks.iter_mut() {
            if block.is_empty() {
                return Err(Error::validation("partition", "empty block"));
            }
            block.sort_unstable();
            for &o in block.iter() {
                if o >= n_outcomes {
                    return Err(Error::validation(
                        "partition",
                        format!("outcome index {o} out of range ({n_outcomes} outcomes)"),
                    ));
                }
                if seen[o] {
                    return Err(Error::validation(
                        "partition",
                        format!("outcome {o} appears in two blocks"),
                    ));
                }
                seen[o] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::validation(
                "partition",
                format!("outcome {missing} is not covered by any block"),
            ));
        }
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![0usize; n_outcomes];
        for (idx, block) in blocks.iter().enumerate() {
            for &o in block {
                block_of[o] = idx;
            }
        }
        Ok(Partition { blocks, block_of })
    }

    /// The coarsest partition `{Omega}`.
    pub fn trivial(n_outcomes: usize) -> Self {
        Partition {
            blocks: vec![(0..n_outcomes).collect()],
            block_of: vec![0; n_outcomes],
        }
    }

    /// The finest partition (all singletons).
    pub fn singletons(n_outcomes: usize) -> Self {
        Partition {
            blocks: (0..n_outcomes).map(|o| vec![o]).collect(),
            block_of: (0..n_outcomes).collect(),
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, idx: usize) -> &[usize] {
        &self.blocks[idx]
    }

    pub fn block_of(&self, outcome: usize) -> usize {
        self.block_of[outcome]
    }

    /// True when every block of `self` lies inside one block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.n_outcomes() != coarser.n_outcomes() {
            return false;
        }
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&o| coarser.block_of[o] == coarser.block_of[b[0]]))
    }

    /// Common refinement: blockwise intersection.
    pub fn join(&self, other: &Partition) -> Partition {
        let n = self.n_outcomes();
        // Group outcomes by the pair (block in self, block in other).
        let mut key_to_block: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
            std::collections::BTreeMap::new();
        for o in 0..n {
            key_to_block
                .entry((self.block_of[o], other.block_of[o]))
                .or_default()
                .push(o);
        }
        let mut blocks: Vec<Vec<usize>> = key_to_block.into_values().collect();
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![0usize; n];
        for (idx, block) in blocks.iter().enumerate() {
            for &o in block {
                block_of[o] = idx;
            }
        }
        Partition { blocks, block_of }
    }
}

/// A refining sequence of partitions `P_0, ..., P_T` with `P_0` trivial.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtration {
    partitions: Vec<Partition>,
}

impl Filtration {
    pub fn new<S: Scalar>(partitions: Vec<Partition>) -> Result<Self, S> {
        if partitions.len() < 2 {
            return Err(Error::validation(
                "filtration",
                "horizon must be at least 1 (need P_0 and P_1)",
            ));
        }
        let n = partitions[0].n_outcomes();
        if partitions[0].n_blocks() != 1 {
            return Err(Error::validation(
                "filtration.partitions[0]",
                "initial partition must be trivial",
            ));
        }
        for (t, p) in partitions.iter().enumerate() {
            if p.n_outcomes() != n {
                return Err(Error::validation(
                    format!("filtration.partitions[{t}]"),
                    "partitions index different outcome sets",
                ));
            }
        }
        for t in 1..partitions.len() {
            if !partitions[t].refines(&partitions[t - 1]) {
                return Err(Error::validation(
                    format!("filtration.partitions[{t}]"),
                    format!("partition at time {t} does not refine the one at time {}", t - 1),
                ));
            }
        }
        Ok(Filtration { partitions })
    }

    /// The filtration that never reveals anything.
    pub fn trivial(horizon: usize, n_outcomes: usize) -> Self {
        Filtration {
            partitions: (0..=horizon).map(|_| Partition::trivial(n_outcomes)).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.partitions.len() - 1
    }

    pub fn n_outcomes(&self) -> usize {
        self.partitions[0].n_outcomes()
    }

    pub fn at(&self, t: usize) -> &Partition {
        &self.partitions[t]
    }

    /// True when `self` refines `other` at every time.
    pub fn refines(&self, other: &Filtration) -> bool {
        self.horizon() == other.horizon()
            && self
                .partitions
                .iter()
                .zip(&other.partitions)
                .all(|(fine, coarse)| fine.refines(coarse))
    }
}

/// `E[rv | part]` under `mu`: on each block, the weighted average of `rv`.
pub fn conditional_expectation<S: Scalar>(
    rv: &RandomVariable<S>,
    part: &Partition,
    mu: &Measure<S>,
) -> Result<RandomVariable<S>, S> {
    if rv.len() != part.n_outcomes() {
        return Err(Error::MismatchedSpace {
            left: rv.len(),
            right: part.n_outcomes(),
        });
    }
    mu.check_len(rv.len())?;
    let mut out = vec![S::zero(); rv.len()];
    for block in part.blocks() {
        let mut mass = S::zero();
        let mut acc = S::zero();
        for &o in block {
            mass = mass + mu.weight(o).clone();
            acc = acc + mu.weight(o).clone() * rv.value(o).clone();
        }
        // Block mass is positive because all weights are.
        let avg = acc / mass;
        for &o in block {
            out[o] = avg.clone();
        }
    }
    Ok(RandomVariable::new(out))
}

/// The join `F v H`: blockwise intersections at every time.
pub fn join<S: Scalar>(f: &Filtration, h: &Filtration) -> Result<Filtration, S> {
    if f.horizon() != h.horizon() {
        return Err(Error::HorizonMismatch {
            left: f.horizon(),
            right: h.horizon(),
        });
    }
    if f.n_outcomes() != h.n_outcomes() {
        return Err(Error::MismatchedSpace {
            left: f.n_outcomes(),
            right: h.n_outcomes(),
        });
    }
    let partitions = f
        .partitions
        .iter()
        .zip(&h.partitions)
        .map(|(a, b)| a.join(b))
        .collect();
    Ok(Filtration { partitions })
}

/// Outcome of a witnessed boolean check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check<W> {
    pub holds: bool,
    pub witness: Option<W>,
}

impl<W> Check<W> {
    pub fn pass() -> Self {
        Check {
            holds: true,
            witness: None,
        }
    }

    pub fn fail(witness: W) -> Self {
        Check {
            holds: false,
            witness: Some(witness),
        }
    }
}

/// Witness of an independence failure: blocks `(a, b)` at the tested time and
/// the gap `|mu(A and B) - mu(A) mu(B)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceWitness<S> {
    pub block_f: usize,
    pub block_h: usize,
    pub gap: S,
}

/// Tests independence of `F_t` and `H_t` under `mu` by checking the product
/// rule on every pair of atoms.
pub fn independent<S: Scalar>(
    f: &Filtration,
    h: &Filtration,
    mu: &Measure<S>,
    t: usize,
    tol: &S,
) -> Result<Check<IndependenceWitness<S>>, S> {
    if f.n_outcomes() != h.n_outcomes() {
        return Err(Error::MismatchedSpace {
            left: f.n_outcomes(),
            right: h.n_outcomes(),
        });
    }
    mu.check_len(f.n_outcomes())?;
    let pf = f.at(t);
    let ph = h.at(t);
    for (ia, a) in pf.blocks().iter().enumerate() {
        let mass_a = mu.mass(a);
        for (ib, b) in ph.blocks().iter().enumerate() {
            let mass_b = mu.mass(b);
            let inter: Vec<usize> = a.iter().copied().filter(|&o| ph.block_of(o) == ib).collect();
            let mass_inter = mu.mass(&inter);
            let gap = (mass_inter - mass_a.clone() * mass_b).abs();
            if !near_zero(&gap, tol) {
                return Ok(Check::fail(IndependenceWitness {
                    block_f: ia,
                    block_h: ib,
                    gap,
                }));
            }
        }
    }
    Ok(Check::pass())
}

/// The pointwise Radon-Nikodym derivative `dq/dp`.
pub fn radon_nikodym<S: Scalar>(q: &Measure<S>, p: &Measure<S>) -> Result<RandomVariable<S>, S> {
    p.check_len(q.len())?;
    Ok(RandomVariable::new(
        q.weights()
            .iter()
            .zip(p.weights())
            .map(|(qw, pw)| qw.clone() / pw.clone())
            .collect(),
    ))
}

/// The density process `L_t = E^p[dq/dp | F_t]` as an adapted process.
///
/// `L` is a strictly positive `(p, f)`-martingale with `L_0 = 1` and terminal
/// value `dq/dp`; its pointwise inverse is the density process of `p` with
/// respect to `q`.
pub fn density_process<S: Scalar>(
    q: &Measure<S>,
    p: &Measure<S>,
    f: &Arc<Filtration>,
) -> Result<AdaptedProcess<S>, S> {
    let derivative = radon_nikodym(q, p)?;
    if p.len() != f.n_outcomes() {
        return Err(Error::MismatchedSpace {
            left: p.len(),
            right: f.n_outcomes(),
        });
    }
    let mut per_time = Vec::with_capacity(f.horizon() + 1);
    for t in 0..=f.horizon() {
        let ce = conditional_expectation(&derivative, f.at(t), p)?;
        per_time.push(ce);
    }
    AdaptedProcess::from_scalar_pointwise(f.clone(), &per_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rat;

    fn r(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    fn z() -> Rat {
        Rat::from_int(0)
    }

    #[test]
    fn rejects_zero_weight_outcomes() {
        let err = FiniteProbSpace::new(
            vec!["a".into(), "b".into()],
            vec![r(1, 1), z()],
            &z(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn rejects_weights_not_summing_to_one() {
        let err = FiniteProbSpace::new(
            vec!["a".into(), "b".into()],
            vec![r(1, 2), r(1, 4)],
            &z(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn conditional_expectation_on_trivial_partition_is_the_mean() {
        let mu = Measure::new(vec![r(1, 2), r(1, 4), r(1, 4)], &z()).unwrap();
        let rv = RandomVariable::new(vec![r(4, 1), r(0, 1), r(8, 1)]);
        let ce = conditional_expectation(&rv, &Partition::trivial(3), &mu).unwrap();
        let mean = rv.expectation(&mu);
        assert!(ce.values().iter().all(|v| *v == mean));
    }

    #[test]
    fn conditional_expectation_on_singletons_is_identity() {
        let mu = Measure::new(vec![r(1, 2), r(1, 4), r(1, 4)], &z()).unwrap();
        let rv = RandomVariable::new(vec![r(4, 1), r(0, 1), r(8, 1)]);
        let ce = conditional_expectation(&rv, &Partition::singletons(3), &mu).unwrap();
        assert_eq!(ce, rv);
    }

    #[test]
    fn conditional_expectation_weighted_block_average() {
        // Omega = {a,b,c}, mu = (1/2, 1/4, 1/4), rv = (4, 0, 8),
        // part = {{a},{b,c}}: on {b,c} the average is (0/4 + 8/4) / (1/2) = 4.
        let mu = Measure::new(vec![r(1, 2), r(1, 4), r(1, 4)], &z()).unwrap();
        let rv = RandomVariable::new(vec![r(4, 1), r(0, 1), r(8, 1)]);
        let part = Partition::new::<Rat>(vec![vec![0], vec![1, 2]], 3).unwrap();
        let ce = conditional_expectation(&rv, &part, &mu).unwrap();
        assert_eq!(ce.values(), &[r(4, 1), r(4, 1), r(4, 1)]);
    }

    #[test]
    fn tower_property_is_exact() {
        let mu = Measure::new(vec![r(1, 8), r(1, 8), r(1, 4), r(1, 2)], &z()).unwrap();
        let rv = RandomVariable::new(vec![r(3, 1), r(-1, 1), r(7, 2), r(0, 1)]);
        let fine = Partition::new::<Rat>(vec![vec![0], vec![1], vec![2, 3]], 4).unwrap();
        let coarse = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let inner = conditional_expectation(&rv, &fine, &mu).unwrap();
        let towered = conditional_expectation(&inner, &coarse, &mu).unwrap();
        let direct = conditional_expectation(&rv, &coarse, &mu).unwrap();
        assert_eq!(towered, direct);
    }

    #[test]
    fn join_with_trivial_is_identity_and_join_is_idempotent() {
        let p1 = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let f = Filtration::new::<Rat>(vec![Partition::trivial(4), p1.clone()]).unwrap();
        let trivial = Filtration::trivial(1, 4);
        assert_eq!(join::<Rat>(&f, &trivial).unwrap(), f);
        assert_eq!(join::<Rat>(&f, &f).unwrap(), f);
    }

    #[test]
    fn join_of_coordinate_splits_is_the_pair_partition() {
        // Outcomes (a,b) in order (uu, ud, du, dd); f splits on the first
        // coordinate, h on the second.
        let fa = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let fb = Partition::new::<Rat>(vec![vec![0, 2], vec![1, 3]], 4).unwrap();
        let f = Filtration::new::<Rat>(vec![Partition::trivial(4), fa]).unwrap();
        let h = Filtration::new::<Rat>(vec![Partition::trivial(4), fb]).unwrap();
        let g = join::<Rat>(&f, &h).unwrap();
        assert_eq!(g.at(1), &Partition::singletons(4));
    }

    #[test]
    fn join_rejects_horizon_mismatch() {
        let f = Filtration::trivial(1, 2);
        let h = Filtration::trivial(2, 2);
        assert!(matches!(
            join::<Rat>(&f, &h),
            Err(Error::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn independence_of_product_coins_and_its_failure() {
        let fa = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let fb = Partition::new::<Rat>(vec![vec![0, 2], vec![1, 3]], 4).unwrap();
        let f = Filtration::new::<Rat>(vec![Partition::trivial(4), fa]).unwrap();
        let h = Filtration::new::<Rat>(vec![Partition::trivial(4), fb]).unwrap();

        let product = Measure::new(vec![r(1, 4); 4], &z()).unwrap();
        assert!(independent(&f, &h, &product, 1, &z()).unwrap().holds);

        // Correlated coins: weights (0.3, 0.2, 0.2, 0.3).
        let correlated =
            Measure::new(vec![r(3, 10), r(2, 10), r(2, 10), r(3, 10)], &z()).unwrap();
        let check = independent(&f, &h, &correlated, 1, &z()).unwrap();
        assert!(!check.holds);
        let w = check.witness.unwrap();
        // |P(A and B) - P(A)P(B)| = |3/10 - 1/4| = 1/20.
        assert_eq!(w.gap, r(1, 20));
    }

    #[test]
    fn independence_against_trivial_filtration() {
        let fa = Partition::new::<Rat>(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let f = Filtration::new::<Rat>(vec![Partition::trivial(4), fa]).unwrap();
        let h = Filtration::trivial(1, 4);
        let mu = Measure::new(vec![r(3, 10), r(2, 10), r(2, 10), r(3, 10)], &z()).unwrap();
        assert!(independent(&f, &h, &mu, 1, &z()).unwrap().holds);
    }

    #[test]
    fn radon_nikodym_ratio_and_reciprocal() {
        let p = Measure::new(vec![r(1, 2), r(1, 2)], &z()).unwrap();
        let q = Measure::new(vec![r(3, 5), r(2, 5)], &z()).unwrap();
        let d = radon_nikodym(&q, &p).unwrap();
        assert_eq!(d.values(), &[r(6, 5), r(4, 5)]);
        assert_eq!(d.expectation(&p), Rat::from_int(1));
        let inv = radon_nikodym(&p, &q).unwrap();
        let product = d.mul(&inv);
        assert!(product.values().iter().all(|v| *v == Rat::from_int(1)));
    }
}
