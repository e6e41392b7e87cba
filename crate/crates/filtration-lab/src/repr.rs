//! Vector stochastic integrals, stable spaces, the representation solver,
//! completeness (predictable representation) checks and direct-sum
//! decompositions.
//!
//! On a finite grid the stable space generated by a family of martingales is
//! spanned by finitely many terminal values: one per (time, previous-time
//! block, generator) triple, namely the integral of the indicator integrand
//! supported on that node. Everything in this module reduces to linear algebra
//! over those vectors, which is why completeness can be decided exactly: a
//! family has the representation property precisely when its stable space has
//! dimension `(#atoms at T) - 1`.

use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, min_norm_solve_psd};
use crate::num::{within, Scalar};
use crate::process::{require_martingale, AdaptedProcess, PredictableProcess};
use crate::space::{Filtration, Measure, RandomVariable};
use std::sync::Arc;

/// A predictable integrand, normalized so that its value is zero on every
/// block where the integrator's one-step conditional covariance matrix
/// vanishes. The normalization picks a canonical representative out of the
/// class of integrands with identical integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand<S: Scalar> {
    process: PredictableProcess<S>,
}

impl<S: Scalar> Integrand<S> {
    /// Normalizes `xi` against the integrator family `integrator` (one scalar
    /// martingale per integrand component) under `(mu, f)`.
    pub fn new(
        xi: PredictableProcess<S>,
        integrator: &[AdaptedProcess<S>],
        mu: &Measure<S>,
        f: &Arc<Filtration>,
        tol: &S,
    ) -> Result<Self, S> {
        if xi.dim() != integrator.len() {
            return Err(Error::DimMismatch {
                expected: integrator.len(),
                got: xi.dim(),
            });
        }
        let gens: Vec<AdaptedProcess<S>> = integrator
            .iter()
            .map(|g| g.reindex(f))
            .collect::<Result<_, S>>()?;
        let mut xi = reindex_predictable(&xi, f)?;
        let cond = ConditionalGram::new(&gens, mu, f)?;
        for t in 1..=f.horizon() {
            for b in 0..f.at(t - 1).n_blocks() {
                if cond.is_degenerate(t, b, tol) {
                    for k in 0..xi.dim() {
                        xi.values_mut()[t - 1][b][k] = S::zero();
                    }
                }
            }
        }
        Ok(Integrand { process: xi })
    }

    pub fn process(&self) -> &PredictableProcess<S> {
        &self.process
    }
}

/// Re-reads a predictable process on a finer filtration.
fn reindex_predictable<S: Scalar>(
    xi: &PredictableProcess<S>,
    fine: &Arc<Filtration>,
) -> Result<PredictableProcess<S>, S> {
    if fine.horizon() != xi.filtration().horizon() {
        return Err(Error::HorizonMismatch {
            left: fine.horizon(),
            right: xi.filtration().horizon(),
        });
    }
    if !fine.refines(xi.filtration()) {
        return Err(Error::NotPredictable {
            detail: "target filtration does not refine the integrand filtration".into(),
        });
    }
    let values = (1..=fine.horizon())
        .map(|t| {
            fine.at(t - 1)
                .blocks()
                .iter()
                .map(|block| {
                    (0..xi.dim())
                        .map(|k| xi.at(t, block[0], k).clone())
                        .collect()
                })
                .collect()
        })
        .collect();
    PredictableProcess::new(fine.clone(), xi.dim(), values)
}

/// Stacks scalar processes into one vector process on `f`.
pub fn stack<S: Scalar>(
    components: &[AdaptedProcess<S>],
    f: &Arc<Filtration>,
) -> Result<AdaptedProcess<S>, S> {
    if components.is_empty() {
        return Err(Error::validation("stack", "empty component list"));
    }
    let parts: Vec<AdaptedProcess<S>> = components
        .iter()
        .map(|c| c.reindex(f))
        .collect::<Result<_, S>>()?;
    for p in &parts {
        if p.dim() != 1 {
            return Err(Error::DimMismatch {
                expected: 1,
                got: p.dim(),
            });
        }
    }
    let values = (0..=f.horizon())
        .map(|t| {
            (0..f.at(t).n_blocks())
                .map(|b| parts.iter().map(|p| p.at_block(t, b, 0).clone()).collect())
                .collect()
        })
        .collect();
    AdaptedProcess::new(f.clone(), parts.len(), values)
}

/// Per-node conditional Gram data of a family of scalar martingales:
/// `cond(t, b)[i][j] = E[dM^i_t dM^j_t | b]` for `b` a block of `P_{t-1}`.
pub(crate) struct ConditionalGram<S: Scalar> {
    /// `[t-1][block][i][j]`
    matrices: Vec<Vec<Vec<Vec<S>>>>,
    max_entry: S,
}

impl<S: Scalar> ConditionalGram<S> {
    pub(crate) fn new(
        gens: &[AdaptedProcess<S>],
        mu: &Measure<S>,
        f: &Arc<Filtration>,
    ) -> Result<Self, S> {
        let k = gens.len();
        let mut matrices = Vec::with_capacity(f.horizon());
        let mut max_entry = S::zero();
        for t in 1..=f.horizon() {
            let incs: Vec<RandomVariable<S>> =
                gens.iter().map(|g| g.increment_at(t, 0)).collect();
            let part = f.at(t - 1);
            let mut per_block = vec![vec![vec![S::zero(); k]; k]; part.n_blocks()];
            for i in 0..k {
                for j in i..k {
                    let prod = incs[i].mul(&incs[j]);
                    let ce = crate::space::conditional_expectation(&prod, part, mu)?;
                    for (b, block) in part.blocks().iter().enumerate() {
                        let v = ce.value(block[0]).clone();
                        if v.abs() > max_entry {
                            max_entry = v.abs();
                        }
                        per_block[b][i][j] = v.clone();
                        per_block[b][j][i] = v;
                    }
                }
            }
            matrices.push(per_block);
        }
        Ok(ConditionalGram {
            matrices,
            max_entry,
        })
    }

    pub(crate) fn at(&self, t: usize, block: usize) -> &Vec<Vec<S>> {
        &self.matrices[t - 1][block]
    }

    /// True when the whole matrix at `(t, block)` is zero within
    /// `tol * max_entry`.
    pub(crate) fn is_degenerate(&self, t: usize, block: usize, tol: &S) -> bool {
        let thresh = tol.clone() * self.max_entry.clone();
        self.at(t, block)
            .iter()
            .all(|row| row.iter().all(|v| v.abs() <= thresh))
    }
}

/// The discrete vector stochastic integral
/// `(xi . m)_t = sum_{s <= t} xi_s' dm_s`, a scalar process starting at zero.
///
/// When `m` has pairwise strongly orthogonal components this coincides with
/// the componentwise sum of the one-dimensional integrals; on a finite grid
/// the two constructions agree for every integrand, and this implementation
/// simply computes the componentwise sum.
pub fn vector_integral<S: Scalar>(
    xi: &PredictableProcess<S>,
    m: &AdaptedProcess<S>,
) -> Result<AdaptedProcess<S>, S> {
    if xi.dim() != m.dim() {
        return Err(Error::DimMismatch {
            expected: m.dim(),
            got: xi.dim(),
        });
    }
    // The integral lives on whichever filtration is finer.
    let fine = if xi.filtration().refines(m.filtration()) {
        xi.filtration().clone()
    } else if m.filtration().refines(xi.filtration()) {
        m.filtration().clone()
    } else {
        return Err(Error::NotPredictable {
            detail: "integrand and integrator filtrations are not comparable".into(),
        });
    };
    let xi = reindex_predictable(xi, &fine)?;
    let m = m.reindex(&fine)?;
    let n = fine.n_outcomes();
    let mut per_time: Vec<Vec<Vec<S>>> = vec![vec![vec![S::zero()]; n]];
    for t in 1..=fine.horizon() {
        let mut slice = per_time[t - 1].clone();
        for k in 0..m.dim() {
            let inc = m.increment_at(t, k);
            for o in 0..n {
                slice[o][0] =
                    slice[o][0].clone() + xi.at(t, o, k).clone() * inc.value(o).clone();
            }
        }
        per_time.push(slice);
    }
    AdaptedProcess::from_pointwise(fine, 1, &per_time)
}

/// The squared integral norm
/// `E[sum_t xi_t' C_t xi_t dB_t] = E[sum_t xi_t' E[dM_t dM_t' | P_{t-1}] xi_t]`.
///
/// Requires `m` to be a martingale under `mu` on the common grid; verifies
/// that the norm agrees with both `E[[xi . m]_T]` and `E[(xi . m)_T^2]`
/// within `tol` before returning it.
pub fn integral_norm<S: Scalar>(
    xi: &PredictableProcess<S>,
    m: &AdaptedProcess<S>,
    mu: &Measure<S>,
    tol: &S,
) -> Result<S, S> {
    let fine = if xi.filtration().refines(m.filtration()) {
        xi.filtration().clone()
    } else if m.filtration().refines(xi.filtration()) {
        m.filtration().clone()
    } else {
        return Err(Error::NotPredictable {
            detail: "integrand and integrator filtrations are not comparable".into(),
        });
    };
    require_martingale(m, mu, &fine, tol)?;
    let xi_f = reindex_predictable(xi, &fine)?;
    let m_f = m.reindex(&fine)?;
    let gens: Vec<AdaptedProcess<S>> = (0..m_f.dim()).map(|k| m_f.component(k)).collect();
    let cond = ConditionalGram::new(&gens, mu, &fine)?;

    let mut norm = S::zero();
    for t in 1..=fine.horizon() {
        let part = fine.at(t - 1);
        for (b, block) in part.blocks().iter().enumerate() {
            let mass = mu.mass(block);
            let matrix = cond.at(t, b);
            let xi_b: Vec<S> = (0..xi_f.dim())
                .map(|k| xi_f.at_block(t, b, k).clone())
                .collect();
            let mut quad = S::zero();
            for i in 0..xi_b.len() {
                for j in 0..xi_b.len() {
                    quad = quad + xi_b[i].clone() * matrix[i][j].clone() * xi_b[j].clone();
                }
            }
            norm = norm + mass * quad;
        }
    }

    // The chain of equalities behind the isometry: the norm, the expected
    // terminal bracket and the expected squared terminal value must agree.
    let integral = vector_integral(xi, m)?;
    let bracket = crate::process::quadratic_covariation(&integral, &integral)?;
    let e_bracket = bracket.terminal(0).expectation(mu);
    let terminal = integral.terminal(0);
    let e_square = terminal.mul(&terminal).expectation(mu);
    let scale = S::one() + e_square.abs();
    if !within(&norm, &e_bracket, &(tol.clone() * scale.clone()))
        || !within(&e_bracket, &e_square, &(tol.clone() * scale))
    {
        return Err(Error::CheckFailed(format!(
            "integral norm chain broke: norm {norm}, E[[xi.m]_T] {e_bracket}, E[(xi.m)_T^2] {e_square}"
        )));
    }
    Ok(norm)
}

/// Address of an indicator integrand: step ending at `time`, block of
/// `P_{time-1}`, generator index within the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub time: usize,
    pub block: usize,
    pub generator: usize,
}

/// The stable space generated by a family of scalar `(mu, f)`-martingales,
/// realized as a subspace of terminal-value random variables.
///
/// The basis is orthogonal in `L^2(mu)` with recorded squared norms rather
/// than normalized: unit normalization would require square roots, which the
/// rational backend does not have, and no downstream computation needs it.
/// Basis vectors all have zero mean under `mu`.
pub struct StableSpace<S: Scalar> {
    generators: Vec<String>,
    basis: Vec<RandomVariable<S>>,
    norms_sq: Vec<S>,
    /// Expansion of each basis vector over the node enumeration.
    expansions: Vec<Vec<S>>,
    nodes: Vec<Node>,
    filtration: Arc<Filtration>,
    n_generators: usize,
}

impl<S: Scalar> StableSpace<S> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[RandomVariable<S>] {
        &self.basis
    }

    pub fn norms_sq(&self) -> &[S] {
        &self.norms_sq
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    /// Converts basis coefficients into an integrand over the family.
    fn integrand_from_coeffs(&self, coeffs: &[S]) -> PredictableProcess<S> {
        let f = &self.filtration;
        let mut values: Vec<Vec<Vec<S>>> = (1..=f.horizon())
            .map(|t| vec![vec![S::zero(); self.n_generators]; f.at(t - 1).n_blocks()])
            .collect();
        for (k, c) in coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for (j, e) in self.expansions[k].iter().enumerate() {
                if e.is_zero() {
                    continue;
                }
                let node = self.nodes[j];
                values[node.time - 1][node.block][node.generator] = values[node.time - 1]
                    [node.block][node.generator]
                    .clone()
                    + c.clone() * e.clone();
            }
        }
        PredictableProcess::new(f.clone(), self.n_generators, values)
            .expect("node-indexed integrand is well formed")
    }
}

/// Builds the stable space of `generators` under `(mu, f)` by enumerating the
/// indicator-integrand terminal values node by node (time-major, then block,
/// then generator -- a fixed deterministic order) and orthogonalizing them.
pub fn stable_space<S: Scalar>(
    generators: &[AdaptedProcess<S>],
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<StableSpace<S>, S> {
    let gens: Vec<AdaptedProcess<S>> = generators
        .iter()
        .map(|g| {
            if g.dim() != 1 {
                return Err(Error::DimMismatch {
                    expected: 1,
                    got: g.dim(),
                });
            }
            g.reindex(f)
        })
        .collect::<Result<_, S>>()?;
    for g in &gens {
        require_martingale(g, mu, f, tol)?;
    }

    let n = f.n_outcomes();
    let mut nodes = Vec::new();
    let mut vectors: Vec<Vec<S>> = Vec::new();
    for t in 1..=f.horizon() {
        let part = f.at(t - 1);
        let incs: Vec<RandomVariable<S>> = gens.iter().map(|g| g.increment_at(t, 0)).collect();
        for (b, block) in part.blocks().iter().enumerate() {
            for (g, inc) in incs.iter().enumerate() {
                let mut v = vec![S::zero(); n];
                for &o in block {
                    v[o] = inc.value(o).clone();
                }
                nodes.push(Node {
                    time: t,
                    block: b,
                    generator: g,
                });
                vectors.push(v);
            }
        }
    }

    let ortho = gram_schmidt(&vectors, mu.weights(), tol);
    Ok(StableSpace {
        generators: (0..gens.len()).map(|i| format!("gen{i}")).collect(),
        basis: ortho
            .vectors
            .into_iter()
            .map(RandomVariable::new)
            .collect(),
        norms_sq: ortho.norms_sq,
        expansions: ortho.expansions,
        nodes,
        filtration: f.clone(),
        n_generators: gens.len(),
    })
}

/// Dimension of the span of all node-indicator integral terminal values of
/// `generators` along `f`.
///
/// Unlike [`stable_space`] this imposes no martingale precondition and takes
/// no measure: the node vectors are pathwise objects, so their span is a
/// fixed subspace of terminal values whatever the (equivalent) measure. Used
/// where a family contains brackets that are martingales only under some
/// other equivalent measure.
pub fn span_dim<S: Scalar>(
    generators: &[AdaptedProcess<S>],
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<usize, S> {
    let gens: Vec<AdaptedProcess<S>> = generators
        .iter()
        .map(|g| g.reindex(f))
        .collect::<Result<_, S>>()?;
    let n = f.n_outcomes();
    let mut vectors: Vec<Vec<S>> = Vec::new();
    for t in 1..=f.horizon() {
        let part = f.at(t - 1);
        let incs: Vec<RandomVariable<S>> = gens.iter().map(|g| g.increment_at(t, 0)).collect();
        for block in part.blocks() {
            for inc in &incs {
                let mut v = vec![S::zero(); n];
                for &o in block {
                    v[o] = inc.value(o).clone();
                }
                vectors.push(v);
            }
        }
    }
    Ok(crate::linalg::rank(&vectors, tol))
}

/// Result of a completeness check: the stable-space dimension against the
/// ambient dimension `(#atoms at T) - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrpCheck {
    pub holds: bool,
    pub dim: usize,
    pub ambient_dim: usize,
}

/// The family has the predictable representation property iff its stable
/// space exhausts the centered terminal-value space.
pub fn prp_check<S: Scalar>(
    generators: &[AdaptedProcess<S>],
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<PrpCheck, S> {
    let space = stable_space(generators, mu, f, tol)?;
    let ambient_dim = f.at(f.horizon()).n_blocks() - 1;
    Ok(PrpCheck {
        holds: space.dim() == ambient_dim,
        dim: space.dim(),
        ambient_dim,
    })
}

/// A target decomposed over several integrator families: a constant plus one
/// vector integral per family plus an explicit residual.
pub struct Representation<S: Scalar> {
    pub constant: S,
    pub integrands: Vec<Integrand<S>>,
    /// The integral processes `(xi_k . mu_k)`, one per family.
    pub integrals: Vec<AdaptedProcess<S>>,
    /// `target - constant - sum of integrals` at the horizon.
    pub residual_rv: RandomVariable<S>,
    pub residual_norm_sq: S,
}

impl<S: Scalar> Representation<S> {
    /// L2 norm of the unexplained part (float; for reports and thresholds).
    pub fn residual(&self) -> f64 {
        self.residual_norm_sq.to_f64().max(0.0).sqrt()
    }
}

/// Precomputed least-squares solver for repeated representations over the
/// same families.
pub struct Representer<S: Scalar> {
    families: Vec<Vec<AdaptedProcess<S>>>,
    spaces: Vec<StableSpace<S>>,
    mu: Measure<S>,
    f: Arc<Filtration>,
    tol: S,
    /// Gram matrix of the stacked basis (block-diagonal when the families are
    /// strongly orthogonal).
    gram: Vec<Vec<S>>,
}

impl<S: Scalar> Representer<S> {
    pub fn new(
        families: &[Vec<AdaptedProcess<S>>],
        mu: &Measure<S>,
        f: &Arc<Filtration>,
        tol: &S,
    ) -> Result<Self, S> {
        let spaces: Vec<StableSpace<S>> = families
            .iter()
            .map(|fam| stable_space(fam, mu, f, tol))
            .collect::<Result<_, S>>()?;
        let stacked: Vec<&RandomVariable<S>> =
            spaces.iter().flat_map(|s| s.basis.iter()).collect();
        let n = stacked.len();
        let mut gram = vec![vec![S::zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let v = stacked[i].inner(stacked[j], mu);
                gram[i][j] = v.clone();
                gram[j][i] = v;
            }
        }
        Ok(Representer {
            families: families.to_vec(),
            spaces,
            mu: mu.clone(),
            f: f.clone(),
            tol: tol.clone(),
            gram,
        })
    }

    pub fn spaces(&self) -> &[StableSpace<S>] {
        &self.spaces
    }

    /// Least-squares representation of a scalar target.
    pub fn represent(&self, h: &RandomVariable<S>) -> Result<Representation<S>, S> {
        if h.len() != self.f.n_outcomes() {
            return Err(Error::MismatchedSpace {
                left: h.len(),
                right: self.f.n_outcomes(),
            });
        }
        let constant = h.expectation(&self.mu);
        let centered = h.sub(&RandomVariable::constant(constant.clone(), h.len()));

        let stacked: Vec<&RandomVariable<S>> =
            self.spaces.iter().flat_map(|s| s.basis.iter()).collect();
        let rhs: Vec<S> = stacked
            .iter()
            .map(|b| centered.inner(b, &self.mu))
            .collect();
        let coeffs = if stacked.is_empty() {
            Vec::new()
        } else {
            min_norm_solve_psd(&self.gram, &rhs, &self.tol).ok_or_else(|| {
                Error::CheckFailed("normal equations for representation are inconsistent".into())
            })?
        };

        let mut integrands = Vec::with_capacity(self.spaces.len());
        let mut integrals = Vec::with_capacity(self.spaces.len());
        let mut offset = 0usize;
        let mut reconstruction = RandomVariable::constant(S::zero(), h.len());
        for (k, space) in self.spaces.iter().enumerate() {
            let local = &coeffs[offset..offset + space.dim()];
            offset += space.dim();
            let xi = space.integrand_from_coeffs(local);
            let xi = Integrand::new(xi, &self.families[k], &self.mu, &self.f, &self.tol)?;
            let stacked_family = stack(&self.families[k], &self.f)?;
            let integral = vector_integral(xi.process(), &stacked_family)?;
            reconstruction = reconstruction.add(&integral.terminal(0));
            integrands.push(xi);
            integrals.push(integral);
        }

        let residual_rv = centered.sub(&reconstruction);
        let residual_norm_sq = residual_rv.inner(&residual_rv, &self.mu);
        Ok(Representation {
            constant,
            integrands,
            integrals,
            residual_rv,
            residual_norm_sq,
        })
    }
}

/// One-shot representation of `h` over `families` under `(mu, f)`.
///
/// The constant is `E[h]`; the integrands minimize the L2 distance between the
/// centered target and the sum of the vector integrals. When the families are
/// pairwise strongly orthogonal the minimizers are unique and independent of
/// family order.
pub fn represent<S: Scalar>(
    h: &RandomVariable<S>,
    families: &[Vec<AdaptedProcess<S>>],
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<Representation<S>, S> {
    Representer::new(families, mu, f, tol)?.represent(h)
}

/// Evidence of a direct-sum decomposition across families.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSumReport {
    pub family_dims: Vec<usize>,
    pub joint_dim: usize,
    /// Dimensions add up: the sum over families equals the joint dimension.
    pub additive: bool,
    /// Largest normalized cross inner product between basis vectors of
    /// different families.
    pub max_cross_inner: f64,
    pub cross_orthogonal: bool,
}

impl DirectSumReport {
    pub fn holds(&self) -> bool {
        self.additive && self.cross_orthogonal
    }
}

/// Verifies that the stable spaces of pairwise strongly orthogonal families
/// decompose their joint stable space as a direct sum: cross bases are
/// L2-orthogonal and dimensions are additive.
///
/// Fails with `NotStronglyOrthogonal` when some cross pair of generators
/// breaks the precondition.
pub fn direct_sum_check<S: Scalar>(
    families: &[Vec<AdaptedProcess<S>>],
    mu: &Measure<S>,
    f: &Arc<Filtration>,
    tol: &S,
) -> Result<DirectSumReport, S> {
    for (i, fam_a) in families.iter().enumerate() {
        for (j, fam_b) in families.iter().enumerate().skip(i + 1) {
            for (a, ga) in fam_a.iter().enumerate() {
                for (b, gb) in fam_b.iter().enumerate() {
                    let check = crate::process::strongly_orthogonal(ga, gb, mu, f, tol)?;
                    if let Some(w) = check.witness {
                        return Err(Error::NotStronglyOrthogonal {
                            left: format!("family{i}.gen{a}"),
                            right: format!("family{j}.gen{b}"),
                            time: w.time,
                            block: w.block,
                            value: w.value,
                        });
                    }
                }
            }
        }
    }

    let spaces: Vec<StableSpace<S>> = families
        .iter()
        .map(|fam| stable_space(fam, mu, f, tol))
        .collect::<Result<_, S>>()?;
    let family_dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();

    let mut max_cross: f64 = 0.0;
    for (i, sa) in spaces.iter().enumerate() {
        for sb in spaces.iter().skip(i + 1) {
            for (a, va) in sa.basis.iter().enumerate() {
                for (b, vb) in sb.basis.iter().enumerate() {
                    let raw = va.inner(vb, mu).to_f64();
                    let denom = (sa.norms_sq[a].to_f64() * sb.norms_sq[b].to_f64()).sqrt();
                    if denom > 0.0 {
                        max_cross = max_cross.max((raw / denom).abs());
                    }
                }
            }
        }
    }
    let cross_orthogonal = max_cross <= tol.to_f64().max(1e-12);

    let all_generators: Vec<AdaptedProcess<S>> =
        families.iter().flat_map(|fam| fam.iter().cloned()).collect();
    let joint = stable_space(&all_generators, mu, f, tol)?;
    let joint_dim = joint.dim();
    let additive = family_dims.iter().sum::<usize>() == joint_dim;

    Ok(DirectSumReport {
        family_dims,
        joint_dim,
        additive,
        max_cross_inner: max_cross,
        cross_orthogonal,
    })
}

/// Spanning set of centered indicator targets: indicators of all but the last
/// atom of `f` at the horizon. Together with constants they span every
/// terminal value.
pub fn spanning_indicators<S: Scalar>(f: &Filtration) -> Vec<RandomVariable<S>> {
    let part = f.at(f.horizon());
    let n = f.n_outcomes();
    part.blocks()
        .iter()
        .take(part.n_blocks() - 1)
        .map(|block| {
            let mut v = vec![S::zero(); n];
            for &o in block {
                v[o] = S::one();
            }
            RandomVariable::new(v)
        })
        .collect()
}
