//! Seeded random scenario generation.
//!
//! Generated scenarios are valid by construction: margins are product trees
//! with full-rank drivers (binary margins carry scalar walks; a margin with
//! branching `k` carries a `(k-1)`-dimensional driver whose increments span
//! the node's mean-zero space), so each margin is complete and has a unique,
//! strictly positive martingale measure whatever the drift. Default models
//! draw their conditional hazards from path prefixes only, which yields the
//! density hypothesis and immersion by construction. All numbers are emitted
//! as exact rational strings, so generated files run on the exact backend.

use crate::error::Error;
use crate::num::{Rat, Scalar};
use crate::scenario::{
    DefaultModelSpec, FiltrationSpec, NumberRepr, ProcessSpec, ScenarioFile, TaskSpec, ThetaRepr,
};
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Knobs of the generator. Caps: `d <= 6`, `branching^(d * steps) <= 1e5`.
#[derive(Debug, Clone)]
pub struct GenerateParams {
    /// Number of margins (independent filtrations).
    pub d: usize,
    /// Moves per margin.
    pub steps: usize,
    /// Children per node (2 = binary margins with scalar drivers).
    pub branching: usize,
    /// 0 keeps every driver a martingale; larger values push the actual
    /// probabilities away from the martingale point.
    pub drift_scale: f64,
    /// Emit a default model (market + default time) instead of an
    /// enlargement scenario.
    pub default_model: bool,
    /// Separate moving times: for enlargement scenarios the margins move
    /// round-robin (brackets vanish pathwise); for default models the default
    /// can only happen after the market stops moving.
    pub staggered: bool,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            d: 2,
            steps: 2,
            branching: 2,
            drift_scale: 0.0,
            default_model: false,
            staggered: false,
        }
    }
}

const MAX_D: usize = 6;
const MAX_OUTCOMES: usize = 100_000;

struct Margin {
    /// Reveal time of the i-th move.
    times: Vec<usize>,
    /// Per move index, per prefix (lexicographic): actual child
    /// probabilities and driver increment vectors (child -> dim k-1).
    nodes: Vec<BTreeMap<String, NodeData>>,
}

struct NodeData {
    probs: Vec<Rat>,
    increments: Vec<Vec<Rat>>,
}

fn child_char(j: usize) -> char {
    (b'a' + j as u8) as char
}

fn rational_string(r: &Rat) -> NumberRepr {
    NumberRepr::Text(r.to_string())
}

/// Draws a probability vector with entries in roughly [0.15, 0.85] before
/// normalization, as exact rationals.
fn draw_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<Rat> {
    let raw: Vec<i64> = (0..k).map(|_| rng.gen_range(150..=850)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|n| Rat::from_ratio(n, total)).collect()
}

/// Shifts `probs` by up to `drift_scale` relative noise, renormalizing.
fn drifted_probs(rng: &mut ChaCha8Rng, probs: &[Rat], drift_scale: f64) -> Vec<Rat> {
    if drift_scale <= 0.0 {
        return probs.to_vec();
    }
    let shift = (drift_scale * 300.0).min(300.0) as i64;
    let raw: Vec<i64> = probs
        .iter()
        .map(|p| {
            let base = (p.to_f64() * 1000.0) as i64;
            (base + rng.gen_range(-shift..=shift)).max(80)
        })
        .collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|n| Rat::from_ratio(n, total)).collect()
}

/// Driver increments at one node: `k` vectors of dimension `k-1`, scaled by
/// `c`, with mean zero under `target` and full rank. The unique martingale
/// measure of the one-step model is exactly `target`.
fn node_increments(c: &Rat, target: &[Rat]) -> Vec<Vec<Rat>> {
    let k = target.len();
    if k == 2 {
        // Scalar walk: up a, down -a * q_up / q_down.
        let up = c.clone();
        let down = -c.clone() * target[0].clone() / target[1].clone();
        return vec![vec![up], vec![down]];
    }
    // Child j takes value e_j (j < k-1) or 0 (j = k-1), centered at the
    // target mean.
    let head: Vec<Rat> = target[..k - 1].to_vec();
    (0..k)
        .map(|j| {
            (0..k - 1)
                .map(|i| {
                    let r = if j == i { Rat::one() } else { Rat::zero() };
                    c.clone() * (r - head[i].clone())
                })
                .collect()
        })
        .collect()
}

/// Enumerates all prefixes of length `len` in lexicographic order.
fn prefixes(k: usize, len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * k);
        for p in &out {
            for j in 0..k {
                let mut q = p.clone();
                q.push(child_char(j));
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Generates a scenario file. Identical seeds and parameters produce
/// identical files, byte for byte once serialized.
pub fn generate(seed: u64, params: &GenerateParams) -> Result<ScenarioFile, Error<Rat>> {
    let d = params.d;
    let k = params.branching;
    let steps = params.steps;
    if d == 0 || d > MAX_D {
        return Err(Error::CapExceeded {
            what: "margins".into(),
            limit: MAX_D,
            got: d,
        });
    }
    if k < 2 || k > 12 {
        return Err(Error::validation("branching", "branching must be in 2..=12"));
    }
    if steps == 0 {
        return Err(Error::validation("steps", "need at least one step"));
    }
    let outcomes_count = k
        .checked_pow((d * steps) as u32)
        .filter(|&n| n <= MAX_OUTCOMES)
        .ok_or(Error::CapExceeded {
            what: "outcomes".into(),
            limit: MAX_OUTCOMES,
            got: usize::MAX,
        })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Time layout.
    let stagger_margins = params.staggered && !params.default_model;
    let horizon = if stagger_margins {
        d * steps
    } else if params.default_model && params.staggered {
        steps + 1
    } else {
        steps
    };
    let margin_times = |i: usize| -> Vec<usize> {
        if stagger_margins {
            (0..steps).map(|s| i + 1 + s * d).collect()
        } else {
            (1..=steps).collect()
        }
    };

    // Draw margin trees.
    let mut margins: Vec<Margin> = Vec::with_capacity(d);
    for i in 0..d {
        let mut nodes = Vec::with_capacity(steps);
        for mv in 0..steps {
            let mut per_prefix = BTreeMap::new();
            for prefix in prefixes(k, mv) {
                let probs = draw_probs(&mut rng, k);
                let target = drifted_probs(&mut rng, &probs, params.drift_scale);
                let c = Rat::from_ratio(rng.gen_range(50..=150), 100);
                // With drift, the ACTUAL probabilities are the drifted draw
                // and the martingale point stays at `probs`; without drift
                // the two coincide.
                let (actual, mart_point) = if params.drift_scale > 0.0 {
                    (target, probs)
                } else {
                    (probs.clone(), probs)
                };
                per_prefix.insert(
                    prefix,
                    NodeData {
                        probs: actual,
                        increments: node_increments(&c, &mart_point),
                    },
                );
            }
            nodes.push(per_prefix);
        }
        margins.push(Margin {
            times: margin_times(i),
            nodes,
        });
    }

    // Outcome labels (margin-major lexicographic) and weights.
    let full_paths = prefixes(k, steps);
    let mut labels: Vec<String> = vec![String::new()];
    for i in 0..d {
        let mut next = Vec::with_capacity(labels.len() * full_paths.len());
        for label in &labels {
            for path in &full_paths {
                let mut l = label.clone();
                if i > 0 {
                    l.push('|');
                }
                l.push_str(path);
                next.push(l);
            }
        }
        labels = next;
    }
    debug_assert_eq!(labels.len(), outcomes_count);

    let path_of = |label: &str, margin: usize| -> String {
        label.split('|').nth(margin).expect("margin path").to_string()
    };
    let path_weight = |margin: &Margin, path: &str| -> Rat {
        let mut w = Rat::one();
        for (mv, ch) in path.chars().enumerate() {
            let prefix: String = path.chars().take(mv).collect();
            let node = &margin.nodes[mv][&prefix];
            let j = (ch as u8 - b'a') as usize;
            w *= node.probs[j].clone();
        }
        w
    };
    let weights: Vec<Rat> = labels
        .iter()
        .map(|label| {
            (0..d)
                .map(|i| path_weight(&margins[i], &path_of(label, i)))
                .fold(Rat::one(), |acc, w| acc * w)
        })
        .collect();

    // Filtration specs.
    let mut filtrations: BTreeMap<String, FiltrationSpec> = BTreeMap::new();
    for i in 0..d {
        let times = margin_times(i);
        let default_times: Vec<usize> = (1..=steps).collect();
        filtrations.insert(
            format!("F{}", i + 1),
            FiltrationSpec::Coordinate {
                coordinate: i,
                times: (times != default_times).then_some(times),
            },
        );
    }
    let join_name = if params.default_model { "F" } else { "G" };
    if d > 1 || params.default_model {
        filtrations.insert(
            join_name.to_string(),
            FiltrationSpec::Join {
                join: (1..=d).map(|i| format!("F{i}")).collect(),
            },
        );
    }

    // Margin driver value tables: cumulative increment sums per prefix.
    let driver_value = |margin: &Margin, prefix: &str| -> Vec<Rat> {
        let dim = k - 1;
        let mut acc = vec![Rat::zero(); dim];
        for (mv, ch) in prefix.chars().enumerate() {
            let node_prefix: String = prefix.chars().take(mv).collect();
            let node = &margin.nodes[mv][&node_prefix];
            let j = (ch as u8 - b'a') as usize;
            for (i, v) in node.increments[j].iter().enumerate() {
                acc[i] += v.clone();
            }
        }
        acc
    };

    let mut processes: BTreeMap<String, ProcessSpec> = BTreeMap::new();
    if params.default_model {
        // One vector driver over the joined market filtration: component i is
        // margin i's walk. Blocks of the join at time t are tuples of margin
        // prefixes in margin-major lexicographic order.
        let mut values: Vec<Vec<Vec<NumberRepr>>> = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let revealed: Vec<usize> = (0..d)
                .map(|i| margins[i].times.iter().filter(|&&rt| rt <= t).count())
                .collect();
            let mut blocks: Vec<Vec<NumberRepr>> = Vec::new();
            let mut tuple: Vec<String> = vec![String::new(); d];
            fn walk(
                i: usize,
                d: usize,
                k: usize,
                revealed: &[usize],
                tuple: &mut Vec<String>,
                margins: &[Margin],
                driver_value: &dyn Fn(&Margin, &str) -> Vec<Rat>,
                blocks: &mut Vec<Vec<NumberRepr>>,
            ) {
                if i == d {
                    let mut row = Vec::new();
                    for (m, margin) in margins.iter().enumerate() {
                        for v in driver_value(margin, &tuple[m]) {
                            row.push(rational_string(&v));
                        }
                    }
                    blocks.push(row);
                    return;
                }
                for prefix in prefixes(k, revealed[i]) {
                    tuple[i] = prefix;
                    walk(i + 1, d, k, revealed, tuple, margins, driver_value, blocks);
                }
            }
            walk(
                0,
                d,
                k,
                &revealed,
                &mut tuple,
                &margins,
                &driver_value,
                &mut blocks,
            );
            values.push(blocks);
        }
        processes.insert(
            "X".to_string(),
            ProcessSpec {
                filtration: join_name.to_string(),
                dim: d * (k - 1),
                values,
            },
        );
    } else {
        for (i, margin) in margins.iter().enumerate() {
            let mut values: Vec<Vec<Vec<NumberRepr>>> = Vec::with_capacity(horizon + 1);
            for t in 0..=horizon {
                let revealed = margin.times.iter().filter(|&&rt| rt <= t).count();
                let blocks: Vec<Vec<NumberRepr>> = prefixes(k, revealed)
                    .iter()
                    .map(|prefix| {
                        driver_value(margin, prefix)
                            .iter()
                            .map(rational_string)
                            .collect()
                    })
                    .collect();
                values.push(blocks);
            }
            processes.insert(
                format!("X{}", i + 1),
                ProcessSpec {
                    filtration: format!("F{}", i + 1),
                    dim: k - 1,
                    values,
                },
            );
        }
    }

    // Default model: hazards drawn per market prefix, sequentially.
    let default_model = if params.default_model {
        let default_times: Vec<usize> = if params.staggered {
            vec![steps + 1]
        } else {
            (1..=steps).collect()
        };
        // Hazard tables: per default time, keyed by the market atom (tuple of
        // margin prefixes revealed strictly before that time).
        let mut hazards: Vec<BTreeMap<String, Rat>> = Vec::new();
        for &dt in &default_times {
            let mut table = BTreeMap::new();
            let revealed: Vec<usize> = (0..d)
                .map(|i| margins[i].times.iter().filter(|&&rt| rt < dt).count())
                .collect();
            let mut keys = vec![String::new()];
            for (i, &r) in revealed.iter().enumerate() {
                let mut next = Vec::new();
                for key in &keys {
                    for prefix in prefixes(k, r) {
                        let mut q = key.clone();
                        if i > 0 {
                            q.push('|');
                        }
                        q.push_str(&prefix);
                        next.push(q);
                    }
                }
                keys = next;
            }
            for key in keys {
                table.insert(key, Rat::from_ratio(rng.gen_range(100..=400), 1000));
            }
            hazards.push(table);
        }
        let market_key = |label: &str, dt: usize| -> String {
            (0..d)
                .map(|i| {
                    let revealed = margins[i].times.iter().filter(|&&rt| rt < dt).count();
                    path_of(label, i).chars().take(revealed).collect::<String>()
                })
                .collect::<Vec<_>>()
                .join("|")
        };
        let theta: Vec<ThetaRepr> = default_times
            .iter()
            .map(|&t| ThetaRepr::Time(t))
            .chain(std::iter::once(ThetaRepr::Text("inf".into())))
            .collect();
        let joint: Vec<Vec<NumberRepr>> = labels
            .iter()
            .zip(&weights)
            .map(|(label, weight)| {
                let mut survive = Rat::one();
                let mut row = Vec::with_capacity(default_times.len() + 1);
                for (idx, &dt) in default_times.iter().enumerate() {
                    let h = hazards[idx][&market_key(label, dt)].clone();
                    row.push(rational_string(&(weight.clone() * survive.clone() * h.clone())));
                    survive *= Rat::one() - h;
                }
                row.push(rational_string(&(weight.clone() * survive)));
                row
            })
            .collect();
        Some(DefaultModelSpec {
            market_process: "X".to_string(),
            theta,
            joint,
        })
    } else {
        None
    };

    // Task list appropriate to the shape.
    let mut tasks: Vec<TaskSpec> = Vec::new();
    if params.default_model {
        tasks.push(TaskSpec::Kusuoka { tol: None });
    } else {
        if d == 2 {
            tasks.push(TaskSpec::Theorem34 {
                x: "X1".into(),
                y: "X2".into(),
                tol: None,
            });
        }
        if k == 2 && params.drift_scale == 0.0 {
            tasks.push(TaskSpec::Theorem42 {
                drivers: (1..=d).map(|i| format!("X{i}")).collect(),
                d_cap: None,
                tol: None,
            });
        }
        if d > 1 {
            let expect = if stagger_margins {
                k - 1
            } else {
                k.pow(d as u32) - 1
            };
            tasks.push(TaskSpec::Multiplicity {
                filtration: "G".into(),
                expect: Some(expect),
                tol: None,
            });
        }
        if params.drift_scale > 0.0 {
            tasks.push(TaskSpec::MinimalMeasure {
                x: "X1".into(),
                tol: None,
            });
        }
    }

    Ok(ScenarioFile {
        schema: 1,
        horizon,
        outcomes: labels,
        weights: weights.iter().map(rational_string).collect(),
        filtrations,
        processes,
        default_model,
        tasks,
    })
}

/// Serializes a scenario deterministically (pretty JSON with a trailing
/// newline) -- the byte-for-byte format committed as golden files.
pub fn to_canonical_json(file: &ScenarioFile) -> String {
    let mut text = serde_json::to_string_pretty(file).expect("scenario serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{load_scenario, Loaded};

    #[test]
    fn same_seed_gives_identical_bytes() {
        let params = GenerateParams::default();
        let a = to_canonical_json(&generate(7, &params).unwrap());
        let b = to_canonical_json(&generate(7, &params).unwrap());
        assert_eq!(a, b);
        let c = to_canonical_json(&generate(8, &params).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn generated_enlargement_scenario_loads_in_rational_mode() {
        let file = generate(0, &GenerateParams::default()).unwrap();
        let loaded = load_scenario(to_canonical_json(&file).as_bytes(), None).unwrap();
        match loaded {
            Loaded::Rational(s) => {
                assert_eq!(s.space.len(), 16);
                assert_eq!(s.processes.len(), 2);
                assert_eq!(s.tasks.len(), 3);
            }
            Loaded::Float(_) => panic!("generated files must be rational"),
        }
    }

    #[test]
    fn generated_default_model_loads() {
        let params = GenerateParams {
            d: 1,
            steps: 1,
            default_model: true,
            staggered: true,
            ..GenerateParams::default()
        };
        let file = generate(3, &params).unwrap();
        let loaded = load_scenario(to_canonical_json(&file).as_bytes(), None).unwrap();
        match loaded {
            Loaded::Rational(s) => {
                let dm = s.default_model.expect("default model present");
                assert_eq!(dm.driver().horizon(), 2);
                assert_eq!(dm.theta_grid().len(), 2);
            }
            Loaded::Float(_) => panic!("generated files must be rational"),
        }
    }

    #[test]
    fn caps_are_enforced() {
        let params = GenerateParams {
            d: 7,
            ..GenerateParams::default()
        };
        assert!(matches!(
            generate(0, &params),
            Err(Error::CapExceeded { .. })
        ));
        let params = GenerateParams {
            d: 6,
            steps: 6,
            branching: 3,
            ..GenerateParams::default()
        };
        assert!(matches!(
            generate(0, &params),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn drifted_margins_emit_minimal_measure_task() {
        let params = GenerateParams {
            drift_scale: 0.5,
            ..GenerateParams::default()
        };
        let file = generate(11, &params).unwrap();
        assert!(file
            .tasks
            .iter()
            .any(|t| matches!(t, TaskSpec::MinimalMeasure { .. })));
        // Drivers with drift are excluded from the d-filtration task.
        assert!(!file
            .tasks
            .iter()
            .any(|t| matches!(t, TaskSpec::Theorem42 { .. })));
    }
}
