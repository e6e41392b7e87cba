//! Acceptance suite: one test per criterion, each with its own oracle.
//!
//! Expected values are either frozen from hand arithmetic (the drifted coin
//! and trinomial fixtures), verified against independent in-test computations
//! (rank of indicator vectors, Gram matrices, branching counts, pathwise
//! integrals), or exact-by-construction identities checked across two
//! independent code paths.

use filtration_lab::credit::{build_enlarged, decoupling_pstar, hazard, kusuoka_verify};
use filtration_lab::enlarge::{
    multiplicity, theorem34_verify, theorem42_verify, EnlargementScenario, DEFAULT_D_CAP,
};
use filtration_lab::generate::{generate, to_canonical_json, GenerateParams};
use filtration_lab::num::{Rat, Scalar};
use filtration_lab::process::{doob_decomposition, AdaptedProcess, PredictableProcess};
use filtration_lab::repr::integral_norm;
use filtration_lab::runner::{run_bytes, RunOptions};
use filtration_lab::scenario::{load_scenario, Loaded, LoadedScenario};
use filtration_lab::semimart::{doleans_exponential, prp_transfer_check, structure_condition};
use filtration_lab::space::{FiniteProbSpace, Filtration, Measure, Partition};
use filtration_lab::Error;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;

fn r(n: i64, d: i64) -> Rat {
    Rat::from_ratio(n, d)
}

fn z() -> Rat {
    Rat::zero()
}

fn fixture(name: &str) -> Vec<u8> {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read(&path).unwrap_or_else(|e| panic!("cannot read fixture {path}: {e}"))
}

fn load_rational(name: &str) -> LoadedScenario<Rat> {
    match load_scenario(&fixture(name), None).expect("fixture loads") {
        Loaded::Rational(s) => s,
        Loaded::Float(_) => panic!("fixture {name} should load in rational mode"),
    }
}

/// Independent exact row-reduction rank, used as the oracle against the
/// library's Gram-Schmidt dimension counts.
fn rank_oracle(mut rows: Vec<Vec<Rat>>) -> usize {
    let mut rank = 0usize;
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let p = rows[rank][col].clone();
        for i in 0..rows.len() {
            if i != rank && !rows[i][col].is_zero() {
                let factor = rows[i][col].clone() / p.clone();
                for c in col..cols {
                    let sub = factor.clone() * rows[rank][c].clone();
                    rows[i][c] -= sub;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// d independent fair coins at T = 1 as scalar drivers.
fn d_coins(d: usize) -> EnlargementScenario<Rat> {
    let n = 1usize << d;
    let space = FiniteProbSpace::new(
        (0..n).map(|o| format!("{o:0width$b}", width = d)).collect(),
        vec![Rat::from_ratio(1, n as i64); n],
        &z(),
    )
    .unwrap();
    let drivers = (0..d)
        .map(|k| {
            let mut blocks = vec![Vec::new(), Vec::new()];
            for o in 0..n {
                blocks[(o >> (d - 1 - k)) & 1].push(o);
            }
            let part = Partition::new::<Rat>(blocks, n).unwrap();
            let f =
                Arc::new(Filtration::new::<Rat>(vec![Partition::trivial(n), part]).unwrap());
            let m = AdaptedProcess::from_pointwise(
                f,
                1,
                &[
                    vec![vec![z()]; n],
                    (0..n)
                        .map(|o| {
                            vec![if (o >> (d - 1 - k)) & 1 == 0 {
                                r(1, 1)
                            } else {
                                r(-1, 1)
                            }]
                        })
                        .collect(),
                ],
            )
            .unwrap();
            (format!("M{}", k + 1), m)
        })
        .collect();
    EnlargementScenario::new(space, drivers).unwrap()
}

/// Criterion 1: the two-filtration theorem end to end on the 16-outcome
/// product-coin scenario, with an independent rank oracle.
#[test]
fn acceptance_1_theorem34_end_to_end_on_s2() {
    let started = Instant::now();
    let s = load_rational("s2_product_coins.json");
    let scn = EnlargementScenario::new(
        s.space.clone(),
        vec![
            ("X".into(), s.processes["X"].clone()),
            ("Y".into(), s.processes["Y"].clone()),
        ],
    )
    .unwrap();
    let report = theorem34_verify(&scn, &z()).unwrap();
    assert!(report.all_pass(), "{}", report.render_text());
    assert_eq!(report.claim("i1").unwrap().verdict.is_ok(), true);
    let i3 = report.claim("i3").unwrap();
    assert_eq!(i3.dims, vec![5, 5, 5, 15]);
    assert!(i3.residual.unwrap() <= 1e-9);
    let i4 = report.claim("i4").unwrap();
    assert_eq!(i4.dims, vec![5, 5, 5, 15]);
    assert!(i4.residual.unwrap() <= 1e-9);

    // The drivers are already martingales, so both margin measures are the
    // base measure and the decoupling measure Q is P itself.
    let p = s.space.measure();
    for name in ["X", "Y"] {
        let driver = &s.processes[name];
        let sc = structure_condition(driver, &p, driver.filtration(), &z()).unwrap();
        let mm = doleans_exponential(&sc).unwrap();
        assert_eq!(mm.measure, p, "minimal measure of {name} must equal P");
    }

    // Oracle: independent rank of the 15 indicator-integrand terminal
    // vectors. Outcome bits (a1, a2, b1, b2); the joint filtration at t=1
    // groups by (a1, b1).
    let bit = |o: usize, k: usize| ((o >> (3 - k)) & 1) as i64;
    let sign = |b: i64| r(1 - 2 * b, 1);
    let mut vectors: Vec<Vec<Rat>> = Vec::new();
    // Increments of M, N and [M,N] at times 1 and 2, per outcome.
    let dm = |t: usize, o: usize| sign(bit(o, t - 1));
    let dn = |t: usize, o: usize| sign(bit(o, t + 1));
    for gen in 0..3usize {
        let inc = |t: usize, o: usize| match gen {
            0 => dm(t, o),
            1 => dn(t, o),
            _ => dm(t, o) * dn(t, o),
        };
        // t = 1: one node (the trivial block).
        vectors.push((0..16).map(|o| inc(1, o)).collect());
        // t = 2: four nodes keyed by (a1, b1).
        for a1 in 0..2 {
            for b1 in 0..2 {
                vectors.push(
                    (0..16)
                        .map(|o| {
                            if bit(o, 0) == a1 && bit(o, 2) == b1 {
                                inc(2, o)
                            } else {
                                z()
                            }
                        })
                        .collect(),
                );
            }
        }
    }
    assert_eq!(vectors.len(), 15);
    assert_eq!(rank_oracle(vectors), 15);

    assert!(started.elapsed().as_secs_f64() < 1.0, "criterion 1 runtime");
    println!("ACCEPTANCE 1 (theorem 3.4 end-to-end on S2): PASS");
}

/// Criterion 2: the d-filtration theorem on 3 and 4 fair coins, with the
/// Gram-matrix oracle for the Walsh family.
#[test]
fn acceptance_2_theorem42_on_fair_coins() {
    let started = Instant::now();

    let scn = d_coins(3);
    let report = theorem42_verify(&scn, DEFAULT_D_CAP, &z()).unwrap();
    assert!(report.all_pass(), "{}", report.render_text());
    let j3 = report.claim("j3").unwrap();
    assert_eq!(j3.dims, vec![1, 1, 1, 1, 1, 1, 1, 7], "7 = 2^3 - 1 processes");
    assert_eq!(j3.max_violation, Some(0.0), "exact orthogonality in rational mode");

    // Oracle: the Gram matrix of {a, b, c, ab, ac, bc, abc} under the uniform
    // measure is the identity.
    let sign = |o: usize, k: usize| r(1 - 2 * ((o >> (2 - k)) & 1) as i64, 1);
    let subsets: [&[usize]; 7] = [&[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];
    let value = |o: usize, s: &[usize]| s.iter().fold(Rat::one(), |acc, &k| acc * sign(o, k));
    for (i, si) in subsets.iter().enumerate() {
        for (j, sj) in subsets.iter().enumerate() {
            let gram: Rat = (0..8)
                .map(|o| r(1, 8) * value(o, si) * value(o, sj))
                .fold(z(), |acc, v| acc + v);
            let expected = if i == j { Rat::one() } else { z() };
            assert_eq!(gram, expected, "Gram[{i}][{j}]");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "criterion 2 runtime (d=3)");

    let scn = d_coins(4);
    let report = theorem42_verify(&scn, DEFAULT_D_CAP, &z()).unwrap();
    assert!(report.all_pass(), "{}", report.render_text());
    let j3 = report.claim("j3").unwrap();
    assert_eq!(j3.dims.len(), 16);
    assert_eq!(*j3.dims.last().unwrap(), 15, "15 = 2^4 - 1");
    println!("ACCEPTANCE 2 (theorem 4.2 on d = 3, 4 fair coins): PASS");
}

/// Criterion 3: multiplicity of the join of d independent binary filtrations
/// is 2^d - 1, with the branching-count oracle and a validated certificate.
#[test]
fn acceptance_3_multiplicity_of_binary_joins() {
    let started = Instant::now();
    for d in 2..=5usize {
        let scn = d_coins(d);
        let mu = scn.space().measure();
        let result = multiplicity(scn.joint(), &mu, &z()).unwrap();
        assert_eq!(result.value, (1 << d) - 1, "multiplicity at d={d}");

        // Oracle: max branching count over the nodes of the join.
        let f = scn.joint();
        let mut max_children = 0usize;
        for t in 1..=f.horizon() {
            for block in f.at(t - 1).blocks() {
                let mut children: Vec<usize> =
                    block.iter().map(|&o| f.at(t).block_of(o)).collect();
                children.sort_unstable();
                children.dedup();
                max_children = max_children.max(children.len());
            }
        }
        assert_eq!(result.value, max_children - 1, "branching formula at d={d}");

        // Certificate: pairwise orthogonal, spans the whole centered space.
        assert_eq!(result.certificate.len(), result.value);
        assert!(result.direct_sum.holds(), "certificate direct sum at d={d}");
        assert_eq!(result.direct_sum.joint_dim, result.ambient_dim);
        assert_eq!(result.ambient_dim, (1 << d) - 1);
    }
    assert!(started.elapsed().as_secs_f64() < 5.0, "criterion 3 runtime");
    println!("ACCEPTANCE 3 (multiplicity 2^d - 1 for d in 2..=5): PASS");
}

/// Criterion 4: the positivity gate of the minimal martingale measure --
/// exact density on the drifted coin, exact failure witness on the trinomial.
#[test]
fn acceptance_4_minimal_measure_positivity_gate() {
    // S3: drifted coin.
    let s = load_rational("s3_drifted_coin.json");
    let x = &s.processes["X"];
    let p = s.space.measure();
    let sc = structure_condition(x, &p, x.filtration(), &z()).unwrap();
    let mm = doleans_exponential(&sc).unwrap();
    assert_eq!(mm.density.at(1, 0, 0), &r(5, 6), "L_1 on up");
    assert_eq!(mm.density.at(1, 1, 0), &r(5, 4), "L_1 on down");
    assert_eq!(mm.measure.weights(), &[r(1, 2), r(1, 2)], "P^X uniform");
    let check =
        filtration_lab::process::is_martingale(x, &mm.measure, x.filtration(), &z()).unwrap();
    assert!(check.holds, "X is an exact P^X-martingale");

    // S4: trinomial with an exact failure witness.
    let s = load_rational("s4_trinomial.json");
    let x = &s.processes["X"];
    let p = s.space.measure();
    let sc = structure_condition(x, &p, x.filtration(), &z()).unwrap();
    match doleans_exponential(&sc) {
        Err(Error::MinimalMeasureNotPositive { time, value, .. }) => {
            assert_eq!(time, 1);
            assert_eq!(value, r(-4, 51), "witness 1 - 55/51 exactly");
        }
        other => panic!("expected MinimalMeasureNotPositive, got {other:?}"),
    }
    println!("ACCEPTANCE 4 (corollary positivity gate, S3 and S4): PASS");
}

/// Criterion 5: completeness transfer on 50 generated drifted scenarios --
/// the Girsanov correction equals the Doob martingale part, and the two
/// completeness verdicts agree.
#[test]
fn acceptance_5_transfer_on_generated_drifted_scenarios() {
    for seed in 0..50u64 {
        let params = GenerateParams {
            d: 1,
            steps: 2,
            branching: 2 + (seed % 2) as usize,
            drift_scale: 0.5,
            ..GenerateParams::default()
        };
        let file = generate(seed, &params).unwrap();
        let s = match load_scenario(to_canonical_json(&file).as_bytes(), None).unwrap() {
            Loaded::Rational(s) => s,
            Loaded::Float(_) => panic!("generated files are rational"),
        };
        let x = &s.processes["X1"];
        let p = s.space.measure();
        let report = prp_transfer_check(x, x.filtration(), &p, &z()).unwrap();
        assert!(report.failure.is_none(), "seed {seed}: construction failed");
        assert_eq!(report.equivalent, Some(true), "seed {seed}: verdicts differ");
        assert!(
            report.prp_driver_under_minimal.as_ref().unwrap().holds,
            "seed {seed}: full-rank margin must be complete"
        );
        let gap = report.girsanov_gap.unwrap();
        assert!(gap <= 1e-9, "seed {seed}: girsanov gap {gap}");

        // Second, independent route to the same object: decompose and compare
        // terminal values directly.
        let sc = structure_condition(x, &p, x.filtration(), &z()).unwrap();
        let mm = doleans_exponential(&sc).unwrap();
        let transferred = filtration_lab::semimart::girsanov_martingale_part(
            x,
            &mm.measure,
            &p,
            x.filtration(),
            &z(),
        )
        .unwrap();
        let doob = doob_decomposition(x, &p).unwrap().martingale_part;
        assert_eq!(
            transferred.max_gap(&doob).unwrap(),
            z(),
            "seed {seed}: exact equality in rational mode"
        );
    }
    println!("ACCEPTANCE 5 (transfer on 50 drifted scenarios): PASS");
}

/// Criterion 6: the integral-norm isometry on 100 generated scenarios with
/// random predictable integrands, plus additivity across strongly orthogonal
/// families.
#[test]
fn acceptance_6_isometry_on_generated_scenarios() {
    for seed in 0..100u64 {
        let params = GenerateParams {
            d: 2,
            steps: 2,
            branching: 2,
            drift_scale: 0.0,
            ..GenerateParams::default()
        };
        let file = generate(seed, &params).unwrap();
        let s = match load_scenario(to_canonical_json(&file).as_bytes(), None).unwrap() {
            Loaded::Rational(s) => s,
            Loaded::Float(_) => panic!("generated files are rational"),
        };
        let p = s.space.measure();
        let g = &s.filtrations["G"];
        let m1 = s.processes["X1"].reindex(g).unwrap();
        let m2 = s.processes["X2"].reindex(g).unwrap();

        // Random predictable integrands over the joint filtration.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003));
        let mut random_integrand = || {
            let values: Vec<Vec<Vec<Rat>>> = (1..=g.horizon())
                .map(|t| {
                    (0..g.at(t - 1).n_blocks())
                        .map(|_| vec![r(rng.gen_range(-200..=200), 100)])
                        .collect()
                })
                .collect();
            PredictableProcess::new(g.clone(), 1, values).unwrap()
        };
        let xi1 = random_integrand();
        let xi2 = random_integrand();

        // Oracle: pathwise integral and direct expectation of its square.
        let pathwise_square = |xi: &PredictableProcess<Rat>, m: &AdaptedProcess<Rat>| -> Rat {
            let mut total = z();
            for o in 0..s.space.len() {
                let mut integral = z();
                for t in 1..=g.horizon() {
                    let inc = m.at(t, o, 0).clone() - m.at(t - 1, o, 0).clone();
                    integral += xi.at(t, o, 0).clone() * inc;
                }
                total += p.weight(o).clone() * integral.clone() * integral;
            }
            total
        };

        let norm1 = integral_norm(&xi1, &m1, &p, &z()).unwrap();
        let sq1 = pathwise_square(&xi1, &m1);
        let gap = (norm1.clone() - sq1.clone()).abs();
        let bound = Rat::from_f64_exact(1e-9).unwrap() * (Rat::one() + sq1.clone());
        assert!(gap <= bound, "seed {seed}: isometry gap {gap}");

        // Additivity across the two strongly orthogonal margins.
        let norm2 = integral_norm(&xi2, &m2, &p, &z()).unwrap();
        let mut total_sq = z();
        for o in 0..s.space.len() {
            let mut total = z();
            for t in 1..=g.horizon() {
                let inc1 = m1.at(t, o, 0).clone() - m1.at(t - 1, o, 0).clone();
                let inc2 = m2.at(t, o, 0).clone() - m2.at(t - 1, o, 0).clone();
                total += xi1.at(t, o, 0).clone() * inc1 + xi2.at(t, o, 0).clone() * inc2;
            }
            total_sq += p.weight(o).clone() * total.clone() * total;
        }
        let sum_norms = norm1 + norm2;
        let gap = (total_sq.clone() - sum_norms).abs();
        let bound = Rat::from_f64_exact(1e-9).unwrap() * (Rat::one() + total_sq);
        assert!(gap <= bound, "seed {seed}: additivity gap {gap}");
    }
    println!("ACCEPTANCE 6 (isometry on 100 generated scenarios): PASS");
}

/// Criterion 7: the progressive-enlargement basis on the staggered default
/// model, checked against full enumeration of the 4-atom space, plus the
/// simultaneous-move negative control.
#[test]
fn acceptance_7_kusuoka_on_staggered_default() {
    let s = load_rational("s5_staggered_default.json");
    let model = s.default_model.as_ref().unwrap();

    // Hazard oracle by full enumeration: lambda_2 = 1/2 on u, 1/4 on d.
    let enlarged = build_enlarged(model, &z()).unwrap();
    assert_eq!(enlarged.space().len(), 4, "4 enlarged atoms");
    let (hazard_process, compensated) = hazard(model, &enlarged, &z()).unwrap();
    let labels = enlarged.space().labels();
    for (pair, label) in labels.iter().enumerate() {
        let expected = if label.starts_with("u@") { r(1, 2) } else { r(1, 4) };
        assert_eq!(hazard_process.lambda.at(2, pair, 0), &expected, "{label}");
    }
    // Compensated default at the horizon, enumerated by hand:
    // H_2 = 1_{tau=2} - lambda_2 on every pair.
    for (pair, label) in labels.iter().enumerate() {
        let lam = if label.starts_with("u@") { r(1, 2) } else { r(1, 4) };
        let ind = if label.ends_with("@2") { Rat::one() } else { z() };
        assert_eq!(compensated.process.at(2, pair, 0), &(ind - lam), "{label}");
    }

    // Decoupling measure restrictions, exactly.
    let decoupling = decoupling_pstar(model, &enlarged, &z()).unwrap();
    assert_eq!(
        decoupling.measure.weights(),
        &[r(3, 16), r(5, 16), r(3, 16), r(5, 16)]
    );

    let outcome = kusuoka_verify(model, &z()).unwrap();
    assert!(outcome.report.all_pass(), "{}", outcome.report.render_text());
    assert_eq!(outcome.avoidance, Some(true), "avoidance on the staggered grid");
    assert_eq!(outcome.basis_dims, vec![1, 2, 3], "dims (1, 2) summing to 3 = 4 - 1");

    // Rank oracle on the 4-atom space: node vectors of M and H.
    // Outcomes ordered (u@2, u@inf, d@2, d@inf).
    let vectors = vec![
        // M: root increment at t=1.
        vec![r(1, 1), r(1, 1), r(-1, 1), r(-1, 1)],
        // H: increments at t=2 on the two survivor blocks.
        vec![r(1, 2), r(-1, 2), z(), z()],
        vec![z(), z(), r(3, 4), r(-1, 4)],
    ];
    assert_eq!(rank_oracle(vectors), 3);

    // Negative control: simultaneous moves need the bracket family.
    let s = load_rational("s5_simultaneous.json");
    let model = s.default_model.as_ref().unwrap();
    let outcome = kusuoka_verify(model, &z()).unwrap();
    assert!(outcome.report.all_pass(), "{}", outcome.report.render_text());
    assert_eq!(outcome.avoidance, Some(false));
    assert_eq!(
        outcome.basis_dims,
        vec![1, 1, 1, 3],
        "bracket family needed, joint dim still |atoms| - 1"
    );
    println!("ACCEPTANCE 7 (progressive enlargement on S5): PASS");
}

/// Criterion 8 (library side): the negative controls fail with the specified
/// witnesses. Exit codes are asserted in the CLI crate's acceptance suite.
#[test]
fn acceptance_8_negative_controls() {
    // Correlated coins: A3 fails with witness <M,N>_1 = 1/5.
    let report = run_bytes(&fixture("correlated_coins.json"), &RunOptions::default()).unwrap();
    assert!(!report.passed);
    let verification = report.tasks[0].verification.as_ref().unwrap();
    let a3 = verification.claim("A3").unwrap();
    assert_eq!(a3.verdict, filtration_lab::report::Verdict::Fail);
    assert!(
        a3.witness.as_ref().unwrap().contains("1/5"),
        "witness: {:?}",
        a3.witness
    );

    // Support-broken default model: density fails with a named witness.
    let report = run_bytes(
        &fixture("support_broken_default.json"),
        &RunOptions::default(),
    )
    .unwrap();
    assert!(!report.passed);
    let verification = report.tasks[0].verification.as_ref().unwrap();
    let density = verification.claim("density").unwrap();
    assert_eq!(density.verdict, filtration_lab::report::Verdict::Fail);
    let witness = density.witness.as_ref().unwrap();
    assert!(witness.contains("time 1"), "witness: {witness}");
    assert!(witness.contains("atom u"), "witness: {witness}");
    assert!(witness.contains("theta inf"), "witness: {witness}");

    // Non-refining filtration: validation error naming the offending time.
    let err = run_bytes(&fixture("non_refining.json"), &RunOptions::default()).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("partitions[2]"), "message: {message}");
    println!("ACCEPTANCE 8 (negative controls with witnesses): PASS");
}

/// Criterion 9 (library side): byte-identical reports and generator
/// reproducibility against the committed golden files.
#[test]
fn acceptance_9_determinism() {
    for name in [
        "s2_product_coins.json",
        "s2_drifted.json",
        "s3_drifted_coin.json",
        "s4_trinomial.json",
        "s5_staggered_default.json",
        "s5_simultaneous.json",
        "correlated_coins.json",
        "support_broken_default.json",
        "golden/seed0_d2_s2.json",
        "golden/seed0_default_staggered.json",
    ] {
        let bytes = fixture(name);
        let a = run_bytes(&bytes, &RunOptions::default()).unwrap().to_json();
        let b = run_bytes(&bytes, &RunOptions::default()).unwrap().to_json();
        assert_eq!(a, b, "report bytes differ for {name}");
    }

    // The committed golden files are exactly what seed 0 generates.
    let golden = String::from_utf8(fixture("golden/seed0_d2_s2.json")).unwrap();
    let regenerated = to_canonical_json(&generate(0, &GenerateParams::default()).unwrap());
    assert_eq!(golden, regenerated, "golden seed0_d2_s2 drifted");

    let golden = String::from_utf8(fixture("golden/seed0_default_staggered.json")).unwrap();
    let params = GenerateParams {
        d: 1,
        steps: 1,
        default_model: true,
        staggered: true,
        ..GenerateParams::default()
    };
    let regenerated = to_canonical_json(&generate(0, &params).unwrap());
    assert_eq!(golden, regenerated, "golden seed0_default_staggered drifted");
    println!("ACCEPTANCE 9 (determinism and golden files): PASS");
}
