//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use critp::bubble::{lattice_survey, normalization_constant, BubbleParams};
use critp::cli::{parse_config, run, RunOutcome};
use critp::diagnostics::{
    classify_sequence, extract_scale, profile_record, synthetic_family, ClassifyThresholds, SequenceKind,
    SyntheticKind,
};
use critp::functional::{energy, monotonicity_gap, mountain_pass_profile, nehari_scale, ProblemParams};
use critp::grid::{integrate_power, Field, Grid, GridSpec};
use critp::solver::{ps_diagnostics, random_bump, solve, InitSpec, SolveConfig, Termination};
use critp::symmetry::{
    act, check_hypotheses, equivariance_defect, random_element, sign, EquivariantProjector, SymmetryConfig,
};

mod common;
use common::radial_residual;

/// `J(W)` of the end-to-end equivariant solve, seed 0.
const FROZEN_J_W: f64 = 161.181897574255;

fn verdict(id: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id}: {tag} {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ball(dim: usize, radius: f64, h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(GridSpec::ball_with_spacing(dim, radius, h).unwrap()).unwrap())
}

#[test]
fn criterion_01_bubble_residual_convergence() {
    let hs = [0.25, 0.125, 0.0625];
    let mut pass = true;
    let mut detail = String::new();
    for p in [2.0, 3.0] {
        let b = BubbleParams::centered(ProblemParams::new(4, p).unwrap(), 1.0).unwrap();
        let mut sup = Vec::new();
        let mut slowest = Duration::ZERO;
        for &h in &hs {
            let t = Instant::now();
            let s = lattice_survey(&b, 4.0, h).unwrap();
            slowest = slowest.max(t.elapsed());
            sup.push(s.residual.sup_residual);
        }
        let factors: Vec<f64> = sup.windows(2).map(|w| w[0] / w[1]).collect();
        let ok = factors.iter().all(|&f| f >= 1.7) && slowest <= Duration::from_secs(300);
        pass &= ok;
        detail.push_str(&format!(
            "[p = {p}: sup residual {}, reduction {factors:.2?}, slowest level {slowest:.1?}{}] ",
            sci(&sup),
            if ok { "" } else { ", below 1.7" }
        ));
    }
    verdict(1, pass, detail.trim_end());
}

#[test]
fn criterion_02_normalization_constant_oracle() {
    let mut worst = 0.0_f64;
    for (dim, p) in [(4, 2.0), (4, 3.0), (9, 2.5)] {
        let a = normalization_constant(dim, p);
        for k in 1..=1000 {
            let r = 10.0 * k as f64 / 1000.0;
            worst = worst.max(radial_residual(r, a, dim, p));
        }
    }
    verdict(2, worst < 1e-10, &format!("max relative radial residual {worst:.2e} over 3000 radii"));
}

/// 100 random smooth fields per `(N, p)`, each scaled onto the Nehari set.
fn nehari_samples(p: f64) -> (ProblemParams, Vec<Field>) {
    let params = ProblemParams::new(4, p).unwrap();
    let g = ball(4, 1.0, 0.125);
    let mut rng = ChaCha8Rng::seed_from_u64(p.to_bits());
    let fields = (0..100)
        .map(|_| {
            let count = rng.gen_range(1..5);
            random_bump(&g, &mut rng, count)
        })
        .collect();
    (params, fields)
}

#[test]
fn criterion_03_nehari_exactness() {
    let mut worst_defect = 0.0_f64;
    let mut argmax_ok = true;
    let mut worst_zero = 0.0_f64;
    let mut max_energy_at_s = f64::NEG_INFINITY;
    let t_grid: Vec<f64> = (0..=300).map(|k| k as f64 / 100.0).collect();
    for p in [2.0, 3.0] {
        let (params, fields) = nehari_samples(p);
        for u in &fields {
            let s = nehari_scale(u, &params).unwrap();
            worst_defect = worst_defect.max(s.report.relative_defect());
            let mp = mountain_pass_profile(&s.scaled, &params, &t_grid, 1e-12).unwrap();
            let (t_best, _) = mp
                .table
                .iter()
                .copied()
                .fold((0.0, f64::NEG_INFINITY), |b, (t, j)| if j > b.1 { (t, j) } else { b });
            argmax_ok &= t_best == 1.0;
            let e = s.report.energy;
            let at_zero = energy(&s.scaled.scaled(mp.zero_crossing), &params).unwrap().energy;
            worst_zero = worst_zero.max(at_zero.abs() / e);
            let at_s = energy(&s.scaled.scaled(mp.s_u), &params).unwrap().energy;
            max_energy_at_s = max_energy_at_s.max(at_s / e);
        }
    }
    let pass = worst_defect <= 1e-12 && argmax_ok && max_energy_at_s < 0.0 && worst_zero <= 1e-12;
    verdict(
        3,
        pass,
        &format!(
            "max relative defect {worst_defect:.2e}; argmax at t = 1: {argmax_ok}; \
             J(s u)/J(u) <= {max_energy_at_s:.3} at s = (2p*/p)^(1/(p*-p)); \
             |J|/J(u) <= {worst_zero:.1e} at (p*/p)^(1/(p*-p)), the zero crossing"
        ),
    );
}

#[test]
fn criterion_04_energy_identity_on_nehari_set() {
    let mut worst = 0.0_f64;
    for p in [2.0, 3.0] {
        let (params, fields) = nehari_samples(p);
        let n = params.dim as f64;
        for u in &fields {
            let r = nehari_scale(u, &params).unwrap().report;
            worst = worst.max((r.energy - r.grad_norm_p / n).abs() / r.energy);
        }
    }
    verdict(4, worst <= 1e-10, &format!("max |J - ||u||^p/N| / J = {worst:.2e} over 200 fields"));
}

#[test]
fn criterion_05_equivariance_suite() {
    let config = SymmetryConfig::new(4, 1).unwrap();
    let mut idem_c = Vec::new();
    let mut eq_c = Vec::new();
    let mut radial_c = Vec::new();
    for h in [0.25, 0.125] {
        let g = ball(4, 1.0, h);
        let proj = EquivariantProjector::new(&g, &config).unwrap();
        let u0 = Field::from_fn(&g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (1.0 - r2).powi(2) * (x[0] + 0.7 * x[1] * x[2] - 0.4 * x[3] * x[0] + 0.3)
        });
        let v = proj.apply(&u0);
        let scale = v.max_abs();
        idem_c.push(proj.apply(&v).max_abs_diff(&v) / scale / (h * h));
        eq_c.push(equivariance_defect(&v, &config, 20_000).unwrap() / scale / (h * h));
        let radial = Field::from_fn(&g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (1.0 - r2).powi(2) * (1.0 + r2)
        });
        radial_c.push(proj.apply(&radial).max_abs() / radial.max_abs() / (h * h));
    }
    let stable = |c: &[f64]| c[1] <= 2.0 * c[0].max(1e-12) && c[1] >= 0.5 * c[0];
    let averages_ok = stable(&idem_c) && stable(&eq_c) && {
        let c = idem_c.iter().chain(&eq_c).cloned().fold(0.0, f64::max);
        radial_c.iter().all(|&r| r <= c)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_iso = 0.0_f64;
    let mut worst_hom = 0.0_f64;
    let mut sign_ok = true;
    let groups = [
        SymmetryConfig::new(4, 1).unwrap(),
        SymmetryConfig::new(8, 2).unwrap(),
        SymmetryConfig::new(9, 2).unwrap(),
        SymmetryConfig::new(9, 1).unwrap(),
    ];
    for k in 0..100_000 {
        let c = &groups[k % groups.len()];
        let g = random_element(c, &mut rng);
        let h = random_element(c, &mut rng);
        let x: Vec<f64> = (0..c.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let gx = act(&g, &x).unwrap();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ngx = gx.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_iso = worst_iso.max((nx - ngx).abs() / nx);
        sign_ok &= sign(&g.compose(&h)) == sign(&g) * sign(&h);
        let a = act(&g.compose(&h), &x).unwrap();
        let b = act(&g, &act(&h, &x).unwrap()).unwrap();
        let d = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        worst_hom = worst_hom.max(d / nx);
    }
    let group_ok = sign_ok && worst_iso <= 1e-12 && worst_hom <= 1e-12;

    let mut failed = Vec::new();
    for dim in [4, 8, 9] {
        for j in 1..=dim / 4 {
            let report = check_hypotheses(&SymmetryConfig::new(dim, j).unwrap(), 64).unwrap();
            if !report.all_passed() {
                failed.push((dim, j));
            }
        }
    }
    let pass = averages_ok && group_ok && failed.is_empty();
    verdict(
        5,
        pass,
        &format!(
            "C(idempotence) {idem_c:.3?}, C(equivariance) {eq_c:.3?}, C(radial) {} at h = 0.25, 0.125; \
             1e5 samples: sign multiplicative {sign_ok}, isometry {worst_iso:.1e}, action {worst_hom:.1e}; \
             (S1)-(S3) failures {failed:?}",
            sci(&radial_c)
        ),
    );
}

#[test]
fn criterion_06_monotonicity_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut min_lhs = f64::INFINITY;
    let mut p2_dev = 0.0_f64;
    let mut c0 = [f64::INFINITY; 2];
    for p in [1.5, 2.0, 3.0, 4.0] {
        for _ in 0..100_000 {
            let eta: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let xi: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let g = monotonicity_gap(&eta, &xi, p).unwrap();
            min_lhs = min_lhs.min(g.lhs);
            if let Some(r) = g.lower_bound_ratio {
                if p == 2.0 {
                    p2_dev = p2_dev.max((r - 1.0).abs());
                } else if p >= 3.0 {
                    let k = if p == 3.0 { 0 } else { 1 };
                    c0[k] = c0[k].min(r);
                }
            }
        }
    }
    let pass = min_lhs >= -1e-14 && p2_dev <= 1e-12 && c0.iter().all(|&c| c > 0.0);
    verdict(
        6,
        pass,
        &format!("min lhs {min_lhs:.3e}; p = 2 ratio deviation {p2_dev:.1e}; empirical C0: p = 3 {:.4}, p = 4 {:.4}", c0[0], c0[1]),
    );
}

#[test]
fn criterion_07_dilation_invariance() {
    let mut pass = true;
    let mut detail = String::new();
    for p in [2.0, 3.0] {
        let problem = ProblemParams::new(4, p).unwrap();
        let mut norms = Vec::new();
        for eps in [0.5, 1.0, 2.0] {
            let b = BubbleParams::centered(problem, eps).unwrap();
            let s = lattice_survey(&b, 4.0 * eps, eps / 8.0).unwrap();
            norms.push((s.energy.grad_norm_p, s.energy.crit_norm));
        }
        let spread = |f: &dyn Fn(&(f64, f64)) -> f64| {
            let v: Vec<f64> = norms.iter().map(f).collect();
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            (hi - lo) / lo
        };
        let (sg, sc) = (spread(&|n| n.0), spread(&|n| n.1));
        pass &= sg <= 0.01 && sc <= 0.01;
        detail.push_str(&format!("[p = {p}: spread of ||U||^p {sg:.1e}, of |U|^p* {sc:.1e}] "));
    }
    verdict(7, pass, detail.trim_end());
}

#[test]
fn criterion_08_end_to_end_solve() {
    let problem = ProblemParams::new(4, 2.0).unwrap();
    let grid = GridSpec::new(4, 33, 2.0, critp::grid::DomainMask::Ball { radius: 2.0 }).unwrap();
    let init = InitSpec::ProjectedBubble {
        center: vec![0.6, 0.0, 0.0, 0.0],
        eps: 0.5,
    };
    let mut config = SolveConfig::new(problem, Some(SymmetryConfig::new(4, 1).unwrap()), grid.clone(), init.clone());
    config.tol_energy = 1e-7;
    let t = Instant::now();
    let w = solve(&config).unwrap();
    let elapsed = t.elapsed();

    let mut plain = SolveConfig::new(problem, None, grid, init);
    plain.tol_energy = 1e-7;
    let positive = solve(&plain).unwrap();

    let j_w = w.final_report().energy;
    let j_plus = positive.final_report().energy;
    let defect = w.final_report().relative_defect();
    let ps = ps_diagnostics(&w.trace).unwrap();
    let frozen = (j_w - FROZEN_J_W).abs() / FROZEN_J_W;
    let pass = w.termination == Termination::Converged
        && w.iterations <= 2000
        && elapsed <= Duration::from_secs(1800)
        && w.sign.changes_sign
        && defect <= 1e-6
        && ps.monotone
        && positive.termination == Termination::Converged
        && j_w >= 1.9 * j_plus
        && frozen <= 1e-6;
    verdict(
        8,
        pass,
        &format!(
            "{:?} in {} iterations ({elapsed:.0?}); J(W) = {j_w:.10}, J+ = {j_plus:.10} ({:?}), ratio {:.3}; \
             relative defect {defect:.1e}; monotone trace {}; sign range [{:.3}, {:.3}]; \
             sampled-group equivariance defect {:.2e}; drift from frozen value {frozen:.1e}",
            w.termination,
            w.iterations,
            positive.termination,
            j_w / j_plus,
            ps.monotone,
            w.sign.min,
            w.sign.max,
            w.equivariance_defect.unwrap_or(f64::NAN),
        ),
    );
}

#[test]
fn criterion_09_concentration_extraction() {
    let params = ProblemParams::new(3, 2.0).unwrap();
    let g = ball(3, 1.0, 0.0625);
    let center = [0.25, 0.0, -0.125];
    let mut scale_ok = true;
    let mut found = Vec::new();
    for eps0 in [0.1, 0.2, 0.4] {
        let u = BubbleParams::new(params, eps0, center.to_vec()).unwrap().sample(&g).unwrap();
        let total = integrate_power(&u, params.p_star()).unwrap();
        let s = extract_scale(&u, &params, 0.45 * total, None).unwrap();
        let dist = s.xi.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        scale_ok &= s.eps >= 0.5 * eps0 && s.eps <= 2.0 * eps0 && dist <= eps0;
        found.push((eps0, s.eps, dist));
    }
    let eps: Vec<f64> = (1..=4).map(|k| 0.5f64.powi(k)).collect();
    let mut kinds = Vec::new();
    for kind in [SyntheticKind::Interior, SyntheticKind::Boundary] {
        let records: Vec<_> = synthetic_family(kind, &eps, &params, &g)
            .unwrap()
            .iter()
            .map(|u| profile_record(u, &params, 0.45, None, None).unwrap())
            .collect();
        kinds.push(classify_sequence(&records, &params, &ClassifyThresholds::default()).unwrap().kind);
    }
    let pass = scale_ok
        && kinds == [SequenceKind::ConcentratingInterior, SequenceKind::ConcentratingBoundary];
    verdict(
        9,
        pass,
        &format!("(eps0, eps, |xi - center|) = {found:.4?}; interior family -> {:?}, boundary family -> {:?}", kinds[0], kinds[1]),
    );
}

#[test]
fn criterion_10_multiplicity_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"mode": "sweep-j", "N": 9, "p": 2, "output_dir": {:?}}}"#,
        dir.path().join("sweep")
    );
    let config = parse_config(&text).unwrap();
    let RunOutcome::SweepJ(report) = run(&config).unwrap() else {
        panic!("sweep-j produced another outcome")
    };
    let converged = report.runs.iter().all(|r| r.termination == Termination::Converged);
    let entry = &report.distinctness[0];
    let margin = entry.witness.measured_margin;
    let pass = report.runs.len() == 2
        && converged
        && margin > 10.0 * report.field_tol
        && dir.path().join("sweep/j1/field.pbf").exists()
        && dir.path().join("sweep/j2/field.pbf").exists();
    verdict(
        10,
        pass,
        &format!(
            "runs {:?}; witness W_{} vs W_{} margin {margin:.3e} (predicted {:.3e}) against 10 x tol = {:.1e}",
            report.runs.iter().map(|r| (r.j, r.termination, r.iterations, r.energy)).collect::<Vec<_>>(),
            entry.i,
            entry.j,
            entry.witness.predicted_margin,
            10.0 * report.field_tol
        ),
    );
}

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["trace.csv", "field.pbf", "result.json"];
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let text = format!(
            r#"{{"mode": "solve", "N": 4, "p": 3, "j": 1, "seed": 11,
                "grid": {{"nodes_per_axis": 17, "half_extent": 1.0}},
                "solver": {{"init": {{"kind": "random-smooth", "seed": 11}}, "max_iters": 40}},
                "output_dir": {out:?}}}"#
        );
        run(&parse_config(&text).unwrap()).unwrap();
        outputs.push(files.map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    let same: Vec<bool> = (0..files.len()).map(|i| outputs[0][i] == outputs[1][i]).collect();
    let pass = same.iter().all(|&b| b);
    verdict(
        11,
        pass,
        &format!("byte-identical: trace.csv {}, field.pbf {}, result.json {}", same[0], same[1], same[2]),
    );
}
