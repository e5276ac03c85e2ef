//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use pcf_harmonic::forms::{
    derive_extension_matrices, energy, energy_ledger, harmonic_by_words, harmonic_solve,
    laplace_form, pull_back, ExtensionMatrices,
};
use pcf_harmonic::graph::build_vertex_graph;
use pcf_harmonic::regularity::{grh_sweep, holder_exponent_fit, hr_sweep, Regime, RegularityReport, SweepOptions};
use pcf_harmonic::sampling::{normal_vector, seeded, DataSweep};
use pcf_harmonic::sparse::{dirichlet_solve, SolveOptions};
use pcf_harmonic::structure::{sierpinski_gasket, vicsek, PcfStructure};
use pcf_harmonic::verify::{
    check_current_inequality, check_total_current, matrix_power_scan, osc_scan,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: u64) -> bool {
    elapsed < Duration::from_secs(limit)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// 1. Boundary energies are conserved at every level.
fn boundary_energies() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (s, m_max, expected) in [(sierpinski_gasket(), 8, 2.0), (vicsek(), 7, 3.0)] {
        let mut data = vec![0.0; s.boundary_len()];
        data[0] = 1.0;
        let g = build_vertex_graph(&s, m_max).map_err(|e| e.to_string())?;
        let u = harmonic_solve(&g, &data).map_err(|e| e.to_string())?;
        let ledger = energy_ledger(&s, &g, &u.values).map_err(|e| e.to_string())?;
        for e in &ledger.energies {
            worst = worst.max(rel(*e, expected));
        }
    }
    let t = start.elapsed();
    check(
        worst <= 1e-9 && within(t, 10),
        format!("E_m gasket=2 (m<=8), vicsek=3 (m<=7); worst rel err {worst:.2e}; {t:.2?}"),
    )
}

/// Gasket E_1 written out by hand: cells {p1,m12,m13}, {m12,p2,m23},
/// {m13,m23,p3}, every pair with conductance 1/r = 5/3.
fn gasket_e1(boundary: [f64; 3], x: [f64; 3]) -> f64 {
    let [p1, p2, p3] = boundary;
    let [m12, m13, m23] = x;
    let tri = |a: f64, b: f64, c: f64| (a - b).powi(2) + (b - c).powi(2) + (a - c).powi(2);
    5.0 / 3.0 * (tri(p1, m12, m13) + tri(m12, p2, m23) + tri(m13, m23, p3))
}

/// Minimizes the hand-written quadratic: Hessian and gradient from exact
/// finite differences, then Cramer's rule.
fn brute_force_minimizer(boundary: [f64; 3]) -> [f64; 3] {
    let e = |x: [f64; 3]| gasket_e1(boundary, x);
    let unit = |i: usize| {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        v
    };
    let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let zero = [0.0; 3];
    let e0 = e(zero);
    let mut h = [[0.0; 3]; 3];
    let mut g = [0.0; 3];
    for i in 0..3 {
        g[i] = (e(unit(i)) - e([-unit(i)[0], -unit(i)[1], -unit(i)[2]])) / 2.0;
        for j in 0..3 {
            h[i][j] = e(add(unit(i), unit(j))) - e(unit(i)) - e(unit(j)) + e0;
        }
    }
    // h x = -g
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(h);
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = h;
        for row in 0..3 {
            m[row][k] = -g[row];
        }
        *xk = det3(m) / d;
    }
    x
}

// 2. Extension matrices against a brute-force minimizer; regularity residuals.
fn extension_matrices() -> Outcome {
    let s = sierpinski_gasket();
    let e = derive_extension_matrices(&s).map_err(|e| e.to_string())?;
    if s.boundary_fixed_by_map(0) != Some(0) {
        return Err("map 1 does not fix p1".into());
    }
    let mut oracle = DMatrix::<f64>::zeros(3, 3);
    for j in 0..3 {
        let mut b = [0.0; 3];
        b[j] = 1.0;
        let [m12, m13, _] = brute_force_minimizer(b);
        // F_1(p1, p2, p3) = (p1, m12, m13)
        oracle[(0, j)] = b[0];
        oracle[(1, j)] = m12;
        oracle[(2, j)] = m13;
    }
    let published = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.4, 0.4, 0.2, 0.4, 0.2, 0.4]);
    let vs_oracle = (&e.matrices[0] - &oracle).amax();
    let vs_published = (&e.matrices[0] - &published).amax();
    let oracle_vs_published = (&oracle - &published).amax();
    let v = derive_extension_matrices(&vicsek()).map_err(|e| e.to_string())?;
    check(
        vs_oracle <= 1e-10 && vs_published <= 1e-10 && oracle_vs_published <= 1e-10
            && e.residual <= 1e-10
            && v.residual <= 1e-10,
        format!(
            "A_1 vs brute force {vs_oracle:.1e}, vs 2/5-rule {vs_published:.1e}; residual gasket {:.1e}, vicsek {:.1e}",
            e.residual, v.residual
        ),
    )
}

// 3. Matrix products and sparse solves agree.
fn dual_method() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for s in [sierpinski_gasket(), vicsek()] {
        let e = derive_extension_matrices(&s).map_err(|e| e.to_string())?;
        let mut rng = seeded(42);
        let data: Vec<Vec<f64>> = (0..20).map(|_| normal_vector(&mut rng, s.boundary_len())).collect();
        for m in 1..=7 {
            let g = build_vertex_graph(&s, m).map_err(|e| e.to_string())?;
            for d in &data {
                let a = harmonic_by_words(&g, &e, d).map_err(|e| e.to_string())?;
                let b = harmonic_solve(&g, d).map_err(|e| e.to_string())?;
                let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                worst = worst.max(diff);
            }
        }
    }
    let t = start.elapsed();
    check(
        worst <= 1e-8 && within(t, 60),
        format!("both structures, m<=7, 20 data: sup diff {worst:.2e}; {t:.2?}"),
    )
}

// 4. Exhaustive 0/1 scans of the current inequality and total current.
fn binary_scans() -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut worst_defect = 0.0f64;
    for s in [sierpinski_gasket(), vicsek()] {
        for m in 1..=6 {
            let c = check_current_inequality(&s, m).map_err(|e| format!("{} m={m}: {e}", s.name))?;
            let t = check_total_current(&s, m).map_err(|e| format!("{} m={m}: {e}", s.name))?;
            worst_ratio = worst_ratio.max(c.worst.ratio);
            worst_defect = worst_defect.max(t.worst_defect);
        }
    }
    check(
        worst_ratio <= 1.0 + 1e-9 && worst_defect <= 1e-8,
        format!("m<=6: max current/energy {worst_ratio:.6}, total-current defect {worst_defect:.2e}"),
    )
}

// 5. Oscillation constants and decay rate.
fn osc_constants() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (s, m_max, bound, rate) in [
        (sierpinski_gasket(), 8, 6.0 * 2f64.sqrt(), (3.0f64 / 5.0).ln()),
        (vicsek(), 7, 12.0 * 3f64.sqrt(), (1.0f64 / 3.0).ln()),
    ] {
        let e = derive_extension_matrices(&s).map_err(|e| e.to_string())?;
        let report = osc_scan(&s, &e, m_max, &DataSweep::standard(s.boundary_len())).map_err(|e| e.to_string())?;
        let slope_err = rel(report.slope, rate);
        ok &= report.c_emp <= bound && slope_err <= 0.02;
        details.push(format!(
            "{}: C_emp {:.4} <= {bound:.4}, slope {:.6} vs {rate:.6} ({slope_err:.1e})",
            s.name, report.c_emp, report.slope
        ));
    }
    check(ok, details.join("; "))
}

// 6. Powers of the extension matrices reach the 5/6 threshold.
fn matrix_powers() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for s in [sierpinski_gasket(), vicsek()] {
        let e = derive_extension_matrices(&s).map_err(|e| e.to_string())?;
        let report = matrix_power_scan(&s, &e, 1.0 / 3.0).map_err(|e| e.to_string())?;
        ok &= report.min_at_t0 >= 5.0 / 6.0 && report.max_row_sum_defect <= 1e-12 && !report.maps.is_empty();
        details.push(format!(
            "{}: T0={} min {:.4}, row-sum defect {:.1e}",
            s.name, report.t0, report.min_at_t0, report.max_row_sum_defect
        ));
    }
    check(ok, details.join("; "))
}

// 7. Hölder exponent recovered from oscillation decay.
fn exponent_recovery() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    // beta - alpha = log(1/r) / log(1/rho)
    for (s, expected) in [
        (sierpinski_gasket(), (5.0f64 / 3.0).ln() / 2f64.ln()),
        (vicsek(), 1.0),
    ] {
        let fit = holder_exponent_fit(&s, 8).map_err(|e| e.to_string())?;
        let err = rel(fit.exponent, expected);
        ok &= err <= 0.05 && rel(fit.expected, expected) <= 1e-12;
        details.push(format!("{}: {:.4} vs {expected:.4} ({err:.1e})", s.name, fit.exponent));
    }
    let t = start.elapsed();
    ok &= within(t, 120);
    details.push(format!("{t:.2?}"));
    check(ok, details.join("; "))
}

fn sweep_summary(r: &RegularityReport) -> (bool, String) {
    let ok = r.radii.len() >= 5 && (-0.1..=0.1).contains(&r.slope) && r.max_over_median < 10.0;
    (
        ok,
        format!(
            "{} {} {} scales, {} ratios: slope {:.3}, max/median {:.2}",
            r.kind.as_str(),
            r.regime.as_str(),
            r.radii.len(),
            r.rows.len(),
            r.slope,
            r.max_over_median
        ),
    )
}

// 8. GRH on the cable system and HR on bounded level-8 graphs stay bounded.
fn boundedness() -> Outcome {
    let s = sierpinski_gasket();
    let opts = SweepOptions::default();
    if opts.trials < 20 {
        return Err("fewer than 20 trials".into());
    }
    let grh = grh_sweep(&s, 7, &opts).map_err(|e| e.to_string())?;
    let hr = hr_sweep(&s, 3, 8, Regime::Bounded, &opts).map_err(|e| e.to_string())?;
    let (a, da) = sweep_summary(&grh);
    let (b, db) = sweep_summary(&hr);
    check(a && b, format!("gasket {da}; {db}"))
}

fn random_word<R: Rng>(rng: &mut R, maps: usize) -> Vec<usize> {
    let len = rng.random_range(1..=6);
    (0..len).map(|_| rng.random_range(0..maps)).collect()
}

fn product(e: &ExtensionMatrices, word: &[usize]) -> DMatrix<f64> {
    let n = e.boundary_len();
    word.iter().fold(DMatrix::identity(n, n), |acc, &i| &e.matrices[i] * acc)
}

fn invariants_for_seed(s: &PcfStructure, e: &ExtensionMatrices, seed: u64) -> Result<(), String> {
    let mut rng = seeded(seed);
    let n = s.boundary_len();
    let fail = |what: &str| Err(format!("{} seed {seed}: {what}", s.name));

    // maximum principle
    let g = build_vertex_graph(s, 3).map_err(|e| e.to_string())?;
    let data = normal_vector(&mut rng, n);
    let u = harmonic_solve(&g, &data).map_err(|e| e.to_string())?;
    if u.maximum_principle_violation() > 1e-9 {
        return fail("maximum principle");
    }

    // monotonicity: harmonic extension of a random V_2 function, then a bump
    let coarse = build_vertex_graph(s, 2).map_err(|e| e.to_string())?;
    let f: Vec<f64> = normal_vector(&mut rng, coarse.vertex_count());
    let mut fixed = vec![None; g.vertex_count()];
    for (p, &v) in coarse.vertices().iter().zip(&f) {
        fixed[g.locate(p).expect("nested")] = Some(v);
    }
    let ext = dirichlet_solve(&g.adjacency(), &fixed, SolveOptions::default())
        .map_err(|e| e.to_string())?
        .values;
    let e_coarse = energy(&coarse, &f).map_err(|e| e.to_string())?;
    let e_ext = energy(&g, &ext).map_err(|e| e.to_string())?;
    if e_ext < e_coarse * (1.0 - 1e-9) {
        return fail("harmonic extension lowered the energy");
    }
    let free: Vec<usize> = (0..g.vertex_count()).filter(|&v| fixed[v].is_none()).collect();
    let mut bumped = ext.clone();
    bumped[free[rng.random_range(0..free.len())]] += rng.random_range(0.01..1.0);
    if energy(&g, &bumped).map_err(|e| e.to_string())? <= e_ext {
        return fail("perturbation did not raise the energy");
    }
    let ledger = energy_ledger(s, &g, &bumped).map_err(|e| e.to_string())?;
    if ledger.energies.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
        return fail("E_k decreased in k");
    }

    // self-similar decomposition E_3(f) = sum_i r_i^{-1} E_2(f o F_i)
    let h: Vec<f64> = normal_vector(&mut rng, g.vertex_count());
    let whole = energy(&g, &h).map_err(|e| e.to_string())?;
    let mut parts = 0.0;
    for (i, r) in s.weights_f64().iter().enumerate() {
        let piece = pull_back(s, &coarse, &g, &h, i).map_err(|e| e.to_string())?;
        parts += energy(&coarse, &piece).map_err(|e| e.to_string())? / r;
    }
    if rel(parts, whole) > 1e-12 {
        return fail("self-similar decomposition");
    }

    // row sums and nonnegativity of A_w
    let a = product(e, &random_word(&mut rng, s.maps()));
    for row in a.row_iter() {
        if (row.sum() - 1.0).abs() > 1e-12 || row.iter().any(|&x| x < -1e-15) {
            return fail("A_w not stochastic");
        }
    }

    // negativity of H
    let v = normal_vector(&mut rng, n);
    let c = rng.random_range(-5.0..5.0);
    let constant = vec![c; n];
    if !(laplace_form(s, &v, &v) < 0.0) || laplace_form(s, &constant, &constant).abs() > 1e-12 {
        return fail("<f, Hf>");
    }
    Ok(())
}

// 9. Structural invariants over 100 seeds.
fn structural_invariants() -> Outcome {
    let mut passed = 0;
    for s in [sierpinski_gasket(), vicsek()] {
        let e = derive_extension_matrices(&s).map_err(|e| e.to_string())?;
        for seed in 0..100 {
            invariants_for_seed(&s, &e, seed)?;
            passed += 1;
        }
    }
    check(passed == 200, format!("{passed}/200 structure-seed runs passed"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("boundary energies", boundary_energies),
        ("extension matrices", extension_matrices),
        ("dual-method agreement", dual_method),
        ("0/1 current scans", binary_scans),
        ("oscillation constants", osc_constants),
        ("matrix powers", matrix_powers),
        ("exponent recovery", exponent_recovery),
        ("GRH/HR boundedness", boundedness),
        ("structural invariants", structural_invariants),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {}. {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
