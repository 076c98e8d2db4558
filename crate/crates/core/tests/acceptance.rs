//! Acceptance suite. Run with `cargo test -p cyclecirc-core --test acceptance -- --nocapture`
//! to see one line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};

use cyclecirc_core::exact::{
    exact_count_dist, exact_forming_dist, first_entry_residual, g_functional,
};
use cyclecirc_core::lab::ft::{
    generating_symmetry_check, integral_ft_exact, integral_ft_mc, klsp_check, usable_cycles,
};
use cyclecirc_core::lab::haldane::ConditionalComparison;
use cyclecirc_core::lab::{
    entropy_experiment, ft_check, grid_error_bound, haldane_test, independence_test,
    legendre_fenchel, linspace_step, net_law, rate_symmetry_check, FtParams, HaldaneParams, Mode,
    ProductGrid, RateSymmetryParams, Report, Symmetry,
};
use cyclecirc_core::{
    cycle_strength, run_derived, validate_chain, ChainKind, ChainSpec, CtmcSpec, Cycle,
    DerivedState, DtmcSpec, Horizon,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn c(s: &[usize]) -> Cycle {
    Cycle::new(s).unwrap()
}

fn random_dtmc(s: usize, rng: &mut ChaCha8Rng) -> DtmcSpec {
    let rows: Vec<Vec<f64>> = (0..s)
        .map(|_| {
            let w: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        })
        .collect();
    validate_chain(&rows, ChainKind::Dtmc)
        .unwrap()
        .as_dtmc()
        .unwrap()
        .clone()
}

// E, ES, EP enzyme scheme
fn mm_single() -> ChainSpec {
    validate_chain(
        &[
            vec![-2.5, 2.0, 0.5],
            vec![1.0, -4.0, 3.0],
            vec![2.0, 1.0, -3.0],
        ],
        ChainKind::Ctmc,
    )
    .unwrap()
}

fn ring(forward: f64, backward: f64) -> ChainSpec {
    let mut q = vec![vec![0.0; 3]; 3];
    for i in 0..3 {
        q[i][(i + 1) % 3] = forward;
        q[i][(i + 2) % 3] = backward;
        q[i][i] = -(forward + backward);
    }
    validate_chain(&q, ChainKind::Ctmc).unwrap()
}

fn four_state_ctmc() -> CtmcSpec {
    validate_chain(
        &[
            vec![-3.5, 2.0, 0.5, 1.0],
            vec![1.0, -4.5, 3.0, 0.5],
            vec![0.5, 1.0, -3.5, 2.0],
            vec![2.0, 0.5, 1.0, -3.5],
        ],
        ChainKind::Ctmc,
    )
    .unwrap()
    .as_ctmc()
    .unwrap()
    .clone()
}

fn grid1(a: f64, b: f64, h: f64) -> ProductGrid {
    ProductGrid::new(vec![linspace_step(a, b, h).unwrap()]).unwrap()
}

fn five_point() -> Vec<f64> {
    vec![-1.0, -0.5, 0.0, 0.5, 1.0]
}

// ---------------------------------------------------------------------------

fn derived_golden() -> Outcome {
    let traj = [1, 2, 3, 2, 4, 5, 2, 3, 1];
    let stacks: [&[usize]; 9] = [
        &[1],
        &[1, 2],
        &[1, 2, 3],
        &[1, 2],
        &[1, 2, 4],
        &[1, 2, 4, 5],
        &[1, 2],
        &[1, 2, 3],
        &[1],
    ];
    let pops = vec![(3, c(&[2, 3])), (6, c(&[2, 4, 5])), (8, c(&[1, 2, 3]))];
    let mut y = DerivedState::new(traj[0]).unwrap();
    let mut ok = y.stack() == stacks[0];
    for n in 1..traj.len() {
        y.push(traj[n]).unwrap();
        ok &= y.stack() == stacks[n];
    }
    let got = run_derived(&traj).unwrap();
    ok &= got == pops;
    let desc: Vec<String> = got.iter().map(|(n, c)| format!("n={n} {c}")).collect();
    (ok, format!("pops [{}]", desc.join(", ")))
}

fn taboo_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_basic = 0.0f64;
    let mut worst_perm = 0.0f64;
    let instances = 120;
    for _ in 0..instances {
        let s = rng.random_range(3..=5);
        let chain = random_dtmc(s, &mut rng);
        let n = rng.random_range(0..=12);
        let mut order: Vec<usize> = (0..s).collect();
        for i in (1..s).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let h_len = rng.random_range(0..=s - 2);
        let taboo = &order[..h_len];
        let free = &order[h_len..];
        let k = free[0];
        for i in 0..s {
            for j in 0..s {
                let r = first_entry_residual(&chain, i, j, taboo, k, n).unwrap();
                worst_basic = worst_basic.max(r);
            }
        }
        let m = free.len().min(4);
        let seq = &free[..m];
        let base = g_functional(&chain, taboo, seq, n).unwrap();
        for p in permutations(seq) {
            let g = g_functional(&chain, taboo, &p, n).unwrap();
            worst_perm = worst_perm.max((g - base).abs());
        }
    }
    (
        worst_basic <= 1e-12 && worst_perm <= 1e-12,
        format!(
            "{instances} instances, first-entry residual {worst_basic:.2e}, permutation residual {worst_perm:.2e}"
        ),
    )
}

fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// `P(T = n, first watched pop = k)` by enumerating every path of length `n`.
fn brute_forming(chain: &DtmcSpec, family: &[Cycle], start: usize, n: usize) -> Vec<f64> {
    let s = chain.size();
    let mut out = vec![0.0; family.len()];
    for code in 0..s.pow(n as u32) {
        let mut path = vec![start];
        let mut x = code;
        for _ in 0..n {
            path.push(x % s);
            x /= s;
        }
        let mut y = DerivedState::new(start).unwrap();
        let mut p = 1.0;
        let mut hit = None;
        for step in 1..=n {
            p *= chain.p(path[step - 1], path[step]);
            if let Some(popped) = y.push(path[step]).unwrap() {
                if let Some(k) = family.iter().position(|f| *f == popped) {
                    hit = Some((step, k));
                    break;
                }
            }
        }
        if let Some((step, k)) = hit {
            if step == n {
                out[k] += p;
            }
        }
    }
    out
}

fn haldane_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let chain = random_dtmc(4, &mut rng);
    let family: Vec<Cycle> = permutations(&[1, 2, 3])
        .into_iter()
        .map(|p| c(&[0, p[0], p[1], p[2]]))
        .collect();
    let spec = ChainSpec::Dtmc(chain.clone());
    let rev = cyclecirc_core::kolmogorov_reversible(&spec, 4);
    let params = HaldaneParams {
        mode: Mode::Exact,
        n_max: 40,
        ..HaldaneParams::default()
    };
    let report = haldane_test(&spec, &family, 2, &params).unwrap();
    let indep = independence_test(&spec, &family, 2, &params).unwrap();
    let worst = report
        .pairs
        .iter()
        .filter_map(|p| p.max_ratio_deviation)
        .fold(0.0f64, f64::max);
    let indep_res = indep.max_residual.unwrap_or(f64::INFINITY);

    // enumeration oracle for the forming law itself
    let dist = exact_forming_dist(&chain, &family, 2, 8).unwrap();
    let mut oracle_err = 0.0f64;
    for n in 1..=8 {
        let b = brute_forming(&chain, &family, 2, n);
        for k in 0..family.len() {
            oracle_err = oracle_err.max((b[k] - dist.buckets[k][n]).abs());
        }
    }
    let ok = !rev.reversible
        && report.pairs.len() == 15
        && report.pass
        && worst <= 1e-10
        && indep.pass
        && indep_res <= 1e-10
        && oracle_err <= 1e-12;
    (
        ok,
        format!(
            "15 pairs, max ratio deviation {worst:.2e}, independence residual {indep_res:.2e}, enumeration gap {oracle_err:.2e}"
        ),
    )
}

fn haldane_mc_params(workers: usize) -> HaldaneParams {
    HaldaneParams {
        mode: Mode::Mc,
        replicas: 100_000,
        seed: 4,
        workers,
        ..HaldaneParams::default()
    }
}

fn haldane_mc_report(workers: usize) -> String {
    let chain = mm_single();
    let family = [c(&[0, 1, 2]), c(&[0, 2, 1])];
    let params = haldane_mc_params(workers);
    let r = haldane_test(&chain, &family, 0, &params).unwrap();
    Report::new("haldane", "mc", &params, r.pass, r)
        .unwrap()
        .to_json()
        .unwrap()
}

fn haldane_mc() -> Outcome {
    let chain = mm_single();
    let family = [c(&[0, 1, 2]), c(&[0, 2, 1])];
    let report = haldane_test(&chain, &family, 0, &haldane_mc_params(0)).unwrap();
    let pair = &report.pairs[0];
    let ks_p = match &pair.conditional {
        ConditionalComparison::Ks(ks) => ks.p_value,
        ConditionalComparison::Exact { .. } => f64::NAN,
    };
    let g: Vec<f64> = family
        .iter()
        .map(|f| cycle_strength(&chain, f).unwrap())
        .collect();
    let f0 = &report.forming[0];
    let oracle = f0.oracle.unwrap();
    let z = (f0.estimate - oracle) / f0.se.unwrap();
    let ok = ks_p >= 0.01
        && report
            .forming
            .iter()
            .all(|f| f.within_4_sigma == Some(true))
        && (oracle - g[0] / (g[0] + g[1])).abs() <= 1e-12;
    (
        ok,
        format!(
            "KS p = {ks_p:.3}, P(first = (0,1,2)) = {:.5} vs oracle {oracle:.5} (z = {z:.2})",
            f0.estimate
        ),
    )
}

fn transient_ft_exact() -> Outcome {
    let chain = mm_single();
    let params = FtParams::default();
    let r = ft_check(&chain, &[c(&[0, 1, 2])], 0, &params).unwrap();
    let t = r.transient.as_ref().unwrap();
    let slope = t.slopes[0].slope.unwrap_or(f64::NAN);
    let rho = t.slopes[0].rho;
    let cells_ok = t.cells.iter().all(|c| c.residual <= c.bound);
    let ok = t.pass && cells_ok && (slope - rho).abs() <= 1e-8 && !t.cells.is_empty();
    (
        ok,
        format!(
            "{} cells, max residual {:.2e}, slope {slope:.12} vs rho {rho:.12}",
            t.cells.len(),
            t.max_residual
        ),
    )
}

fn integral_mc_report(t: f64, workers: usize) -> String {
    let chain = mm_single();
    let params = FtParams {
        mode: Mode::Mc,
        horizon: Horizon::Time(t),
        replicas: 100_000,
        seed: 6,
        workers,
        ..FtParams::default()
    };
    let r = ft_check(&chain, &[c(&[0, 1, 2])], 0, &params).unwrap();
    Report::new("ft", "mc", &params, r.pass, r)
        .unwrap()
        .to_json()
        .unwrap()
}

fn integral_ft() -> Outcome {
    let chain = mm_single();
    let family = [c(&[0, 1, 2])];
    let (cycles, rho, _) = usable_cycles(&chain, &family).unwrap();
    let law = net_law(&chain, &cycles, &rho, 0, Horizon::Time(3.0), 20).unwrap();
    let exact = integral_ft_exact(&law);
    let mut ok = exact.pass && law.eps_trunc <= 1e-8;
    let mut parts = vec![format!(
        "exact t=3: |E-1| = {:.2e}, eps_trunc {:.2e}",
        (exact.estimate - 1.0).abs(),
        law.eps_trunc
    )];
    for t in [1.0, 2.0, 5.0] {
        let mc = integral_ft_mc(&chain, &cycles, &rho, 0, Horizon::Time(t), 100_000, 6, 0).unwrap();
        let ci = mc.ci.unwrap();
        let covers = ci[0] <= 1.0 && 1.0 <= ci[1];
        ok &= covers && mc.pass;
        parts.push(format!("t={t}: CI [{:.4}, {:.4}]", ci[0], ci[1]));
    }
    (ok, parts.join("; "))
}

fn kls_and_generating() -> Outcome {
    let chain = mm_single();
    let family = [c(&[0, 1, 2])];
    let (cycles, rho, _) = usable_cycles(&chain, &family).unwrap();
    let law = net_law(&chain, &cycles, &rho, 0, Horizon::Time(2.0), 20).unwrap();
    let grid = ProductGrid::new(vec![five_point()]).unwrap();
    let kls = klsp_check(&law, &grid).unwrap();

    let pair = [c(&[0, 1, 2]), c(&[0, 2, 1])];
    let dist = exact_count_dist(&chain, &pair, 0, Horizon::Time(2.0), &[20, 20]).unwrap();
    let grid2 = ProductGrid::uniform(five_point(), 2).unwrap();
    let gen = generating_symmetry_check(&chain, &dist, (0, 1), &grid2).unwrap();

    let bound = 10.0 * law.eps_trunc.max(dist.eps_trunc).max(1e-14);
    let rows_ok = kls
        .rows
        .iter()
        .chain(&gen.rows)
        .all(|r| r.residual <= r.bound);
    let ok = kls.pass && gen.pass && rows_ok && kls.rows.len() == 5 && gen.rows.len() == 25;
    (
        ok,
        format!(
            "cycle-count symmetry max residual {:.2e}, pair generating symmetry max residual {:.2e}, 10*eps {bound:.2e}",
            kls.max_residual, gen.max_residual
        ),
    )
}

fn legendre_oracle() -> Outcome {
    let mu = 2.0;
    let lam = grid1(-3.0, 3.0, 0.01);
    let f: Vec<f64> = lam
        .points()
        .iter()
        .map(|l| mu * (l[0].exp() - 1.0))
        .collect();
    let xs = grid1(0.25, 30.0, 0.05);
    let i_grid = legendre_fenchel(&lam, &f, &xs).unwrap();
    let bound = grid_error_bound(&lam, &f);
    let mut err = 0.0f64;
    let mut finite = true;
    for (k, p) in xs.points().iter().enumerate() {
        let x = p[0];
        let exact = x * (x / mu).ln() - x + mu;
        finite &= i_grid[k].is_finite();
        err = err.max((i_grid[k] - exact).abs());
    }
    let ok1 = finite && err <= 2.0 * bound;

    // Fenchel-Moreau on a grid: g** = g
    let lam2 = grid1(-2.0, 2.0, 0.01);
    let g: Vec<f64> = lam2
        .points()
        .iter()
        .map(|l| l[0].cosh() + 0.5 * l[0] * l[0])
        .collect();
    let slopes = grid1(-6.0, 6.0, 0.005);
    let gstar = legendre_fenchel(&lam2, &g, &slopes).unwrap();
    let gss = legendre_fenchel(&slopes, &gstar, &lam2).unwrap();
    let star_finite: Vec<f64> = gstar.iter().copied().filter(|v| v.is_finite()).collect();
    let bound2 =
        grid_error_bound(&lam2, &g) + grid_error_bound(&restrict(&slopes, &gstar), &star_finite);
    let err2 = g
        .iter()
        .zip(&gss)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let ok2 = err2 <= 2.0 * bound2;
    (
        ok1 && ok2,
        format!(
            "Poisson max error {err:.2e} vs 2*bound {:.2e}; double transform max error {err2:.2e} vs 2*bound {:.2e}",
            2.0 * bound,
            2.0 * bound2
        ),
    )
}

/// Sub-grid of a one-axis grid where `values` is finite.
fn restrict(grid: &ProductGrid, values: &[f64]) -> ProductGrid {
    let axis: Vec<f64> = grid.axes()[0]
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite())
        .map(|(x, _)| *x)
        .collect();
    ProductGrid::new(vec![axis]).unwrap()
}

fn rate_params(workers: usize) -> RateSymmetryParams {
    RateSymmetryParams {
        symmetry: Symmetry::Net { k: 0 },
        t: 200.0,
        replicas: 10_000,
        seed: 9,
        workers,
        lambda: grid1(-0.45, 0.2, 0.005),
        x: grid1(-0.04, 0.04, 0.01),
    }
}

fn rate_report(workers: usize) -> String {
    let chain = ring(1.0, 0.92);
    let params = rate_params(workers);
    let r = rate_symmetry_check(&chain, &[c(&[0, 1, 2])], 0, &params).unwrap();
    Report::new("rate", "mc", &params, r.pass, r)
        .unwrap()
        .to_json()
        .unwrap()
}

fn rate_symmetry() -> Outcome {
    let chain = ring(1.0, 0.92);
    let r = rate_symmetry_check(&chain, &[c(&[0, 1, 2])], 0, &rate_params(0)).unwrap();
    let ok = r.pass && r.rate.x.len() == 9 && r.points.len() == 9;
    (
        ok,
        format!(
            "statistical: {} points, median |residual| {:.4} vs 2*median error bar {:.4}",
            r.points.len(),
            r.median_abs_residual,
            2.0 * r.median_error_bar
        ),
    )
}

const ENTROPY_TIMES: [f64; 5] = [10.0, 20.0, 50.0, 100.0, 200.0];

fn entropy_report(workers: usize) -> String {
    let chain = four_state_ctmc();
    let pi = chain.stationary().unwrap();
    let run = entropy_experiment(&chain, &pi, &ENTROPY_TIMES, 2000, 10, workers).unwrap();
    let inputs = (&ENTROPY_TIMES, 2000usize, 10u64);
    Report::new("entropy", "mc", &inputs, run.report.pass, run.report)
        .unwrap()
        .to_json()
        .unwrap()
}

fn entropy() -> Outcome {
    let chain = four_state_ctmc();
    let pi = chain.stationary().unwrap();
    // C_fit <= S*M needs the boundary term to fit under the edge bound
    let spread =
        pi.iter().copied().fold(0.0, f64::max).ln() - pi.iter().copied().fold(1.0, f64::min).ln();
    let m = cyclecirc_core::lab::entropy::max_edge_log_ratio(&chain).unwrap();
    let run = entropy_experiment(&chain, &pi, &ENTROPY_TIMES, 2000, 10, 0).unwrap();
    let r = &run.report;
    let last = r.rows.last().unwrap();
    let irreversible =
        !cyclecirc_core::kolmogorov_reversible(&ChainSpec::Ctmc(chain.clone()), 4).reversible;
    let ok = irreversible && spread <= m && r.pass && r.c_fit <= r.c_bound;
    (
        ok,
        format!(
            "e_p {:.5}, mean W(t=200) {:.5} +- {:.5}, C_fit {:.3} <= C_bound {:.3}",
            r.entropy_production_rate, last.mean_w, last.se_w, r.c_fit, r.c_bound
        ),
    )
}

fn determinism() -> Outcome {
    let runs: Vec<(&str, Box<dyn Fn(usize) -> String>)> = vec![
        ("haldane", Box::new(haldane_mc_report)),
        ("integral t=1", Box::new(|w| integral_mc_report(1.0, w))),
        ("integral t=2", Box::new(|w| integral_mc_report(2.0, w))),
        ("integral t=5", Box::new(|w| integral_mc_report(5.0, w))),
        ("rate", Box::new(rate_report)),
        ("entropy", Box::new(entropy_report)),
    ];
    let mut ok = true;
    let mut differing = Vec::new();
    for (name, run) in &runs {
        let base = run(1);
        for w in [2, 8] {
            if run(w) != base {
                ok = false;
                differing.push(format!("{name}@{w}"));
            }
        }
    }
    let detail = if ok {
        format!("{} reports identical under 1, 2 and 8 workers", runs.len())
    } else {
        format!("differs: {}", differing.join(", "))
    };
    (ok, detail)
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("derived-chain golden trajectory", derived_golden),
        ("taboo identities", taboo_identities),
        ("exact Haldane ratios and independence", haldane_exact),
        ("CTMC Haldane Monte Carlo vs oracle", haldane_mc),
        ("transient fluctuation theorem (exact)", transient_ft_exact),
        ("integral fluctuation theorem", integral_ft),
        ("generating-function symmetries (exact)", kls_and_generating),
        ("Legendre-Fenchel oracle", legendre_oracle),
        ("rate-function symmetry", rate_symmetry),
        ("entropy decomposition", entropy),
        ("determinism across worker counts", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = std::time::Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let tag = if ok { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {:>2} {name}: {detail} ({:.1}s)",
            i + 1,
            started.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
