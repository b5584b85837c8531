//! Acceptance suite: one PASS/FAIL line per check, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::process::ExitCode;

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use volcano::dynamics::{quantum_driven_deriv, quantum_slow_deriv, ClassicalState, CouplingMode, QuantumState};
use volcano::experiments::{
    boundary_curve, classify_orbit, compare_full_vs_averaged, escape_boundary, linear_grid, oscillation_period,
    period_quadrature_oracle, slow_period, slow_trajectory, BisectOptions, BoundaryFlag, CompareInitial,
    ExperimentSettings, OrbitClass,
};
use volcano::integrator::{energy_slow, integrate, IntegratorConfig, Method};
use volcano::model::{effective_coefficients, EffectiveParams, ModelParams};

struct Report {
    failures: usize,
    total: usize,
}

impl Report {
    fn check(&mut self, id: &str, what: &str, ok: bool, detail: impl AsRef<str>) {
        self.total += 1;
        if !ok {
            self.failures += 1;
        }
        println!(
            "{} [{id}] {what} — {}",
            if ok { "PASS" } else { "FAIL" },
            detail.as_ref()
        );
    }

    fn info(&self, id: &str, detail: impl AsRef<str>) {
        println!("INFO [{id}] {}", detail.as_ref());
    }
}

fn eff(lambda: f64) -> EffectiveParams {
    EffectiveParams::from_ratio(1.0, lambda, 3.0).unwrap()
}

fn classify(x0: f64, w0: f64, mode: CouplingMode, e: &EffectiveParams, s: &ExperimentSettings) -> OrbitClass {
    classify_orbit(x0, w0, mode, e, s).expect("classification")
}

fn boundary(w0: f64, mode: CouplingMode, e: &EffectiveParams) -> Result<f64, String> {
    escape_boundary(w0, mode, e, &ExperimentSettings::default(), &BisectOptions::default()).map_err(|e| e.to_string())
}

fn uncoupled_period(x0: f64, e: &EffectiveParams, horizon: f64) -> f64 {
    let s = ExperimentSettings::default().with_horizon(horizon);
    let traj = slow_trajectory(s.initial_state(x0, 0.0), CouplingMode::Uncoupled, e, &s, 1).unwrap();
    oscillation_period(&traj).unwrap().period
}

fn c1(r: &mut Report) {
    let p = ModelParams::from_ratio(1.0, 0.1, 3.0).unwrap();
    let e = effective_coefficients(&p);
    let exact = e.alpha == 0.5 && e.beta == 0.5 && e.turning_point == Some(1.0) && e.barrier_height == Some(0.125);
    r.check(
        "1a",
        "λ=0.1, r=3: α=0.5, β=0.5, turning point 1, barrier 0.125 exactly",
        exact,
        format!(
            "α={} β={} tp={:?} barrier={:?}",
            e.alpha, e.beta, e.turning_point, e.barrier_height
        ),
    );
    let tp = eff(0.01).turning_point.unwrap();
    r.check(
        "1b",
        "λ=0.01, r=3: turning point 3.16 ± 0.01",
        (tp - 3.16).abs() <= 0.01,
        format!("tp={tp}"),
    );
}

fn c2(r: &mut Report) {
    let e = eff(0.1);
    let s = ExperimentSettings::default().with_horizon(200.0);
    let a = classify(0.5, 0.0, CouplingMode::Uncoupled, &e, &s);
    let b = classify(0.99, 0.0, CouplingMode::Uncoupled, &e, &s);
    r.check(
        "2a",
        "uncoupled x0=0.5 and 0.99 bounded over horizon 200",
        a.is_bounded() && b.is_bounded(),
        format!("{a:?}, {b:?}"),
    );
    let (t5, t99) = (uncoupled_period(0.5, &e, 200.0), uncoupled_period(0.99, &e, 200.0));
    r.check(
        "2b",
        "T(0.99) > 2·T(0.5)",
        t99 > 2.0 * t5,
        format!("T(0.5)={t5:.6} T(0.99)={t99:.6}"),
    );
    let t0 = uncoupled_period(1e-3, &e, 200.0);
    let expected = std::f64::consts::TAU / 0.5f64.sqrt();
    let rel = ((t0 - expected) / expected).abs();
    r.check(
        "2c",
        "T(x0=1e-3) = 2π/√0.5 within 0.1%",
        rel < 1e-3,
        format!("T={t0:.9} rel={rel:.2e}"),
    );
}

fn c3(r: &mut Report) -> Option<f64> {
    let e = eff(0.1);
    let s = ExperimentSettings::default();
    let c = classify(0.83, 0.1, CouplingMode::Partial, &e, &s);
    r.check(
        "3a",
        "partial W0=0.1: x0=0.83 bounded",
        c.is_bounded(),
        format!("{c:?}"),
    );
    let xm = boundary(0.1, CouplingMode::Partial, &e);
    let ok = matches!(xm, Ok(x) if x > 0.83 && x < 0.99);
    r.check("3b", "partial W0=0.1: x_max ∈ (0.83, 0.99)", ok, format!("{xm:?}"));
    xm.ok()
}

fn c4(r: &mut Report, partial: Option<f64>) {
    let e = eff(0.1);
    let s = ExperimentSettings::default();
    let a = classify(0.5, 0.1, CouplingMode::Full, &e, &s);
    let b = classify(0.72, 0.1, CouplingMode::Full, &e, &s);
    r.check(
        "4a",
        "full W0=0.1: x0=0.5 and 0.72 bounded",
        a.is_bounded() && b.is_bounded(),
        format!("{a:?}, {b:?}"),
    );
    let xm = boundary(0.1, CouplingMode::Full, &e);
    let ok = matches!(xm, Ok(x) if x > 0.72 && x < 0.99);
    r.check("4b", "full W0=0.1: x_max ∈ (0.72, 0.99)", ok, format!("{xm:?}"));
    match (xm, partial) {
        (Ok(f), Some(p)) => r.check(
            "4c",
            "|x_max(full) − x_max(partial)| < 0.1",
            (f - p).abs() < 0.1,
            format!("full={f:.6} partial={p:.6} diff={:.6}", (f - p).abs()),
        ),
        (f, p) => r.check(
            "4c",
            "|x_max(full) − x_max(partial)| < 0.1",
            false,
            format!("full={f:?} partial={p:?}"),
        ),
    }
}

/// Smallest W0 in [lo, hi] at which a release from x0 = 0.01 escapes.
fn critical_width(e: &EffectiveParams, mode: CouplingMode) -> Result<f64, String> {
    let s = ExperimentSettings::default();
    let escapes = |w: f64| !classify(0.01, w, mode, e, &s).is_bounded();
    let (mut lo, mut hi) = (1e-4, 5.0);
    if escapes(lo) || !escapes(hi) {
        return Err(format!("no transition in [{lo}, {hi}]"));
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if escapes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Everything above must escape too.
    if (1..=8).map(|k| hi + (5.0 - hi) * k as f64 / 8.0).all(escapes) {
        Ok(hi)
    } else {
        Err(format!("non-monotone above {hi}"))
    }
}

fn c5(r: &mut Report) {
    let lambdas = [0.5, 0.1, 0.05, 0.01];
    for &lam in &lambdas {
        let e = eff(lam);
        let tp = e.turning_point.unwrap();
        let xm = boundary(1e-4, CouplingMode::Partial, &e);
        let ok = matches!(xm, Ok(x) if ((x - tp) / tp).abs() < 0.02);
        r.check(
            "5a",
            &format!("λ={lam}: x_max(W0=1e-4) within 2% of {tp:.6}"),
            ok,
            format!("{xm:?}"),
        );
    }
    // All-escape widths count as x_max = 0, as the sweep reports them.
    let at_01: Vec<f64> = lambdas
        .iter()
        .map(|&lam| boundary(0.1, CouplingMode::Partial, &eff(lam)).unwrap_or(0.0))
        .collect();
    let increasing = at_01.windows(2).all(|w| w[1] > w[0]);
    r.check(
        "5b",
        "x_max(W0=0.1) strictly increases as λ decreases (0.5 → 0.01)",
        increasing,
        format!("{at_01:?}"),
    );
    for &lam in &lambdas {
        let w = critical_width(&eff(lam), CouplingMode::Partial);
        r.check(
            "5c",
            &format!("λ={lam}: critical W0 ≤ 5 above which x0=0.01 escapes"),
            matches!(w, Ok(w) if w <= 5.0),
            format!("{w:?}"),
        );
    }
}

fn c6(r: &mut Report) {
    // The flat stretch ends where the fully coupled boundary rejoins the
    // partially coupled one: beyond it the width drives escape directly.
    let e = eff(0.01);
    let s = ExperimentSettings::default();
    let b = BisectOptions::default();
    let grid = linear_grid(0.1, 4.0, 40);
    let full = boundary_curve(&grid, CouplingMode::Full, &e, &s, &b, None).unwrap();
    let partial = boundary_curve(&grid, CouplingMode::Partial, &e, &s, &b, None).unwrap();
    let merged = full
        .points
        .iter()
        .zip(&partial.points)
        .position(|(f, p)| f.flag != BoundaryFlag::Resolved || f.x_max >= p.x_max - 2.0 * b.tol);
    let all_escape = full.points.iter().position(|p| p.flag == BoundaryFlag::AllEscape);
    match merged {
        Some(k) if k >= 2 => {
            let xs: Vec<f64> = full.points[..k].iter().map(|p| p.x_max).collect();
            let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            let variation = (hi - lo) / hi;
            r.check(
                "6",
                "λ=0.01 full: x_max varies < 5% below the critical W0",
                variation < 0.05,
                format!(
                    "critical W0≈{:.2}, x_max ∈ [{lo:.4}, {hi:.4}], variation {:.2}%",
                    grid[k],
                    100.0 * variation
                ),
            );
        }
        other => r.check(
            "6",
            "λ=0.01 full: x_max varies < 5% below the critical W0",
            false,
            format!("no flat stretch ({other:?})"),
        ),
    }
    if let Some(k) = all_escape {
        let xs: Vec<f64> = full.points[..k].iter().map(|p| p.x_max).collect();
        let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        r.info(
            "6",
            format!(
                "up to the all-escape width W0≈{:.2}: x_max ∈ [{lo:.4}, {hi:.4}]",
                grid[k]
            ),
        );
    }
}

fn c7(r: &mut Report) {
    let e = eff(0.01);
    let s = ExperimentSettings::default();
    let u = classify(1.0, 0.0, CouplingMode::Uncoupled, &e, &s);
    r.check("7a", "λ=0.01 uncoupled x0=1: bounded", u.is_bounded(), format!("{u:?}"));
    let traj = slow_trajectory(s.initial_state(1.0, 3.0), CouplingMode::Partial, &e, &s, 1).unwrap();
    let escaped =
        matches!(traj.terminal_event(), Some(ev) if ev.kind == volcano::integrator::EventKind::EscapeCrossing);
    let x_end = traj.last_state()[0].abs();
    r.check(
        "7b",
        "λ=0.01 partial x0=1, W0=3: escaped with |⟨x⟩| > 3.16",
        escaped && x_end > 3.16,
        format!("t_end={:.4} |x|={x_end:.4}", traj.last_time()),
    );
}

fn c8(r: &mut Report) {
    let e = eff(0.01);
    let s = ExperimentSettings::default();
    let p = classify(1.0, 0.1, CouplingMode::Partial, &e, &s);
    r.check(
        "8a",
        "λ=0.01 partial x0=1, W0=0.1: bounded",
        p.is_bounded(),
        format!("{p:?}"),
    );
    let k = classify(1.0, 0.1, CouplingMode::SkewedPartial { gamma: 8.699 }, &e, &s);
    r.check(
        "8b",
        "λ=0.01 skewed γ=8.699 x0=1, W0=0.1: escaped",
        matches!(k, OrbitClass::Escaped { .. }),
        format!("{k:?}"),
    );
}

fn c9(r: &mut Report) {
    let mut runner = TestRunner::deterministic();
    let strategy = (
        (0.1..4.0f64, 0.0..2.0f64, 0.1..50.0f64, 0.0..100.0f64),
        (-3.0..3.0f64, -3.0..3.0f64, 1e-3..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
    );
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let ((omega_sq, lambda, big_omega, t), (x, v, w, wr, wa)) = strategy.new_tree(&mut runner).unwrap().current();
        let p = ModelParams::new(omega_sq, lambda, 0.0, big_omega).unwrap();
        let s = QuantumState::new(x, v, w, wr, wa);
        let a = quantum_slow_deriv(s, &effective_coefficients(&p), CouplingMode::Full).to_array();
        let b = quantum_driven_deriv(s, t, &p).to_array();
        for (u, v) in a.iter().zip(&b) {
            let scale = u.abs().max(v.abs());
            if scale > 0.0 {
                worst = worst.max((u - v).abs() / scale);
            }
        }
    }
    r.check(
        "9",
        "ε=0: full averaged derivative equals driven derivative (1000 samples, rel 1e-14)",
        worst <= 1e-14,
        format!("worst relative difference {worst:.2e}"),
    );
}

fn compare_rms(eps: f64, ic: CompareInitial, horizon: f64) -> Result<f64, String> {
    let p = ModelParams::new(1.0, 0.1, eps, eps / 3f64.sqrt()).map_err(|e| e.to_string())?;
    compare_full_vs_averaged(&p, ic, horizon)
        .map(|c| c.rms_abs_err)
        .map_err(|e| e.to_string())
}

fn c10(r: &mut Report) {
    let e = eff(0.1);
    let tp = e.turning_point.unwrap();
    let horizon = 3.0 * slow_period(0.5, &e).unwrap();
    let cl = CompareInitial::Classical(ClassicalState::new(0.5, 0.0));
    // Doubling ε at fixed r halves εω²/Ω².
    let (a, b) = (compare_rms(100.0, cl, horizon), compare_rms(200.0, cl, horizon));
    r.check(
        "10a",
        "classical driven vs averaged, ε=100: stroboscopic RMS < 5% of turning point",
        matches!(a, Ok(x) if x < 0.05 * tp),
        format!("RMS={a:?} over t={horizon:.3}"),
    );
    r.check(
        "10b",
        "classical deviation decreases when εω²/Ω² is halved",
        matches!((&a, &b), (Ok(x), Ok(y)) if y < x),
        format!("ε=100: {a:?}, ε=200: {b:?}"),
    );
    let q = CompareInitial::Quantum(QuantumState::released(0.5, 0.1));
    let (qa, qb) = (compare_rms(100.0, q, horizon), compare_rms(200.0, q, horizon));
    r.info(
        "10",
        format!(
            "quantum pair RMS: ε=100 {qa:?}, ε=200 {qb:?} (5% of turning point = {})",
            0.05 * tp
        ),
    );
    r.check(
        "10c",
        "quantum deviation decreases when εω²/Ω² is halved",
        matches!((&qa, &qb), (Ok(x), Ok(y)) if y < x),
        format!("ε=100: {qa:?}, ε=200: {qb:?}"),
    );
}

fn c11(r: &mut Report) {
    let err = |step: f64| {
        let config = IntegratorConfig::new(Method::Rk4 { step }, 10.0);
        let [x, v] = integrate([1.0, 0.0], |_t, y: &[f64; 2]| [y[1], -y[0]], &config)
            .unwrap()
            .last_state();
        ((x - 10f64.cos()).powi(2) + (v + 10f64.sin()).powi(2)).sqrt()
    };
    let order = (err(0.1) / err(0.05)).log2();
    r.check(
        "11a",
        "RK4 order 4.0 ± 0.2 on the harmonic oscillator",
        (order - 4.0).abs() <= 0.2,
        format!("order {order:.4}"),
    );

    let e = eff(0.1);
    let mut drifts = Vec::new();
    for x0 in [0.5, 0.9] {
        let s0 = ClassicalState::new(x0, 0.0);
        let config = IntegratorConfig::new(Method::adaptive_default(), 100.0);
        let traj = integrate(
            s0.to_array(),
            |_t, y| volcano::dynamics::classical_slow_deriv(ClassicalState::from_array(*y), &e).to_array(),
            &config,
        )
        .unwrap();
        let e0 = energy_slow(s0, &e);
        let worst = traj
            .states
            .iter()
            .map(|s| ((energy_slow(ClassicalState::from_array(*s), &e) - e0) / e0).abs())
            .fold(0.0, f64::max);
        drifts.push((x0, worst));
    }
    let detail: Vec<String> = drifts.iter().map(|(x0, d)| format!("x0={x0}: {d:.2e}")).collect();
    r.check(
        "11b",
        "slow-energy relative drift < 1e-8 over t=100",
        drifts.iter().all(|(_, d)| *d < 1e-8),
        detail.join(", "),
    );

    let mut max_rel = 0.0f64;
    for frac in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let x0 = frac * e.turning_point.unwrap();
        let measured = uncoupled_period(x0, &e, 200.0);
        let oracle = period_quadrature_oracle(x0, &e).unwrap();
        max_rel = max_rel.max(((measured - oracle) / oracle).abs());
    }
    r.check(
        "11c",
        "period estimator vs quadrature oracle within 1e-3 at five amplitudes",
        max_rel < 1e-3,
        format!("max relative difference {max_rel:.2e}"),
    );
}

fn main() -> ExitCode {
    let mut r = Report { failures: 0, total: 0 };
    c1(&mut r);
    c2(&mut r);
    let partial = c3(&mut r);
    c4(&mut r, partial);
    c5(&mut r);
    c6(&mut r);
    c7(&mut r);
    c8(&mut r);
    c9(&mut r);
    c10(&mut r);
    c11(&mut r);
    println!("acceptance: {} of {} checks passed", r.total - r.failures, r.total);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
