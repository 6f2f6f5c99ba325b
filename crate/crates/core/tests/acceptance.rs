//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one status line, then exits non-zero if any failed.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_traits::{One, Zero};
use spindex::blade;
use spindex::charclass::{a_hat, chern_character, CurvatureMatrix, FormPolynomial};
use spindex::clifford::{CliffordElement, Frame, SpinRepresentation};
use spindex::geometry::GeometrySpec;
use spindex::getzler::{
    default_scales, mehler_nilpotent, oscillator_eigensum, oscillator_mehler, scale_kernel, taylor_filtration_check,
    NilpotentModel,
};
use spindex::heat::{
    circle_potential, circle_spectrum, heat_trace_expansion, log_spaced, parametrix_coefficients, parametrix_expansion,
    parametrix_kernel, schwartz_decay_check, spectral_heat_kernel, sphere_scalar_spectrum, LaplaceModel,
    DEFAULT_FIT_RANGE,
};
use spindex::index::{psc_obstruction_check, verify_index_theorem, DEFAULT_TIMES};
use spindex::matrix::SquareMatrix;
use spindex::operators::{build_dirac, lichnerowicz_residual, TwistSpec};
use spindex::renorm::{b_heat_trace, pole_structure, regularized_integral_1d, RenormConfig};
use spindex::scalar::minus_two_i_pow;
use spindex::{Exact, Scalar};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn supertrace_law() -> Outcome {
    let mut audited = 0;
    for n in [2usize, 4, 6] {
        let spin = SpinRepresentation::new(n).map_err(err)?;
        for b in 0..=blade::top(n) {
            let e = CliffordElement::from_blade(n, b, Exact::one());
            let s = e.supertrace(Frame::OrthonormalOriented).map_err(err)?;
            let want = if b == blade::top(n) { minus_two_i_pow::<Exact>(n / 2) } else { Exact::zero() };
            ensure(s == want, format!("n={n} blade {b:#b}: {s} vs {want}"))?;
            // matrix realization as an independent oracle
            let m = spin.supertrace(&spin.blade_matrix(b));
            ensure((m - want.to_c64()).norm() < 1e-12, format!("n={n} blade {b:#b}: matrix {m}"))?;
            audited += 1;
        }
    }
    Ok(format!("{audited} monomials, exact"))
}

fn lichnerowicz() -> Outcome {
    let torus = GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 8).build().map_err(err)?;
    let mut worst: f64 = 0.0;
    for d in [-3, 0, 1, 2] {
        worst = worst.max(lichnerowicz_residual(&build_dirac(&torus, d).map_err(err)?).map_err(err)?);
    }
    ensure(worst <= 1e-8, format!("torus residual {worst:.2e}"))?;
    let mut orders = vec![];
    for d in [0, 1] {
        let r: Vec<f64> = [40usize, 80, 160]
            .iter()
            .map(|n| {
                let g = GeometrySpec::round_sphere(1.0, *n).build()?;
                lichnerowicz_residual(&build_dirac(&g, d)?)
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        for w in r.windows(2) {
            let p = (w[0] / w[1]).log2();
            ensure((p - 2.0).abs() <= 0.2, format!("S² d={d} order {p:.3} from {r:?}"))?;
            orders.push(p);
        }
    }
    Ok(format!("torus {worst:.1e}, S² orders {orders:.3?}"))
}

fn heat_trace() -> Outcome {
    let s = circle_spectrum(2.0 * PI, 220, 0.0).map_err(err)?;
    let t = 1e-3;
    let want = (4.0 * PI * t).powf(-0.5) * 2.0 * PI;
    let rel = (s.heat_trace(t) / want - 1.0).abs();
    ensure(rel <= 1e-10, format!("S¹ trace rel error {rel:.2e}"))?;
    let sphere = sphere_scalar_spectrum(1.0, 320).map_err(err)?;
    let fit = heat_trace_expansion(&sphere, 2, 3, DEFAULT_FIT_RANGE).map_err(err)?;
    let ratio = fit.coefficients[1] / fit.coefficients[0];
    ensure((ratio - 1.0 / 3.0).abs() <= 1e-3, format!("S² a1/a0 = {ratio}"))?;
    let torus = GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 8).build().map_err(err)?;
    let e = parametrix_coefficients(&build_dirac(&torus, 0).map_err(err)?, &[0.0, 0.0], 4).map_err(err)?;
    for i in 1..=4 {
        for c in 0..2 {
            ensure(e.values(i, c).iter().all(|v| *v == 0.0), format!("flat Φ_{i} nonzero"))?;
        }
    }
    Ok(format!("S¹ rel {rel:.1e}, S² a1/a0 {ratio:.6}, flat Φ_1..4 = 0"))
}

fn remainder_order() -> Outcome {
    let circle = GeometrySpec::flat_torus(vec![2.0 * PI], 16).build().map_err(err)?;
    let model = LaplaceModel::with_potential(&circle, circle_potential(2.0 * PI, 0.5)).map_err(err)?;
    let mut slopes = vec![];
    for n in [1usize, 2] {
        let e = parametrix_expansion(&model, &[0.0], n, None).map_err(err)?;
        let g = parametrix_kernel(&e, e.radius).map_err(err)?;
        let slope = g.remainder_order(&log_spaced(0.005, 0.05, 8)).map_err(err)?;
        ensure((slope - (n as f64 - 0.5)).abs() <= 0.2, format!("N={n}: slope {slope}"))?;
        slopes.push(slope);
    }
    Ok(format!("slopes {slopes:.3?} (targets 0.5, 1.5)"))
}

fn schwartz_decay() -> Outcome {
    let s = circle_spectrum(2.0 * PI, 96, 0.0).map_err(err)?;
    let mut exps = vec![];
    for t in [0.01, 0.02] {
        let rep = schwartz_decay_check(&spectral_heat_kernel(&s, t).map_err(err)?, 4, 4).map_err(err)?;
        ensure(rep.all_finite, format!("t={t}: infinite seminorm"))?;
        ensure((rep.decay_exponent - 1.0).abs() <= 0.05, format!("t={t}: exponent ratio {}", rep.decay_exponent))?;
        exps.push(rep.decay_exponent);
    }
    Ok(format!("exponent / (d²/4t) = {exps:.4?}, seminorms k,l ≤ 4 finite"))
}

fn rescaling() -> Outcome {
    let g = GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 128).build().map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut slopes = vec![];
    for d in [-3i64, 1, 2] {
        let fam = scale_kernel(&build_dirac(&g, d).map_err(err)?, &default_scales()).map_err(err)?;
        let slope = fam.supertrace_slope().map_err(err)?;
        ensure((slope - 2.0).abs() <= 0.1, format!("d={d}: slope {slope}"))?;
        let rep = taylor_filtration_check(&fam);
        ensure(rep.passed, format!("d={d}: filtration violation {:.2e}", rep.violation))?;
        let control = taylor_filtration_check(&fam.unnormalized().map_err(err)?);
        ensure(!control.passed, format!("d={d}: negative control passed"))?;
        worst = worst.max(rep.violation);
        slopes.push(slope);
    }
    Ok(format!("slopes {slopes:.4?}, violation ≤ {worst:.1e}, controls fail"))
}

fn exact_model(n: usize) -> Result<NilpotentModel<Exact>, String> {
    // antisymmetric in (i,j) and (k,l), otherwise arbitrary
    let raw = |i: usize, j: usize, k: usize, l: usize| ((i + 2 * j + 3 * k + 5 * l) % 7) as i64 - 3;
    let curvature = CurvatureMatrix::from_tensor(n, |i, j, k, l| {
        Exact::ratio(raw(i, j, k, l) - raw(j, i, k, l) - raw(i, j, l, k) + raw(j, i, l, k), 3)
    })
    .map_err(err)?;
    let mut twist = FormPolynomial::zero(n, 2);
    for (k, l, a) in [(0usize, 1usize, 1i64), (1, 2, -2), (2, 3, 3), (0, 5, 1)] {
        if l < n {
            let m = SquareMatrix::from_fn(2, |i, j| match (i, j) {
                (0, 0) => Exact::i() * Exact::ratio(a, 2),
                (1, 1) => Exact::i() * Exact::ratio(-a, 3),
                (0, 1) => Exact::ratio(1, 4),
                _ => Exact::ratio(-1, 4),
            });
            twist = twist.add(&FormPolynomial::monomial(n, &[k, l], m).map_err(err)?).map_err(err)?;
        }
    }
    Ok(NilpotentModel { curvature, twist })
}

fn getzler_limit() -> Outcome {
    let mut compared = 0;
    for n in [2usize, 4, 6] {
        let m = exact_model(n)?;
        for (p, q) in [(1i64, 1i64), (1, 2), (3, 5)] {
            let v = mehler_nilpotent(&m, p, q).map_err(err)?;
            let t = Exact::ratio(p, q);
            let want = a_hat(&m.curvature.scale(&t))
                .and_then(|a| a.wedge(&chern_character(&m.twist.scale(&(-t.clone())))?))
                .map_err(err)?;
            let got = v.twist_trace();
            ensure(got == want, format!("n={n} t={p}/{q}: Mehler and Â∧ch differ"))?;
            compared += want.terms().count();
        }
    }
    let mut worst: f64 = 0.0;
    for (a, t) in [(1.0, 0.5), (1.5, 0.7), (0.8, 1.2), (2.0, 0.25), (0.5, 0.3)] {
        let diff = (oscillator_mehler(a, t).map_err(err)? - oscillator_eigensum(a, t, 320).map_err(err)?).abs();
        ensure(diff <= 1e-8, format!("oscillator a={a} t={t}: {diff:.2e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("{compared} coefficients exact, oscillator ≤ {worst:.1e}"))
}

fn index_theorem() -> Outcome {
    let g = GeometrySpec::flat_torus(vec![2.0 * PI, 2.0 * PI], 8).build().map_err(err)?;
    let mut worst_st: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    for d in -3..=3 {
        let r = verify_index_theorem(&g, TwistSpec::degree(d), &DEFAULT_TIMES).map_err(err)?;
        ensure(r.spectral_index == Some(d), format!("d={d}: spectral {:?}", r.spectral_index))?;
        ensure(
            r.geometric_exact.as_deref() == Some(d.to_string().as_str()),
            format!("d={d}: geometric {:?}", r.geometric_exact),
        )?;
        for (t, s) in r.times.iter().zip(&r.supertraces) {
            ensure((s - d as f64).abs() <= 1e-6, format!("d={d} t={t}: Tr_s {s}"))?;
            worst_st = worst_st.max((s - d as f64).abs());
        }
        let eta = r.eta.unwrap_or(f64::NAN).abs() + r.eta_tail_bound.unwrap_or(f64::NAN);
        ensure(eta <= 1e-10, format!("d={d}: η {eta:.2e}"))?;
        worst_eta = worst_eta.max(eta);
    }
    Ok(format!("d = -3..3 exact, |Tr_s − d| ≤ {worst_st:.1e}, |η| ≤ {worst_eta:.1e}"))
}

fn renormalization() -> Outcome {
    let cfg = RenormConfig::default();
    let mut worst: f64 = 0.0;
    for collar in [1.0, 2.0] {
        for m in 1..=3 {
            let d = regularized_integral_1d(&|x| x.powi(m), collar, &cfg).map_err(err)?;
            let want = f64::powi(collar, m) / m as f64;
            ensure(d.pole_order == 0, format!("x^{m}: spurious pole at 0"))?;
            worst = worst.max((d.finite_part - want).abs());
        }
        let d = regularized_integral_1d(&|_| 1.0, collar, &cfg).map_err(err)?;
        worst = worst.max((d.finite_part - f64::ln(collar)).abs());
    }
    ensure(worst <= 1e-8, format!("finite part error {worst:.2e}"))?;
    for m in 0..=2 {
        let poles = pole_structure(&|x| x.powi(m), 1.0, (-3.5, 0.5), &cfg).map_err(err)?;
        ensure(
            poles.len() == 1 && (poles[0].location + m as f64).abs() < 1e-6 && poles[0].order == 1,
            format!("x^{m}: poles {poles:?}"),
        )?;
    }
    let cyl = GeometrySpec::b_cylinder(2.0 * PI, 1.0, 8).build().map_err(err)?;
    let mut bt: f64 = 0.0;
    for t in [0.1, 0.5, 1.0] {
        bt = bt.max(b_heat_trace(&cyl, t).map_err(err)?.value.abs());
    }
    ensure(bt <= 1e-8, format!("b-trace {bt:.2e}"))?;
    Ok(format!("finite parts ≤ {worst:.1e}, poles at z = −m, b-trace {bt:.1e}"))
}

fn psc() -> Outcome {
    let g = GeometrySpec::round_sphere(1.0, 40).build().map_err(err)?;
    let r = psc_obstruction_check(&g).map_err(err)?;
    ensure(r.passed, format!("{:?}", r.checks))?;
    ensure(r.index == 0 && r.kernel_dimension == 0, format!("index {}", r.index))?;
    Ok(format!("min |λ| {:.6} ≥ {:.6}, index 0", r.min_abs_eigenvalue, r.window))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("supertrace law", supertrace_law),
        ("Lichnerowicz identity", lichnerowicz),
        ("heat-trace asymptotics", heat_trace),
        ("parametrix remainder order", remainder_order),
        ("Schwartz decay", schwartz_decay),
        ("rescaling filtration", rescaling),
        ("Getzler limit", getzler_limit),
        ("index theorem", index_theorem),
        ("renormalization", renormalization),
        ("PSC obstruction", psc),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({secs:.1}s)", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} ({secs:.1}s)", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
