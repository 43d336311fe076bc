//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use stepchev::amplify::{eps_general, general_pipeline, jackson_base};
use stepchev::bernstein::{bernstein_apply, chernoff_lower_tail, eps_two, local_constant_bound, two_segment_approx};
use stepchev::newton::{bnd_limit, eps_small_delta, partition_of_unity, small_delta_approx, NodeSystem};
use stepchev::oracle::{exact_binomial_tail, minimax_fit, oracle_grid, sandwich, TailSide, MIN_GRID_MULT};
use stepchev::poly::{max_abs_on, sup_error};
use stepchev::{BoundCertificate, GridSpec, Interval, IntervalSystem, Polynomial, StepFunction, ValueSet};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn step(pairs: &[(f64, f64)], values: &[f64]) -> StepFunction {
    StepFunction::new(IntervalSystem::from_pairs(pairs).unwrap(), values.to_vec()).unwrap()
}

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

fn two_segment(h: f64) -> StepFunction {
    step(&[(0.0, h), (1.0 - h, 1.0)], &[-1.0, 1.0])
}

const HS: [f64; 4] = [0.05, 0.1, 0.2, 0.3];
const Z_SMALL_DELTA: [f64; 3] = [0.0, 1.0, 2.5];

fn h_bound() -> Outcome {
    let mut worst: f64 = 0.0;
    for h in HS {
        let f = two_segment(h);
        for n in 2..=60 {
            let (p, c) = two_segment_approx(h, -1.0, 1.0, n).map_err(|e| e.to_string())?;
            let formula = 2.0 * (4.0 * h * (1.0 - h)).powf(n as f64 / 2.0);
            ensure!((c.value - formula).abs() <= 1e-14 * formula, "h={h} n={n}: certificate {} != {formula}", c.value);
            let e = sup_error(&p, &f, &GridSpec::for_degree(n));
            ensure!(e.global_error <= c.value, "h={h} n={n}: measured {:e} > certificate {:e}", e.global_error, c.value);
            ensure!(e.hull_norm <= 1.0 + 1e-12, "h={h} n={n}: hull norm {}", e.hull_norm);
            worst = worst.max(e.global_error / c.value);
        }
    }
    let (_, spot) = two_segment_approx(0.1, -1.0, 1.0, 20).map_err(|e| e.to_string())?;
    ensure!((spot.value - 7.3122e-5).abs() <= 2e-9, "spot certificate {:e}", spot.value);
    Ok(format!("236 cases, max measured/certificate {worst:.3}, spot h=0.1 n=20 -> {:.5e}", spot.value))
}

fn pointwise_chernoff() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for n in 1..=200 {
        let b = bernstein_apply(|t| if t > 0.5 { 1.0 } else { 0.0 }, n).map_err(|e| e.to_string())?;
        for k in 1..180 {
            let x = 0.05 + 0.0025 * k as f64;
            let v = b.eval(x).abs();
            let bound = local_constant_bound(n, 0.05, 0.5, x, 1.0).map_err(|e| e.to_string())?;
            ensure!(v <= bound, "n={n} x={x}: |B_n f| = {v:e} > {bound:e}");
            let tail = exact_binomial_tail(n, x, n / 2 + 1, TailSide::Upper).map_err(|e| e.to_string())?;
            ensure!((v - tail).abs() <= 1e-13 + 1e-9 * tail, "n={n} x={x}: B_n f = {v:e}, binomial tail {tail:e}");
            worst = worst.max(v / bound);
            checked += 1;
        }
    }
    Ok(format!("{checked} points, max |B_n f|/bound {worst:.3}"))
}

/// `P(Bin(n, j/100) <= k)` as an exact fraction `num / 100^n`, for all `k`.
fn exact_lower_tails(n: usize, j: u32) -> (Vec<BigUint>, BigUint) {
    let p = BigUint::from(j);
    let q = BigUint::from(100 - j);
    let mut binom = BigUint::from(1u32);
    let mut acc = BigUint::from(0u32);
    let mut out = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m > 0 {
            binom = binom * BigUint::from((n - m + 1) as u64) / BigUint::from(m as u64);
        }
        acc += &binom * p.pow(m as u32) * q.pow((n - m) as u32);
        out.push(acc.clone());
    }
    (out, BigUint::from(100u32).pow(n as u32))
}

/// `num / den <= v` exactly.
fn fraction_le(num: &BigUint, den: &BigUint, v: f64) -> bool {
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let rhs = BigUint::from(mant) * den;
    if e >= 0 {
        num <= &(rhs << e as usize)
    } else {
        &(num << (-e) as usize) <= &rhs
    }
}

fn chernoff_dominance() -> Outcome {
    let mut checked = 0;
    for n in 1..=64usize {
        for j in 2..=99u32 {
            let x = j as f64 / 100.0;
            let exact = (n <= 30).then(|| exact_lower_tails(n, j));
            for i in 1..j {
                let a = i as f64 / 100.0;
                let k = (i as usize * n) / 100;
                let bound = chernoff_lower_tail(n, x, a).map_err(|e| e.to_string())?;
                let tail = exact_binomial_tail(n, x, k, TailSide::Lower).map_err(|e| e.to_string())?;
                if let Some((nums, den)) = &exact {
                    ensure!(fraction_le(&nums[k], den, bound), "n={n} a={a} x={x}: exact tail exceeds {bound:e}");
                    ensure!(!fraction_le(&nums[k], den, tail * (1.0 - 1e-12)), "n={n} a={a} x={x}: log-space tail {tail:e} too large");
                    ensure!(fraction_le(&nums[k], den, tail * (1.0 + 1e-12)), "n={n} a={a} x={x}: log-space tail {tail:e} too small");
                } else {
                    ensure!(tail <= bound, "n={n} a={a} x={x}: tail {tail:e} > {bound:e}");
                }
                checked += 1;
            }
        }
    }
    let spot = exact_binomial_tail(10, 0.5, 3, TailSide::Lower).map_err(|e| e.to_string())?;
    let (nums, den) = exact_lower_tails(10, 50);
    ensure!(nums[3].clone() * BigUint::from(64u32) == den.clone() * BigUint::from(11u32), "exact spot tail is not 11/64");
    ensure!((spot - 0.171875).abs() <= 1e-15, "spot tail {spot}");
    Ok(format!("{checked} (n, a, x) triples, spot n=10 x=0.5 k=3 -> {spot}"))
}

fn partition_of_unity_check() -> Outcome {
    let sets: [&[f64]; 3] = [&[0.0, 1.0], &[0.0, 1.0, 2.5], &[0.0, 1.5, 3.0, 5.0]];
    let mut worst_sum: f64 = 0.0;
    let mut worst_delta: f64 = 0.0;
    for z in sets {
        for n in 1..=8 {
            let sys = NodeSystem::new(z.to_vec(), n).map_err(|e| e.to_string())?;
            let ps = partition_of_unity(&sys).map_err(|e| e.to_string())?;
            let (lo, hi) = (z[0], z[z.len() - 1]);
            for k in 0..1000 {
                let x = lo + (hi - lo) * k as f64 / 999.0;
                let s: f64 = ps.iter().map(|p| p.eval(x)).sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
                ensure!((s - 1.0).abs() <= 1e-9, "Z={z:?} n={n} x={x}: sum = {s}");
            }
            for (i, p) in ps.iter().enumerate() {
                for (j, zj) in z.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    let got = p.eval(*zj);
                    worst_delta = worst_delta.max((got - want).abs());
                    ensure!((got - want).abs() <= 1e-10, "Z={z:?} n={n}: P_{}({zj}) = {got}", i + 1);
                }
            }
        }
    }
    let ps = partition_of_unity(&NodeSystem::new(vec![0.0, 1.0], 2).unwrap()).map_err(|e| e.to_string())?;
    let mut worst_hermite: f64 = 0.0;
    for k in 0..=1000 {
        let x = k as f64 / 1000.0;
        let d = (ps[1].eval(x) - x * x * (3.0 - 2.0 * x)).abs();
        worst_hermite = worst_hermite.max(d);
        ensure!(d <= 1e-12, "P_2({x}) differs from z^2(3-2z) by {d:e}");
    }
    Ok(format!(
        "max |sum-1| {worst_sum:.1e}, max |P_i(z_j)-delta_ij| {worst_delta:.1e}, Hermite deviation {worst_hermite:.1e}"
    ))
}

fn small_delta_certificate() -> Outcome {
    let delta = 0.01;
    let sys = NodeSystem::new(Z_SMALL_DELTA.to_vec(), 8).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut cert_value = 0.0;
    for _ in 0..20 {
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let (p, bound) = small_delta_approx(&sys, &w).map_err(|e| e.to_string())?;
        let cert = bound.certificate(delta).ok_or("no certificate at delta = 0.01")?;
        cert_value = cert.value;
        ensure!((cert.value - 4.0 * 0.72f64.powi(8)).abs() <= 1e-12, "certificate {}", cert.value);
        let f = small_delta_function(&w);
        let e = sup_error(&p, &f, &GridSpec::for_degree(p.degree()));
        ensure!(e.global_error <= cert.value.min(0.28728), "w={w:?}: measured {:e}", e.global_error);
        worst = worst.max(e.global_error);
    }
    let limit = bnd_limit(&sys, delta).value;
    ensure!((limit - 0.02f64.powi(8) * 6f64.powi(16)).abs() <= 1e-15, "limit bound {limit}");
    ensure!((limit - 0.0722).abs() <= 5e-5, "limit bound {limit} is not 0.0722");
    let ps = partition_of_unity(&sys).map_err(|e| e.to_string())?;
    let grid = GridSpec::for_degree(sys.degree());
    let mut worst_p: f64 = 0.0;
    for (i, p) in ps.iter().enumerate() {
        for (j, z) in Z_SMALL_DELTA.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            let (m, _) = max_abs_on(|x| p.eval(x) - target, iv(z - delta, z + delta), &grid);
            ensure!(m <= limit, "P_{} on the disk at {z}: {m:e} > {limit:e}", i + 1);
            worst_p = worst_p.max(m);
        }
    }
    Ok(format!(
        "certificate {cert_value:.7}, max measured {worst:.3e}; per-polynomial limit {limit:.5}, max deviation {worst_p:.3e}"
    ))
}

fn small_delta_function(w: &[f64]) -> StepFunction {
    let pairs: Vec<(f64, f64)> = Z_SMALL_DELTA.iter().map(|z| (z - 0.01, z + 0.01)).collect();
    step(&pairs, w)
}

fn sign_patterns(s: usize) -> Vec<Vec<f64>> {
    (0..1usize << s)
        .map(|mask| (0..s).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

fn pipeline_check() -> Outcome {
    let systems: [&[(f64, f64)]; 2] = [&[(-1.0, -0.2), (0.2, 1.0)], &[(-1.0, -0.5), (-0.1, 0.3), (0.7, 1.0)]];
    let printed = [(10, 0.474609), (20, 0.112678)];
    let mut lines = Vec::new();
    for pairs in systems {
        for y in sign_patterns(pairs.len()) {
            if y.iter().all(|v| *v == y[0]) {
                continue;
            }
            let f = step(pairs, &y);
            let base = jackson_base(&f).map_err(|e| e.to_string())?;
            ensure!(base.base_error <= 0.5, "y={y:?}: base error {}", base.base_error);
            ensure!(base.hull_norm <= 1.0, "y={y:?}: base hull norm {}", base.hull_norm);
            for (m, quoted) in printed {
                let r = general_pipeline(&f, m).map_err(|e| e.to_string())?;
                let formula = 2.0 * 0.75f64.powf(m as f64 / 2.0);
                ensure!((r.certificate.value - formula).abs() <= 1e-14, "m={m}: certificate {}", r.certificate.value);
                ensure!((r.certificate.value - quoted).abs() <= 6e-5, "m={m}: certificate {} vs {quoted}", r.certificate.value);
                let measured = r.measured.global_error;
                ensure!(measured <= formula.min(quoted), "y={y:?} m={m}: measured {measured:e}");
                lines.push(format!("s={} m={m} n={} err={measured:.2e}", pairs.len(), r.total_degree));
            }
        }
    }
    Ok(format!("{} compositions, e.g. {}", lines.len(), lines[lines.len() - 1]))
}

struct Construction {
    label: String,
    f: StepFunction,
    p: Polynomial,
    cert: BoundCertificate,
}

fn sandwich_constructions() -> Vec<Construction> {
    let mut out = Vec::new();
    for h in HS {
        for n in 2..=60 {
            let (p, cert) = two_segment_approx(h, -1.0, 1.0, n).unwrap();
            out.push(Construction {
                label: format!("bernstein h={h} n={n}"),
                f: two_segment(h),
                p,
                cert,
            });
        }
    }
    let sys = NodeSystem::new(Z_SMALL_DELTA.to_vec(), 8).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    for k in 0..3 {
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let (p, bound) = small_delta_approx(&sys, &w).unwrap();
        out.push(Construction {
            label: format!("small-delta #{k}"),
            f: small_delta_function(&w),
            p,
            cert: bound.certificate(0.01).unwrap(),
        });
    }
    let two = ValueSet::new(vec![-1.0, 1.0]).unwrap();
    let (p, cert) = eps_two(&two, 0.1, 6).unwrap();
    out.push(Construction {
        label: "eps-two n=6".into(),
        f: step(&[(-1.1, -0.9), (0.9, 1.1)], &[-1.0, 1.0]),
        p,
        cert,
    });
    let three = three_values();
    for n in [6, 12, 24, 48, 60] {
        let f = three_value_function();
        let (p, cert) = eps_small_delta(&three, THREE_DELTA, n).unwrap();
        out.push(Construction {
            label: format!("eps-small-delta n={n}"),
            f: f.clone(),
            p,
            cert,
        });
        let (p, cert) = eps_general(&three, THREE_DELTA, n).unwrap();
        out.push(Construction {
            label: format!("eps-general n={n}"),
            f,
            p,
            cert,
        });
    }
    out.retain(|c| c.p.degree() <= 64);
    out
}

fn oracle_sandwich() -> Outcome {
    let constructions = sandwich_constructions();
    let mut worst_shift: f64 = 0.0;
    let mut nontrivial = 0;
    for c in &constructions {
        let s = sandwich(&c.f, &c.p, &c.cert).map_err(|e| format!("{}: {e}", c.label))?;
        let oracle = s.oracle.ok_or(format!("{}: no oracle value", c.label))?;
        ensure!(
            s.holds,
            "{}: oracle {oracle:e}, measured {:e}, certificate {:e}",
            c.label,
            s.measured.global_error,
            s.certificate
        );
        let d = c.p.degree();
        if oracle > 0.0 {
            nontrivial += 1;
            let fine = minimax_fit(&c.f, d, false, &oracle_grid(d, 2 * MIN_GRID_MULT)).map_err(|e| e.to_string())?;
            let shift = (fine.best_error - oracle).abs() / oracle;
            ensure!(shift < 0.05, "{}: grid doubling moved the oracle by {:.1}%", c.label, 100.0 * shift);
            worst_shift = worst_shift.max(shift);
        }
    }
    Ok(format!(
        "{} constructions ({nontrivial} with nonzero oracle), max grid-doubling shift {:.2}%",
        constructions.len(),
        100.0 * worst_shift
    ))
}

fn random_geometry(rng: &mut StdRng) -> StepFunction {
    let s = rng.gen_range(2..=3);
    let mut cuts: Vec<f64> = (0..2 * s).map(|_| rng.gen_range(-1.0..1.0)).collect();
    cuts.sort_by(f64::total_cmp);
    let pairs: Vec<(f64, f64)> = (0..s).map(|i| (cuts[2 * i], cuts[2 * i + 1])).collect();
    let values: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    step(&pairs, &values)
}

fn bounded_vs_unbounded() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut generated = 0;
    let mut strict = 0;
    while generated < 20 {
        let f = random_geometry(&mut rng);
        let st = f.system().stats();
        if st.sigma < 0.05 || st.delta < 0.01 {
            continue;
        }
        generated += 1;
        let n = rng.gen_range(1..=16);
        let grid = oracle_grid(n, MIN_GRID_MULT);
        let e = minimax_fit(&f, n, false, &grid).map_err(|e| e.to_string())?;
        let b = minimax_fit(&f, n, true, &grid).map_err(|e| e.to_string())?;
        ensure!(b.best_error >= e.best_error, "geometry {generated} n={n}: bounded {:e} < unbounded {:e}", b.best_error, e.best_error);
        ensure!(b.hull_norm <= f.sup_norm() * (1.0 + 1e-9), "geometry {generated} n={n}: bounded hull norm {}", b.hull_norm);
        if b.best_error > e.best_error * (1.0 + 1e-9) {
            strict += 1;
        }
    }
    Ok(format!("20 geometries, {strict} with an active hull constraint"))
}

fn vertex_maximum() -> Outcome {
    let systems: [&[(f64, f64)]; 2] = [&[(-1.0, -0.3), (0.2, 1.0)], &[(-1.0, -0.6), (-0.2, 0.1), (0.5, 1.0)]];
    let mut vertex_max = std::collections::HashMap::new();
    let mut rng = StdRng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for t in 0..25 {
        let pairs = systems[t % 2];
        let s = pairs.len();
        let n = rng.gen_range(1..=8);
        let grid = oracle_grid(n, MIN_GRID_MULT);
        let vmax = match vertex_max.get(&(s, n)) {
            Some(v) => *v,
            None => {
                let mut v: f64 = 0.0;
                for y in sign_patterns(s) {
                    v = v.max(minimax_fit(&step(pairs, &y), n, false, &grid).map_err(|e| e.to_string())?.best_error);
                }
                vertex_max.insert((s, n), v);
                v
            }
        };
        let y: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let e = minimax_fit(&step(pairs, &y), n, false, &grid).map_err(|e| e.to_string())?.best_error;
        ensure!(e <= 1.02 * vmax, "s={s} n={n} y={y:?}: {e:e} > vertex max {vmax:e}");
        worst = worst.max(e / vmax);
    }
    Ok(format!("25 samples, max error/vertex max {worst:.3}"))
}

fn asymptotic_ratio() -> Outcome {
    let f = step(&[(-2.0, -1.0), (1.0, 2.0)], &[-1.0, 1.0]);
    let mut ratios = Vec::new();
    for n in [16, 18, 20] {
        let a = minimax_fit(&f, n, false, &oracle_grid(n, MIN_GRID_MULT)).map_err(|e| e.to_string())?;
        let b = minimax_fit(&f, n + 2, false, &oracle_grid(n + 2, MIN_GRID_MULT)).map_err(|e| e.to_string())?;
        let r = b.best_error / a.best_error;
        ensure!((0.20..=0.47).contains(&r), "n={n}: ratio {r}");
        ratios.push(format!("{r:.4}"));
    }
    Ok(format!("ratios {}", ratios.join(", ")))
}

const THREE_DELTA: f64 = 0.02;

fn three_values() -> ValueSet {
    ValueSet::new(vec![-1.0, 0.2, 1.0]).unwrap()
}

fn three_value_function() -> StepFunction {
    let y = three_values();
    let pairs: Vec<(f64, f64)> = y.points().iter().map(|v| (v - THREE_DELTA, v + THREE_DELTA)).collect();
    step(&pairs, y.points())
}

fn eps_bounds() -> Outcome {
    let two = ValueSet::new(vec![-1.0, 1.0]).map_err(|e| e.to_string())?;
    let (p, cert) = eps_two(&two, 0.1, 6).map_err(|e| e.to_string())?;
    let formula = 2.0 * (0.4f64 / 1.21).powi(3);
    ensure!((cert.value - formula).abs() <= 1e-15, "eps_two certificate {} != {formula}", cert.value);
    ensure!((cert.value - 0.0722545).abs() <= 2e-6, "eps_two certificate {} vs 0.0722545", cert.value);
    let grid = GridSpec::for_degree(6);
    let lo = max_abs_on(|x| p.eval(x) + 1.0, iv(-1.1, -0.9), &grid).0;
    let hi = max_abs_on(|x| p.eval(x) - 1.0, iv(0.9, 1.1), &grid).0;
    ensure!(lo.max(hi) <= cert.value, "eps_two measured {:e} > {:e}", lo.max(hi), cert.value);

    let three = three_values();
    let f = three_value_function();
    let mut nontrivial = 0;
    for n in [6, 12, 24, 48, 96, 200, 400] {
        for (name, (p, c)) in [
            ("eps_general", eps_general(&three, THREE_DELTA, n).map_err(|e| e.to_string())?),
            ("eps_small_delta", eps_small_delta(&three, THREE_DELTA, n).map_err(|e| e.to_string())?),
        ] {
            let e = sup_error(&p, &f, &GridSpec::for_degree(p.degree())).global_error;
            ensure!(e <= c.value + 1e-12, "{name} n={n}: measured {e:e} > certificate {:e}", c.value);
            if c.value < 0.5 * three.diameter() {
                nontrivial += 1;
            }
        }
    }
    Ok(format!(
        "eps_two certificate {:.7}, measured {:.3e}; {nontrivial} nontrivial three-value certificates dominate",
        cert.value,
        lo.max(hi)
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("two-segment Bernstein certificate", h_bound),
        ("pointwise Chernoff bound for B_n", pointwise_chernoff),
        ("Chernoff dominates exact binomial tails", chernoff_dominance),
        ("confluent partition of unity", partition_of_unity_check),
        ("small-delta certificate", small_delta_certificate),
        ("base stage and amplified pipeline", pipeline_check),
        ("oracle <= measured <= certificate", oracle_sandwich),
        ("bounded oracle >= unbounded oracle", bounded_vs_unbounded),
        ("vertex-maximum property", vertex_maximum),
        ("asymptotic error ratio", asymptotic_ratio),
        ("value-set amplifiers", eps_bounds),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed in {:.1}s",
        criteria.len() - failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
