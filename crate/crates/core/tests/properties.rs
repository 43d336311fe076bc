use proptest::prelude::*;

use stepchev::amplify::{amplifier, general_pipeline};
use stepchev::bernstein::{
    bernstein_apply, chernoff_lower_tail, divergence, equal_two_segment, two_segment_approx,
};
use stepchev::intervals::{normalize, NormalTarget};
use stepchev::newton::{partition_of_unity, small_delta_for_system, Confluency, DividedDifferenceTable, NodeSystem};
use stepchev::oracle::{exact_binomial_tail, minimax_fit, oracle_grid, TailSide};
use stepchev::poly::{compose, sup_error, sup_norm};
use stepchev::{AffineMap, GridSpec, Interval, IntervalSystem, Polynomial, StepFunction};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// Sorted segments as `(start, length, gap-after)` triples.
fn system_strategy(max_s: usize) -> impl Strategy<Value = IntervalSystem> {
    (
        -5.0..5.0f64,
        prop::collection::vec((0.0..2.0f64, 0.05..2.0f64), 1..=max_s),
    )
        .prop_map(|(start, parts)| {
            let mut lo = start;
            let pairs: Vec<(f64, f64)> = parts
                .into_iter()
                .map(|(len, gap)| {
                    let pair = (lo, lo + len);
                    lo += len + gap;
                    pair
                })
                .collect();
            IntervalSystem::from_pairs(&pairs).unwrap()
        })
}

fn chebyshev_strategy(max_degree: usize) -> impl Strategy<Value = Polynomial> {
    (prop::collection::vec(-1.0..1.0f64, 1..=max_degree + 1), -2.0..2.0f64, 0.5..3.0f64)
        .prop_map(|(c, lo, len)| Polynomial::chebyshev(c, Interval::new(lo, lo + len).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn two_equal_segments_have_diameter_sigma_plus_four_delta(lo in -10.0..10.0f64, len in 0.0..3.0f64, gap in 0.01..5.0f64) {
        let sys = IntervalSystem::from_pairs(&[(lo, lo + len), (lo + len + gap, lo + 2.0 * len + gap)]).unwrap();
        let st = sys.stats();
        prop_assert!((st.diameter - (st.sigma + 4.0 * st.delta)).abs() <= 1e-12 * st.diameter.max(1.0));
    }

    #[test]
    fn normalize_round_trips(sys in system_strategy(5)) {
        prop_assume!(sys.hull().len() > 0.0);
        for target in [NormalTarget::Unit, NormalTarget::Symmetric] {
            let (mapped, map) = normalize(&sys, target).unwrap();
            let back = mapped.map(&map.inverse()).unwrap();
            let scale = sys.hull().lo().abs().max(sys.hull().hi().abs()).max(1.0);
            for (a, b) in sys.intervals().iter().zip(back.intervals()) {
                prop_assert!((a.lo() - b.lo()).abs() <= 1e-12 * scale);
                prop_assert!((a.hi() - b.hi()).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn stats_scale_with_the_map(sys in system_strategy(5), scale in prop_oneof![-4.0..-0.1f64, 0.1..4.0f64], shift in -3.0..3.0f64) {
        let map = AffineMap::new(scale, shift).unwrap();
        let a = sys.stats();
        let b = sys.map(&map).unwrap().stats();
        let back = sys.map(&map).unwrap().map(&map.inverse()).unwrap().stats();
        let k = scale.abs();
        prop_assert_eq!(a.s, b.s);
        prop_assert!((b.delta - k * a.delta).abs() <= 1e-12 * (1.0 + k * a.delta));
        prop_assert!((b.diameter - k * a.diameter).abs() <= 1e-12 * (1.0 + k * a.diameter));
        if a.s > 1 {
            prop_assert!((b.sigma - k * a.sigma).abs() <= 1e-11 * (1.0 + k * a.sigma));
            prop_assert!((back.sigma - a.sigma).abs() <= 1e-11 * (1.0 + a.sigma));
        }
    }

    #[test]
    fn from_samples_reproduces_polynomials(p in chebyshev_strategy(50), t in prop::collection::vec(0.0..1.0f64, 8)) {
        let q = Polynomial::from_samples(|x| p.eval(x), p.degree(), p.domain()).unwrap();
        let d = p.domain();
        for u in t {
            let x = d.lo() + u * d.len();
            prop_assert!((p.eval(x) - q.eval(x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn composition_is_associative(p in chebyshev_strategy(3), q in chebyshev_strategy(3), r in chebyshev_strategy(3), u in 0.0..1.0f64) {
        let left = compose(&compose(&p, &q).unwrap(), &r).unwrap();
        let right = compose(&p, &compose(&q, &r).unwrap()).unwrap();
        let x = r.domain().lo() + u * r.domain().len();
        let scale = 1.0 + left.eval(x).abs();
        prop_assert!((left.eval(x) - right.eval(x)).abs() <= 1e-8 * scale);
    }

    #[test]
    fn pullback_preserves_sup_norms(p in chebyshev_strategy(12), scale in prop_oneof![-3.0..-0.2f64, 0.2..3.0f64], shift in -2.0..2.0f64) {
        let map = AffineMap::new(scale, shift).unwrap();
        let pulled = p.affine_pullback(&map);
        let j = p.domain();
        let grid = GridSpec::for_degree(p.degree());
        let a = sup_norm(&p, j, &grid);
        let b = sup_norm(&pulled, j.map(&map.inverse()), &grid);
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn refinement_never_lowers_the_measurement(p in chebyshev_strategy(10), y in prop::collection::vec(-1.0..1.0f64, 3)) {
        let d = p.domain();
        let w = d.len() / 7.0;
        let sys = IntervalSystem::from_pairs(&[
            (d.lo(), d.lo() + w),
            (d.lo() + 3.0 * w, d.lo() + 4.0 * w),
            (d.lo() + 6.0 * w, d.hi()),
        ]).unwrap();
        let f = StepFunction::new(sys, y).unwrap();
        let grid = GridSpec::for_degree(p.degree());
        let coarse = sup_error(&p, &f, &grid.with_refine(false));
        let fine = sup_error(&p, &f, &grid.with_refine(true));
        prop_assert!(fine.global_error >= coarse.global_error);
        prop_assert!(fine.hull_norm >= coarse.hull_norm);
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn bernstein_is_positive_and_range_preserving(samples in prop::collection::vec(-1.0..1.0f64, 2..12), n in 1usize..80) {
        let k = samples.len();
        let f = |x: f64| samples[((x * k as f64) as usize).min(k - 1)];
        let p = bernstein_apply(f, n).unwrap();
        let bound = (0..=n).map(|j| f(j as f64 / n as f64).abs()).fold(0.0, f64::max);
        let hull = Interval::new(0.0, 1.0).unwrap();
        prop_assert!(sup_norm(&p, hull, &GridSpec::for_degree(n)) <= bound + 1e-12);

        let g = |x: f64| f(x).abs();
        let q = bernstein_apply(g, n).unwrap();
        for j in 0..=200 {
            prop_assert!(q.eval(j as f64 / 200.0) >= -1e-12);
        }
    }

    #[test]
    fn locally_constant_bernstein_error(a in 0.05..0.4f64, w in 0.1..0.5f64, n in 1usize..=200, m in 0.1..2.0f64) {
        let b = (a + w).min(0.95);
        let f = |x: f64| if x > a && x < b { m } else if x <= a { -m } else { 0.3 * m };
        let p = bernstein_apply(f, n).unwrap();
        for j in 1..100 {
            let x = a + (b - a) * j as f64 / 100.0;
            let h = 2.0 * m * ((-(n as f64) * divergence(a, x).unwrap()).exp() + (-(n as f64) * divergence(b, x).unwrap()).exp());
            prop_assert!((p.eval(x) - m).abs() <= h, "x={} n={} {} > {}", x, n, (p.eval(x) - m).abs(), h);
        }
    }

    #[test]
    fn chernoff_dominates_binomial_tails(n in 1usize..=64, ai in 1usize..99, dx in 1usize..99) {
        let a = ai as f64 / 100.0;
        let x = (ai + dx) as f64 / 100.0;
        prop_assume!(x < 1.0);
        let k = (a * n as f64).floor() as usize;
        let exact = exact_binomial_tail(n, x, k, TailSide::Lower).unwrap();
        prop_assert!(exact <= chernoff_lower_tail(n, x, a).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn two_segment_certificates_dominate(h in 0.01..0.49f64, y0 in -2.0..2.0f64, y1 in -2.0..2.0f64, n in 1usize..120) {
        let (p, cert) = two_segment_approx(h, y0, y1, n).unwrap();
        let f = StepFunction::new(IntervalSystem::from_pairs(&[(0.0, h), (1.0 - h, 1.0)]).unwrap(), vec![y0, y1]).unwrap();
        let rep = sup_error(&p, &f, &GridSpec::for_degree(n));
        prop_assert!(rep.global_error <= cert.value + 1e-12);
        prop_assert!(rep.hull_norm <= y0.abs().max(y1.abs()) + 1e-12);
    }

    #[test]
    fn equal_segment_certificates_dominate(lo in -3.0..3.0f64, len in 0.0..1.0f64, gap in 0.1..3.0f64, n in 1usize..80) {
        let sys = IntervalSystem::from_pairs(&[(lo, lo + len), (lo + len + gap, lo + 2.0 * len + gap)]).unwrap();
        let (p, cert) = equal_two_segment(&sys, (-1.0, 0.5), n).unwrap();
        let f = StepFunction::new(sys, vec![-1.0, 0.5]).unwrap();
        prop_assert!(sup_error(&p, &f, &GridSpec::for_degree(n)).global_error <= cert.value + 1e-12);
    }
}

fn centers_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0..2.0f64, 1..=3).prop_map(|gaps| {
        let mut z = vec![0.0];
        for g in gaps {
            z.push(z.last().unwrap() + g);
        }
        z
    })
}

/// `sum_k (|c_k| + sum_j |c_j|) |T_k(t)|`: the scale of rounding errors in the
/// coefficients and in evaluating `p` at `x`.
fn clenshaw_magnitude(p: &Polynomial, x: f64) -> f64 {
    let d = p.domain();
    let norm: f64 = p.coeffs().iter().map(|c| c.abs()).sum();
    let t = (2.0 * x - d.lo() - d.hi()) / d.len();
    let (mut prev, mut cur) = (1.0f64, t);
    let mut acc = 0.0;
    for (k, c) in p.coeffs().iter().enumerate() {
        let tk = if k == 0 { 1.0 } else { cur };
        acc += (c.abs() + norm) * tk.abs();
        if k > 0 {
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
        }
    }
    acc
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn partition_polynomials_are_flat_at_the_centers(z in centers_strategy(), n in 2usize..=15) {
        prop_assume!(n * z.len() - 1 <= 60);
        let sys = NodeSystem::new(z.clone(), n).unwrap();
        let ps = partition_of_unity(&sys).unwrap();
        let h = 1e-5;
        for p in &ps {
            prop_assert_eq!(p.degree(), n * z.len() - 1);
            let scale = z.iter().map(|c| p.eval(c + 0.5).abs().max(p.eval(c - 0.5).abs())).fold(1.0, f64::max);
            for &c in &z {
                let d1 = (p.eval(c + h) - p.eval(c - h)) / (2.0 * h);
                prop_assert!(d1.abs() <= 1e-3 * scale, "P' at {} is {}", c, d1);
            }
        }
    }

    #[test]
    fn partition_sums_to_one_beyond_the_hull(z in centers_strategy(), n in 1usize..=15) {
        prop_assume!(n * z.len() - 1 <= 60);
        let sys = NodeSystem::new(z.clone(), n).unwrap();
        let ps = partition_of_unity(&sys).unwrap();
        let (lo, hi) = (z[0] - 1.0, z[z.len() - 1] + 1.0);
        for k in 0..1000 {
            let x = lo + (hi - lo) * k as f64 / 999.0;
            let s: f64 = ps.iter().map(|p| p.eval(x)).sum();
            let floor: f64 = ps.iter().map(|p| clenshaw_magnitude(p, x)).sum();
            prop_assert!((s - 1.0).abs() <= 1e-9 + 64.0 * f64::EPSILON * floor, "x={} sum={} floor={:e}", x, s, floor);
        }
    }

    #[test]
    fn perturbed_nodes_converge_to_the_confluent_limit(z in centers_strategy(), n in 1usize..=4) {
        prop_assume!(n * z.len() - 1 <= 30);
        let gamma = 1e-6;
        let sys = NodeSystem::new(z.clone(), n).unwrap();
        let ps = partition_of_unity(&sys).unwrap();
        for (i, p) in ps.iter().enumerate() {
            let mut nodes = Vec::new();
            let mut values = Vec::new();
            for (j, &c) in z.iter().enumerate() {
                for k in 0..n {
                    nodes.push(c + k as f64 * gamma / n as f64);
                    values.push(if i == j { 1.0 } else { 0.0 });
                }
            }
            let form = DividedDifferenceTable::new(nodes, &values, Confluency::Distinct).unwrap().newton_form();
            for k in 0..=200 {
                let x = z[0] + (z[z.len() - 1] - z[0]) * k as f64 / 200.0;
                prop_assert!((form.eval(x) - p.eval(x)).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn small_delta_certificates_dominate(sys in system_strategy(4), y in prop::collection::vec(-1.0..1.0f64, 4), n in 1usize..40) {
        prop_assume!(sys.len() >= 2);
        let st = sys.stats();
        let f = StepFunction::new(sys.clone(), y[..sys.len()].to_vec()).unwrap();
        let (p, cert) = small_delta_for_system(&f, n, st.sigma / st.diameter).unwrap();
        prop_assert!(p.degree() <= n);
        prop_assert!(sup_error(&p, &f, &GridSpec::for_degree(p.degree())).global_error <= cert.value + 1e-12);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn amplifier_certificates_decrease(eps in 0.01..0.5f64, m in 1usize..60) {
        let (_, a) = amplifier(m, eps).unwrap();
        let (_, b) = amplifier(m + 2, eps).unwrap();
        prop_assert!(b.value < a.value);
    }

    #[test]
    fn pipeline_is_bounded_and_certified(y in prop::collection::vec(prop_oneof![Just(-1.0), Just(1.0)], 2..=3), gap in 0.2..0.8f64, m in 1usize..6) {
        let w = 0.15;
        let pairs: Vec<(f64, f64)> = (0..y.len()).map(|k| {
            let lo = k as f64 * (w + gap);
            (lo, lo + w)
        }).collect();
        let f = StepFunction::new(IntervalSystem::from_pairs(&pairs).unwrap(), y).unwrap();
        let rep = general_pipeline(&f, m).unwrap();
        prop_assert!(rep.measured.global_error <= rep.certificate.value + 1e-12);
        prop_assert!(rep.measured.hull_norm <= 1.0 + 1e-9);
    }
}

proptest! {
    #![proptest_config(config(6))]

    #[test]
    fn oracle_error_decreases_with_degree(sys in system_strategy(3), y in prop::collection::vec(-1.0..1.0f64, 3)) {
        prop_assume!(sys.len() >= 2 && sys.hull().len() > 0.0);
        let f = StepFunction::new(sys.clone(), y[..sys.len()].to_vec()).unwrap();
        let grid = oracle_grid(12, 8);
        let mut prev = f64::INFINITY;
        for d in [2, 4, 6, 8, 10, 12] {
            let r = minimax_fit(&f, d, false, &grid).unwrap();
            prop_assert!(r.best_error <= prev + 1e-10, "degree {}: {} after {}", d, r.best_error, prev);
            prev = r.best_error;
        }
    }

    #[test]
    fn oracle_is_stable_under_grid_doubling(h in 0.05..0.4f64, d in 2usize..=16) {
        let f = StepFunction::new(IntervalSystem::from_pairs(&[(0.0, h), (1.0 - h, 1.0)]).unwrap(), vec![-1.0, 1.0]).unwrap();
        let a = minimax_fit(&f, d, false, &oracle_grid(d, 8)).unwrap().best_error;
        let b = minimax_fit(&f, d, false, &oracle_grid(d, 16)).unwrap().best_error;
        prop_assert!((a - b).abs() <= 0.05 * a.max(b));
    }
}
