use hypwalk::cone::{theta, ConeVector};
use hypwalk::green::GreenEngine;
use hypwalk::obstacle::{
    ancona_verify, chain_kernel_limit, contraction_rate, first_visit_matrix, holder_estimate_phi, pairs_at_depths, Chain,
    Obstacle, Set,
};
use hypwalk::{Element, Family, Group, StepMeasure};

fn f2() -> Group {
    Group::new(Family::Free { rank: 2 }).unwrap()
}

/// Radius-2 measure with unequal weights. Equal weights on all words of
/// length ≤ 2 would make it a polynomial in the simple random walk, with the
/// same locally constant kernel.
fn radius_two() -> StepMeasure {
    let g = f2();
    let mut pairs: Vec<(Element, f64)> = g.generators().into_iter().zip([0.14, 0.12, 0.16, 0.10]).collect();
    let mut i = 0;
    for a in g.generators() {
        for b in g.generators() {
            let w = g.mul(&a, &b).unwrap();
            if g.len(&w) == 2 {
                i += 1;
                pairs.push((w, 0.48 * i as f64 / 78.0));
            }
        }
    }
    StepMeasure::new(g, pairs).unwrap()
}

fn periodic_ray(pattern: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|i| pattern[i % pattern.len()]).collect()
}

fn word(ray: &[u8], n: usize) -> Element {
    Element::Word(ray[..n].to_vec())
}

/// Set membership straight from the distance comparisons that define the
/// half-spaces.
fn membership(g: &Group, ray: &[u8], c: usize, m: usize, r: usize, z: &Element) -> [bool; 4] {
    let d = |n: usize| g.dist(z, &word(ray, n));
    [d(c - 2 * m) < d(c), d(c - 2 * m) < d(c + 4 * r), d(c) < d(c + 2 * m), d(c) < d(c + 2 * m + 4 * r)]
}

#[test]
fn sets_follow_their_definitions() {
    let g = f2();
    for (p, m, w) in [(StepMeasure::uniform(g.clone()), 12, 2), (radius_two(), 24, 1)] {
        let r = p.step_radius();
        let ray = periodic_ray(&[0, 2, 2], 200);
        let c = 2 * m;
        let obs = Obstacle::build(&p, &ray, c, m, w).unwrap();
        let sets = [Set::U0Minus, Set::U0, Set::U1Minus, Set::U1];
        for z in obs.region().points() {
            let want = membership(&g, &ray, c, m, r, z);
            for (s, &flag) in sets.iter().zip(&want) {
                assert_eq!(obs.contains(*s, z), flag);
            }
            // Nesting.
            for k in 0..3 {
                assert!(!want[k] || want[k + 1]);
            }
        }
        let v0 = obs.v0_points();
        let v1 = obs.v1_points();
        assert!(!v0.is_empty() && !v1.is_empty());
        assert!(v0.iter().all(|z| !v1.contains(z)));
        assert!(obs.contains(Set::U0Minus, &g.identity()));
        assert!(!obs.contains(Set::U1, &word(&ray, c + 2 * m + 4 * r)));
        assert!(obs.verify_geometry().is_ok());
    }
}

#[test]
fn scale_is_checked() {
    let p = radius_two();
    let ray = vec![0u8; 200];
    assert!(Obstacle::build(&p, &ray, 24, 12, 1).is_err());
    assert!(Obstacle::build(&p, &ray, 48, 24, 1).is_ok());
}

#[test]
fn first_visit_rows_are_subprobabilities() {
    for (p, m) in [(StepMeasure::uniform(f2()), 12), (radius_two(), 24)] {
        let eng = GreenEngine::new(&p, false).unwrap();
        let ray = periodic_ray(&[0, 0, 2], 200);
        let obs = Obstacle::build(&p, &ray, 2 * m, m, 1).unwrap();
        let a = first_visit_matrix(&eng, &obs, None).unwrap();
        for (lo, hi) in a.lower.iter().zip(&a.upper) {
            assert!(lo.iter().zip(hi).all(|(l, h)| 0.0 <= *l && l <= h));
        }
        assert!(a.row_sums_lower().iter().all(|&s| s <= 1.0 + 1e-12));
    }
}

#[test]
fn strong_markov_through_the_shell() {
    // Every path from V0 to a far point crosses V1, so
    // u(v0, y) = Σ_{v1} α_{v0}(v1) u(v1, y).
    let p = StepMeasure::uniform(f2());
    let eng = GreenEngine::new(&p, false).unwrap();
    let tree = eng.tree().unwrap();
    let ray = periodic_ray(&[0, 2, 1, 2], 200);
    let m = 12;
    let y = word(&ray, 5 * m);
    let mut last_gap = f64::INFINITY;
    for w in 1..=3 {
        let obs = Obstacle::build(&p, &ray, 2 * m, m, w).unwrap();
        let a = first_visit_matrix(&eng, &obs, None).unwrap();
        let mut gap: f64 = 0.0;
        for (i, z) in a.rows.iter().enumerate() {
            let direct = tree.u(z, &y);
            let lo: f64 = a.lower[i].iter().zip(&a.cols).map(|(v, c)| v * tree.u(c, &y)).sum();
            let hi: f64 = a.upper[i].iter().zip(&a.cols).map(|(v, c)| v * tree.u(c, &y)).sum();
            assert!(lo <= direct * (1.0 + 1e-9) && direct <= hi * (1.0 + 1e-9), "{lo} {direct} {hi}");
            gap = gap.max(1.0 - lo / direct);
        }
        // The killed entries approach the full ones as the tube widens.
        assert!(gap < last_gap);
        last_gap = gap;
    }
    assert!(last_gap < 0.5, "{last_gap}");
}

#[test]
fn ancona_constant_on_both_measures() {
    let ray = periodic_ray(&[0, 0, 2], 200);
    let uni = StepMeasure::uniform(f2());
    let eng = GreenEngine::new(&uni, false).unwrap();
    let obs = Obstacle::build(&uni, &ray, 24, 12, 2).unwrap();
    let a = first_visit_matrix(&eng, &obs, None).unwrap();
    let rep = ancona_verify(&eng, &obs, &a).unwrap();
    // One active point: the matrix is a single column.
    assert_eq!(a.cols.len(), 1);
    assert!((rep.c1 - 1.0).abs() < 1e-9);
    assert_eq!(rep.diameter, 0.0);

    let p = radius_two();
    let eng = GreenEngine::new(&p, false).unwrap();
    let obs = Obstacle::build(&p, &ray, 48, 24, 1).unwrap();
    let a = first_visit_matrix(&eng, &obs, None).unwrap();
    let rep = ancona_verify(&eng, &obs, &a).unwrap();
    assert!(a.cols.len() > 1);
    assert!(rep.c1.is_finite() && rep.c1 >= 1.0);
    assert!(rep.c1_conservative >= rep.c1);
    assert!(rep.diameter <= rep.diameter_bound + 1e-12);
    assert!(contraction_rate(rep.c1) < 1.0);
}

#[test]
fn chain_contracts_and_fixes_identical_seeds() {
    let p = radius_two();
    let eng = GreenEngine::new(&p, false).unwrap();
    let ray = periodic_ray(&[0, 0, 2], 400);
    let chain = Chain::build(&eng, &ray, 96, 24, 3, 1).unwrap();
    let n = chain.last_size();
    let f = ConeVector::uniform(n, 2.0).unwrap();
    let a = chain.apply(&f).unwrap();
    let b = chain.apply(&f).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(theta(x, y).unwrap(), 0.0);
    }
    let g = ConeVector::new((0..n).map(|i| 1.0 + i as f64).collect(), 2.0).unwrap();
    let c = chain.apply(&g).unwrap();
    let before = theta(&f, &g).unwrap();
    let log: Vec<f64> = a.iter().zip(&c).map(|(x, y)| theta(x, y).unwrap()).collect();
    assert!(log[0] <= before);
    for w in log.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn chain_kernel_matches_ray_limit() {
    let g = f2();
    let ray = periodic_ray(&[0, 0, 2], 400);
    let uni = StepMeasure::uniform(g.clone());
    let eng = GreenEngine::new(&uni, false).unwrap();
    for x in ["a", "B"] {
        let x = g.parse(x).unwrap();
        let exact = eng.tree().unwrap().boundary_kernel(&ray, &x).unwrap();
        let chain = chain_kernel_limit(&eng, &ray, &x, 12, 2, 4).unwrap();
        assert!((chain.value - exact).abs() < 1e-3, "{} vs {exact}", chain.value);
    }

    let p = radius_two();
    let eng = GreenEngine::new(&p, false).unwrap();
    for x in ["b", "AB"] {
        let x = g.parse(x).unwrap();
        let green = eng.martin_kernel_boundary(&ray, &x, 1e-10).unwrap().value;
        let chain = chain_kernel_limit(&eng, &ray, &x, 24, 2, 4).unwrap();
        assert!((chain.value - green).abs() < 1e-3, "{} vs {green}", chain.value);
    }
}

#[test]
fn holder_fit_on_radius_two_measure() {
    let p = radius_two();
    let eng = GreenEngine::new(&p, false).unwrap();
    let g = f2();
    let pairs = pairs_at_depths(&g, &[2, 4, 6, 8, 10, 12], 60, 5);
    let fit = holder_estimate_phi(&eng, &g.parse("a").unwrap(), &pairs, 1e-10).unwrap();
    assert!(!fit.degenerate);
    assert!(fit.kappa > 0.0, "{fit:?}");
    assert!(fit.r2 > 0.9, "{fit:?}");
    let at_e = holder_estimate_phi(&eng, &g.identity(), &pairs, 1e-10).unwrap();
    assert!(at_e.degenerate);
}

#[test]
fn nearest_neighbour_kernel_is_locally_constant() {
    let g = f2();
    let eng = GreenEngine::new(&StepMeasure::uniform(g.clone()), false).unwrap();
    let pairs = pairs_at_depths(&g, &[2, 3, 4, 5, 6], 40, 9);
    let fit = holder_estimate_phi(&eng, &g.parse("a").unwrap(), &pairs, 1e-12).unwrap();
    assert!(fit.degenerate);
}
