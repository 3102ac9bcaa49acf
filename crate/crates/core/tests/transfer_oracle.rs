use cocycle_lab::measure::{integrate, Density, FiniteMeasureSpace, Observable};
use cocycle_lab::transfer::{duality_residual, pf_exact, pf_ulam, MapSpec};

/// `m(cell_i ∩ T⁻¹ cell_j) / m(cell_i)` for the tent map on `n` uniform
/// cells. Preimages of `[a, b)` are `[a/2, b/2)` and `(1 − b/2, 1 − a/2]`.
fn tent_oracle(n: usize) -> Vec<Vec<f64>> {
    let h = 1.0 / n as f64;
    let overlap = |lo: f64, hi: f64, a: f64, b: f64| (hi.min(b) - lo.max(a)).max(0.0);
    (0..n)
        .map(|i| {
            let (lo, hi) = (i as f64 * h, (i + 1) as f64 * h);
            (0..n)
                .map(|j| {
                    let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
                    (overlap(lo, hi, a / 2.0, b / 2.0) + overlap(lo, hi, 1.0 - b / 2.0, 1.0 - a / 2.0)) / h
                })
                .collect()
        })
        .collect()
}

#[test]
fn exact_tent_matches_preimage_oracle() {
    for n in [2, 8, 64] {
        let s = FiniteMeasureSpace::uniform(n).unwrap();
        let k = pf_exact(&MapSpec::Tent, &s).unwrap().to_dense();
        let o = tent_oracle(n);
        for i in 0..n {
            for j in 0..n {
                assert!((k[i][j] - o[i][j]).abs() < 1e-14, "n={n} ({i},{j})");
            }
        }
    }
}

#[test]
fn ulam_tent_within_stratification_error() {
    let samples = 4000;
    for n in [10, 37, 100] {
        let s = FiniteMeasureSpace::uniform(n).unwrap();
        let k = pf_ulam(&MapSpec::Tent, &s, samples, 3).unwrap().to_dense();
        let o = tent_oracle(n);
        let worst = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (k[i][j] - o[i][j]).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 3.0 / samples as f64, "n={n}: {worst}");
    }
}

#[test]
fn ulam_doubling_is_exact_on_dyadic_grid() {
    let s = FiniteMeasureSpace::uniform(32).unwrap();
    let u = pf_ulam(&MapSpec::Doubling, &s, 500, 9).unwrap().to_dense();
    let e = pf_exact(&MapSpec::Doubling, &s).unwrap().to_dense();
    assert_eq!(u, e);
}

#[test]
fn tent_duality_residual_shrinks_with_refinement() {
    let s = FiniteMeasureSpace::uniform(50).unwrap();
    let p = pf_ulam(&MapSpec::Tent, &s, 2000, 1).unwrap();
    let f = Density::new(&s, (0..50).map(|i| 1.0 + (i as f64 / 50.0)).collect()).unwrap();
    let g = Observable::new(&s, (0..50).map(|i| (i as f64 / 7.0).sin()).collect()).unwrap();
    let coarse = duality_residual(&p, &MapSpec::Tent, &f, &g, 2).unwrap();
    let fine = duality_residual(&p, &MapSpec::Tent, &f, &g, 200).unwrap();
    assert!(fine < 1e-3, "{fine}");
    assert!(fine <= coarse + 1e-12);
    let total = integrate(&p.apply(&f).unwrap(), &Observable::constant(&s, 1.0)).unwrap();
    assert!((total - f.total_mass()).abs() < 1e-12);
}
