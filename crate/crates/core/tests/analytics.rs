use radar_tracking::analytics::{
    expected_burst_count, run_ccdf_dp, tracking_prob, tracking_prob_demoivre,
    tracking_prob_polynomial, Densities, MomentKernel, QuadratureConfig, RadarParams,
};

fn kernel(quad: QuadratureConfig, order: usize) -> MomentKernel {
    MomentKernel::new(RadarParams::reference(), quad, order).unwrap()
}

#[test]
fn moments_decrease_with_order_access_and_density() {
    let k = kernel(QuadratureConfig::default(), 6);
    let deltas = [0.2, 0.6, 1.0];
    let vehicles = [0.02, 0.05];
    let streets = [0.0, 5e-4, 0.004];
    let mut grid = vec![vec![vec![Vec::new(); streets.len()]; vehicles.len()]; deltas.len()];
    for (i, &d) in deltas.iter().enumerate() {
        for (j, &l) in vehicles.iter().enumerate() {
            for (s, &ll) in streets.iter().enumerate() {
                let t = k.table(Densities::new(l, ll).unwrap(), d).unwrap();
                let z = t.values().to_vec();
                for w in z.windows(2) {
                    assert!(w[1] <= w[0]);
                }
                // moments of a [0, 1] variable
                assert!(z[1] >= z[0] * z[0]);
                grid[i][j][s] = z;
            }
        }
    }
    let below = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y);
    for i in 0..deltas.len() {
        for j in 0..vehicles.len() {
            for s in 0..streets.len() {
                let z = &grid[i][j][s];
                if i + 1 < deltas.len() {
                    assert!(below(&grid[i + 1][j][s], z));
                }
                if j + 1 < vehicles.len() {
                    assert!(below(&grid[i][j + 1][s], z));
                }
                if s + 1 < streets.len() {
                    assert!(below(&grid[i][j][s + 1], z));
                }
            }
        }
    }
}

#[test]
fn tighter_quadrature_stays_within_error_estimates() {
    let dens = Densities::new(0.05, 5e-4).unwrap();
    let loose = QuadratureConfig::default();
    let a = kernel(loose, 6).table(dens, 0.5).unwrap();
    let b = kernel(loose.tightened(10.0), 6).table(dens, 0.5).unwrap();
    for l in 1..=6 {
        let diff = (a.zeta(l).unwrap() - b.zeta(l).unwrap()).abs();
        assert!(
            diff <= a.error(l).unwrap(),
            "order {l}: {diff:e} vs {:e}",
            a.error(l).unwrap()
        );
    }
}

#[test]
fn tracking_routes_agree() {
    let k = kernel(QuadratureConfig::default(), 21);
    for delta in [0.3, 1.0] {
        let table = k.table(Densities::new(0.05, 5e-4).unwrap(), delta).unwrap();
        for t in [5, 12, 20] {
            let mut last = 1.0;
            for nu in 1..=t {
                let a = tracking_prob_demoivre(&table, t, nu).unwrap();
                let b = tracking_prob_polynomial(&table, t, nu).unwrap();
                let tol = 1e-9f64.max(a.error_bound + b.error_bound);
                assert!((a.value - b.value).abs() <= tol, "T={t} nu={nu}");
                assert!(a.value <= last + a.error_bound);
                last = a.value;
            }
            // a full-block run is T detections in a row
            let full = tracking_prob_demoivre(&table, t, t).unwrap().value;
            assert!((full - table.zeta(t as usize).unwrap()).abs() < 1e-12);
            assert!((full - expected_burst_count(&table, t, t).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn noise_only_network_reduces_to_bernoulli_runs() {
    let radar = RadarParams::reference();
    let p = (-radar.noise_exponent()).exp();
    let table = kernel(QuadratureConfig::default(), 21)
        .table(Densities::new(0.0, 0.0).unwrap(), 0.7)
        .unwrap();
    for nu in 1..=20 {
        let pt = tracking_prob(&table, 20, nu).unwrap();
        assert!(
            (pt - run_ccdf_dp(p, 20, nu).unwrap()).abs() < 1e-9,
            "nu={nu}"
        );
    }
}
