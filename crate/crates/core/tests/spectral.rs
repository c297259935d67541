use cqed_core::circuit_model::LineSegment;
use cqed_core::hamiltonian_assembly::{
    charge_qubit_couplings_at, charge_qubit_couplings_exact, ChargeQubitParams,
};
use cqed_core::mode_basis::{build_finite_modes, ModeBasis};
use cqed_core::quadrature::{integrate, Tolerance};
use cqed_core::secular_solver::{solve_point_secular, BoundaryParams, DEFAULT_TOL};
use cqed_core::spectral_density::{
    fit_asymptotic_exponent, halfline_spectral, inductive_spectral, log_indices,
    spin_capacitive_spectral, FitWindow, Site, SpectralDensity,
};

const C: f64 = 249e-12;
const L: f64 = 623e-9;

fn basis(alpha: f64, beta: f64, len: f64, n: usize) -> ModeBasis {
    let bp = BoundaryParams::point(alpha, beta);
    let ks = solve_point_secular(bp, len, n, DEFAULT_TOL).unwrap();
    build_finite_modes(&ks, bp, &LineSegment::shorted(C, L, len), C * len).unwrap()
}

#[test]
fn sparse_couplings_match_table() {
    let dev = ChargeQubitParams::device_a();
    let table = charge_qubit_couplings_exact(&dev, 500).unwrap();
    let idx = [0, 3, 81, 499];
    let sparse = charge_qubit_couplings_at(&dev, &idx).unwrap();
    for (i, &n) in idx.iter().enumerate() {
        assert!((sparse.g[i] / table.g[n] - 1.0).abs() < 1e-12);
        assert!((sparse.f[i] / table.f[n] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn point_capacitive_exponents_two_decades_each_side() {
    // Device A capacitances on a 10 m line put the cutoff near n = 1.7e5,
    // leaving room for two clean decades on either side
    let dev = ChargeQubitParams {
        length: 10.0,
        ..ChargeQubitParams::device_a()
    };
    let n_c = dev.length / (std::f64::consts::PI * dev.alpha());
    let low = log_indices(5, 1000, 20);
    let high = log_indices((10.0 * n_c) as usize, (1000.0 * n_c) as usize, 20);
    for (idx, expected) in [(low, 0.5), (high, -0.5)] {
        let t = charge_qubit_couplings_at(&dev, &idx).unwrap();
        let s: Vec<(f64, f64)> = t.f.iter().copied().zip(t.g.iter().copied()).collect();
        let fit = fit_asymptotic_exponent(&s, FitWindow::new(t.f[0], t.f[t.len() - 1])).unwrap();
        assert!(fit.decades >= 2.0);
        assert!((fit.slope - expected).abs() < 0.05, "{fit:?}");
    }
}

#[test]
fn line_densities_two_decade_tails() {
    let dev = ChargeQubitParams::device_a();
    let beta = 1e-9 / L;
    let b = basis(dev.alpha(), beta, dev.length, 100_000);
    let ji = inductive_spectral(&b, 1e-9, Site::Coupling).unwrap();
    let jsc = spin_capacitive_spectral(&b, 1.0, Site::Coupling).unwrap();
    for (j, expected) in [(ji, -3.0), (jsc, -1.0)] {
        let fit =
            fit_asymptotic_exponent(&j.samples(), FitWindow::new(j.omega[900], j.omega[99_999]))
                .unwrap();
        assert!(fit.decades >= 2.0);
        assert!((fit.slope - expected).abs() < 0.05, "{fit:?}");
    }
}

/// Bins of `per_bin` consecutive modes, edges halfway between modes,
/// starting after the lowest two.
fn compare_bins(comb: &SpectralDensity, cont: impl Fn(f64) -> f64, per_bin: usize) -> f64 {
    let om = &comb.omega;
    let mut edges = vec![];
    let mut n = 2;
    while n < om.len() {
        edges.push(0.5 * (om[n - 1] + om[n]));
        n += per_bin;
    }
    let bins = comb.binned(&edges);
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-10,
        max_intervals: 10_000,
    };
    let mut worst: f64 = 0.0;
    for (i, w) in edges.windows(2).enumerate() {
        let reference = integrate(&cont, w[0], w[1], tol).unwrap().value;
        worst = worst.max((bins[i] / reference - 1.0).abs());
    }
    worst
}

#[test]
fn discrete_combs_approach_halfline_densities() {
    let dev = ChargeQubitParams::device_a();
    let (alpha, l_g) = (dev.alpha(), 1e-9);
    let beta = l_g / L;
    let len = 1.0;
    let b = basis(alpha, beta, len, 150_000);
    let h = halfline_spectral(alpha, beta, C, L, 1.0).unwrap();
    let sc = spin_capacitive_spectral(&b, 1.0, Site::Coupling).unwrap();
    let ind = inductive_spectral(&b, l_g, Site::Coupling).unwrap();
    let worst_c = compare_bins(&sc, |w| h.j_c(w), 500);
    let worst_l = compare_bins(&ind, |w| h.j_l(w), 500);
    assert!(worst_c < 0.02, "{worst_c}");
    assert!(worst_l < 0.02, "{worst_l}");
}
