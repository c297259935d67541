use cqed_core::circuit_model::FarEnd;
use cqed_core::foster_synthesis::{example3_spectrum, Example3Params};
use cqed_core::hamiltonian_assembly::{charge_qubit_couplings_exact, ChargeQubitParams};
use std::time::Instant;

#[test]
fn two_qubit_spectrum_and_cutoffs() {
    let p = Example3Params::two_qubit_reference();
    let t = Instant::now();
    let r = example3_spectrum(&p, 6000, 4).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let f = r.frequencies_hz();
    let (a1, a2) = (r.argmax(0), r.argmax(1));
    eprintln!(
        "f1 = {:.6e}, argmax {a1} -> {:.6e}, {a2} -> {:.6e}, {elapsed:.1}s",
        f[0], f[a1], f[a2]
    );
    assert!((f[0] / 4.26e9 - 1.0).abs() < 0.02);
    let mut peaks = [f[a1], f[a2]];
    peaks.sort_by(f64::total_cmp);
    assert!((peaks[0] / 685.5e9 - 1.0).abs() < 0.03, "{peaks:?}");
    assert!((peaks[1] / 1.35e12 - 1.0).abs() < 0.03, "{peaks:?}");
    assert!(elapsed < 300.0);
}

#[test]
fn one_qubit_reduces_to_single_port() {
    let mut p = Example3Params::two_qubit_reference();
    p.c_g2 = 0.0;
    let r = example3_spectrum(&p, 6000, 4).unwrap();
    assert!(r.g.iter().all(|g| g[1] == 0.0));
    let single = ChargeQubitParams {
        c_g: p.c_g1,
        c_j: p.c_j1,
        c: p.c,
        l: p.l,
        length: p.length,
        far_end: FarEnd::Open,
    };
    let exact = charge_qubit_couplings_exact(&single, 300).unwrap();
    let worst = |r: &cqed_core::foster_synthesis::Example3Spectrum, upto: usize| {
        (0..upto).fold((0.0f64, 0.0f64), |(dw, dg), n| {
            let w = 2.0 * std::f64::consts::PI * exact.f[n];
            (
                (r.omega[n] / w - 1.0).abs().max(dw),
                (r.g[n][0] / exact.g[n] - 1.0).abs().max(dg),
            )
        })
    };
    let (dw, dg) = worst(&r, 20);
    assert!(dw < 1e-5 && dg < 1e-3, "{dw} {dg}");
    // The remaining gap is truncation: it shrinks with more stages.
    let coarse = example3_spectrum(&p, 1500, 4).unwrap();
    let (dw_c, dg_c) = worst(&coarse, 20);
    assert!(dw < dw_c && dg < dg_c);
}
