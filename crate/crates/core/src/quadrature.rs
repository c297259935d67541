//! Adaptive Gauss–Kronrod (10/21 point) quadrature on finite intervals and
//! on the half line through the substitution `x = s·tan θ`.

use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

// QUADPACK qk21 tables, digits kept as tabulated.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_081_239_254,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9]
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {intervals} intervals")]
    NotConverged {
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at x = {0:e}")]
    NonFinite(f64),
}

/// Absolute and relative stopping tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-12,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
) -> Result<(f64, f64), QuadratureError> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite(centre));
    }
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let (x1, x2) = (centre - dx, centre + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite(x2));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok((value, error))
}

/// Integrate `f` over `[a, b]` by global adaptive bisection.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Estimate, QuadratureError> {
    integrate_with_breaks(&mut f, &[a, b], tol)
}

/// Integrate over consecutive panels `[p0,p1], [p1,p2], ...`; useful when the
/// integrand oscillates or has known features.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    f: &mut F,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate, QuadratureError> {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (value, error) = kronrod21(f, w[0], w[1])?;
        total += value;
        total_err += error;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    while total_err > tol.abs.max(tol.rel * total.abs()) {
        if heap.len() >= tol.max_intervals {
            return Err(QuadratureError::NotConverged {
                estimate: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval collapsed to machine resolution
            return Err(QuadratureError::NotConverged {
                estimate: total,
                error: total_err,
                intervals: heap.len() + 1,
            });
        }
        let (v1, e1) = kronrod21(f, worst.a, mid)?;
        let (v2, e2) = kronrod21(f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated cancellation in the running totals
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(Estimate {
        value,
        error,
        intervals: heap.len(),
    })
}

/// Integrate `f` over `(0, ∞)` using `x = scale·tan θ`.
///
/// `scale` should sit near the feature of the integrand; widely separated
/// features are handled by the adaptive refinement in θ.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    scale: f64,
    tol: Tolerance,
) -> Result<Estimate, QuadratureError> {
    let mut g = |theta: f64| {
        let t = theta.tan();
        let c = theta.cos();
        let x = scale * t;
        let jac = scale / (c * c);
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    // Kronrod nodes never touch the endpoints, so θ = π/2 is never evaluated
    let breaks: Vec<f64> = (0..=8).map(|i| FRAC_PI_2 * i as f64 / 8.0).collect();
    integrate_with_breaks(&mut g, &breaks, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        let k: f64 = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-14);
        assert!((g - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rules_exact_on_polynomials() {
        // Kronrod rule exact to degree 31, Gauss rule to degree 19
        for deg in 0..=31 {
            let mut f = |x: f64| x.powi(deg);
            let (k, err) = kronrod21(&mut f, -1.0, 1.0).unwrap();
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((k - exact).abs() < 1e-14, "degree {deg}");
            if deg <= 19 {
                assert!(err < 1e-14, "gauss degree {deg}");
            }
        }
    }

    #[test]
    fn half_line_lorentzian() {
        let r = integrate_half_line(|x| 1.0 / (1.0 + x * x), 1.0, Tolerance::default()).unwrap();
        assert!((r.value - FRAC_PI_2).abs() < 1e-12);
        let r = integrate_half_line(|x| (-x).exp(), 1.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_finite() {
        let r = integrate(|x| (40.0 * x).sin().powi(2), 0.0, 1.0, Tolerance::default()).unwrap();
        let exact = 0.5 - (80.0f64).sin() / 160.0;
        assert!((r.value - exact).abs() < 1e-12);
    }
}
