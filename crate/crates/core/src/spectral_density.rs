//! Spin-boson spectral densities of line baths, their closed forms on a
//! half-line, power-law fits and the capacitive/inductive bath map.
//!
//! Discrete densities are kept as weight lists `(ω_n, w_n)` so that sums
//! over the comb stay exact; Lorentzian smoothing is only offered for
//! plotting and quadrature checks.

use crate::mode_basis::{continuum_mode_at_origin, ContinuumKind, ModeBasis, ModeError};
use crate::quadrature::QuadratureError;
use nalgebra::{DMatrix, DVector};
use ode_solvers::{Dop853, System};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Largest allowed change of slope between the two halves of a fit window.
pub const DEFAULT_MAX_DRIFT: f64 = 0.1;
/// Fewest samples a fit accepts.
pub const MIN_FIT_SAMPLES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid parameter {name} = {value:e}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("the basis has no far-end value")]
    NoSuchSite,
    #[error("fit window holds {found} samples, at least {needed} are needed")]
    InsufficientSamples { found: usize, needed: usize },
    #[error("fit window spans {decades:.3} decades, at least {needed} needed")]
    InsufficientSpan { decades: f64, needed: f64 },
    #[error("non-positive sample {value:e} at {omega:e} inside the fit window")]
    NonPositiveSample { omega: f64, value: f64 },
    #[error(
        "not a power law in this window: half-window slopes {lower:.4} and {upper:.4} differ by more than {max_drift}"
    )]
    NotPowerLaw {
        lower: f64,
        upper: f64,
        max_drift: f64,
    },
    #[error("{name} must be positive, got {value:e}")]
    NonPositiveMass { name: &'static str, value: f64 },
    #[error("inductive bath has counter-term {found:e}, a point map needs {expected:e}")]
    NotInImage { expected: f64, found: f64 },
    #[error("ODE integration failed: {0}")]
    Integration(String),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Inductive,
    SpinCapacitive,
    ClosedFormJc,
    ClosedFormJl,
    CaldeiraLeggett,
}

impl DensityKind {
    pub fn label(&self) -> &'static str {
        match self {
            DensityKind::Inductive => "inductive",
            DensityKind::SpinCapacitive => "spin_capacitive",
            DensityKind::ClosedFormJc => "closed_form_jc",
            DensityKind::ClosedFormJl => "closed_form_jl",
            DensityKind::CaldeiraLeggett => "caldeira_leggett",
        }
    }
}

/// Delta comb `J(ω) = Σ w_n δ(ω − ω_n)` with `ω` in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub kind: DensityKind,
    pub omega: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Which value of the mode functions enters the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// The coupling point of the basis (value or jump).
    Coupling,
    /// `x = L` for networks at both ends.
    Far,
}

impl SpectralDensity {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weight.iter().sum()
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.omega
            .iter()
            .copied()
            .zip(self.weight.iter().copied())
            .collect()
    }

    /// Comb convolved with a unit-area Lorentzian of half-width `width`.
    pub fn smoothed(&self, omega: f64, width: f64) -> f64 {
        self.omega
            .iter()
            .zip(&self.weight)
            .map(|(w0, w)| w * width / (PI * ((omega - w0).powi(2) + width * width)))
            .sum()
    }

    /// Summed weight in each bin `[edges[i], edges[i+1])`.
    pub fn binned(&self, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len().saturating_sub(1)];
        for (&om, &w) in self.omega.iter().zip(&self.weight) {
            let pos = edges.partition_point(|&e| e <= om);
            if pos >= 1 && pos < edges.len() {
                out[pos - 1] += w;
            }
        }
        out
    }

    /// Exponent over the upper decade of the support.
    pub fn high_tail_exponent(&self) -> Result<ExponentFit, SpectralError> {
        fit_asymptotic_exponent(&self.samples(), tail_window(&self.omega))
    }
}

/// Top decade of a sample grid, widened down to the nearest sample so
/// that the window really spans a decade.
pub fn tail_window(omega: &[f64]) -> FitWindow {
    let top = omega.iter().copied().fold(0.0, f64::max);
    // f64::max ignores the NaN seed, so an empty filter leaves NaN
    let lo = omega
        .iter()
        .copied()
        .filter(|&w| w <= top / 10.0)
        .fold(f64::NAN, f64::max);
    FitWindow::new(if lo.is_nan() { top / 10.0 } else { lo }, top)
}

fn site_value(basis: &ModeBasis, n: usize, site: Site) -> Result<f64, SpectralError> {
    match site {
        Site::Coupling => Ok(basis.endpoint[n]),
        Site::Far => basis.far_endpoint(n).ok_or(SpectralError::NoSuchSite),
    }
}

/// `w_n = (π/2L_g) u_n²/(N_α ω_n)`. An infinite `L_g` gives an empty comb.
pub fn inductive_spectral(
    basis: &ModeBasis,
    l_g: f64,
    site: Site,
) -> Result<SpectralDensity, SpectralError> {
    if !(l_g > 0.0) {
        return Err(SpectralError::InvalidParameter {
            name: "l_g",
            value: l_g,
        });
    }
    let mut out = SpectralDensity {
        kind: DensityKind::Inductive,
        omega: vec![],
        weight: vec![],
    };
    if l_g.is_infinite() {
        return Ok(out);
    }
    for n in 0..basis.len() {
        let u = site_value(basis, n, site)?;
        let om = basis.omega(n);
        out.omega.push(om);
        out.weight
            .push(PI / (2.0 * l_g) * u * u / (basis.n_alpha * om));
    }
    Ok(out)
}

/// `w_n = A u_n² ω_n / N_α`. Dividing by `N_α` keeps the weights gauge
/// invariant; `A` then carries units of capacitance times J(ω).
pub fn spin_capacitive_spectral(
    basis: &ModeBasis,
    prefactor: f64,
    site: Site,
) -> Result<SpectralDensity, SpectralError> {
    if !prefactor.is_finite() || prefactor < 0.0 {
        return Err(SpectralError::InvalidParameter {
            name: "prefactor",
            value: prefactor,
        });
    }
    let mut out = SpectralDensity {
        kind: DensityKind::SpinCapacitive,
        omega: Vec::with_capacity(basis.len()),
        weight: Vec::with_capacity(basis.len()),
    };
    for n in 0..basis.len() {
        let u = site_value(basis, n, site)?;
        let om = basis.omega(n);
        out.omega.push(om);
        out.weight.push(prefactor * u * u * om / basis.n_alpha);
    }
    Ok(out)
}

/// Continuum densities of a charge qubit on a semi-infinite line with
/// capacitive length `α` and inductive length `β`.
///
/// Normalised as the large-`L` limit of the discrete combs:
/// `J^C(ω) = A u_k(0)² ω/(c v_p)` and `J^L(ω) = (π/2βl) u_k(0)²/(c ω v_p)`
/// with `k = ω/v_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalflineSpectral {
    pub alpha: f64,
    pub beta: f64,
    /// Line capacitance per length, F/m.
    pub c: f64,
    /// Line inductance per length, H/m.
    pub l: f64,
    /// Spin-capacitive prefactor `A`.
    pub a_sc: f64,
}

pub fn halfline_spectral(
    alpha: f64,
    beta: f64,
    c: f64,
    l: f64,
    a_sc: f64,
) -> Result<HalflineSpectral, SpectralError> {
    for (name, value) in [("alpha", alpha), ("c", c), ("l", l)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(SpectralError::InvalidParameter { name, value });
        }
    }
    if !(beta > 0.0) {
        return Err(SpectralError::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    if !(a_sc >= 0.0) || !a_sc.is_finite() {
        return Err(SpectralError::InvalidParameter {
            name: "a_sc",
            value: a_sc,
        });
    }
    Ok(HalflineSpectral {
        alpha,
        beta,
        c,
        l,
        a_sc,
    })
}

impl HalflineSpectral {
    pub fn v_p(&self) -> f64 {
        1.0 / (self.l * self.c).sqrt()
    }

    /// `v_p/α`, rad/s.
    pub fn omega_alpha(&self) -> f64 {
        self.v_p() / self.alpha
    }

    /// `(ω² − αω_α²/β)² + ω²ω_α²`.
    pub fn denominator(&self, omega: f64) -> f64 {
        let wa2 = self.omega_alpha().powi(2);
        let shift = if self.beta.is_infinite() {
            0.0
        } else {
            self.alpha * wa2 / self.beta
        };
        (omega * omega - shift).powi(2) + omega * omega * wa2
    }

    pub fn shape_c(&self, omega: f64) -> f64 {
        omega.powi(3) / self.denominator(omega)
    }

    pub fn shape_l(&self, omega: f64) -> f64 {
        omega / self.denominator(omega)
    }

    pub fn j_c(&self, omega: f64) -> f64 {
        let wa2 = self.omega_alpha().powi(2);
        self.a_sc * 2.0 / PI * wa2 * self.shape_c(omega) / (self.c * self.v_p())
    }

    /// Zero without inductive coupling.
    pub fn j_l(&self, omega: f64) -> f64 {
        if self.beta.is_infinite() {
            return 0.0;
        }
        let wa2 = self.omega_alpha().powi(2);
        wa2 * self.shape_l(omega) / (self.beta * self.l * self.c * self.v_p())
    }

    fn u0_squared(&self, omega: f64) -> Result<f64, SpectralError> {
        let u = continuum_mode_at_origin(
            omega / self.v_p(),
            self.alpha,
            self.beta,
            ContinuumKind::Point,
        )?;
        Ok(u * u)
    }

    /// `J^C` built from the continuum endpoint values instead of the
    /// closed form.
    pub fn j_c_from_modes(&self, omega: f64) -> Result<f64, SpectralError> {
        Ok(self.a_sc * self.u0_squared(omega)? * omega / (self.c * self.v_p()))
    }

    pub fn j_l_from_modes(&self, omega: f64) -> Result<f64, SpectralError> {
        if self.beta.is_infinite() {
            return Ok(0.0);
        }
        Ok(PI / (2.0 * self.beta * self.l) * self.u0_squared(omega)?
            / (self.c * omega * self.v_p()))
    }

    /// Sample both densities on `omegas`.
    pub fn sample(&self, omegas: &[f64]) -> (SpectralDensity, SpectralDensity) {
        let jc = SpectralDensity {
            kind: DensityKind::ClosedFormJc,
            omega: omegas.to_vec(),
            weight: omegas.iter().map(|&w| self.j_c(w)).collect(),
        };
        let jl = SpectralDensity {
            kind: DensityKind::ClosedFormJl,
            omega: omegas.to_vec(),
            weight: omegas.iter().map(|&w| self.j_l(w)).collect(),
        };
        (jc, jl)
    }
}

/// Flux qubit in series with an infinite line through a shared SQUID loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalvanicDevice {
    /// Capacitive dressing length, m.
    pub alpha: f64,
    /// Inductive dressing length, m.
    pub beta: f64,
    /// F/m.
    pub c: f64,
    /// H/m.
    pub l: f64,
    /// Junction size ratios `r_1, r_2, r_3`.
    pub r: [f64; 3],
    /// Josephson energy, J.
    pub e_j: f64,
    /// Frustration of the qubit loop.
    pub f_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalvanicChannel {
    Capacitive1,
    Capacitive2,
    Inductive,
}

/// Coupling samplers `g_k` in rad/s for the galvanic device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalvanicCouplings {
    pub device: GalvanicDevice,
    pub v_p: f64,
    pub z0: f64,
    /// `r_3/(r_1r_2 + r_2r_3 + r_3r_1)`.
    pub gamma: f64,
}

pub fn galvanic_infinite_couplings(
    device: GalvanicDevice,
) -> Result<GalvanicCouplings, SpectralError> {
    let checks = [
        ("alpha", device.alpha),
        ("beta", device.beta),
        ("c", device.c),
        ("l", device.l),
        ("r_1", device.r[0]),
        ("r_2", device.r[1]),
        ("r_3", device.r[2]),
        ("e_j", device.e_j),
    ];
    for (name, value) in checks {
        if !(value > 0.0) || !value.is_finite() {
            return Err(SpectralError::InvalidParameter { name, value });
        }
    }
    if !device.f_eps.is_finite() {
        return Err(SpectralError::InvalidParameter {
            name: "f_eps",
            value: device.f_eps,
        });
    }
    let [r1, r2, r3] = device.r;
    Ok(GalvanicCouplings {
        device,
        v_p: 1.0 / (device.l * device.c).sqrt(),
        z0: (device.l / device.c).sqrt(),
        gamma: r3 / (r1 * r2 + r2 * r3 + r3 * r1),
    })
}

impl GalvanicCouplings {
    /// `|Δu_k(0)|`, m^-1/2.
    pub fn delta_u(&self, k: f64) -> f64 {
        continuum_mode_at_origin(
            k,
            self.device.alpha,
            self.device.beta,
            ContinuumKind::Galvanic,
        )
        .unwrap_or(0.0)
    }

    pub fn omega(&self, k: f64) -> f64 {
        self.v_p * k
    }

    pub fn g_c1(&self, k: f64) -> f64 {
        let rq = crate::constants::resistance_quantum();
        self.device.r[1]
            * self.gamma
            * self.v_p
            * (PI * self.z0 / rq).sqrt()
            * k.sqrt()
            * self.delta_u(k)
    }

    pub fn g_c2(&self, k: f64) -> f64 {
        self.g_c1(k) * self.device.r[0] / self.device.r[1]
    }

    pub fn g_l(&self, k: f64) -> f64 {
        let rq = crate::constants::resistance_quantum();
        let cosine = (2.0 * PI * self.device.f_eps).cos();
        // cos(π/2) is 6e-17 in floating point; snap it to zero
        let cosine = if cosine.abs() < 1e-15 { 0.0 } else { cosine };
        self.device.e_j / crate::constants::HBAR
            * self.device.r[2]
            * cosine
            * (self.z0 / (PI * rq)).sqrt()
            * self.delta_u(k)
            / k.sqrt()
    }

    pub fn g(&self, channel: GalvanicChannel, k: f64) -> f64 {
        match channel {
            GalvanicChannel::Capacitive1 => self.g_c1(k),
            GalvanicChannel::Capacitive2 => self.g_c2(k),
            GalvanicChannel::Inductive => self.g_l(k),
        }
    }

    /// Wavenumber of the largest `|g_k|`, found on a log grid and refined by
    /// golden section in `ln k`.
    pub fn peak_wavenumber(&self, channel: GalvanicChannel) -> f64 {
        let (a, b) = (self.device.alpha, self.device.beta);
        let centre = 1.0 / (a * b).sqrt();
        let lo = (centre.min(1.0 / a).min(1.0 / b) * 1e-4).ln();
        let hi = (centre.max(1.0 / a).max(1.0 / b) * 1e4).ln();
        let f = |t: f64| self.g(channel, t.exp()).abs();
        let steps = 4000;
        let h = (hi - lo) / steps as f64;
        let best = (0..=steps)
            .map(|i| lo + h * i as f64)
            .fold((lo, f64::NEG_INFINITY), |acc, t| {
                let v = f(t);
                if v > acc.1 {
                    (t, v)
                } else {
                    acc
                }
            })
            .0;
        let (mut x0, mut x1) = (best - h, best + h);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let a1 = x1 - ratio * (x1 - x0);
            let b1 = x0 + ratio * (x1 - x0);
            if f(a1) < f(b1) {
                x0 = a1;
            } else {
                x1 = b1;
            }
        }
        (0.5 * (x0 + x1)).exp()
    }
}

/// Inclusive fit window in `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
    pub max_drift: f64,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        FitWindow {
            lo,
            hi,
            max_drift: DEFAULT_MAX_DRIFT,
        }
    }

    pub fn with_max_drift(mut self, max_drift: f64) -> Self {
        self.max_drift = max_drift;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub samples: usize,
    pub decades: f64,
    /// Slope difference between the upper and lower halves of the window.
    pub drift: f64,
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = if points.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    (slope, stderr, intercept)
}

/// Least-squares slope of `ln w` against `ln ω` over the window.
///
/// The window must hold at least 20 samples spanning a decade, and the
/// slopes of its two halves must agree within `max_drift`; a window that
/// straddles a crossover is rejected rather than averaged.
pub fn fit_asymptotic_exponent(
    samples: &[(f64, f64)],
    window: FitWindow,
) -> Result<ExponentFit, SpectralError> {
    let mut pts = Vec::new();
    for &(om, w) in samples {
        if om >= window.lo && om <= window.hi {
            if !(om > 0.0) || !(w > 0.0) || !w.is_finite() {
                return Err(SpectralError::NonPositiveSample {
                    omega: om,
                    value: w,
                });
            }
            pts.push((om.ln(), w.ln()));
        }
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(SpectralError::InsufficientSamples {
            found: pts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decades = (pts[pts.len() - 1].0 - pts[0].0) / std::f64::consts::LN_10;
    if decades < 1.0 {
        return Err(SpectralError::InsufficientSpan {
            decades,
            needed: 1.0,
        });
    }
    let (slope, stderr, intercept) = least_squares(&pts);
    let mid = 0.5 * (pts[0].0 + pts[pts.len() - 1].0);
    let split = pts.partition_point(|p| p.0 < mid);
    let (lower, upper) = pts.split_at(split);
    let drift = if lower.len() >= 3 && upper.len() >= 3 {
        let (s0, _, _) = least_squares(lower);
        let (s1, _, _) = least_squares(upper);
        if (s1 - s0).abs() > window.max_drift {
            return Err(SpectralError::NotPowerLaw {
                lower: s0,
                upper: s1,
                max_drift: window.max_drift,
            });
        }
        s1 - s0
    } else {
        0.0
    };
    Ok(ExponentFit {
        slope,
        stderr,
        intercept,
        samples: pts.len(),
        decades,
        drift,
    })
}

/// How the system coordinate couples to the bath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathCoupling {
    /// `−q̇ Σ c_α ẋ_α`.
    Capacitive,
    /// `−q Σ c_α x_α − ½ K q²`.
    Inductive,
}

/// System coordinate `q` with mass `m` coupled to diagonal oscillators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathMap {
    pub form: BathCoupling,
    pub system_mass: f64,
    pub masses: Vec<f64>,
    /// rad/s.
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
    /// `K` in the `−½Kq²` term of the inductive form; zero for capacitive.
    pub potential_shift: f64,
    /// New bath coordinates are `x_α − offsets_α q`; zero on input.
    pub offsets: Vec<f64>,
}

impl BathMap {
    pub fn capacitive(m: f64, masses: Vec<f64>, omegas: Vec<f64>, c: Vec<f64>) -> Self {
        let n = masses.len();
        BathMap {
            form: BathCoupling::Capacitive,
            system_mass: m,
            masses,
            omegas,
            couplings: c,
            potential_shift: 0.0,
            offsets: vec![0.0; n],
        }
    }

    fn check(&self) -> Result<(), SpectralError> {
        let n = self.masses.len();
        if self.omegas.len() != n || self.couplings.len() != n {
            return Err(SpectralError::InvalidParameter {
                name: "bath length",
                value: n as f64,
            });
        }
        if !(self.system_mass > 0.0) {
            return Err(SpectralError::NonPositiveMass {
                name: "system mass",
                value: self.system_mass,
            });
        }
        for &m in &self.masses {
            if !(m > 0.0) || !m.is_finite() {
                return Err(SpectralError::NonPositiveMass {
                    name: "bath mass",
                    value: m,
                });
            }
        }
        for &w in &self.omegas {
            if !(w > 0.0) || !w.is_finite() {
                return Err(SpectralError::InvalidParameter {
                    name: "bath frequency",
                    value: w,
                });
            }
        }
        Ok(())
    }

    /// `Σ c_α²/m_α` in the capacitive form.
    fn mass_transfer(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.masses).map(|(c, m)| c * c / m).sum()
    }
}

/// Point transform between the capacitive and inductive bath forms.
///
/// Capacitive to inductive uses `ξ_α = x_α − (c_α/m_α) q`. The system
/// mass becomes `m − Σc_α²/m_α` (the Schur complement of the kinetic
/// matrix, which must stay positive), the potential gains
/// `½q²Σc_α²ω_α²/m_α` and the couplings become `c_αω_α²`. The inverse
/// direction requires exactly that counter-term. The density has weights
/// `c_α²ω_α³/m_α` at `ω_α` in both forms.
pub fn caldeira_leggett_map(bath: &BathMap) -> Result<(BathMap, SpectralDensity), SpectralError> {
    bath.check()?;
    let (mapped, c) = match bath.form {
        BathCoupling::Capacitive => {
            let c = bath.couplings.clone();
            let mass = bath.system_mass - bath.mass_transfer(&c);
            if !(mass > 0.0) {
                return Err(SpectralError::NonPositiveMass {
                    name: "renormalised system mass",
                    value: mass,
                });
            }
            let shift = c
                .iter()
                .zip(&bath.masses)
                .zip(&bath.omegas)
                .map(|((c, m), w)| c * c * w * w / m)
                .sum();
            let mapped = BathMap {
                form: BathCoupling::Inductive,
                system_mass: mass,
                masses: bath.masses.clone(),
                omegas: bath.omegas.clone(),
                couplings: c.iter().zip(&bath.omegas).map(|(c, w)| c * w * w).collect(),
                potential_shift: shift,
                offsets: c.iter().zip(&bath.masses).map(|(c, m)| c / m).collect(),
            };
            (mapped, c)
        }
        BathCoupling::Inductive => {
            let c: Vec<f64> = bath
                .couplings
                .iter()
                .zip(&bath.omegas)
                .map(|(d, w)| d / (w * w))
                .collect();
            let expected: f64 = bath
                .couplings
                .iter()
                .zip(&bath.masses)
                .zip(&bath.omegas)
                .map(|((d, m), w)| d * d / (m * w * w))
                .sum();
            let scale = expected.abs().max(bath.potential_shift.abs());
            if (bath.potential_shift - expected).abs() > 1e-12 * scale {
                return Err(SpectralError::NotInImage {
                    expected,
                    found: bath.potential_shift,
                });
            }
            let mapped = BathMap {
                form: BathCoupling::Capacitive,
                system_mass: bath.system_mass + bath.mass_transfer(&c),
                masses: bath.masses.clone(),
                omegas: bath.omegas.clone(),
                couplings: c.clone(),
                potential_shift: 0.0,
                offsets: c.iter().zip(&bath.masses).map(|(c, m)| -c / m).collect(),
            };
            (mapped, c)
        }
    };
    let density = SpectralDensity {
        kind: DensityKind::CaldeiraLeggett,
        omega: bath.omegas.clone(),
        weight: c
            .iter()
            .zip(&bath.masses)
            .zip(&bath.omegas)
            .map(|((c, m), w)| c * c * w.powi(3) / m)
            .collect(),
    };
    Ok((mapped, density))
}

/// System potential `½κq² + ¼λq⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anharmonic {
    pub stiffness: f64,
    pub quartic: f64,
}

impl Anharmonic {
    fn force(&self, q: f64) -> f64 {
        -self.stiffness * q - self.quartic * q.powi(3)
    }
}

struct BathEquations<'a> {
    bath: &'a BathMap,
    potential: Anharmonic,
}

impl System<f64, DVector<f64>> for BathEquations<'_> {
    // state: q, x_1..x_n, q̇, ẋ_1..ẋ_n
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let b = self.bath;
        let n = b.masses.len();
        for i in 0..=n {
            dy[i] = y[n + 1 + i];
        }
        let q = y[0];
        match b.form {
            BathCoupling::Capacitive => {
                // eliminate ẍ from the kinetic coupling
                let mass = b.system_mass - b.mass_transfer(&b.couplings);
                let mut f = self.potential.force(q);
                for a in 0..n {
                    f -= b.couplings[a] * b.omegas[a].powi(2) * y[1 + a];
                }
                let qdd = f / mass;
                dy[n + 1] = qdd;
                for a in 0..n {
                    dy[n + 2 + a] =
                        -b.omegas[a].powi(2) * y[1 + a] + b.couplings[a] * qdd / b.masses[a];
                }
            }
            BathCoupling::Inductive => {
                let mut f = self.potential.force(q) - b.potential_shift * q;
                for a in 0..n {
                    f -= b.couplings[a] * y[1 + a];
                }
                dy[n + 1] = f / b.system_mass;
                for a in 0..n {
                    dy[n + 2 + a] =
                        -b.omegas[a].powi(2) * y[1 + a] - b.couplings[a] * q / b.masses[a];
                }
            }
        }
    }
}

/// Trajectories of `q` from both forms on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryComparison {
    pub times: Vec<f64>,
    pub q_original: Vec<f64>,
    pub q_mapped: Vec<f64>,
    pub max_abs_diff: f64,
    pub amplitude: f64,
    /// Longest normal-mode period of the linearised system, s.
    pub period: f64,
}

/// Longest period among the linearised normal modes of an inductive bath.
fn fundamental_period(ind: &BathMap, potential: Anharmonic) -> Result<f64, SpectralError> {
    let n = ind.masses.len();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    let mut inv_sqrt_m = vec![1.0 / ind.system_mass.sqrt()];
    inv_sqrt_m.extend(ind.masses.iter().map(|m| 1.0 / m.sqrt()));
    k[(0, 0)] = potential.stiffness + ind.potential_shift;
    for a in 0..n {
        k[(0, a + 1)] = ind.couplings[a];
        k[(a + 1, 0)] = ind.couplings[a];
        k[(a + 1, a + 1)] = ind.masses[a] * ind.omegas[a].powi(2);
    }
    let scaled = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        inv_sqrt_m[i] * k[(i, j)] * inv_sqrt_m[j]
    });
    let smallest = scaled.symmetric_eigenvalues().min();
    if !(smallest > 0.0) {
        return Err(SpectralError::InvalidParameter {
            name: "lowest normal-mode frequency squared",
            value: smallest,
        });
    }
    Ok(2.0 * PI / smallest.sqrt())
}

/// Sample `q` every `dt` up to `t_end`. Each interval is a fresh solve that
/// ends on a full step, so no dense-output interpolation enters the samples.
fn integrate(
    bath: &BathMap,
    potential: Anharmonic,
    y0: DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Vec<f64>, SpectralError> {
    let steps = (t_end / dt).round() as usize;
    let mut y = y0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y[0]);
    for i in 0..steps {
        let eq = BathEquations { bath, potential };
        let (t0, t1) = (i as f64 * dt, (i + 1) as f64 * dt);
        let mut solver = Dop853::new(eq, t0, t1, dt, y.clone(), 1e-14, 1e-16);
        solver.set_output(ode_solvers::OutputType::Sparse);
        solver
            .integrate()
            .map_err(|e| SpectralError::Integration(format!("{e:?}")))?;
        y = solver
            .y_out()
            .last()
            .cloned()
            .ok_or_else(|| SpectralError::Integration("no output".into()))?;
        out.push(y[0]);
    }
    Ok(out)
}

/// Integrate a capacitive bath and its inductive image with the same
/// integrator from corresponding initial data and compare `q(t)`.
pub fn compare_bath_trajectories(
    capacitive: &BathMap,
    potential: Anharmonic,
    q0: (f64, f64),
    x0: &[f64],
    xdot0: &[f64],
    periods: f64,
) -> Result<TrajectoryComparison, SpectralError> {
    if capacitive.form != BathCoupling::Capacitive {
        return Err(SpectralError::InvalidParameter {
            name: "form (expected capacitive)",
            value: 0.0,
        });
    }
    let (mapped, _) = caldeira_leggett_map(capacitive)?;
    let n = capacitive.masses.len();
    if x0.len() != n || xdot0.len() != n {
        return Err(SpectralError::InvalidParameter {
            name: "initial bath state length",
            value: x0.len() as f64,
        });
    }
    let period = fundamental_period(&mapped, potential)?;
    let t_end = periods * period;
    let dt = period / 50.0;
    let mut y_orig = DVector::zeros(2 * n + 2);
    let mut y_map = DVector::zeros(2 * n + 2);
    y_orig[0] = q0.0;
    y_orig[n + 1] = q0.1;
    y_map[0] = q0.0;
    y_map[n + 1] = q0.1;
    for a in 0..n {
        y_orig[1 + a] = x0[a];
        y_orig[n + 2 + a] = xdot0[a];
        y_map[1 + a] = x0[a] - mapped.offsets[a] * q0.0;
        y_map[n + 2 + a] = xdot0[a] - mapped.offsets[a] * q0.1;
    }
    let q_original = integrate(capacitive, potential, y_orig, t_end, dt)?;
    let q_mapped = integrate(&mapped, potential, y_map, t_end, dt)?;
    let len = q_original.len().min(q_mapped.len());
    let max_abs_diff = q_original[..len]
        .iter()
        .zip(&q_mapped[..len])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let amplitude = q_original.iter().map(|q| q.abs()).fold(0.0, f64::max);
    Ok(TrajectoryComparison {
        times: (0..len).map(|i| i as f64 * dt).collect(),
        q_original,
        q_mapped,
        max_abs_diff,
        amplitude,
        period,
    })
}

/// Indices `lo..=hi` thinned to about `per_decade` log-spaced points.
pub fn log_indices(lo: usize, hi: usize, per_decade: usize) -> Vec<usize> {
    let (a, b) = ((lo.max(1)) as f64, hi as f64);
    let count = (((b / a).log10() * per_decade as f64).ceil() as usize).max(1);
    let mut out: Vec<usize> = (0..=count)
        .map(|i| (a * (b / a).powf(i as f64 / count as f64)).round() as usize)
        .collect();
    if lo == 0 {
        out.insert(0, 0);
    }
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit_model::LineSegment;
    use crate::mode_basis::build_finite_modes;
    use crate::quadrature::{integrate_half_line, Tolerance};
    use crate::secular_solver::{solve_point_secular, BoundaryParams, DEFAULT_TOL};

    const C: f64 = 249e-12;
    const L: f64 = 623e-9;
    const LEN: f64 = 4.7e-3;

    fn device_alpha() -> f64 {
        let (cg, cj) = (40.3e-15, 5.13e-15);
        cg * cj / (C * (cg + cj))
    }

    fn basis(alpha: f64, beta: f64, len: f64, n: usize, n_alpha: f64) -> ModeBasis {
        let bp = BoundaryParams::point(alpha, beta);
        let ks = solve_point_secular(bp, len, n, DEFAULT_TOL).unwrap();
        build_finite_modes(&ks, bp, &LineSegment::shorted(C, L, len), n_alpha).unwrap()
    }

    #[test]
    fn synthetic_power_law_fit() {
        let s: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let w = 10f64.powf(i as f64 / 50.0);
                (w, w * w)
            })
            .collect();
        let fit = fit_asymptotic_exponent(&s, FitWindow::new(1.0, 1e3)).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-6 && fit.stderr < 1e-6);
        assert!(fit.decades >= 2.9);
        // too narrow, too few
        assert!(matches!(
            fit_asymptotic_exponent(&s, FitWindow::new(1.0, 5.0)),
            Err(SpectralError::InsufficientSpan { .. })
        ));
        assert!(matches!(
            fit_asymptotic_exponent(&s[..10], FitWindow::new(1.0, 1e3)),
            Err(SpectralError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn crossover_window_is_rejected() {
        let s: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let w = 10f64.powf(-3.0 + i as f64 / 50.0);
                (w, w / (1.0 + w * w))
            })
            .collect();
        let err = fit_asymptotic_exponent(&s, FitWindow::new(0.1, 10.0)).unwrap_err();
        assert!(matches!(err, SpectralError::NotPowerLaw { .. }), "{err}");
        // far from the crossover both sides are clean
        let low = fit_asymptotic_exponent(&s, FitWindow::new(1e-3, 1e-1)).unwrap();
        assert!((low.slope - 1.0).abs() < 0.01);
    }

    #[test]
    fn inductive_tail_and_gauge() {
        let alpha = device_alpha();
        let beta = 1e-9 / L;
        let b1 = basis(alpha, beta, LEN, 10_000, 1e-12);
        let b2 = basis(alpha, beta, LEN, 10_000, 3.7e-9);
        let j1 = inductive_spectral(&b1, 1e-9, Site::Coupling).unwrap();
        let j2 = inductive_spectral(&b2, 1e-9, Site::Coupling).unwrap();
        for (a, b) in j1.weight.iter().zip(&j2.weight) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        let tail: Vec<f64> = (5000..10_000)
            .step_by(1000)
            .map(|n| j1.weight[n] * (n as f64).powi(3))
            .collect();
        let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            / tail.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1.01, "{tail:?}");
        let top = j1.omega[9999];
        let fit =
            fit_asymptotic_exponent(&j1.samples(), FitWindow::new(j1.omega[999], top)).unwrap();
        assert!((fit.slope + 3.0).abs() < 0.05, "{fit:?}");
        assert!(inductive_spectral(&b1, f64::INFINITY, Site::Coupling)
            .unwrap()
            .is_empty());
        assert!(inductive_spectral(&b1, 1e-9, Site::Far).is_err());
    }

    #[test]
    fn smoothed_density_quadrature() {
        let b = basis(device_alpha(), 1e-9 / L, LEN, 300, 1e-12);
        let j = inductive_spectral(&b, 1e-9, Site::Coupling).unwrap();
        let width = 0.3 * (j.omega[1] - j.omega[0]);
        let tol = Tolerance {
            abs: 0.0,
            rel: 1e-10,
            max_intervals: 200_000,
        };
        let quad = integrate_half_line(|w| j.smoothed(w, width), j.omega[0], tol)
            .unwrap()
            .value;
        let exact: f64 = j
            .samples()
            .iter()
            .map(|(w0, w)| w * (0.5 + (w0 / width).atan() / PI))
            .sum();
        assert!((quad / exact - 1.0).abs() < 1e-6, "{quad} {exact}");
        // bins capture everything inside their range
        let edges = [0.0, j.omega[100], f64::INFINITY];
        let bins = j.binned(&edges);
        assert!((bins[0] + bins[1] - j.total()).abs() < 1e-12 * j.total());
    }

    #[test]
    fn spin_capacitive_slopes() {
        let b = basis(device_alpha(), f64::INFINITY, LEN, 10_000, 1e-12);
        let j = spin_capacitive_spectral(&b, 1.0, Site::Coupling).unwrap();
        let fit =
            fit_asymptotic_exponent(&j.samples(), FitWindow::new(j.omega[900], j.omega[9999]))
                .unwrap();
        assert!((fit.slope + 1.0).abs() < 0.05, "{fit:?}");
        let zero = spin_capacitive_spectral(&b, 0.0, Site::Coupling).unwrap();
        assert!(zero.weight.iter().all(|&w| w == 0.0));
        // ohmic side: a short capacitive length puts n_c near 1.6e4
        let small = basis(1e-8, f64::INFINITY, LEN, 3300, 1e-12);
        let j = spin_capacitive_spectral(&small, 1.0, Site::Coupling).unwrap();
        let fit = fit_asymptotic_exponent(&j.samples(), FitWindow::new(j.omega[0], j.omega[3299]))
            .unwrap();
        assert!((fit.slope - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn halfline_closed_forms_match_modes() {
        let alpha = device_alpha();
        for beta in [f64::INFINITY, 3e-3, 0.5] {
            let h = halfline_spectral(alpha, beta, C, L, 2.5).unwrap();
            for i in 0..200 {
                let w = h.omega_alpha() * 10f64.powf(-4.0 + i as f64 * 0.04);
                let (a, b) = (h.j_c(w), h.j_c_from_modes(w).unwrap());
                assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{w} {a} {b}");
                let (a, b) = (h.j_l(w), h.j_l_from_modes(w).unwrap());
                assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{w} {a} {b}");
            }
        }
        assert!(halfline_spectral(0.0, 1.0, C, L, 1.0).is_err());
        assert!(halfline_spectral(-1.0, 1.0, C, L, 1.0).is_err());
    }

    #[test]
    fn halfline_limits_and_peak() {
        let alpha = device_alpha();
        let h = halfline_spectral(alpha, f64::INFINITY, C, L, 1.0).unwrap();
        let wa = h.omega_alpha();
        let grid: Vec<f64> = (0..4001)
            .map(|i| wa * 10f64.powf(-2.0 + i as f64 * 1e-3))
            .collect();
        let peak = grid
            .iter()
            .copied()
            .max_by(|a, b| h.j_c(*a).total_cmp(&h.j_c(*b)))
            .unwrap();
        assert!((peak / wa - 1.0).abs() < 0.2);
        // J^C/ω and J^C·ω settle at the two ends
        let r = |f: &dyn Fn(f64) -> f64, w1: f64, w2: f64| f(w1) / f(w2);
        let jc_over = |w: f64| h.j_c(w) / w;
        let jc_times = |w: f64| h.j_c(w) * w;
        assert!((r(&jc_over, wa * 1e-6, wa * 1e-5) - 1.0).abs() < 1e-6);
        assert!((r(&jc_times, wa * 1e6, wa * 1e5) - 1.0).abs() < 1e-6);
        // with inductive coupling J^L ω³ settles and the low end is ohmic
        let hl = halfline_spectral(alpha, 3e-3, C, L, 1.0).unwrap();
        let jl3 = |w: f64| hl.j_l(w) * w.powi(3);
        assert!((r(&jl3, wa * 1e6, wa * 1e5) - 1.0).abs() < 1e-6);
        let samples: Vec<(f64, f64)> = grid
            .iter()
            .map(|&w| (w * 1e-6, hl.shape_l(w * 1e-6)))
            .collect();
        let low = fit_asymptotic_exponent(&samples, FitWindow::new(wa * 1e-8, wa * 1e-7)).unwrap();
        assert!((low.slope - 1.0).abs() < 1e-3);
        // without it the same shape falls as 1/ω at low frequency
        let samples: Vec<(f64, f64)> = grid
            .iter()
            .map(|&w| (w * 1e-6, h.shape_l(w * 1e-6)))
            .collect();
        let low = fit_asymptotic_exponent(&samples, FitWindow::new(wa * 1e-8, wa * 1e-7)).unwrap();
        assert!((low.slope + 1.0).abs() < 1e-3);
        assert_eq!(h.j_l(wa), 0.0);
    }

    fn galvanic_device(f_eps: f64) -> GalvanicDevice {
        GalvanicDevice {
            alpha: 2e-5,
            beta: 4e-2,
            c: C,
            l: L,
            r: [1.0, 1.0, 0.7],
            e_j: 6.626e-34 * 200e9,
            f_eps,
        }
    }

    fn slope(g: &GalvanicCouplings, ch: GalvanicChannel, k0: f64, k1: f64) -> f64 {
        let s: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let k = k0 * (k1 / k0).powf(i as f64 / 100.0);
                (g.omega(k), g.g(ch, k))
            })
            .collect();
        fit_asymptotic_exponent(&s, FitWindow::new(g.omega(k0), g.omega(k1)))
            .unwrap()
            .slope
    }

    #[test]
    fn galvanic_laws_and_ordering() {
        let g = galvanic_infinite_couplings(galvanic_device(0.1)).unwrap();
        let (a, b) = (g.device.alpha, g.device.beta);
        let (k_lo, k_hi) = (1e-2 * 2.0 / b, 1e2 / (2.0 * a));
        use GalvanicChannel::*;
        let cases = [
            (Capacitive1, 1.5, -0.5),
            (Capacitive2, 1.5, -0.5),
            (Inductive, 0.5, -1.5),
        ];
        for (ch, lo, hi) in cases {
            let s0 = slope(&g, ch, k_lo / 100.0, k_lo);
            let s1 = slope(&g, ch, k_hi, k_hi * 100.0);
            assert!(
                (s0 - lo).abs() < 0.05 && (s1 - hi).abs() < 0.05,
                "{ch:?} {s0} {s1}"
            );
        }
        assert!(g.peak_wavenumber(Inductive) < g.peak_wavenumber(Capacitive1));
        // limits of the jump
        let k = 1e-4 / b;
        assert!((g.delta_u(k) / (b * k / (2.0 * PI).sqrt()) - 1.0).abs() < 1e-6);
        let k = 1e6 / a;
        assert!((g.delta_u(k) * a * k * (2.0 * PI).sqrt() - 1.0).abs() < 1e-6);
        let quarter = galvanic_infinite_couplings(galvanic_device(0.25)).unwrap();
        assert!((0..50).all(|i| quarter.g_l(10f64.powf(i as f64 / 5.0)) == 0.0));
        let mut bad = galvanic_device(0.1);
        bad.r[2] = f64::NAN;
        assert!(galvanic_infinite_couplings(bad).is_err());
    }

    #[test]
    fn bath_map_simple_cases() {
        let bath = BathMap::capacitive(2.0, vec![3.0], vec![1.5], vec![0.6]);
        let (ind, j) = caldeira_leggett_map(&bath).unwrap();
        assert!((ind.system_mass - (2.0 - 0.36 / 3.0)).abs() < 1e-15);
        assert!((ind.potential_shift - 0.36 * 2.25 / 3.0).abs() < 1e-15);
        assert!((ind.couplings[0] - 0.6 * 2.25).abs() < 1e-15);
        assert!((j.weight[0] - 0.36 * 1.5f64.powi(3) / 3.0).abs() < 1e-15);
        let (back, j2) = caldeira_leggett_map(&ind).unwrap();
        assert!((back.system_mass - 2.0).abs() < 1e-15);
        assert!((back.couplings[0] - 0.6).abs() < 1e-15);
        assert!((j2.weight[0] - j.weight[0]).abs() < 1e-15);
        let free = BathMap::capacitive(2.0, vec![3.0, 1.0], vec![1.5, 2.0], vec![0.0, 0.0]);
        let (same, _) = caldeira_leggett_map(&free).unwrap();
        assert_eq!(same.system_mass, 2.0);
        assert_eq!(same.potential_shift, 0.0);
        assert!(same
            .couplings
            .iter()
            .chain(&same.offsets)
            .all(|&v| v == 0.0));
        let zero_mass = BathMap::capacitive(2.0, vec![0.0], vec![1.0], vec![0.1]);
        assert!(matches!(
            caldeira_leggett_map(&zero_mass),
            Err(SpectralError::NonPositiveMass { .. })
        ));
        let mut off = ind.clone();
        off.potential_shift *= 1.01;
        assert!(matches!(
            caldeira_leggett_map(&off),
            Err(SpectralError::NotInImage { .. })
        ));
    }

    #[test]
    fn three_oscillator_trajectories_agree() {
        let bath = BathMap::capacitive(
            1.0,
            vec![0.7, 1.3, 2.0],
            vec![0.8, 1.7, 3.1],
            vec![0.2, -0.25, 0.3],
        );
        let pot = Anharmonic {
            stiffness: 1.0,
            quartic: 0.3,
        };
        let cmp = compare_bath_trajectories(
            &bath,
            pot,
            (0.5, 0.0),
            &[0.1, -0.05, 0.02],
            &[0.0, 0.1, 0.0],
            10.0,
        )
        .unwrap();
        assert!(cmp.times.len() > 400);
        assert!(cmp.amplitude > 0.1);
        assert!(cmp.max_abs_diff <= 1e-8, "{}", cmp.max_abs_diff);
    }
}
