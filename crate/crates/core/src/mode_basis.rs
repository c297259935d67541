//! Normalised line modes, their endpoint data and the completeness sums.
//!
//! Mode `n` has wavenumber `k_n` and shape `u_n(x) = A_n φ_n(x)` with the
//! amplitude fixed by `c(∫u_n² + α u_n(x₀)²) = N_α`. The sign is chosen so
//! that the endpoint value (or jump) is non-negative.

use crate::circuit_model::LineSegment;
use crate::quadrature::{self, QuadratureError, Tolerance};
use crate::secular_solver::{BoundaryParams, ModeFamily, ProblemKind, WavenumberSet};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("wavenumbers were solved for {solved:?}, basis requested for {requested:?}")]
    ParamsMismatch {
        solved: BoundaryParams,
        requested: BoundaryParams,
    },
    #[error("invalid parameter {name} = {value:e}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("mode index {index} out of range (basis has {len} modes)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Normalised discrete modes of a finite line.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    pub k: Vec<f64>,
    /// Amplitude multiplying the shape function of each mode.
    pub amplitude: Vec<f64>,
    /// `u_n(x₀)` at the coupling point, or the jump `Δu_n(0)` for galvanic.
    pub endpoint: Vec<f64>,
    pub family: Vec<ModeFamily>,
    pub params: BoundaryParams,
    /// Normalisation constant, F.
    pub n_alpha: f64,
    pub line: LineSegment,
    /// Line length, or half-length for the galvanic geometry, m.
    pub length: f64,
    /// Amplitude of the right piece in the insertion geometry, or the phase
    /// `ψ₀` for networks at both ends.
    amplitude_right: Vec<f64>,
}

/// Raw shape without amplitude; for the insertion geometry the left and
/// right pieces carry their own weights.
fn shape(
    kind: ProblemKind,
    family: ModeFamily,
    k: f64,
    length: f64,
    x: f64,
    right: f64,
) -> (f64, f64) {
    match kind {
        ProblemKind::PointEnd => {
            let (s, c) = (k * (length - x)).sin_cos();
            (s, -k * c)
        }
        ProblemKind::PointEndOpen => {
            let (s, c) = (k * (length - x)).sin_cos();
            (c, k * s)
        }
        ProblemKind::GalvanicMid => {
            let (s, c) = (k * (length - x.abs())).sin_cos();
            match family {
                ModeFamily::Coupled => {
                    let sg = if x < 0.0 { -1.0 } else { 1.0 };
                    (sg * s, -k * c)
                }
                ModeFamily::Uncoupled => {
                    let sg = if x < 0.0 { -1.0 } else { 1.0 };
                    (s, -sg * k * c)
                }
            }
        }
        ProblemKind::PointBothEnds { .. } => {
            // `right` carries the phase ψ₀
            let (s, c) = (k * x + right).sin_cos();
            (c, -k * s)
        }
        ProblemKind::PointInsertion { position } => {
            if x <= position {
                let (wl, _) = insertion_weights(k, length, position);
                let (s, c) = (k * x).sin_cos();
                (wl * s, wl * k * c)
            } else {
                let (s, c) = (k * (length - x)).sin_cos();
                (right * s, -right * k * c)
            }
        }
    }
}

/// Relative weights `(left, right)` of the two insertion pieces, chosen so
/// the mode is continuous at the insertion point.
fn insertion_weights(k: f64, length: f64, position: f64) -> (f64, f64) {
    let a = (k * (length - position)).sin();
    let b = (k * position).sin();
    let scale = 1e-8;
    if a.abs() > scale || b.abs() > scale {
        (a, b)
    } else {
        // both pieces vanish at the insertion point: continuity is automatic,
        // the slope condition fixes the ratio instead
        ((k * (length - position)).cos(), -(k * position).cos())
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ModeError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModeError::InvalidParameter { name, value })
    }
}

/// Normalise the solved wavenumbers into a mode basis.
pub fn build_finite_modes(
    ks: &WavenumberSet,
    bp: BoundaryParams,
    line: &LineSegment,
    n_alpha: f64,
) -> Result<ModeBasis, ModeError> {
    if ks.params != bp {
        return Err(ModeError::ParamsMismatch {
            solved: ks.params,
            requested: bp,
        });
    }
    check_positive("N_alpha", n_alpha)?;
    check_positive("c", line.c)?;
    check_positive("l", line.l)?;
    let length = ks.length;
    let (alpha, c) = (bp.alpha, line.c);
    let n = ks.len();
    let mut amplitude = Vec::with_capacity(n);
    let mut amplitude_right = Vec::with_capacity(n);
    let mut endpoint = Vec::with_capacity(n);
    for (&k, &family) in ks.k.iter().zip(&ks.family) {
        let (s, co) = (k * length).sin_cos();
        // ∫ φ² over the line, the endpoint value of φ and the right-piece weight
        let (integral, value, right) = match bp.kind {
            ProblemKind::PointEnd => (0.5 * length - s * co / (2.0 * k), s, 0.0),
            ProblemKind::PointEndOpen => (0.5 * length + s * co / (2.0 * k), co, 0.0),
            ProblemKind::GalvanicMid => match family {
                ModeFamily::Coupled => (length - s * co / k, 2.0 * s, 0.0),
                ModeFamily::Uncoupled => (length - s * co / k, 0.0, 0.0),
            },
            ProblemKind::PointBothEnds { .. } => {
                let psi = (alpha * k
                    - if bp.beta.is_infinite() {
                        0.0
                    } else {
                        1.0 / (bp.beta * k)
                    })
                .atan();
                let integral = 0.5 * length
                    + ((2.0 * (k * length + psi)).sin() - (2.0 * psi).sin()) / (4.0 * k);
                (integral, psi.cos(), psi)
            }
            ProblemKind::PointInsertion { position } => {
                let (wl, wr) = insertion_weights(k, length, position);
                let sq = |w: f64, len: f64| {
                    let (s2, c2) = (k * len).sin_cos();
                    w * w * (0.5 * len - s2 * c2 / (2.0 * k))
                };
                let integral = sq(wl, position) + sq(wr, length - position);
                (integral, wl * (k * position).sin(), wr)
            }
        };
        let far = match bp.kind {
            ProblemKind::PointBothEnds { alpha_far, .. } => {
                alpha_far * (k * length + right).cos().powi(2)
            }
            _ => 0.0,
        };
        let mut amp = (n_alpha / (c * (integral + alpha * value * value + far))).sqrt();
        if value < 0.0 {
            amp = -amp;
        }
        amplitude.push(amp);
        amplitude_right.push(match bp.kind {
            ProblemKind::PointBothEnds { .. } => right,
            _ => amp * right,
        });
        endpoint.push(amp * value);
    }
    Ok(ModeBasis {
        k: ks.k.clone(),
        amplitude,
        endpoint,
        family: ks.family.clone(),
        params: bp,
        n_alpha,
        line: *line,
        length,
        amplitude_right,
    })
}

/// Partial sums and extrapolated limits of the two completeness identities.
#[derive(Debug, Clone, PartialEq)]
pub struct SumRuleReport {
    pub n_trunc: usize,
    /// `α Σ c u_n²/N_α` over `n < n_trunc`.
    pub s1_partial: f64,
    /// `(1/β) Σ c u_n²/(N_α k_n²)`, absent without inductive coupling.
    pub s2_partial: Option<f64>,
    pub s1_extrapolated: f64,
    pub s2_extrapolated: Option<f64>,
    /// Limit of the second sum for this geometry.
    pub s2_target: Option<f64>,
    /// Coefficient `C` of the fitted deficit `C/N` of the first sum.
    pub s1_deficit_coefficient: f64,
}

impl ModeBasis {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    /// Angular frequency `k_n/√(lc)`, rad/s.
    pub fn omega(&self, n: usize) -> f64 {
        self.k[n] * self.line.phase_velocity()
    }

    /// Frequency `ω_n/2π`, Hz.
    pub fn frequency(&self, n: usize) -> f64 {
        self.omega(n) / (2.0 * PI)
    }

    /// Endpoint value divided by `√N_α`; independent of the normalisation.
    pub fn normalized_endpoint(&self, n: usize) -> f64 {
        self.endpoint[n] / self.n_alpha.sqrt()
    }

    /// `u_n(L)` for networks at both ends.
    pub fn far_endpoint(&self, n: usize) -> Option<f64> {
        match self.params.kind {
            ProblemKind::PointBothEnds { .. } => Some(self.eval(n, self.length).0),
            _ => None,
        }
    }

    /// Far-end dressing lengths when a second network sits at `x = L`.
    fn far_params(&self) -> Option<(f64, f64)> {
        match self.params.kind {
            ProblemKind::PointBothEnds {
                alpha_far,
                beta_far,
            } => Some((alpha_far, beta_far)),
            _ => None,
        }
    }

    /// Integration domain and the interior points where modes have kinks.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.params.kind {
            ProblemKind::GalvanicMid => vec![-self.length, 0.0, self.length],
            ProblemKind::PointInsertion { position } => vec![0.0, position, self.length],
            _ => vec![0.0, self.length],
        }
    }

    /// Mode value and slope at `x`.
    pub fn eval(&self, n: usize, x: f64) -> (f64, f64) {
        let kind = self.params.kind;
        if let ProblemKind::PointInsertion { position } = kind {
            if x > position {
                // right piece already carries its full amplitude
                return shape(
                    kind,
                    self.family[n],
                    self.k[n],
                    self.length,
                    x,
                    self.amplitude_right[n],
                );
            }
        }
        let extra = match kind {
            ProblemKind::PointBothEnds { .. } => self.amplitude_right[n],
            _ => 0.0,
        };
        let (v, d) = shape(kind, self.family[n], self.k[n], self.length, x, extra);
        (self.amplitude[n] * v, self.amplitude[n] * d)
    }

    fn quad<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        oscillations: f64,
        scale: f64,
    ) -> Result<f64, ModeError> {
        let outer = self.breakpoints();
        let panels = (oscillations.ceil() as usize).clamp(1, 4096);
        let mut breaks = Vec::new();
        for w in outer.windows(2) {
            for i in 0..panels {
                breaks.push(w[0] + (w[1] - w[0]) * i as f64 / panels as f64);
            }
        }
        breaks.push(*outer.last().unwrap());
        let tol = Tolerance {
            abs: 1e-13 * scale,
            rel: 1e-13,
            max_intervals: 200_000,
        };
        Ok(quadrature::integrate_with_breaks(&mut f, &breaks, tol)?.value)
    }

    fn check_index(&self, n: usize) -> Result<(), ModeError> {
        if n < self.len() {
            Ok(())
        } else {
            Err(ModeError::IndexOutOfRange {
                index: n,
                len: self.len(),
            })
        }
    }

    /// `c(∫u_n u_m + α u_n(x₀) u_m(x₀))` by quadrature.
    pub fn inner_alpha(&self, n: usize, m: usize) -> Result<f64, ModeError> {
        self.check_index(n)?;
        self.check_index(m)?;
        let osc = (self.k[n] + self.k[m]) * self.length / PI;
        let bulk = self.quad(
            |x| self.eval(n, x).0 * self.eval(m, x).0,
            osc,
            self.n_alpha / self.line.c,
        )?;
        let far = match self.far_params() {
            Some((alpha_far, _)) => {
                alpha_far * self.far_endpoint(n).unwrap() * self.far_endpoint(m).unwrap()
            }
            None => 0.0,
        };
        Ok(self.line.c * (bulk + self.alpha() * self.endpoint[n] * self.endpoint[m] + far))
    }

    /// `(1/l)(∫u_n' u_m' + u_n(x₀) u_m(x₀)/β)` by quadrature.
    pub fn inner_inv_beta(&self, n: usize, m: usize) -> Result<f64, ModeError> {
        self.check_index(n)?;
        self.check_index(m)?;
        let osc = (self.k[n] + self.k[m]) * self.length / PI;
        let scale = self.k[n] * self.k[m] * self.n_alpha / self.line.c;
        let bulk = self.quad(|x| self.eval(n, x).1 * self.eval(m, x).1, osc, scale)?;
        let mut boundary = if self.beta().is_infinite() {
            0.0
        } else {
            self.endpoint[n] * self.endpoint[m] / self.beta()
        };
        if let Some((_, beta_far)) = self.far_params() {
            if beta_far.is_finite() {
                boundary +=
                    self.far_endpoint(n).unwrap() * self.far_endpoint(m).unwrap() / beta_far;
            }
        }
        Ok((bulk + boundary) / self.line.l)
    }

    /// Line inductive length seen from the coupling point for a static
    /// current: `L` for an end with a short, `2L` for the galvanic
    /// insertion, `x₀(L−x₀)/L` for a shunt at `x₀`, infinite for an open end,
    /// and `L + β_far` through a far-end network.
    pub fn static_length(&self) -> f64 {
        match self.params.kind {
            ProblemKind::PointEnd => self.length,
            ProblemKind::PointEndOpen => f64::INFINITY,
            ProblemKind::GalvanicMid => 2.0 * self.length,
            ProblemKind::PointInsertion { position } => {
                position * (self.length - position) / self.length
            }
            ProblemKind::PointBothEnds { beta_far, .. } => self.length + beta_far,
        }
    }

    /// Limit of the second completeness sum, `R/(R + β)`.
    pub fn s2_target(&self) -> Option<f64> {
        let beta = self.beta();
        if beta.is_infinite() {
            return None;
        }
        let r = self.static_length();
        Some(if r.is_infinite() { 1.0 } else { r / (r + beta) })
    }

    /// Running partial sums of both completeness identities.
    pub fn partial_sums(&self) -> (Vec<f64>, Option<Vec<f64>>) {
        let w = self.line.c / self.n_alpha;
        let mut s1 = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for &u in &self.endpoint {
            acc += self.alpha() * w * u * u;
            s1.push(acc);
        }
        let s2 = (!self.beta().is_infinite()).then(|| {
            let mut acc = 0.0;
            self.endpoint
                .iter()
                .zip(&self.k)
                .map(|(&u, &k)| {
                    acc += w * u * u / (self.beta() * k * k);
                    acc
                })
                .collect()
        });
        (s1, s2)
    }
}

/// Least-squares fit of `S(N) = S∞ − C/N` over the last decade of partial
/// sums. Returns `(S∞, C)`.
fn extrapolate(partial: &[f64]) -> (f64, f64) {
    let n = partial.len();
    let start = (n / 10).max(1);
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &s) in partial.iter().enumerate().skip(start - 1) {
        let x = 1.0 / (i + 1) as f64;
        sx += x;
        sy += s;
        sxx += x * x;
        sxy += x * s;
        m += 1.0;
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    (intercept, -slope)
}

/// Check both completeness sums on the first `n_trunc` modes.
pub fn verify_sum_rules(basis: &ModeBasis, n_trunc: usize) -> Result<SumRuleReport, ModeError> {
    if n_trunc < 10 {
        return Err(ModeError::InvalidParameter {
            name: "n_trunc",
            value: n_trunc as f64,
        });
    }
    if n_trunc > basis.len() {
        return Err(ModeError::IndexOutOfRange {
            index: n_trunc - 1,
            len: basis.len(),
        });
    }
    let (s1, s2) = basis.partial_sums();
    let (s1_ext, c1) = extrapolate(&s1[..n_trunc]);
    Ok(SumRuleReport {
        n_trunc,
        s1_partial: s1[n_trunc - 1],
        s2_partial: s2.as_ref().map(|s| s[n_trunc - 1]),
        s1_extrapolated: s1_ext,
        s2_extrapolated: s2.as_ref().map(|s| extrapolate(&s[..n_trunc]).0),
        s2_target: basis.s2_target(),
        s1_deficit_coefficient: c1,
    })
}

/// Coupling geometry of a continuum family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuumKind {
    /// Half-line attached at its end.
    Point,
    /// Infinite line with the network in series at the origin; the value is
    /// the magnitude of the jump.
    Galvanic,
}

/// Endpoint value `u_k(0)` of the delta-normalised continuum mode.
pub fn continuum_mode_at_origin(
    k: f64,
    alpha: f64,
    beta: f64,
    kind: ContinuumKind,
) -> Result<f64, ModeError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(ModeError::InvalidParameter {
            name: "k",
            value: k,
        });
    }
    if !(alpha >= 0.0) {
        return Err(ModeError::InvalidParameter {
            name: "alpha",
            value: alpha,
        });
    }
    if !(beta > 0.0) {
        return Err(ModeError::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    let inv_beta = if beta.is_infinite() { 0.0 } else { 1.0 / beta };
    let weight = match kind {
        ContinuumKind::Point => 1.0,
        ContinuumKind::Galvanic => 4.0,
    };
    // k/√(k² + w(αk² − 1/β)²), written to avoid overflow at large k
    let h = alpha * k - inv_beta / k;
    Ok((2.0 / PI).sqrt() / (1.0 + weight * h * h).sqrt())
}

/// Continuum completeness integrals of the half-line family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumSums {
    /// `∫ u_k(0)² dk`; equals `1/α`.
    pub i1: f64,
    /// `∫ u_k(0)²/k² dk`; equals `β`, absent when `β` is infinite.
    pub i2: Option<f64>,
    /// `|α I1 − 1|`.
    pub i1_error: f64,
    /// `|I2/β − 1|`.
    pub i2_error: Option<f64>,
}

/// Integrate the continuum sums by adaptive quadrature on `(0, ∞)`.
pub fn verify_continuum_sum_rules(
    alpha: f64,
    beta: f64,
    tol: Tolerance,
) -> Result<ContinuumSums, ModeError> {
    check_positive("alpha", alpha)?;
    if !(beta > 0.0) {
        return Err(ModeError::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    let scale = if beta.is_infinite() {
        1.0 / alpha
    } else {
        1.0 / (alpha * beta).sqrt()
    };
    let u2 = |k: f64| {
        continuum_mode_at_origin(k, alpha, beta, ContinuumKind::Point).map_or(0.0, |u| u * u)
    };
    let rel = Tolerance { abs: 0.0, ..tol };
    let i1 = quadrature::integrate_half_line(u2, scale, rel)?.value;
    let i2 = if beta.is_infinite() {
        None
    } else {
        Some(quadrature::integrate_half_line(|k| u2(k) / (k * k), scale, rel)?.value)
    };
    Ok(ContinuumSums {
        i1,
        i2,
        i1_error: (alpha * i1 - 1.0).abs(),
        i2_error: i2.map(|v| (v / beta - 1.0).abs()),
    })
}
