//! Wavenumbers of line segments whose boundary conditions contain the
//! eigenvalue itself.
//!
//! Roots are returned 0-based: index `n` of the end-coupled problem lies in
//! `(nπ/L, (n+1)π/L)`, so that the decoupled limit gives `(n + ½)π/L`.

use std::f64::consts::PI;
use std::ops::Range;
use thiserror::Error;

/// Geometry of the boundary-value problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// Network attached at `x = 0` of a line on `(0, L)` shorted at `x = L`.
    PointEnd,
    /// As `PointEnd` but with the far end left open.
    PointEndOpen,
    /// Network inserted in series at the middle of a line on `(-L, L)`
    /// shorted at both ends.
    GalvanicMid,
    /// Network shunting an interior point `position` of a line on `(0, L)`
    /// shorted at both ends.
    PointInsertion { position: f64 },
    /// Networks at both ends of a line on `(0, L)`; the dressing lengths of
    /// the far end are carried here.
    PointBothEnds { alpha_far: f64, beta_far: f64 },
}

/// Dressing lengths entering the boundary condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    /// Capacitive length, m. Zero means no capacitive connection.
    pub alpha: f64,
    /// Inductive length, m. `f64::INFINITY` means no inductive connection.
    pub beta: f64,
    pub kind: ProblemKind,
}

impl BoundaryParams {
    pub fn point(alpha: f64, beta: f64) -> Self {
        BoundaryParams {
            alpha,
            beta,
            kind: ProblemKind::PointEnd,
        }
    }

    pub fn galvanic(alpha: f64, beta: f64) -> Self {
        BoundaryParams {
            alpha,
            beta,
            kind: ProblemKind::GalvanicMid,
        }
    }

    fn check(&self) -> Result<(), SecularError> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(SecularError::InvalidParameter {
                name: "alpha",
                value: self.alpha,
            });
        }
        if !(self.beta > 0.0) {
            return Err(SecularError::InvalidParameter {
                name: "beta",
                value: self.beta,
            });
        }
        Ok(())
    }
}

/// Which family a root belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeFamily {
    /// Mode with a nonzero amplitude (or jump) at the coupling point.
    Coupled,
    /// Mode that vanishes at the coupling point (`Δu = 0` for galvanic).
    Uncoupled,
}

/// Solved wavenumbers.
#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberSet {
    /// Ascending wavenumbers, rad/m.
    pub k: Vec<f64>,
    /// Relative residual of the secular function at each root.
    pub residual: Vec<f64>,
    pub family: Vec<ModeFamily>,
    /// Iterations used by the root polish (0 for closed forms).
    pub iterations: Vec<u32>,
    pub params: BoundaryParams,
    /// Length of the line (half-length for galvanic), m.
    pub length: f64,
    /// False for geometries without reference data to validate against.
    pub validated: bool,
}

impl WavenumberSet {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecularError {
    #[error("invalid parameter {name} = {value:e}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("root {index} not converged in bracket [{lo}, {hi}] (kL units)")]
    NoConvergence { index: usize, lo: f64, hi: f64 },
    #[error("boundary parameters are for {found:?}, this solver handles {expected}")]
    WrongKind {
        expected: &'static str,
        found: ProblemKind,
    },
    #[error("asymptotic form needs n >= 1")]
    IndexZero,
    #[error("open far end without inductive connection has a k = 0 zero mode")]
    ZeroMode,
}

/// Default relative tolerance on `kL`.
pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_ITER: u32 = 200;

/// End-coupled secular function in the scaled variable `ξ = kL`:
/// `cos ξ − h(ξ) sin ξ` with `h(ξ) = aξ − b/ξ`, `a = α/L`, `b = L/β`.
///
/// With an open far end the function is `sin ξ + h(ξ) cos ξ` instead.
#[derive(Debug, Clone, Copy)]
struct EndSecular {
    a: f64,
    b: f64,
    open: bool,
}

impl EndSecular {
    fn h(&self, xi: f64) -> f64 {
        if self.b == 0.0 {
            self.a * xi
        } else {
            self.a * xi - self.b / xi
        }
    }

    fn value(&self, xi: f64) -> f64 {
        let (s, c) = xi.sin_cos();
        if self.open {
            s + self.h(xi) * c
        } else {
            c - self.h(xi) * s
        }
    }

    fn derivative(&self, xi: f64) -> f64 {
        let (s, c) = xi.sin_cos();
        let dh = self.a
            + if self.b == 0.0 {
                0.0
            } else {
                self.b / (xi * xi)
            };
        if self.open {
            c + dh * c - self.h(xi) * s
        } else {
            -s - dh * s - self.h(xi) * c
        }
    }

    /// Relative residual of `aξ² sin ξ − ξ cos ξ − b sin ξ` (short) or
    /// `ξ sin ξ + aξ² cos ξ − b cos ξ` (open).
    fn residual(&self, xi: f64) -> f64 {
        let (s, c) = xi.sin_cos();
        let terms = if self.open {
            [xi * s, self.a * xi * xi * c, -self.b * c]
        } else {
            [self.a * xi * xi * s, -xi * c, -self.b * s]
        };
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        if scale == 0.0 {
            0.0
        } else {
            terms.iter().sum::<f64>().abs() / scale
        }
    }

    /// Bracket of root `n` and the sign of the function at its lower end.
    fn bracket(&self, n: usize) -> (f64, f64, f64) {
        let parity = |m: usize| if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        if !self.open {
            (n as f64 * PI, (n + 1) as f64 * PI, parity(n))
        } else if n == 0 {
            (0.0, 0.5 * PI, -1.0)
        } else {
            ((n as f64 - 0.5) * PI, (n as f64 + 0.5) * PI, parity(n - 1))
        }
    }

    /// Safeguarded Newton inside the bracket of root `n` starting from `seed`.
    fn root(&self, n: usize, seed: f64, tol: f64) -> Result<(f64, u32), SecularError> {
        let (mut lo, mut hi, lo_sign) = self.bracket(n);
        let mut x = if seed > lo && seed < hi {
            seed
        } else {
            0.5 * (lo + hi)
        };
        for it in 1..=MAX_ITER {
            let f = self.value(x);
            if f == 0.0 {
                return Ok((x, it));
            }
            if f.signum() == lo_sign {
                lo = x;
            } else {
                hi = x;
            }
            let df = self.derivative(x);
            let newton = x - f / df;
            if df != 0.0 && newton >= lo && newton <= hi {
                if (newton - x).abs() <= tol * x {
                    return Ok((self.polish(newton, lo, hi), it));
                }
                x = newton;
            } else {
                x = 0.5 * (lo + hi);
                if hi - lo <= tol * x {
                    return Ok((self.polish(x, lo, hi), it));
                }
            }
        }
        Err(SecularError::NoConvergence { index: n, lo, hi })
    }

    /// A few extra Newton steps to reach machine precision.
    fn polish(&self, mut x: f64, lo: f64, hi: f64) -> f64 {
        for _ in 0..3 {
            let next = x - self.value(x) / self.derivative(x);
            if !(next >= lo && next <= hi) || next == x {
                break;
            }
            let step = (next - x).abs();
            x = next;
            if step <= 4.0 * f64::EPSILON * x {
                break;
            }
        }
        x
    }

    /// Initial guess from the secular equation with `h` frozen mid-bracket.
    fn seed(&self, n: usize) -> f64 {
        let (lo, hi, _) = self.bracket(n);
        let h = self.h(0.5 * (lo + hi));
        if self.open {
            if n == 0 {
                return 0.5 * (lo + hi);
            }
            n as f64 * PI + (-h).atan()
        } else {
            lo + 1.0f64.atan2(h)
        }
    }
}

/// First `n_max` roots for any geometry; `length` is the half-length for
/// galvanic insertion.
pub fn solve_secular(
    bp: BoundaryParams,
    length: f64,
    n_max: usize,
    tol: f64,
) -> Result<WavenumberSet, SecularError> {
    match bp.kind {
        ProblemKind::PointEnd | ProblemKind::PointEndOpen => {
            solve_point_secular(bp, length, n_max, tol)
        }
        ProblemKind::GalvanicMid => solve_galvanic_secular(bp, length, n_max, tol),
        ProblemKind::PointInsertion { .. } => solve_insertion_secular(bp, length, n_max, tol),
        ProblemKind::PointBothEnds { .. } => solve_two_end_secular(bp, length, n_max, tol),
    }
}

/// First `n_max` roots of `(α/L)(kL)² sin kL − kL cos kL − (L/β) sin kL = 0`.
pub fn solve_point_secular(
    bp: BoundaryParams,
    length: f64,
    n_max: usize,
    tol: f64,
) -> Result<WavenumberSet, SecularError> {
    let open = match bp.kind {
        ProblemKind::PointEnd => false,
        ProblemKind::PointEndOpen => true,
        _ => {
            return Err(SecularError::WrongKind {
                expected: "PointEnd",
                found: bp.kind,
            })
        }
    };
    bp.check()?;
    if !(length > 0.0) || !length.is_finite() {
        return Err(SecularError::InvalidParameter {
            name: "length",
            value: length,
        });
    }
    if open && bp.beta.is_infinite() {
        return Err(SecularError::ZeroMode);
    }
    let (xi, residual, iterations) =
        end_roots(bp.alpha / length, length / bp.beta, open, n_max, tol)?;
    Ok(WavenumberSet {
        k: xi.iter().map(|x| x / length).collect(),
        residual,
        family: vec![ModeFamily::Coupled; n_max],
        iterations,
        params: bp,
        length,
        validated: true,
    })
}

/// Nonzero roots of `sin kL + (α/L) kL cos kL = 0` (open far end, no
/// inductive coupling). The `k = 0` root is a free mode and is skipped, so
/// entry `n` lies in `((n + ½)π, (n + 1)π)/L`.
pub fn solve_open_nonzero(
    alpha: f64,
    length: f64,
    n_max: usize,
    tol: f64,
) -> Result<Vec<f64>, SecularError> {
    BoundaryParams::point(alpha, f64::INFINITY).check()?;
    if !(length > 0.0) || !length.is_finite() {
        return Err(SecularError::InvalidParameter {
            name: "length",
            value: length,
        });
    }
    let eq = EndSecular {
        a: alpha / length,
        b: 0.0,
        open: true,
    };
    (1..=n_max)
        .map(|n| eq.root(n, eq.seed(n), tol).map(|(x, _)| x / length))
        .collect()
}

/// Roots of the end-coupled problem at selected indices only, for sampling
/// tails far beyond what a contiguous solve can hold in memory.
pub fn point_roots_at(
    bp: BoundaryParams,
    length: f64,
    indices: &[usize],
    tol: f64,
) -> Result<Vec<f64>, SecularError> {
    let open = match bp.kind {
        ProblemKind::PointEnd => false,
        ProblemKind::PointEndOpen => true,
        _ => {
            return Err(SecularError::WrongKind {
                expected: "PointEnd",
                found: bp.kind,
            })
        }
    };
    bp.check()?;
    if !(length > 0.0) || !length.is_finite() {
        return Err(SecularError::InvalidParameter {
            name: "length",
            value: length,
        });
    }
    if open && bp.beta.is_infinite() {
        return Err(SecularError::ZeroMode);
    }
    let (a, b) = (bp.alpha / length, length / bp.beta);
    if a == 0.0 && b == 0.0 && !open {
        return Ok(indices
            .iter()
            .map(|&n| (n as f64 + 0.5) * PI / length)
            .collect());
    }
    let eq = EndSecular { a, b, open };
    indices
        .iter()
        .map(|&n| eq.root(n, eq.seed(n), tol).map(|(x, _)| x / length))
        .collect()
}

type Roots = (Vec<f64>, Vec<f64>, Vec<u32>);

fn end_roots(a: f64, b: f64, open: bool, n_max: usize, tol: f64) -> Result<Roots, SecularError> {
    if a == 0.0 && b == 0.0 && !open {
        // Neumann at the coupling point, Dirichlet at the far end
        let xi = (0..n_max).map(|n| (n as f64 + 0.5) * PI).collect();
        return Ok((xi, vec![0.0; n_max], vec![0; n_max]));
    }
    let eq = EndSecular { a, b, open };
    let mut xi = Vec::with_capacity(n_max);
    let mut residual = Vec::with_capacity(n_max);
    let mut iterations = Vec::with_capacity(n_max);
    for n in 0..n_max {
        let (x, it) = eq.root(n, eq.seed(n), tol)?;
        xi.push(x);
        residual.push(eq.residual(x));
        iterations.push(it);
    }
    Ok((xi, residual, iterations))
}

/// Newton iterations needed from the plain asymptotic guess `nπ + a/(nπ)`
/// (pulled back inside the bracket through `atan`), for diagnostics.
pub fn seeded_iterations(
    bp: BoundaryParams,
    length: f64,
    n: usize,
    tol: f64,
) -> Result<(f64, u32), SecularError> {
    bp.check()?;
    let eq = EndSecular {
        a: bp.alpha / length,
        b: length / bp.beta,
        open: false,
    };
    if n == 0 {
        return Err(SecularError::IndexZero);
    }
    // tan ξ = Aξ/(ξ² − B) with A = L/α, B = L²/(αβ)
    let big_a = length / bp.alpha;
    let big_b = length * length / (bp.alpha * bp.beta);
    let x = n as f64 * PI;
    let seed = x + (big_a * x / (x * x - big_b)).atan().rem_euclid(PI);
    let (root, it) = eq.root(n, seed, tol)?;
    Ok((root / length, it))
}

/// Roots of `k cos kL = 2(αk² − 1/β) sin kL` merged with the uncoupled
/// family `cos kL = 0`, for a line on `(−L, L)`.
pub fn solve_galvanic_secular(
    bp: BoundaryParams,
    half_length: f64,
    n_max: usize,
    tol: f64,
) -> Result<WavenumberSet, SecularError> {
    if bp.kind != ProblemKind::GalvanicMid {
        return Err(SecularError::WrongKind {
            expected: "GalvanicMid",
            found: bp.kind,
        });
    }
    bp.check()?;
    let length = half_length;
    if !(length > 0.0) || !length.is_finite() {
        return Err(SecularError::InvalidParameter {
            name: "length",
            value: length,
        });
    }
    let (xi, res, its) = end_roots(
        2.0 * bp.alpha / length,
        2.0 * length / bp.beta,
        false,
        n_max,
        tol,
    )?;
    let mut merged: Vec<(f64, f64, ModeFamily, u32)> = Vec::with_capacity(2 * n_max);
    for i in 0..n_max {
        merged.push((xi[i], res[i], ModeFamily::Coupled, its[i]));
        merged.push(((i as f64 + 0.5) * PI, 0.0, ModeFamily::Uncoupled, 0));
    }
    merged.sort_by(|p, q| p.0.total_cmp(&q.0).then((p.2 as u8).cmp(&(q.2 as u8))));
    merged.truncate(n_max);
    Ok(WavenumberSet {
        k: merged.iter().map(|m| m.0 / length).collect(),
        residual: merged.iter().map(|m| m.1).collect(),
        family: merged.iter().map(|m| m.2).collect(),
        iterations: merged.iter().map(|m| m.3).collect(),
        params: bp,
        length,
        validated: true,
    })
}

/// Roots for a network shunting an interior point of a line shorted at both
/// ends: `k sin kL = (αk² − 1/β) sin kx₀ sin k(L − x₀)`.
///
/// Divided by `sin kx₀ sin k(L−x₀)` the condition reads
/// `cot(kx₀) + cot(k(L−x₀)) − αk + 1/(βk) = 0`, which decreases strictly
/// between consecutive poles, so each pole interval holds exactly one root.
/// Coinciding poles give a mode that vanishes at `x₀`, tagged uncoupled.
/// There is no reference data for this geometry, so the result is tagged
/// as unvalidated.
pub fn solve_insertion_secular(
    bp: BoundaryParams,
    length: f64,
    n_max: usize,
    tol: f64,
) -> Result<WavenumberSet, SecularError> {
    let ProblemKind::PointInsertion { position } = bp.kind else {
        return Err(SecularError::WrongKind {
            expected: "PointInsertion",
            found: bp.kind,
        });
    };
    bp.check()?;
    if !(position > 0.0 && position < length) {
        return Err(SecularError::InvalidParameter {
            name: "position",
            value: position,
        });
    }
    let p = position / length;
    let q = 1.0 - p;
    let a = bp.alpha / length;
    let b = length / bp.beta;
    let h = |xi: f64| {
        1.0 / (p * xi).tan() + 1.0 / (q * xi).tan() - a * xi + if b == 0.0 { 0.0 } else { b / xi }
    };
    let residual_of = |xi: f64| {
        let terms = [
            xi * xi.sin(),
            -(a * xi * xi - b) * (p * xi).sin() * (q * xi).sin(),
        ];
        let scale: f64 = terms
            .iter()
            .map(|t| t.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        (terms[0] + terms[1]).abs() / scale
    };
    let mut k = Vec::with_capacity(n_max);
    let mut residual = Vec::with_capacity(n_max);
    let mut family = Vec::with_capacity(n_max);
    let mut iterations = Vec::with_capacity(n_max);
    // merged pole sequence of the two cotangents
    let (mut i, mut j) = (1usize, 1usize);
    let mut left = 0.0;
    while k.len() < n_max {
        let (pi_, pj) = (i as f64 * PI / p, j as f64 * PI / q);
        let right = pi_.min(pj);
        if (pi_ - pj).abs() <= 1e-10 * right {
            i += 1;
            j += 1;
        } else if pi_ < pj {
            i += 1;
        } else {
            j += 1;
        }
        let (mut lo, mut hi) = (left, right);
        let mut it = 0;
        while hi - lo > tol * hi && it < MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            it += 1;
        }
        let mut root = 0.5 * (lo + hi);
        for _ in 0..3 {
            let (sp, sq) = ((p * root).sin(), (q * root).sin());
            let dh =
                -p / (sp * sp) - q / (sq * sq) - a - if b == 0.0 { 0.0 } else { b / (root * root) };
            let next = root - h(root) / dh;
            if !(next >= lo && next <= hi) || next == root {
                break;
            }
            root = next;
        }
        k.push(root / length);
        residual.push(residual_of(root));
        family.push(ModeFamily::Coupled);
        iterations.push(it);
        if (pi_ - pj).abs() <= 1e-10 * right && k.len() < n_max {
            k.push(right / length);
            // both terms vanish here, so measure against their natural size
            let g = right * right.sin()
                - (a * right * right - b) * (p * right).sin() * (q * right).sin();
            residual.push(g.abs() / (right + (a * right * right - b).abs()));
            family.push(ModeFamily::Uncoupled);
            iterations.push(0);
        }
        left = right;
    }
    Ok(WavenumberSet {
        k,
        residual,
        family,
        iterations,
        params: bp,
        length,
        validated: false,
    })
}

/// Roots for networks at both ends of a line on `(0, L)`.
///
/// With `u = cos(kx + ψ₀)` and `tan ψ_i = α_i k − 1/(β_i k)` the condition
/// is `kL + ψ₀(k) + ψ_L(k) = mπ`, strictly increasing in `k`, so root `m`
/// is bracketed by `((m−1)π, (m+1)π)` in `kL`.
pub fn solve_two_end_secular(
    bp: BoundaryParams,
    length: f64,
    n_max: usize,
    tol: f64,
) -> Result<WavenumberSet, SecularError> {
    let ProblemKind::PointBothEnds {
        alpha_far,
        beta_far,
    } = bp.kind
    else {
        return Err(SecularError::WrongKind {
            expected: "PointBothEnds",
            found: bp.kind,
        });
    };
    bp.check()?;
    BoundaryParams {
        alpha: alpha_far,
        beta: beta_far,
        kind: bp.kind,
    }
    .check()?;
    if !(length > 0.0) || !length.is_finite() {
        return Err(SecularError::InvalidParameter {
            name: "length",
            value: length,
        });
    }
    if bp.beta.is_infinite() && beta_far.is_infinite() {
        // floating line: uniform flux is a k = 0 mode
        return Err(SecularError::ZeroMode);
    }
    let ends = [
        (bp.alpha / length, length / bp.beta),
        (alpha_far / length, length / beta_far),
    ];
    let h = |xi: f64, (a, b): (f64, f64)| a * xi - if b == 0.0 { 0.0 } else { b / xi };
    let phase = |xi: f64| xi + ends.iter().map(|&e| h(xi, e).atan()).sum::<f64>();
    let slope = |xi: f64| {
        1.0 + ends
            .iter()
            .map(|&(a, b)| {
                let hv = h(xi, (a, b));
                (a + if b == 0.0 { 0.0 } else { b / (xi * xi) }) / (1.0 + hv * hv)
            })
            .sum::<f64>()
    };
    let mut k = Vec::with_capacity(n_max);
    let mut residual = Vec::with_capacity(n_max);
    let mut iterations = Vec::with_capacity(n_max);
    let start = phase(1e-300_f64.max(f64::MIN_POSITIVE));
    let mut m = (start / PI).floor() as i64 + 1;
    while k.len() < n_max {
        let target = m as f64 * PI;
        let mut lo = ((m - 1) as f64 * PI).max(0.0);
        let mut hi = (m + 1) as f64 * PI;
        let mut x = 0.5 * (lo + hi);
        let mut done = 0;
        for it in 1..=MAX_ITER {
            let f = phase(x) - target;
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let next = x - f / slope(x);
            let next = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - x).abs();
            x = next;
            if step <= tol * x || hi - lo <= tol * x {
                done = it;
                break;
            }
        }
        if done == 0 {
            return Err(SecularError::NoConvergence {
                index: k.len(),
                lo,
                hi,
            });
        }
        k.push(x / length);
        residual.push((phase(x) - target).abs() / target.abs().max(PI));
        iterations.push(done);
        m += 1;
    }
    Ok(WavenumberSet {
        family: vec![ModeFamily::Coupled; k.len()],
        k,
        residual,
        iterations,
        params: bp,
        length,
        validated: false,
    })
}

/// Large-`n` form `ξ_n ≈ nπ + a/(nπ)` of the roots of `tan ξ = aξ/(ξ² − b)`.
pub fn asymptotic_wavenumbers(a: f64, n_range: Range<usize>) -> Result<Vec<f64>, SecularError> {
    if n_range.start == 0 {
        return Err(SecularError::IndexZero);
    }
    Ok(n_range
        .map(|n| {
            let x = n as f64 * PI;
            x + a / x
        })
        .collect())
}
