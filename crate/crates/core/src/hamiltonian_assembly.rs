//! Dressing lengths, the mode-decoupled Hamiltonian and coupling constants.
//!
//! Frequencies are reported as `f = ω/2π` in Hz. Coupling constants are
//! angular (rad/s), i.e. the coefficient `g` of `ħg`.

use crate::block_linalg::{
    dense_inverse, detect_zero_modes, null_residual, smallest_eigenpair, tl_tl_matrices,
    CoupledSystem, LinalgError, ModeVectors, ZeroModeReport, DENSE_CAP,
};
use crate::circuit_model::{
    CircuitSpec, CouplerSpec, CouplingMode, FarEnd, Length, LineSegment, NetworkBlock, Potential,
};
use crate::constants::{resistance_quantum, ELEMENTARY_CHARGE, HBAR};
use crate::mode_basis::{build_finite_modes, ModeBasis, ModeError};
use crate::secular_solver::{
    point_roots_at, solve_open_nonzero, solve_point_secular, solve_secular, BoundaryParams,
    ProblemKind, SecularError, DEFAULT_TOL,
};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(
        "coupler {coupler}: C_diag - C_off^2 a^T A^-1 a = {excess:e} F is negative \
         (a^T A^-1 a = {quad_form:e} 1/F); the coupling exceeds the network capacitance"
    )]
    NegativeAlpha {
        coupler: usize,
        excess: f64,
        quad_form: f64,
    },
    #[error("block {0}: capacitance matrix is singular")]
    SingularNetwork(usize),
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("basis for line {line} was built with {found:?}, the dressing requires {expected:?}")]
    DressingMismatch {
        line: usize,
        expected: BoundaryParams,
        found: BoundaryParams,
    },
    #[error("coupler {0} has a capacitive zero mode; the charge Hamiltonian does not exist")]
    ZeroMode(usize),
    #[error("no finite cutoff: the capacitive length is zero")]
    UnboundedCutoff,
    #[error("invalid parameter {name} = {value:e}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Secular(#[from] SecularError),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

fn parallel(a: f64, b: f64) -> f64 {
    if a.is_infinite() {
        b
    } else if b.is_infinite() {
        a
    } else {
        a * b / (a + b)
    }
}

/// Dressing of one attachment together with the coupler constants that
/// enter the block matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dressing {
    pub coupler: usize,
    /// Capacitive length, m.
    pub alpha: f64,
    /// Inductive length, m (infinite without inductive connection).
    pub beta: f64,
    /// `aᵀA⁻¹a`, 1/F.
    pub quad_form: f64,
    /// Capacitance multiplying the network-line cross term (`C_g` or `C_A`).
    pub c_off: f64,
    /// Capacitance multiplying the squared line variable (`C_g` or `C_g + C_A`).
    pub c_diag: f64,
    /// Inductance of the network-line cross term (`L_g` or `L_B`).
    pub l_off: f64,
    /// Inductance of the squared line variable (`L_g` or `L_g ∥ L_B`).
    pub l_diag: f64,
}

impl Dressing {
    /// Point coupling through `C_g ∥ L_g` to a block with `aᵀA⁻¹a = quad_form`.
    pub fn point(
        c_g: f64,
        l_g: f64,
        quad_form: f64,
        c: f64,
        l: f64,
    ) -> Result<Self, AssemblyError> {
        Self::general(usize::MAX, c_g, c_g, l_g, l_g, quad_form, c, l)
    }

    #[allow(clippy::too_many_arguments)]
    fn general(
        coupler: usize,
        c_off: f64,
        c_diag: f64,
        l_off: f64,
        l_diag: f64,
        quad_form: f64,
        c: f64,
        l: f64,
    ) -> Result<Self, AssemblyError> {
        let excess = c_diag - c_off * c_off * quad_form;
        let alpha = if c_diag == 0.0 {
            0.0
        } else if excess >= 0.0 {
            excess / c
        } else if excess > -1e-12 * c_diag {
            0.0
        } else {
            return Err(AssemblyError::NegativeAlpha {
                coupler,
                excess,
                quad_form,
            });
        };
        Ok(Dressing {
            coupler,
            alpha,
            beta: l_diag / l,
            quad_form,
            c_off,
            c_diag,
            l_off,
            l_diag,
        })
    }

    /// `C_off A⁻¹a` enters the charge channel, `b/L_off` the flux channel.
    fn system(&self, block: &NetworkBlock, line: &LineSegment, alpha: f64) -> CoupledSystem {
        CoupledSystem {
            a: block.cap_matrix.clone(),
            binv: block.ind_inv_matrix.clone(),
            a_vec: block.cap_coupling.clone(),
            b_vec: block.ind_coupling.clone(),
            c_off: self.c_off,
            c_diag: self.c_diag,
            l_off: self.l_off,
            l_diag: self.l_diag,
            alpha,
            beta: self.beta,
            c: line.c,
            l: line.l,
        }
    }
}

fn quad_form(block: &NetworkBlock, idx: usize) -> Result<(f64, DVector<f64>), AssemblyError> {
    let x = block
        .cap_matrix
        .clone()
        .lu()
        .solve(&block.cap_coupling)
        .ok_or(AssemblyError::SingularNetwork(idx))?;
    Ok((block.cap_coupling.dot(&x), x))
}

/// Dressing of coupler `idx`: `α = (C_diag − C_off² aᵀA⁻¹a)/c`, `β = L_diag/l`.
pub fn coupler_dressing(spec: &CircuitSpec, idx: usize) -> Result<Dressing, AssemblyError> {
    let cp: &CouplerSpec = &spec.couplers[idx];
    let block = &spec.blocks[cp.block];
    let line = &spec.lines[cp.line];
    let (q, _) = quad_form(block, cp.block)?;
    let (c_off, c_diag, l_off, l_diag) = match cp.mode {
        CouplingMode::Point => (cp.c_g, cp.c_g, cp.l_g, cp.l_g),
        CouplingMode::Galvanic => (cp.c_a, cp.c_g + cp.c_a, cp.l_b, parallel(cp.l_g, cp.l_b)),
    };
    Dressing::general(idx, c_off, c_diag, l_off, l_diag, q, line.c, line.l)
}

/// Optimal dressing of every coupler. Attachments on one line decouple from
/// each other because their coupling vectors are orthogonal, so each is
/// fixed independently.
pub fn optimal_alpha_beta(spec: &CircuitSpec) -> Result<Vec<Dressing>, AssemblyError> {
    (0..spec.couplers.len())
        .map(|i| coupler_dressing(spec, i))
        .collect()
}

/// Which endpoint value of the basis feeds a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSite {
    /// `u_n(0)`, `u_n(x₀)` or `Δu_n`.
    Near,
    /// `u_n(L)` on a line with networks at both ends.
    Far,
}

/// Boundary-value problem of one line.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePlan {
    pub line: usize,
    pub params: BoundaryParams,
    /// Solver length (half-length for galvanic insertion), m.
    pub length: f64,
    /// `(coupler, site)` pairs.
    pub channels: Vec<(usize, ChannelSite)>,
}

/// Map every line onto one of the supported geometries.
pub fn plan_lines(
    spec: &CircuitSpec,
    dressing: &[Dressing],
) -> Result<Vec<LinePlan>, AssemblyError> {
    let mut seen = vec![false; spec.blocks.len()];
    for (i, c) in spec.couplers.iter().enumerate() {
        if c.block >= spec.blocks.len() || c.line >= spec.lines.len() {
            return Err(AssemblyError::UnsupportedTopology(format!(
                "coupler {i} references a missing element"
            )));
        }
        if std::mem::replace(&mut seen[c.block], true) {
            return Err(AssemblyError::UnsupportedTopology(format!(
                "block {} attaches to more than one line",
                c.block
            )));
        }
    }
    let mut plans = Vec::with_capacity(spec.lines.len());
    for (li, line) in spec.lines.iter().enumerate() {
        let Length::Finite(len) = line.length else {
            return Err(AssemblyError::UnsupportedTopology(format!(
                "line {li} is not finite; use the spectral-density samplers for unbounded lines"
            )));
        };
        let mut on: Vec<usize> = (0..spec.couplers.len())
            .filter(|&i| spec.couplers[i].line == li)
            .collect();
        on.sort_by(|&a, &b| {
            spec.couplers[a]
                .position
                .total_cmp(&spec.couplers[b].position)
        });
        let end_kind = match line.far_end {
            FarEnd::Short => ProblemKind::PointEnd,
            FarEnd::Open => ProblemKind::PointEndOpen,
        };
        let unsupported =
            |why: &str| AssemblyError::UnsupportedTopology(format!("line {li}: {why}"));
        let at = |x: f64, target: f64| (x - target).abs() <= 1e-9 * len;
        let plan = match on.as_slice() {
            [] => LinePlan {
                line: li,
                params: BoundaryParams {
                    alpha: 0.0,
                    beta: f64::INFINITY,
                    kind: end_kind,
                },
                length: len,
                channels: vec![],
            },
            &[i] => {
                let (cp, d) = (&spec.couplers[i], &dressing[i]);
                match cp.mode {
                    CouplingMode::Point if at(cp.position, 0.0) => LinePlan {
                        line: li,
                        params: BoundaryParams {
                            alpha: d.alpha,
                            beta: d.beta,
                            kind: end_kind,
                        },
                        length: len,
                        channels: vec![(i, ChannelSite::Near)],
                    },
                    CouplingMode::Point if cp.position < len && line.far_end == FarEnd::Short => {
                        LinePlan {
                            line: li,
                            params: BoundaryParams {
                                alpha: d.alpha,
                                beta: d.beta,
                                kind: ProblemKind::PointInsertion {
                                    position: cp.position,
                                },
                            },
                            length: len,
                            channels: vec![(i, ChannelSite::Near)],
                        }
                    }
                    CouplingMode::Galvanic
                        if at(cp.position, 0.5 * len) && line.far_end == FarEnd::Short =>
                    {
                        LinePlan {
                            line: li,
                            params: BoundaryParams::galvanic(d.alpha, d.beta),
                            length: 0.5 * len,
                            channels: vec![(i, ChannelSite::Near)],
                        }
                    }
                    CouplingMode::Point => {
                        return Err(unsupported(
                            "a single point coupler must sit at x = 0 or inside a shorted line",
                        ))
                    }
                    CouplingMode::Galvanic => {
                        return Err(unsupported(
                            "galvanic insertion must sit at the midpoint of a shorted line",
                        ))
                    }
                }
            }
            &[i, j] => {
                let (p, q) = (&spec.couplers[i], &spec.couplers[j]);
                if p.mode != CouplingMode::Point
                    || q.mode != CouplingMode::Point
                    || !at(p.position, 0.0)
                    || !at(q.position, len)
                {
                    return Err(unsupported(
                        "two couplers must be point couplers at x = 0 and x = L",
                    ));
                }
                LinePlan {
                    line: li,
                    params: BoundaryParams {
                        alpha: dressing[i].alpha,
                        beta: dressing[i].beta,
                        kind: ProblemKind::PointBothEnds {
                            alpha_far: dressing[j].alpha,
                            beta_far: dressing[j].beta,
                        },
                    },
                    length: len,
                    channels: vec![(i, ChannelSite::Near), (j, ChannelSite::Far)],
                }
            }
            _ => return Err(unsupported("more than two couplers")),
        };
        plans.push(plan);
    }
    Ok(plans)
}

/// Default mode normalisation: the total capacitance of the line.
pub fn default_n_alpha(line: &LineSegment, length: f64) -> f64 {
    line.c * length
}

/// Solve and normalise `n_max` modes for every planned line.
pub fn build_bases(
    spec: &CircuitSpec,
    plans: &[LinePlan],
    n_max: usize,
) -> Result<Vec<ModeBasis>, AssemblyError> {
    plans
        .iter()
        .map(|p| {
            let line = &spec.lines[p.line];
            let ks = solve_secular(p.params, p.length, n_max, DEFAULT_TOL)?;
            Ok(build_finite_modes(
                &ks,
                p.params,
                line,
                default_n_alpha(line, line.length.finite().unwrap_or(p.length)),
            )?)
        })
        .collect()
}

/// Coupling channel between a block and a line.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub coupler: usize,
    pub block: usize,
    pub line: usize,
    pub position: f64,
    pub site: ChannelSite,
    /// `C_off A⁻¹a`; contract with the network charges.
    pub cap_vector: DVector<f64>,
    /// `b/L_off`, 1/H; contract with the network fluxes.
    pub ind_vector: DVector<f64>,
}

/// Harmonic modes of one line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSector {
    pub line: usize,
    pub kind: ProblemKind,
    pub n_alpha: f64,
    pub wavenumbers: Vec<f64>,
    /// `ω_n/2π`, Hz.
    pub frequencies: Vec<f64>,
}

/// Network sector, line modes and their couplings; the line modes carry
/// no mutual couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedHamiltonian {
    /// Per block: `A⁻¹ + (C_off²/αc) A⁻¹aaᵀA⁻¹`, 1/F.
    pub network_cap_inv: Vec<DMatrix<f64>>,
    /// Per block: `B⁻¹`, 1/H.
    pub network_ind_inv: Vec<DMatrix<f64>>,
    pub potentials: Vec<Potential>,
    pub sectors: Vec<LineSector>,
    pub channels: Vec<Channel>,
    /// Per channel, rad/s, for a Cooper-pair charge on the first network node.
    pub cap_couplings: Vec<Vec<f64>>,
    /// Per channel, rad/s, for a reduced flux quantum on the first node.
    pub ind_couplings: Vec<Vec<f64>>,
    pub dressing: Vec<Dressing>,
}

/// Capacitive coupling `2e·w·u·√(ω/2ħN_α)` for a channel weight `w`.
pub fn capacitive_coupling(weight: f64, u: f64, omega: f64, n_alpha: f64) -> f64 {
    2.0 * ELEMENTARY_CHARGE * weight * u * (omega / (2.0 * HBAR * n_alpha)).sqrt()
}

/// Inductive coupling `φ₀·w·u/√(2ħN_αω)` with `φ₀ = ħ/2e`.
pub fn inductive_coupling(weight: f64, u: f64, omega: f64, n_alpha: f64) -> f64 {
    let phi0 = HBAR / (2.0 * ELEMENTARY_CHARGE);
    phi0 * weight * u / (2.0 * HBAR * n_alpha * omega).sqrt()
}

/// Assemble from bases already solved with the optimal dressing.
pub fn assemble(
    spec: &CircuitSpec,
    bases: &[ModeBasis],
    n_max: usize,
) -> Result<QuantizedHamiltonian, AssemblyError> {
    let dressing = optimal_alpha_beta(spec)?;
    let plans = plan_lines(spec, &dressing)?;
    if bases.len() != plans.len() {
        return Err(AssemblyError::UnsupportedTopology(format!(
            "{} bases for {} lines",
            bases.len(),
            plans.len()
        )));
    }
    let mut network_cap_inv = Vec::with_capacity(spec.blocks.len());
    for (bi, block) in spec.blocks.iter().enumerate() {
        let ainv = block
            .cap_matrix
            .clone()
            .try_inverse()
            .ok_or(AssemblyError::SingularNetwork(bi))?;
        let mut m = ainv.clone();
        if let Some(ci) = spec.couplers.iter().position(|c| c.block == bi) {
            let d = &dressing[ci];
            if d.c_off != 0.0 {
                if d.alpha <= 0.0 {
                    return Err(AssemblyError::ZeroMode(ci));
                }
                let x = &ainv * &block.cap_coupling;
                m.ger(
                    d.c_off * d.c_off / (d.alpha * spec.lines[spec.couplers[ci].line].c),
                    &x,
                    &x,
                    1.0,
                );
            }
        }
        network_cap_inv.push(m);
    }
    let mut sectors = Vec::new();
    let mut channels = Vec::new();
    let mut cap_couplings = Vec::new();
    let mut ind_couplings = Vec::new();
    for (plan, basis) in plans.iter().zip(bases) {
        if basis.params != plan.params {
            return Err(AssemblyError::DressingMismatch {
                line: plan.line,
                expected: plan.params,
                found: basis.params,
            });
        }
        let n = n_max.min(basis.len());
        let omega: Vec<f64> = (0..n).map(|i| basis.omega(i)).collect();
        sectors.push(LineSector {
            line: plan.line,
            kind: plan.params.kind,
            n_alpha: basis.n_alpha,
            wavenumbers: basis.k[..n].to_vec(),
            frequencies: omega.iter().map(|w| w / (2.0 * PI)).collect(),
        });
        for &(ci, site) in &plan.channels {
            let cp = &spec.couplers[ci];
            let d = &dressing[ci];
            let block = &spec.blocks[cp.block];
            let (_, ainv_a) = quad_form(block, cp.block)?;
            let cap_vector = ainv_a * d.c_off;
            let ind_vector = &block.ind_coupling * recip(d.l_off);
            let u: Vec<f64> = (0..n)
                .map(|i| match site {
                    ChannelSite::Near => basis.endpoint[i],
                    ChannelSite::Far => basis.far_endpoint(i).unwrap_or(0.0),
                })
                .collect();
            cap_couplings.push(
                (0..n)
                    .map(|i| capacitive_coupling(cap_vector[0], u[i], omega[i], basis.n_alpha))
                    .collect(),
            );
            ind_couplings.push(
                (0..n)
                    .map(|i| inductive_coupling(ind_vector[0], u[i], omega[i], basis.n_alpha))
                    .collect(),
            );
            channels.push(Channel {
                coupler: ci,
                block: cp.block,
                line: plan.line,
                position: cp.position,
                site,
                cap_vector,
                ind_vector,
            });
        }
    }
    Ok(QuantizedHamiltonian {
        network_cap_inv,
        network_ind_inv: spec
            .blocks
            .iter()
            .map(|b| b.ind_inv_matrix.clone())
            .collect(),
        potentials: spec.blocks.iter().map(|b| b.potential.clone()).collect(),
        sectors,
        channels,
        cap_couplings,
        ind_couplings,
        dressing,
    })
}

/// Dress, solve and assemble in one go.
pub fn quantize(spec: &CircuitSpec, n_max: usize) -> Result<QuantizedHamiltonian, AssemblyError> {
    let dressing = optimal_alpha_beta(spec)?;
    let plans = plan_lines(spec, &dressing)?;
    let bases = build_bases(spec, &plans, n_max)?;
    assemble(spec, &bases, n_max)
}

/// How the dense realisation treats the discarded modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Keep the first `N` modes.
    Plain,
    /// Replace the last kept mode by an aggregate of the discarded tail so
    /// that the completeness sums hold exactly.
    TailLumped,
}

/// Explicit `C` and `L⁻¹` with the block variables first, then each line's
/// modes in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAssembly {
    pub cap: DMatrix<f64>,
    pub ind_inv: DMatrix<f64>,
    pub block_offsets: Vec<usize>,
    pub line_offsets: Vec<usize>,
    pub n_modes: usize,
    pub n_alpha: Vec<f64>,
}

/// Dense truncated assembly at the optimal dressing.
pub fn dense_truncated_assembly(
    spec: &CircuitSpec,
    n: usize,
    truncation: Truncation,
) -> Result<DenseAssembly, AssemblyError> {
    dense_assembly_scaled(spec, n, truncation, 1.0)
}

/// As [`dense_truncated_assembly`] with every α multiplied by `alpha_scale`.
pub fn dense_assembly_scaled(
    spec: &CircuitSpec,
    n: usize,
    truncation: Truncation,
    alpha_scale: f64,
) -> Result<DenseAssembly, AssemblyError> {
    if n > DENSE_CAP {
        return Err(LinalgError::CapExceeded {
            requested: n,
            cap: DENSE_CAP,
        }
        .into());
    }
    let mut dressing = optimal_alpha_beta(spec)?;
    for d in &mut dressing {
        d.alpha *= alpha_scale;
    }
    let plans = plan_lines(spec, &dressing)?;
    let p: usize = spec.blocks.iter().map(|b| b.order()).sum();
    let dim = p + n * plans.len();
    let mut cap = DMatrix::zeros(dim, dim);
    let mut ind_inv = DMatrix::zeros(dim, dim);
    let mut block_offsets = Vec::new();
    let mut off = 0;
    for b in &spec.blocks {
        let k = b.order();
        cap.view_mut((off, off), (k, k)).copy_from(&b.cap_matrix);
        ind_inv
            .view_mut((off, off), (k, k))
            .copy_from(&b.ind_inv_matrix);
        block_offsets.push(off);
        off += k;
    }
    let mut line_offsets = Vec::new();
    let mut n_alpha = Vec::new();
    if n > 0 {
        let bases = build_bases(spec, &plans, n)?;
        for (plan, basis) in plans.iter().zip(&bases) {
            line_offsets.push(off);
            n_alpha.push(basis.n_alpha);
            let line = &spec.lines[plan.line];
            let modes = match truncation {
                Truncation::Plain => ModeVectors::truncated(basis, n),
                Truncation::TailLumped if plan.channels.len() == 1 => {
                    ModeVectors::tail_lumped(basis, n)?
                }
                Truncation::TailLumped if plan.channels.is_empty() => {
                    ModeVectors::truncated(basis, n)
                }
                Truncation::TailLumped => {
                    return Err(AssemblyError::UnsupportedTopology(
                        "tail lumping needs at most one channel per line".into(),
                    ))
                }
            };
            for i in 0..n {
                cap[(off + i, off + i)] = basis.n_alpha;
                ind_inv[(off + i, off + i)] = basis.n_alpha * modes.omega[i] * modes.omega[i];
            }
            for &(ci, site) in &plan.channels {
                let cp = &spec.couplers[ci];
                let d = &dressing[ci];
                let alpha = match site {
                    ChannelSite::Near => plan.params.alpha,
                    ChannelSite::Far => match plan.params.kind {
                        ProblemKind::PointBothEnds { alpha_far, .. } => alpha_far,
                        _ => unreachable!(),
                    },
                };
                let u = match site {
                    ChannelSite::Near => modes.u.clone(),
                    ChannelSite::Far => {
                        DVector::from_fn(n, |i, _| basis.far_endpoint(i).unwrap_or(0.0))
                    }
                };
                let sys = d.system(&spec.blocks[cp.block], line, alpha);
                let mut mm = cap.view_mut((off, off), (n, n));
                mm.ger(sys.d(), &u, &u, 1.0);
                let mut ll = ind_inv.view_mut((off, off), (n, n));
                ll.ger(sys.e(), &u, &u, 1.0);
                let bo = block_offsets[cp.block];
                let k = spec.blocks[cp.block].order();
                let cross_c = &sys.a_vec * u.transpose() * -d.c_off;
                let cross_l = &sys.b_vec * u.transpose() * -recip(d.l_off);
                cap.view_mut((bo, off), (k, n)).copy_from(&cross_c);
                cap.view_mut((off, bo), (n, k))
                    .copy_from(&cross_c.transpose());
                ind_inv.view_mut((bo, off), (k, n)).copy_from(&cross_l);
                ind_inv
                    .view_mut((off, bo), (n, k))
                    .copy_from(&cross_l.transpose());
            }
            off += n;
        }
    }
    Ok(DenseAssembly {
        cap,
        ind_inv,
        block_offsets,
        line_offsets,
        n_modes: n,
        n_alpha,
    })
}

/// Evidence that the emitted Hamiltonian has no mode-mode couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingCertificate {
    pub n_modes: usize,
    /// Largest off-diagonal mode-mode entry of the dense `C⁻¹`, relative to
    /// the diagonal scale `1/N_α`, at the optimal α.
    pub optimal_residual: f64,
    /// Same with α scaled by `1 + perturbation`.
    pub perturbed_residual: f64,
    pub perturbation: f64,
    /// Dense network block of `C⁻¹` against the emitted one.
    pub network_block_error: f64,
    /// Dense network-mode block of `C⁻¹` against `(C_off/N_α) A⁻¹a uᵀ`.
    pub coupling_block_error: f64,
}

fn mode_block_residual(dense: &DenseAssembly) -> Result<(f64, DMatrix<f64>), AssemblyError> {
    let inv = dense_inverse(&dense.cap)?;
    let off = dense.line_offsets[0];
    let n = dense.n_modes;
    let scale = 1.0 / dense.n_alpha[0];
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(inv[(off + i, off + j)].abs());
            }
        }
    }
    Ok((worst / scale, inv))
}

/// Re-assemble the dense truncated capacitance matrix (tail-lumped) of a
/// single-coupler circuit, invert it by LU and measure the residual
/// mode-mode terms at the optimal and at a perturbed α.
pub fn decoupling_certificate(
    spec: &CircuitSpec,
    n: usize,
    perturbation: f64,
) -> Result<DecouplingCertificate, AssemblyError> {
    if spec.couplers.len() != 1 || spec.lines.len() != 1 {
        return Err(AssemblyError::UnsupportedTopology(
            "certificate needs one line and one coupler".into(),
        ));
    }
    let dense = dense_truncated_assembly(spec, n, Truncation::TailLumped)?;
    let (optimal_residual, inv) = mode_block_residual(&dense)?;
    let perturbed = dense_assembly_scaled(spec, n, Truncation::TailLumped, 1.0 + perturbation)?;
    let (perturbed_residual, _) = mode_block_residual(&perturbed)?;

    let h = quantize(spec, n)?;
    let cp = &spec.couplers[0];
    let (bo, k) = (dense.block_offsets[cp.block], spec.blocks[cp.block].order());
    let net = inv.view((bo, bo), (k, k)).into_owned();
    let network_block_error =
        (&net - &h.network_cap_inv[cp.block]).amax() / h.network_cap_inv[cp.block].amax();
    // the emitted cross term, rebuilt from the dense matrix's own u column
    let off = dense.line_offsets[0];
    let cross = inv.view((bo, off), (k, n)).into_owned();
    let u = -dense.cap.view((off, bo), (n, 1)).into_owned()
        / (h.dressing[0].c_off * spec.blocks[cp.block].cap_coupling[0]);
    let expected = &h.channels[0].cap_vector * u.transpose() / dense.n_alpha[0];
    let coupling_block_error = (&cross - &expected).amax() / expected.amax();
    Ok(DecouplingCertificate {
        n_modes: n,
        optimal_residual,
        perturbed_residual,
        perturbation,
        network_block_error,
        coupling_block_error,
    })
}

/// Zero-mode diagnosis of every coupler on a dense truncation of `n` modes.
///
/// When the optimal α vanishes because the capacitive condition is met,
/// the numerical check uses `α = C_diag/c`: with tail lumping the
/// degeneracy of `C` does not depend on α.
pub fn check_invertibility(
    spec: &CircuitSpec,
    n: usize,
) -> Result<Vec<(usize, ZeroModeReport)>, AssemblyError> {
    let dressing = optimal_alpha_beta(spec)?;
    let mut out = Vec::new();
    for (ci, d) in dressing.iter().enumerate() {
        let cp = &spec.couplers[ci];
        let line = &spec.lines[cp.line];
        let mut probe = spec.clone();
        probe.couplers = vec![*cp];
        probe.couplers[0].block = 0;
        probe.couplers[0].line = 0;
        probe.blocks = vec![spec.blocks[cp.block].clone()];
        probe.lines = vec![*line];
        let alpha = if d.alpha > 0.0 {
            d.alpha
        } else if d.c_diag > 0.0 {
            d.c_diag / line.c
        } else {
            0.0
        };
        let mut pd = *d;
        pd.alpha = alpha;
        let plans = plan_lines(&probe, &[pd])?;
        let basis = &build_bases(&probe, &plans, n)?[0];
        let modes = if alpha > 0.0 {
            ModeVectors::tail_lumped(basis, n)?
        } else {
            ModeVectors::truncated(basis, n)
        };
        let sys = pd.system(&probe.blocks[0], line, alpha);
        let report = detect_zero_modes(&sys, &modes, basis.s2_target().unwrap_or(1.0))?;
        out.push((ci, report));
    }
    Ok(out)
}

/// Charge qubit capacitively coupled to the open end of a line shorted at
/// the far end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeQubitParams {
    /// Coupling capacitance, F.
    pub c_g: f64,
    /// Junction capacitance, F.
    pub c_j: f64,
    /// Line capacitance per length, F/m.
    pub c: f64,
    /// Line inductance per length, H/m.
    pub l: f64,
    /// Line length, m.
    pub length: f64,
    pub far_end: FarEnd,
}

impl ChargeQubitParams {
    /// Transmon-like device with a 4.7 mm line.
    pub fn device_a() -> Self {
        ChargeQubitParams {
            c_g: 40.3e-15,
            c_j: 5.13e-15,
            c: 249e-12,
            l: 623e-9,
            length: 4.7e-3,
            far_end: FarEnd::Short,
        }
    }

    pub fn c_sigma(&self) -> f64 {
        self.c_g + self.c_j
    }

    /// `C_g C_J / (c (C_g + C_J))`, m.
    pub fn alpha(&self) -> f64 {
        if self.c_g == 0.0 {
            0.0
        } else {
            self.c_g * self.c_j / (self.c * self.c_sigma())
        }
    }

    pub fn line(&self) -> LineSegment {
        match self.far_end {
            FarEnd::Short => LineSegment::shorted(self.c, self.l, self.length),
            FarEnd::Open => LineSegment::open(self.c, self.l, self.length),
        }
    }

    pub fn to_circuit(&self) -> CircuitSpec {
        let mut block = NetworkBlock::single_node(self.c_sigma());
        block.potential = Potential {
            kind: "josephson".into(),
            params: vec![],
        };
        CircuitSpec {
            blocks: vec![block],
            lines: vec![self.line()],
            couplers: vec![CouplerSpec {
                block: 0,
                line: 0,
                c_g: self.c_g,
                l_g: f64::INFINITY,
                position: 0.0,
                mode: CouplingMode::Point,
                c_a: 0.0,
                l_b: f64::INFINITY,
            }],
            impedances: vec![],
            metadata: "charge qubit".into(),
        }
    }

    fn prefactor(&self) -> f64 {
        let line = self.line();
        line.phase_velocity()
            * (self.c_g / self.c_sigma())
            * (line.impedance() / resistance_quantum()).sqrt()
    }
}

/// Per-mode wavenumbers, frequencies and couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    /// rad/m.
    pub k: Vec<f64>,
    /// Hz.
    pub f: Vec<f64>,
    /// rad/s.
    pub g: Vec<f64>,
    pub warning: Option<String>,
}

impl CouplingTable {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Index of the largest `|g_n|`.
    pub fn argmax(&self) -> usize {
        self.g
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, g)| {
                if g.abs() > best.1 {
                    (i, g.abs())
                } else {
                    best
                }
            })
            .0
    }
}

/// `g_n = v_p (C_g/C_Σ) √(Z₀/R_Q) √(2πk_n / (L(1 + α/L + (αk_n)²)))` on the
/// exact wavenumbers. The same normalisation holds for an open far end,
/// where the free `k = 0` mode is left out.
pub fn charge_qubit_couplings_exact(
    params: &ChargeQubitParams,
    n_max: usize,
) -> Result<CouplingTable, AssemblyError> {
    let alpha = params.alpha();
    let len = params.length;
    let ks = match params.far_end {
        FarEnd::Short => {
            solve_point_secular(
                BoundaryParams::point(alpha, f64::INFINITY),
                len,
                n_max,
                DEFAULT_TOL,
            )?
            .k
        }
        FarEnd::Open => solve_open_nonzero(alpha, len, n_max, DEFAULT_TOL)?,
    };
    let vp = params.line().phase_velocity();
    let pre = params.prefactor();
    let g = ks
        .iter()
        .map(|&k| pre * (2.0 * PI * k / (len * (1.0 + alpha / len + (alpha * k).powi(2)))).sqrt())
        .collect();
    Ok(CouplingTable {
        f: ks.iter().map(|k| vp * k / (2.0 * PI)).collect(),
        k: ks,
        g,
        warning: None,
    })
}

/// Exact couplings at selected mode indices of a line shorted at the far
/// end; lets a fit reach indices far beyond a contiguous table.
pub fn charge_qubit_couplings_at(
    params: &ChargeQubitParams,
    indices: &[usize],
) -> Result<CouplingTable, AssemblyError> {
    if params.far_end != FarEnd::Short {
        return Err(AssemblyError::UnsupportedTopology(
            "sparse couplings need a shorted far end".into(),
        ));
    }
    let alpha = params.alpha();
    let len = params.length;
    let ks = point_roots_at(
        BoundaryParams::point(alpha, f64::INFINITY),
        len,
        indices,
        DEFAULT_TOL,
    )?;
    let vp = params.line().phase_velocity();
    let pre = params.prefactor();
    Ok(CouplingTable {
        f: ks.iter().map(|k| vp * k / (2.0 * PI)).collect(),
        g: ks
            .iter()
            .map(|&k| {
                pre * (2.0 * PI * k / (len * (1.0 + alpha / len + (alpha * k).powi(2)))).sqrt()
            })
            .collect(),
        k: ks,
        warning: None,
    })
}

/// Open-line approximation `g_n = v_p (C_g/C_Σ) √(Z₀/R_Q) √(2πk_n/L)` with
/// `k_n = (2n+1)π/2L`. Grows without bound; only meaningful for `n ≪ L/α`.
pub fn charge_qubit_couplings_approx(params: &ChargeQubitParams, n_max: usize) -> CouplingTable {
    let len = params.length;
    let vp = params.line().phase_velocity();
    let pre = params.prefactor();
    let k: Vec<f64> = match params.far_end {
        FarEnd::Short => (0..n_max)
            .map(|n| (2 * n + 1) as f64 * PI / (2.0 * len))
            .collect(),
        FarEnd::Open => (1..=n_max).map(|n| n as f64 * PI / len).collect(),
    };
    let alpha = params.alpha();
    let window = if alpha > 0.0 {
        len / alpha
    } else {
        f64::INFINITY
    };
    let warning = (n_max as f64 > window)
        .then(|| format!("modes beyond n ~ L/alpha = {window:.0} are outside the validity of the open-line approximation"));
    CouplingTable {
        f: k.iter().map(|k| vp * k / (2.0 * PI)).collect(),
        g: k.iter()
            .map(|&k| pre * (2.0 * PI * k / len).sqrt())
            .collect(),
        k,
        warning,
    }
}

/// Predicted saturation point of the capacitive couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    /// `√(1 + α/L)/α`, rad/m.
    pub k_c: f64,
    /// Mode whose wavenumber is closest to `k_c`.
    pub n_c: usize,
    /// `v_p k_c / 2π`, Hz.
    pub f_c: f64,
}

pub fn predict_cutoff(alpha: f64, line: &LineSegment) -> Result<Cutoff, AssemblyError> {
    if alpha <= 0.0 {
        return Err(AssemblyError::UnboundedCutoff);
    }
    let len = line
        .length
        .finite()
        .ok_or(AssemblyError::InvalidParameter {
            name: "length",
            value: f64::INFINITY,
        })?;
    let k_c = (1.0 + alpha / len).sqrt() / alpha;
    let n_guess = (k_c * len / PI).ceil() as usize + 3;
    let ks = match line.far_end {
        FarEnd::Short => {
            solve_point_secular(
                BoundaryParams::point(alpha, f64::INFINITY),
                len,
                n_guess,
                DEFAULT_TOL,
            )?
            .k
        }
        FarEnd::Open => solve_open_nonzero(alpha, len, n_guess, DEFAULT_TOL)?,
    };
    let n_c = ks
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, k)| {
            if (k - k_c).abs() < best.1 {
                (i, (k - k_c).abs())
            } else {
                best
            }
        })
        .0;
    Ok(Cutoff {
        k_c,
        n_c,
        f_c: line.phase_velocity() * k_c / (2.0 * PI),
    })
}

/// Two lines joined at `x = 0` through `C_g ∥ L_g`, the first also
/// grounded there through `C_G ∥ L_G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlTlParams {
    pub line1: LineSegment,
    pub line2: LineSegment,
    pub c_g: f64,
    pub c_ground: f64,
    pub l_g: f64,
    pub l_ground: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlTlPathology {
    None,
    CgZero,
    CgrndZero,
    LSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Capacitive,
    Inductive,
}

/// Numerically confirmed null direction of a dense truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct NullWitness {
    pub sector: Sector,
    pub vector: DVector<f64>,
    /// Smallest eigenvalue over the spectral radius.
    pub relative_eigenvalue: f64,
    /// `‖M w‖/(‖M‖‖w‖)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlTlReport {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// `uuᵀ` weight of the first line's block of `C⁻¹`; NaN when undefined.
    pub delta1: f64,
    pub delta2: f64,
    /// `uvᵀ` weight of the cross block of `C⁻¹`.
    pub beta_coupling: f64,
    /// First pathology found, in the order C_g, C_G, inductive.
    pub pathology: TlTlPathology,
    pub pathologies: Vec<TlTlPathology>,
    /// `1 − S₁S₂ / (L_g²(1 + e₁S₁)(1 + e₂S₂))`; zero makes `L⁻¹` singular.
    pub inductive_condition: f64,
    /// True when an α had to be replaced by `C_Σ/c` to exhibit a pathology.
    pub alpha_fallback: bool,
    pub cap_min_eigenvalue: f64,
    pub ind_min_eigenvalue: f64,
    pub witness: Option<NullWitness>,
}

fn static_sum(line: &LineSegment, beta: f64) -> f64 {
    // lβ · R/(R+β)
    if beta.is_infinite() {
        return match (line.far_end, line.length) {
            (FarEnd::Short, Length::Finite(r)) => line.l * r,
            _ => f64::INFINITY,
        };
    }
    let lb = line.l * beta;
    match (line.far_end, line.length) {
        (FarEnd::Short, Length::Finite(r)) => lb * r / (r + beta),
        _ => lb,
    }
}

/// δ₁, δ₂, β of the TL–TL inverse and the pathology flags, confirmed on a
/// dense tail-lumped truncation with `n_modes` modes per line.
pub fn tl_tl_analyze(params: &TlTlParams, n_modes: usize) -> Result<TlTlReport, AssemblyError> {
    let TlTlParams {
        line1,
        line2,
        c_g,
        c_ground,
        l_g,
        l_ground,
    } = *params;
    let (c1, c2) = (line1.c, line2.c);
    let (Some(len1), Some(len2)) = (line1.length.finite(), line2.length.finite()) else {
        return Err(AssemblyError::UnsupportedTopology(
            "TL-TL analysis needs finite lines".into(),
        ));
    };
    let c_sigma = c_g + c_ground;
    let l_sigma = parallel(l_g, l_ground);
    let alpha1_opt = c_ground / c1;
    let alpha2_opt = if c_sigma > 0.0 {
        c_ground * c_g / (c2 * c_sigma)
    } else {
        0.0
    };
    let beta1 = l_sigma / line1.l;
    let beta2 = l_g / line2.l;
    let fallback = |c: f64, len: f64| {
        if c_sigma > 0.0 {
            c_sigma / c
        } else {
            1e-2 * len
        }
    };
    let alpha_fallback = alpha1_opt <= 0.0 || alpha2_opt <= 0.0;
    let alpha1 = if alpha1_opt > 0.0 {
        alpha1_opt
    } else {
        fallback(c1, len1)
    };
    let alpha2 = if alpha2_opt > 0.0 {
        alpha2_opt
    } else {
        fallback(c2, len2)
    };

    let end = |line: &LineSegment| match line.far_end {
        FarEnd::Short => ProblemKind::PointEnd,
        FarEnd::Open => ProblemKind::PointEndOpen,
    };
    let bp1 = BoundaryParams {
        alpha: alpha1,
        beta: beta1,
        kind: end(&line1),
    };
    let bp2 = BoundaryParams {
        alpha: alpha2,
        beta: beta2,
        kind: end(&line2),
    };
    let (n1, n2) = (default_n_alpha(&line1, len1), default_n_alpha(&line2, len2));
    let b1 = build_finite_modes(
        &solve_secular(bp1, len1, n_modes, DEFAULT_TOL)?,
        bp1,
        &line1,
        n1,
    )?;
    let b2 = build_finite_modes(
        &solve_secular(bp2, len2, n_modes, DEFAULT_TOL)?,
        bp2,
        &line2,
        n2,
    )?;
    let m1 = ModeVectors::tail_lumped(&b1, n_modes)?;
    let m2 = ModeVectors::tail_lumped(&b2, n_modes)?;

    let (delta1, delta2, beta_coupling) = if c_g > 0.0 && c_ground > 0.0 {
        (
            c1 * alpha1 * (c1 * alpha1 - c_ground) / (c_ground * n1 * n1),
            c2 * alpha2 * (c2 * alpha2 * c_sigma - c_g * c_ground) / (c_g * c_ground * n2 * n2),
            c1 * c2 * alpha1 * alpha2 / (c_ground * n1 * n2),
        )
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    let e1 = recip(l_sigma) - recip(beta1 * line1.l);
    let e2 = recip(l_g) - recip(beta2 * line2.l);
    let inductive_condition = if l_g.is_infinite() {
        1.0
    } else {
        let (s1, s2) = (static_sum(&line1, beta1), static_sum(&line2, beta2));
        let f = |e: f64, s: f64| {
            if s.is_infinite() {
                e
            } else {
                (1.0 + e * s) / s
            }
        };
        1.0 - 1.0 / (l_g * l_g * f(e1, s1) * f(e2, s2))
    };

    let mut pathologies = Vec::new();
    if c_g == 0.0 {
        pathologies.push(TlTlPathology::CgZero);
    }
    if c_ground == 0.0 {
        pathologies.push(TlTlPathology::CgrndZero);
    }
    if inductive_condition.abs() <= 1e-12 {
        pathologies.push(TlTlPathology::LSigma);
    }
    let mats = tl_tl_matrices(
        &m1,
        &m2,
        c_sigma - c1 * alpha1,
        c_g - c2 * alpha2,
        e1,
        e2,
        c_g,
        l_g,
    );
    let (cap_min, cap_vec) = smallest_eigenpair(&mats.cap);
    let (ind_min, ind_vec) = smallest_eigenpair(&mats.ind_inv);
    let witness = match pathologies.first() {
        Some(TlTlPathology::LSigma) => Some(NullWitness {
            sector: Sector::Inductive,
            residual: null_residual(&mats.ind_inv, &ind_vec),
            vector: ind_vec,
            relative_eigenvalue: ind_min,
        }),
        Some(_) => Some(NullWitness {
            sector: Sector::Capacitive,
            residual: null_residual(&mats.cap, &cap_vec),
            vector: cap_vec,
            relative_eigenvalue: cap_min,
        }),
        None => None,
    };
    Ok(TlTlReport {
        alpha1,
        alpha2,
        beta1,
        beta2,
        delta1,
        delta2,
        beta_coupling,
        pathology: pathologies.first().copied().unwrap_or(TlTlPathology::None),
        pathologies,
        inductive_condition,
        alpha_fallback,
        cap_min_eigenvalue: cap_min,
        ind_min_eigenvalue: ind_min,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (lx, ly): (Vec<f64>, Vec<f64>) =
            x.iter().zip(y).map(|(a, b)| (a.ln(), b.abs().ln())).unzip();
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn device_a_alpha() {
        let d = ChargeQubitParams::device_a();
        let dr = optimal_alpha_beta(&d.to_circuit()).unwrap();
        assert!((dr[0].alpha - 1.828e-5).abs() < 0.001e-5);
        assert!((dr[0].alpha - d.alpha()).abs() < 1e-12 * d.alpha());
        assert!(dr[0].beta.is_infinite());
    }

    #[test]
    fn zero_coupling_gives_robin() {
        let mut d = ChargeQubitParams::device_a();
        d.c_g = 0.0;
        let dr = optimal_alpha_beta(&d.to_circuit()).unwrap();
        assert_eq!(dr[0].alpha, 0.0);
        let t = charge_qubit_couplings_approx(&d, 20);
        assert!(t.g.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn negative_alpha_rejected() {
        let mut spec = ChargeQubitParams::device_a().to_circuit();
        spec.blocks[0].cap_matrix[(0, 0)] = 20e-15; // smaller than C_g
        match optimal_alpha_beta(&spec) {
            Err(AssemblyError::NegativeAlpha { quad_form, .. }) => {
                assert!((quad_form - 1.0 / 20e-15).abs() < 1.0)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn device_a_cutoff() {
        let d = ChargeQubitParams::device_a();
        let t = charge_qubit_couplings_exact(&d, 500).unwrap();
        let n = t.argmax();
        assert!((80..=82).contains(&n), "argmax {n}");
        assert!((t.f[n] / 702.5e9 - 1.0).abs() < 0.02, "f = {}", t.f[n]);
        let c = predict_cutoff(d.alpha(), &d.line()).unwrap();
        assert!((c.n_c as i64 - n as i64).abs() <= 1);
        assert!((c.f_c / 702.5e9 - 1.0).abs() < 0.02);
        assert!(t.g.iter().all(|g| *g > 0.0));
    }

    #[test]
    fn cutoff_limits() {
        let line = LineSegment::shorted(1e-10, 1e-6, 1.0);
        assert_eq!(
            predict_cutoff(0.0, &line),
            Err(AssemblyError::UnboundedCutoff)
        );
        let c = predict_cutoff(1e-5, &line).unwrap();
        assert!((c.k_c * 1e-5 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn exact_matches_assembled_couplings() {
        let d = ChargeQubitParams::device_a();
        let t = charge_qubit_couplings_exact(&d, 300).unwrap();
        let h = quantize(&d.to_circuit(), 300).unwrap();
        for n in 0..300 {
            assert!(
                (h.cap_couplings[0][n] / t.g[n] - 1.0).abs() < 1e-9,
                "n = {n}"
            );
            assert!((h.sectors[0].frequencies[n] / t.f[n] - 1.0).abs() < 1e-12);
            assert_eq!(h.ind_couplings[0][n], 0.0);
        }
    }

    #[test]
    fn ultraviolet_law() {
        let d = ChargeQubitParams::device_a();
        let nc = predict_cutoff(d.alpha(), &d.line()).unwrap().n_c;
        let t = charge_qubit_couplings_exact(&d, 20 * nc + 1).unwrap();
        let hi = 5 * nc..=20 * nc;
        let s_hi = slope(&t.f[hi.clone()], &t.g[hi]);
        let lo = 1..=nc / 5;
        let s_lo = slope(&t.f[lo.clone()], &t.g[lo]);
        assert!((s_hi + 0.5).abs() < 0.05, "{s_hi}");
        assert!((s_lo - 0.5).abs() < 0.05, "{s_lo}");
    }

    #[test]
    fn approximation_window() {
        let d = ChargeQubitParams::device_a();
        let ex = charge_qubit_couplings_exact(&d, 200).unwrap();
        let ap = charge_qubit_couplings_approx(&d, 200);
        for n in 0..=10 {
            assert!((ap.g[n] / ex.g[n] - 1.0).abs() <= 0.02, "n = {n}");
        }
        let nc = predict_cutoff(d.alpha(), &d.line()).unwrap().n_c;
        let r = ap.g[nc] / ex.g[nc];
        assert!((r / 2f64.sqrt() - 1.0).abs() < 0.05, "{r}");
        assert!(ap.g.windows(2).all(|w| w[1] > w[0]));
        assert!(ap.warning.is_none());
        assert!(charge_qubit_couplings_approx(&d, 400).warning.is_some());
    }

    #[test]
    fn gauge_invariance() {
        let d = ChargeQubitParams::device_a();
        let spec = d.to_circuit();
        let dr = optimal_alpha_beta(&spec).unwrap();
        let plans = plan_lines(&spec, &dr).unwrap();
        let ks = solve_secular(plans[0].params, plans[0].length, 100, DEFAULT_TOL).unwrap();
        let a = build_finite_modes(&ks, plans[0].params, &spec.lines[0], 1.0).unwrap();
        let b = build_finite_modes(&ks, plans[0].params, &spec.lines[0], 7.3e-9).unwrap();
        let ha = assemble(&spec, &[a], 100).unwrap();
        let hb = assemble(&spec, &[b], 100).unwrap();
        for n in 0..100 {
            assert!((ha.cap_couplings[0][n] / hb.cap_couplings[0][n] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_basis_rejected() {
        let spec = ChargeQubitParams::device_a().to_circuit();
        let bp = BoundaryParams::point(1e-5, f64::INFINITY);
        let ks = solve_secular(bp, 4.7e-3, 10, DEFAULT_TOL).unwrap();
        let b = build_finite_modes(&ks, bp, &spec.lines[0], 1.0).unwrap();
        assert!(matches!(
            assemble(&spec, &[b], 10),
            Err(AssemblyError::DressingMismatch { .. })
        ));
    }

    #[test]
    fn two_networks_on_one_line() {
        let mut spec = ChargeQubitParams::device_a().to_circuit();
        spec.blocks.push(NetworkBlock::single_node(30e-15));
        spec.couplers.push(CouplerSpec {
            block: 1,
            position: 4.7e-3,
            c_g: 10e-15,
            l_g: 2e-9,
            ..spec.couplers[0]
        });
        let h = quantize(&spec, 60).unwrap();
        assert_eq!(h.channels.len(), 2);
        assert_eq!(h.channels[1].site, ChannelSite::Far);
        // distinct channels, populated independently
        let g0 = &h.cap_couplings[0];
        let g1 = &h.cap_couplings[1];
        assert!(g0
            .iter()
            .zip(g1)
            .any(|(a, b)| (a.abs() - b.abs()).abs() > 1e-3 * a.abs()));
        assert!(g1.iter().all(|g| g.is_finite()) && g1.iter().any(|g| *g != 0.0));
        // orthogonality of the two coupling vectors (tail-free check on 60 modes)
        let dense = dense_truncated_assembly(&spec, 60, Truncation::Plain).unwrap();
        assert_eq!(dense.cap.nrows(), 62);
    }

    #[test]
    fn galvanic_matches_point_form() {
        // galvanic coupler with C_g = 0 and C_A equal to a point C_g
        let d = ChargeQubitParams::device_a();
        let mut spec = d.to_circuit();
        spec.lines[0] = LineSegment::shorted(d.c, d.l, 2.0 * d.length);
        spec.couplers[0] = CouplerSpec {
            mode: CouplingMode::Galvanic,
            position: d.length,
            c_g: 0.0,
            c_a: d.c_g,
            l_b: 5e-9,
            ..spec.couplers[0]
        };
        let dr = optimal_alpha_beta(&spec).unwrap();
        let pdr = optimal_alpha_beta(&d.to_circuit()).unwrap();
        assert!((dr[0].alpha - pdr[0].alpha).abs() < 1e-15);
        assert!((dr[0].beta - 5e-9 / d.l).abs() < 1e-18);
        let h = quantize(&spec, 40).unwrap();
        let dr0 = &h.dressing[0];
        let basis = {
            let plans = plan_lines(&spec, &dr).unwrap();
            build_bases(&spec, &plans, 40).unwrap().remove(0)
        };
        for n in 0..40 {
            let want = capacitive_coupling(
                d.c_g / d.c_sigma(),
                basis.endpoint[n],
                basis.omega(n),
                basis.n_alpha,
            );
            assert!((h.cap_couplings[0][n] - want).abs() <= 1e-12 * want.abs().max(1.0));
            let want_l =
                inductive_coupling(1.0 / 5e-9, basis.endpoint[n], basis.omega(n), basis.n_alpha);
            assert!((h.ind_couplings[0][n] - want_l).abs() <= 1e-12 * want_l.abs().max(1.0));
        }
        assert_eq!(dr0.c_off, d.c_g);
    }

    #[test]
    fn dense_assembly_basics() {
        let spec = ChargeQubitParams::device_a().to_circuit();
        let d0 = dense_truncated_assembly(&spec, 0, Truncation::Plain).unwrap();
        assert_eq!(d0.cap, spec.blocks[0].cap_matrix);
        let d20 = dense_truncated_assembly(&spec, 20, Truncation::Plain).unwrap();
        assert!((&d20.cap - d20.cap.transpose()).amax() <= 1e-15 * d20.cap.amax());
        assert!(d20.cap.clone().cholesky().is_some());
        assert!(matches!(
            dense_truncated_assembly(&spec, DENSE_CAP + 1, Truncation::Plain),
            Err(AssemblyError::Linalg(LinalgError::CapExceeded { .. }))
        ));
    }

    #[test]
    fn closed_form_inverse_matches_dense_at_200() {
        let d = ChargeQubitParams::device_a();
        let spec = d.to_circuit();
        let dr = optimal_alpha_beta(&spec).unwrap()[0];
        let plans = plan_lines(&spec, &[dr]).unwrap();
        let basis = &build_bases(&spec, &plans, 200).unwrap()[0];
        let modes = ModeVectors::truncated(basis, 200);
        let sys = dr.system(&spec.blocks[0], &spec.lines[0], dr.alpha);
        let blk = sys.capacitance(&modes);
        let closed = crate::block_linalg::invert_rank_one_block(&blk)
            .unwrap()
            .to_dense()
            .unwrap();
        let dense = dense_inverse(
            &dense_truncated_assembly(&spec, 200, Truncation::Plain)
                .unwrap()
                .cap,
        )
        .unwrap();
        assert!(crate::block_linalg::max_relative_error(&closed, &dense) < 1e-10);
    }

    #[test]
    fn decoupling_certificate_device_a() {
        let spec = ChargeQubitParams::device_a().to_circuit();
        let cert = decoupling_certificate(&spec, 200, 0.1).unwrap();
        assert!(cert.optimal_residual <= 1e-10, "{cert:?}");
        assert!(cert.perturbed_residual > 1e-4, "{cert:?}");
        assert!(cert.network_block_error < 1e-10, "{cert:?}");
        assert!(cert.coupling_block_error < 1e-10, "{cert:?}");
    }

    #[test]
    fn zero_mode_detection() {
        let spec = ChargeQubitParams::device_a().to_circuit();
        let r = &check_invertibility(&spec, 200).unwrap()[0].1;
        assert!(!r.cap_degenerate && !r.ind_degenerate);
        assert!(r.cap_min_eigenvalue.abs() > 1e-8);

        // A = C_g aaᵀ + εP⊥ on two nodes with a along the first axis
        let mut bad = spec.clone();
        let c_g = 40.3e-15;
        bad.blocks[0] = NetworkBlock {
            cap_matrix: DMatrix::from_row_slice(2, 2, &[c_g, 0.0, 0.0, 1e-15]),
            ind_inv_matrix: DMatrix::zeros(2, 2),
            cap_coupling: DVector::from_vec(vec![1.0, 0.0]),
            ind_coupling: DVector::from_vec(vec![1.0, 0.0]),
            potential: Potential::default(),
        };
        let r = &check_invertibility(&bad, 200).unwrap()[0].1;
        assert!(r.cap_degenerate);
        assert!(
            r.cap_min_eigenvalue.abs() < 1e-12,
            "{}",
            r.cap_min_eigenvalue
        );
        assert!(r.cap_witness.is_some());
    }

    fn tl_params() -> TlTlParams {
        TlTlParams {
            line1: LineSegment::shorted(249e-12, 623e-9, 4.7e-3),
            line2: LineSegment::shorted(200e-12, 500e-9, 6.0e-3),
            c_g: 10e-15,
            c_ground: 40e-15,
            l_g: f64::INFINITY,
            l_ground: f64::INFINITY,
        }
    }

    #[test]
    fn tl_tl_generic() {
        let p = tl_params();
        let r = tl_tl_analyze(&p, 200).unwrap();
        assert_eq!(r.pathology, TlTlPathology::None);
        assert!((r.alpha1 - 40e-15 / 249e-12).abs() < 1e-18);
        assert!(
            r.delta1.abs() < 1e-12 * r.beta_coupling.abs()
                && r.delta2.abs() < 1e-12 * r.beta_coupling.abs()
        );
        let (n1, n2) = (249e-12 * 4.7e-3, 200e-12 * 6.0e-3);
        let want = 40e-15 * 10e-15 / (n1 * n2 * 50e-15);
        assert!((r.beta_coupling / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tl_tl_inverse_matches_dense() {
        // δ and β against the dense inverse of the tail-lumped truncation,
        // at a non-optimal α where δ ≠ 0
        let p = tl_params();
        let (l1, l2) = (p.line1, p.line2);
        let (a1, a2) = (1.3 * p.c_ground / l1.c, 0.7e-5);
        let (n1, n2) = (l1.c * 4.7e-3, l2.c * 6.0e-3);
        let bp1 = BoundaryParams::point(a1, f64::INFINITY);
        let bp2 = BoundaryParams::point(a2, f64::INFINITY);
        let b1 = build_finite_modes(
            &solve_secular(bp1, 4.7e-3, 150, DEFAULT_TOL).unwrap(),
            bp1,
            &l1,
            n1,
        )
        .unwrap();
        let b2 = build_finite_modes(
            &solve_secular(bp2, 6.0e-3, 150, DEFAULT_TOL).unwrap(),
            bp2,
            &l2,
            n2,
        )
        .unwrap();
        let m1 = ModeVectors::tail_lumped(&b1, 150).unwrap();
        let m2 = ModeVectors::tail_lumped(&b2, 150).unwrap();
        let cs = p.c_g + p.c_ground;
        let mats = tl_tl_matrices(
            &m1,
            &m2,
            cs - l1.c * a1,
            p.c_g - l2.c * a2,
            0.0,
            0.0,
            p.c_g,
            f64::INFINITY,
        );
        let inv = dense_inverse(&mats.cap).unwrap();
        let (c1a1, c2a2) = (l1.c * a1, l2.c * a2);
        let d1 = c1a1 * (c1a1 - p.c_ground) / (p.c_ground * n1 * n1);
        let d2 = c2a2 * (c2a2 * cs - p.c_g * p.c_ground) / (p.c_g * p.c_ground * n2 * n2);
        let bc = c1a1 * c2a2 / (p.c_ground * n1 * n2);
        let (u, v) = (&m1.u, &m2.u);
        let i = 3;
        let j = 7;
        assert!((inv[(i, j)] / (d1 * u[i] * u[j]) - 1.0).abs() < 1e-8);
        assert!((inv[(150 + i, 150 + j)] / (d2 * v[i] * v[j]) - 1.0).abs() < 1e-8);
        assert!((inv[(i, 150 + j)] / (bc * u[i] * v[j]) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tl_tl_pathologies() {
        let mut p = tl_params();
        p.c_ground = 0.0;
        let r = tl_tl_analyze(&p, 200).unwrap();
        assert_eq!(r.pathology, TlTlPathology::CgrndZero);
        let w = r.witness.unwrap();
        assert!(
            w.relative_eigenvalue.abs() < 1e-12,
            "{}",
            w.relative_eigenvalue
        );

        let mut p = tl_params();
        p.c_g = 0.0;
        let r = tl_tl_analyze(&p, 200).unwrap();
        assert_eq!(r.pathology, TlTlPathology::CgZero);
        let w = r.witness.unwrap();
        assert!(w.relative_eigenvalue.abs() < 1e-12);
        // (0, v): no weight on the first line
        assert!(w.vector.rows(0, 200).amax() < 1e-6 * w.vector.amax());

        let mut p = tl_params();
        p.line1.far_end = FarEnd::Open;
        p.line2.far_end = FarEnd::Open;
        p.l_g = 3e-9;
        let r = tl_tl_analyze(&p, 200).unwrap();
        assert_eq!(r.pathology, TlTlPathology::LSigma);
        assert!(r.witness.unwrap().relative_eigenvalue.abs() < 1e-12);
        p.l_ground = 5e-9;
        let r = tl_tl_analyze(&p, 200).unwrap();
        assert_eq!(r.pathology, TlTlPathology::None);
    }
}
