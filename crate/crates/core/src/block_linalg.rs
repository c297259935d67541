//! Block inverses of capacitance and inductance matrices whose network and
//! mode sectors are coupled through low-rank off-diagonal blocks.
//!
//! Infinite mode blocks are carried as a diagonal plus a short list of
//! rank-one corrections; dense matrices are only built for oracles.

use crate::mode_basis::ModeBasis;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative threshold separating exact singularities from conditioning noise.
pub const SINGULAR_TOL: f64 = 1e-14;
/// Default cap on the number of modes in a dense realisation.
pub const DENSE_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("block matrix is not invertible (1 - tau = {defect:e})")]
    NotInvertible { defect: f64, witness: DVector<f64> },
    #[error("coefficient system is singular (condition number {condition:e})")]
    SingularCoefficients { condition: f64 },
    #[error("sub-block {0} is singular")]
    SingularBlock(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dense realisation of {requested} modes exceeds the cap of {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("truncation needs {0}")]
    Truncation(&'static str),
}

/// `diag(d) + Σ s_i w_i w_iᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPlusLowRank {
    pub diag: DVector<f64>,
    pub terms: Vec<(f64, DVector<f64>)>,
}

impl DiagPlusLowRank {
    pub fn diagonal(diag: DVector<f64>) -> Self {
        DiagPlusLowRank {
            diag,
            terms: Vec::new(),
        }
    }

    /// `n·I + s·wwᵀ`.
    pub fn scaled_identity_plus(n: f64, s: f64, w: DVector<f64>) -> Self {
        DiagPlusLowRank {
            diag: DVector::from_element(w.len(), n),
            terms: vec![(s, w)],
        }
    }

    pub fn with_term(mut self, s: f64, w: DVector<f64>) -> Self {
        self.terms.push((s, w));
        self
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&self.diag);
        for (s, w) in &self.terms {
            m.ger(*s, w, w, 1.0);
        }
        m
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.diag.component_mul(x);
        for (s, w) in &self.terms {
            y.axpy(s * w.dot(x), w, 1.0);
        }
        y
    }

    /// Solve by the Woodbury identity, written without `S⁻¹` so that zero
    /// weights are harmless.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        if self.diag.iter().any(|d| *d == 0.0) {
            return Err(LinalgError::SingularBlock("diagonal part"));
        }
        let dinv_b = b.component_div(&self.diag);
        let r = self.terms.len();
        if r == 0 {
            return Ok(dinv_b);
        }
        let dinv_w: Vec<DVector<f64>> = self
            .terms
            .iter()
            .map(|(_, w)| w.component_div(&self.diag))
            .collect();
        // (I + S G) y = S Wᵀ D⁻¹ b with G = Wᵀ D⁻¹ W
        let mut k = DMatrix::identity(r, r);
        let mut rhs = DVector::zeros(r);
        for i in 0..r {
            let (s, w) = &self.terms[i];
            for j in 0..r {
                k[(i, j)] += s * w.dot(&dinv_w[j]);
            }
            rhs[i] = s * w.dot(&dinv_b);
        }
        let y = k
            .lu()
            .solve(&rhs)
            .ok_or(LinalgError::SingularBlock("low-rank capacitance"))?;
        let mut x = dinv_b;
        for j in 0..r {
            x.axpy(-y[j], &dinv_w[j], 1.0);
        }
        Ok(x)
    }

    pub fn inverse_dense(&self) -> Result<DMatrix<f64>, LinalgError> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e)?);
        }
        Ok(inv)
    }
}

/// `[[A1, v uᵀ], [u vᵀ, A2]]` with a rank-one off-diagonal block.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneBlock {
    pub a1: DMatrix<f64>,
    pub a2: DiagPlusLowRank,
    pub v: DVector<f64>,
    pub u: DVector<f64>,
}

impl RankOneBlock {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (p, n) = (self.a1.nrows(), self.a2.dim());
        let mut m = DMatrix::zeros(p + n, p + n);
        m.view_mut((0, 0), (p, p)).copy_from(&self.a1);
        m.view_mut((p, p), (n, n)).copy_from(&self.a2.to_dense());
        let d = &self.v * self.u.transpose();
        m.view_mut((0, p), (p, n)).copy_from(&d);
        m.view_mut((p, 0), (n, p)).copy_from(&d.transpose());
        m
    }
}

/// Closed-form inverse of a [`RankOneBlock`]:
///
/// top-left `A1⁻¹ + μ/(1−τ) x xᵀ`, off-diagonal `−x yᵀ/(1−τ)`,
/// bottom-right `A2⁻¹ + ν/(1−τ) y yᵀ`, with `x = A1⁻¹v`, `y = A2⁻¹u`,
/// `μ = uᵀy`, `ν = vᵀx` and `τ = μν`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneInverse {
    pub a1_inv: DMatrix<f64>,
    pub a2: DiagPlusLowRank,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub mu: f64,
    pub nu: f64,
    pub tau: f64,
}

impl RankOneInverse {
    pub fn top_left(&self) -> DMatrix<f64> {
        let mut m = self.a1_inv.clone();
        m.ger(self.mu / (1.0 - self.tau), &self.x, &self.x, 1.0);
        m
    }

    pub fn off_diagonal(&self) -> DMatrix<f64> {
        &self.x * self.y.transpose() * (-1.0 / (1.0 - self.tau))
    }

    /// Weight of the `y yᵀ` correction in the bottom-right block.
    pub fn mode_correction(&self) -> f64 {
        self.nu / (1.0 - self.tau)
    }

    pub fn bottom_right(&self) -> Result<DMatrix<f64>, LinalgError> {
        let mut m = self.a2.inverse_dense()?;
        m.ger(self.mode_correction(), &self.y, &self.y, 1.0);
        Ok(m)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>, LinalgError> {
        let (p, n) = (self.x.len(), self.y.len());
        let mut m = DMatrix::zeros(p + n, p + n);
        m.view_mut((0, 0), (p, p)).copy_from(&self.top_left());
        m.view_mut((p, p), (n, n)).copy_from(&self.bottom_right()?);
        let off = self.off_diagonal();
        m.view_mut((0, p), (p, n)).copy_from(&off);
        m.view_mut((p, 0), (n, p)).copy_from(&off.transpose());
        Ok(m)
    }
}

/// Invert a rank-one coupled block matrix, or report the null direction
/// `(−μ A1⁻¹v, A2⁻¹u)` when `1 − τ` vanishes.
pub fn invert_rank_one_block(m: &RankOneBlock) -> Result<RankOneInverse, LinalgError> {
    let p = m.a1.nrows();
    if m.a1.ncols() != p || m.v.len() != p || m.u.len() != m.a2.dim() {
        return Err(LinalgError::Dimension(
            "rank-one block sizes disagree".into(),
        ));
    }
    let a1_inv =
        m.a1.clone()
            .try_inverse()
            .ok_or(LinalgError::SingularBlock("A1"))?;
    let x = &a1_inv * &m.v;
    let y = m.a2.solve(&m.u)?;
    let mu = m.u.dot(&y);
    let nu = m.v.dot(&x);
    let tau = mu * nu;
    if (1.0 - tau).abs() <= SINGULAR_TOL {
        let mut witness = DVector::zeros(p + y.len());
        witness.rows_mut(0, p).copy_from(&(&x * -mu));
        witness.rows_mut(p, y.len()).copy_from(&y);
        return Err(LinalgError::NotInvertible {
            defect: 1.0 - tau,
            witness,
        });
    }
    Ok(RankOneInverse {
        a1_inv,
        a2: m.a2.clone(),
        x,
        y,
        mu,
        nu,
        tau,
    })
}

/// `[[A, −Σ a_i u_iᵀ], [−Σ u_i a_iᵀ, C1 + Σ u_i u_iᵀ]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRankBlock {
    pub a: DMatrix<f64>,
    pub c1: DiagPlusLowRank,
    /// Columns `a_i`, order `p × M`.
    pub a_vecs: DMatrix<f64>,
    /// Columns `u_i`, order `N × M`.
    pub u_vecs: DMatrix<f64>,
}

impl FiniteRankBlock {
    pub fn rank(&self) -> usize {
        self.a_vecs.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (p, n) = (self.a.nrows(), self.c1.dim());
        let mut m = DMatrix::zeros(p + n, p + n);
        m.view_mut((0, 0), (p, p)).copy_from(&self.a);
        let br = self.c1.to_dense() + &self.u_vecs * self.u_vecs.transpose();
        m.view_mut((p, p), (n, n)).copy_from(&br);
        let d = -(&self.a_vecs * self.u_vecs.transpose());
        m.view_mut((0, p), (p, n)).copy_from(&d);
        m.view_mut((p, 0), (n, p)).copy_from(&d.transpose());
        m
    }
}

/// Closed-form inverse of a [`FiniteRankBlock`] with `P = A⁻¹`, `Q = C1⁻¹`:
///
/// `[[P + P𝐚β𝐚ᵀP, P𝐚ρ𝐮ᵀQ], [Q𝐮γ𝐚ᵀP, Q + Q𝐮λ𝐮ᵀQ]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRankInverse {
    pub mu: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub rho: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// `P𝐚`, order `p × M`.
    pub pa: DMatrix<f64>,
    /// `Q𝐮`, order `N × M`.
    pub qu: DMatrix<f64>,
    c1: DiagPlusLowRank,
}

impl FiniteRankInverse {
    pub fn top_left(&self) -> DMatrix<f64> {
        &self.p + &self.pa * &self.beta * self.pa.transpose()
    }

    pub fn top_right(&self) -> DMatrix<f64> {
        &self.pa * &self.rho * self.qu.transpose()
    }

    pub fn bottom_left(&self) -> DMatrix<f64> {
        &self.qu * &self.gamma * self.pa.transpose()
    }

    pub fn bottom_right(&self) -> Result<DMatrix<f64>, LinalgError> {
        Ok(self.c1.inverse_dense()? + &self.qu * &self.lambda * self.qu.transpose())
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>, LinalgError> {
        let (p, n) = (self.pa.nrows(), self.qu.nrows());
        let mut m = DMatrix::zeros(p + n, p + n);
        m.view_mut((0, 0), (p, p)).copy_from(&self.top_left());
        m.view_mut((0, p), (p, n)).copy_from(&self.top_right());
        m.view_mut((p, 0), (n, p)).copy_from(&self.bottom_left());
        m.view_mut((p, p), (n, n)).copy_from(&self.bottom_right()?);
        Ok(m)
    }

    /// Largest residual of the four defining coefficient equations.
    pub fn coefficient_residual(&self) -> f64 {
        let m = self.mu.nrows();
        let id = DMatrix::<f64>::identity(m, m);
        let k = &id + &self.mu - &self.nu * &self.mu;
        let scale = 1.0 + self.gamma.amax() + self.lambda.amax();
        [
            (&k * &self.gamma - &id).amax(),
            (&self.beta - &self.mu * &self.gamma).amax(),
            (&k * &self.lambda - (&self.nu - &id)).amax(),
            (&self.rho - &id - &self.mu * &self.lambda).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
            / scale
    }
}

/// Invert a finite-rank coupled block matrix through the `M × M`
/// coefficient system `γ = (I + μ − νμ)⁻¹`, `β = μγ`, `λ = γ(ν − I)`,
/// `ρ = I + μλ`, with `μ = 𝐮ᵀC1⁻¹𝐮` and `ν = 𝐚ᵀA⁻¹𝐚`.
pub fn invert_finite_rank_block(m: &FiniteRankBlock) -> Result<FiniteRankInverse, LinalgError> {
    let p = m.a.nrows();
    let rank = m.rank();
    if m.a_vecs.nrows() != p || m.u_vecs.nrows() != m.c1.dim() || m.u_vecs.ncols() != rank {
        return Err(LinalgError::Dimension(
            "finite-rank block sizes disagree".into(),
        ));
    }
    let pinv =
        m.a.clone()
            .try_inverse()
            .ok_or(LinalgError::SingularBlock("A"))?;
    let pa = &pinv * &m.a_vecs;
    let mut qu = DMatrix::zeros(m.c1.dim(), rank);
    for i in 0..rank {
        qu.set_column(i, &m.c1.solve(&m.u_vecs.column(i).into_owned())?);
    }
    let mu = m.u_vecs.transpose() * &qu;
    let nu = m.a_vecs.transpose() * &pa;
    let id = DMatrix::<f64>::identity(rank, rank);
    let k = &id + &mu - &nu * &mu;
    let sv = k.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= SINGULAR_TOL * smax.max(1.0) {
        return Err(LinalgError::SingularCoefficients {
            condition: smax / smin,
        });
    }
    let gamma = k.try_inverse().ok_or(LinalgError::SingularCoefficients {
        condition: f64::INFINITY,
    })?;
    let beta = &mu * &gamma;
    let lambda = &gamma * (&nu - &id);
    let rho = &id + &mu * &lambda;
    Ok(FiniteRankInverse {
        mu,
        nu,
        beta,
        gamma,
        lambda,
        rho,
        p: pinv,
        pa,
        qu,
        c1: m.c1.clone(),
    })
}

/// Largest entry error relative to the largest entry of the reference.
pub fn max_relative_error(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (x - reference).amax() / reference.amax()
}

/// Dense inverse by LU, used as an oracle.
pub fn dense_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or(LinalgError::SingularBlock("dense matrix"))
}

/// Smallest-magnitude eigenpair of a symmetric matrix, with the eigenvalue
/// relative to the spectral radius.
pub fn smallest_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let radius = eig.eigenvalues.amax();
    let (i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| {
            if v.abs() < best.1 {
                (i, v.abs())
            } else {
                best
            }
        });
    (
        eig.eigenvalues[i] / radius,
        eig.eigenvectors.column(i).into_owned(),
    )
}

/// Truncated mode data entering the block matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVectors {
    pub n_alpha: f64,
    pub omega: DVector<f64>,
    /// Coupling vector `u_n(x₀)` (or `Δu_n`).
    pub u: DVector<f64>,
    /// True when the last entry aggregates the discarded tail.
    pub tail_lumped: bool,
}

impl ModeVectors {
    /// First `n` modes as they are.
    pub fn truncated(basis: &ModeBasis, n: usize) -> Self {
        let n = n.min(basis.len());
        ModeVectors {
            n_alpha: basis.n_alpha,
            omega: DVector::from_iterator(n, (0..n).map(|i| basis.omega(i))),
            u: DVector::from_iterator(n, basis.endpoint[..n].iter().copied()),
            tail_lumped: false,
        }
    }

    /// First `n − 1` modes plus one aggregate mode carrying the rest of the
    /// spectrum, chosen so that `|u|² = N_α/(αc)` and
    /// `Σ u_n²/(N_α ω_n²) = lβ·s₂` hold exactly, as for the full set.
    pub fn tail_lumped(basis: &ModeBasis, n: usize) -> Result<Self, LinalgError> {
        if n < 2 || n > basis.len() {
            return Err(LinalgError::Truncation("2 <= n <= number of solved modes"));
        }
        let alpha = basis.alpha();
        if !(alpha > 0.0) {
            return Err(LinalgError::Truncation("a positive capacitive length"));
        }
        let head = n - 1;
        let mut m = Self::truncated(basis, n);
        let u2: f64 = m.u.rows(0, head).iter().map(|u| u * u).sum();
        let total = basis.n_alpha / (alpha * basis.line.c);
        let tail = total - u2;
        if !(tail > 0.0) {
            return Err(LinalgError::Truncation("a positive tail weight"));
        }
        m.u[head] = tail.sqrt();
        if let Some(target) = basis.s2_target() {
            let s_total = basis.line.l * basis.beta() * target;
            let s_head: f64 = (0..head)
                .map(|i| m.u[i] * m.u[i] / (basis.n_alpha * m.omega[i] * m.omega[i]))
                .sum();
            let rest = s_total - s_head;
            if !(rest > 0.0) {
                return Err(LinalgError::Truncation("a positive inductive tail weight"));
            }
            m.omega[head] = (tail / (basis.n_alpha * rest)).sqrt();
        }
        m.tail_lumped = true;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// One network coupled to one set of line modes.
///
/// Capacitive sector `[[A, −C_off a uᵀ], [−C_off u aᵀ, N_α I + d uuᵀ]]` with
/// `d = C_diag − αc`; inductive sector `[[B⁻¹, −b uᵀ/L_off],
/// [−u bᵀ/L_off, N_α ω² + e uuᵀ]]` with `e = 1/L_diag − 1/(βl)`. For point
/// coupling `C_off = C_diag = C_g` and `L_off = L_diag = L_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    pub a: DMatrix<f64>,
    pub binv: DMatrix<f64>,
    pub a_vec: DVector<f64>,
    pub b_vec: DVector<f64>,
    pub c_off: f64,
    pub c_diag: f64,
    pub l_off: f64,
    pub l_diag: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub l: f64,
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

impl CoupledSystem {
    pub fn d(&self) -> f64 {
        self.c_diag - self.alpha * self.c
    }

    pub fn e(&self) -> f64 {
        recip(self.l_diag) - recip(self.beta * self.l)
    }

    pub fn capacitance(&self, modes: &ModeVectors) -> RankOneBlock {
        RankOneBlock {
            a1: self.a.clone(),
            a2: DiagPlusLowRank::scaled_identity_plus(modes.n_alpha, self.d(), modes.u.clone()),
            v: &self.a_vec * -self.c_off,
            u: modes.u.clone(),
        }
    }

    pub fn inverse_inductance(&self, modes: &ModeVectors) -> RankOneBlock {
        RankOneBlock {
            a1: self.binv.clone(),
            a2: DiagPlusLowRank {
                diag: modes.omega.map(|w| modes.n_alpha * w * w),
                terms: vec![(self.e(), modes.u.clone())],
            },
            v: &self.b_vec * -recip(self.l_off),
            u: modes.u.clone(),
        }
    }

    /// Dense `C` and `L⁻¹` of order `p + N`.
    pub fn dense(
        &self,
        modes: &ModeVectors,
        cap: usize,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
        if modes.len() > cap {
            return Err(LinalgError::CapExceeded {
                requested: modes.len(),
                cap,
            });
        }
        Ok((
            self.capacitance(modes).to_dense(),
            self.inverse_inductance(modes).to_dense(),
        ))
    }
}

/// Closed-form and numerical zero-mode diagnosis.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroModeReport {
    /// `1 − (C_off²/C_diag) aᵀA⁻¹a`; zero signals a capacitive zero mode.
    pub cap_condition: f64,
    /// `1 − τ_L` of the inductive sector; `None` without inductive coupling
    /// or when `B⁻¹` is singular.
    pub ind_condition: Option<f64>,
    pub cap_degenerate: bool,
    pub ind_degenerate: bool,
    /// Smallest eigenvalue of the dense truncated matrices relative to
    /// their spectral radius.
    pub cap_min_eigenvalue: f64,
    pub ind_min_eigenvalue: f64,
    pub cap_witness: Option<DVector<f64>>,
    pub ind_witness: Option<DVector<f64>>,
}

/// Evaluate the invertibility conditions and confirm flagged cases on the
/// dense truncation `modes` (use [`ModeVectors::tail_lumped`] so that the
/// truncated sums match the full ones).
pub fn detect_zero_modes(
    system: &CoupledSystem,
    modes: &ModeVectors,
    s2_limit: f64,
) -> Result<ZeroModeReport, LinalgError> {
    let ainv_a = system
        .a
        .clone()
        .lu()
        .solve(&system.a_vec)
        .ok_or(LinalgError::SingularBlock("A"))?;
    let q = system.a_vec.dot(&ainv_a);
    let (cap_condition, mode_block_singular) = if system.c_diag == 0.0 {
        (1.0, system.alpha > 0.0)
    } else {
        (1.0 - system.c_off * system.c_off / system.c_diag * q, false)
    };
    let ind_condition = if system.l_off.is_infinite() {
        None
    } else {
        system.binv.clone().lu().solve(&system.b_vec).map(|bb| {
            let s = system.l * system.beta * s2_limit;
            let s_eff = if s.is_infinite() {
                1.0 / system.e()
            } else {
                s / (1.0 + system.e() * s)
            };
            1.0 - system.b_vec.dot(&bb) * s_eff / (system.l_off * system.l_off)
        })
    };
    let (cmat, lmat) = system.dense(modes, DENSE_CAP)?;
    let (cap_min, cap_vec) = smallest_eigenpair(&cmat);
    let (ind_min, ind_vec) = smallest_eigenpair(&lmat);
    let cap_degenerate = mode_block_singular || cap_condition.abs() <= SINGULAR_TOL * 1e2;
    let ind_degenerate = ind_condition.is_some_and(|c| c.abs() <= SINGULAR_TOL * 1e2);
    Ok(ZeroModeReport {
        cap_condition,
        ind_condition,
        cap_degenerate,
        ind_degenerate,
        cap_min_eigenvalue: cap_min,
        ind_min_eigenvalue: ind_min,
        cap_witness: cap_degenerate.then_some(cap_vec),
        ind_witness: ind_degenerate.then_some(ind_vec),
    })
}

/// `‖M w‖ / (‖M‖ ‖w‖)` for a candidate null vector.
pub fn null_residual(m: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (m * w).norm() / (m.norm() * w.norm())
}

/// Two lines joined at their coupling ends through `C_g ∥ L_g`, the first
/// one also grounded through `C_G ∥ L_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct TlTlMatrices {
    pub cap: DMatrix<f64>,
    pub ind_inv: DMatrix<f64>,
    pub n1: usize,
}

/// Dense TL–TL matrices with `d₁ = C_Σ − c₁α₁`, `d₂ = C_g − c₂α₂`,
/// `e₁ = 1/L_Σ − 1/(β₁l₁)`, `e₂ = 1/L_g − 1/(β₂l₂)`.
#[allow(clippy::too_many_arguments)]
pub fn tl_tl_matrices(
    m1: &ModeVectors,
    m2: &ModeVectors,
    d1: f64,
    d2: f64,
    e1: f64,
    e2: f64,
    c_g: f64,
    l_g: f64,
) -> TlTlMatrices {
    let (n1, n2) = (m1.len(), m2.len());
    let block = |off: f64, diag1: DVector<f64>, diag2: DVector<f64>, k1: f64, k2: f64| {
        let (w1, w2) = (&m1.u, &m2.u);
        let mut m = DMatrix::zeros(n1 + n2, n1 + n2);
        let mut top = DMatrix::from_diagonal(&diag1);
        top.ger(k1, w1, w1, 1.0);
        let mut bottom = DMatrix::from_diagonal(&diag2);
        bottom.ger(k2, w2, w2, 1.0);
        m.view_mut((0, 0), (n1, n1)).copy_from(&top);
        m.view_mut((n1, n1), (n2, n2)).copy_from(&bottom);
        let cross = w1 * w2.transpose() * -off;
        m.view_mut((0, n1), (n1, n2)).copy_from(&cross);
        m.view_mut((n1, 0), (n2, n1)).copy_from(&cross.transpose());
        m
    };
    let cap = block(
        c_g,
        DVector::from_element(n1, m1.n_alpha),
        DVector::from_element(n2, m2.n_alpha),
        d1,
        d2,
    );
    let ind_inv = block(
        recip(l_g),
        m1.omega.map(|w| m1.n_alpha * w * w),
        m2.omega.map(|w| m2.n_alpha * w * w),
        e1,
        e2,
    );
    TlTlMatrices { cap, ind_inv, n1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> DMatrix<f64> {
        let g = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        (&g * g.transpose() + DMatrix::identity(p, p) * p as f64) * scale
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0) * scale)
    }

    #[test]
    fn woodbury_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DiagPlusLowRank::diagonal(DVector::from_fn(30, |_, _| rng.gen_range(1.0..2.0)))
            .with_term(0.7, random_vec(&mut rng, 30, 1.0))
            .with_term(-0.2, random_vec(&mut rng, 30, 1.0))
            .with_term(0.0, random_vec(&mut rng, 30, 1.0));
        let b = random_vec(&mut rng, 30, 1.0);
        let x = m.solve(&b).unwrap();
        assert!((m.to_dense() * &x - &b).amax() < 1e-12);
        assert!((m.apply(&x) - &b).amax() < 1e-12);
    }

    #[test]
    fn uncoupled_rank_one_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = RankOneBlock {
            a1: spd(&mut rng, 3, 1.0),
            a2: DiagPlusLowRank::scaled_identity_plus(2.0, 0.5, random_vec(&mut rng, 10, 1.0)),
            v: DVector::zeros(3),
            u: random_vec(&mut rng, 10, 1.0),
        };
        let inv = invert_rank_one_block(&m).unwrap();
        assert_eq!(inv.tau, 0.0);
        let dense = inv.to_dense().unwrap();
        assert!(dense.view((0, 3), (3, 10)).amax() == 0.0);
        assert!((inv.top_left() - m.a1.clone().try_inverse().unwrap()).amax() < 1e-14);
    }

    #[test]
    fn rank_one_against_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = RankOneBlock {
            a1: spd(&mut rng, 3, 1.0),
            a2: DiagPlusLowRank::scaled_identity_plus(3.0, 0.4, random_vec(&mut rng, 20, 1.0)),
            v: random_vec(&mut rng, 3, 0.5),
            u: random_vec(&mut rng, 20, 0.5),
        };
        let closed = invert_rank_one_block(&m).unwrap().to_dense().unwrap();
        let dense = dense_inverse(&m.to_dense()).unwrap();
        assert!(max_relative_error(&closed, &dense) < 1e-12);
        let id = m.to_dense() * &closed;
        assert!((id - DMatrix::identity(23, 23)).amax() < 1e-12);
    }

    #[test]
    fn rank_one_singular_witness() {
        // A1 = [1], v = [1], A2 = I, u = e₀: τ = 1
        let m = RankOneBlock {
            a1: DMatrix::from_element(1, 1, 1.0),
            a2: DiagPlusLowRank::diagonal(DVector::from_element(4, 1.0)),
            v: DVector::from_element(1, 1.0),
            u: DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
        };
        match invert_rank_one_block(&m) {
            Err(LinalgError::NotInvertible { witness, .. }) => {
                assert!(null_residual(&m.to_dense(), &witness) < 1e-15);
            }
            other => panic!("expected singular block, got {other:?}"),
        }
    }

    #[test]
    fn finite_rank_m1_matches_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = spd(&mut rng, 2, 1.0);
        let c1 = DiagPlusLowRank::diagonal(DVector::from_fn(15, |_, _| rng.gen_range(1.0..3.0)));
        let av = random_vec(&mut rng, 2, 0.5);
        let uv = random_vec(&mut rng, 15, 0.5);
        let fr = FiniteRankBlock {
            a: a.clone(),
            c1: c1.clone(),
            a_vecs: DMatrix::from_column_slice(2, 1, av.as_slice()),
            u_vecs: DMatrix::from_column_slice(15, 1, uv.as_slice()),
        };
        let ro = RankOneBlock {
            a1: a,
            a2: c1.with_term(1.0, uv.clone()),
            v: -av,
            u: uv,
        };
        let x = invert_finite_rank_block(&fr).unwrap().to_dense().unwrap();
        let y = invert_rank_one_block(&ro).unwrap().to_dense().unwrap();
        assert!(max_relative_error(&x, &y) < 1e-13);
        assert!((fr.to_dense() - ro.to_dense()).amax() < 1e-15);
    }

    #[test]
    fn finite_rank_coefficients_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fr = FiniteRankBlock {
            a: spd(&mut rng, 4, 1.0),
            c1: DiagPlusLowRank::diagonal(DVector::from_fn(40, |_, _| rng.gen_range(1.0..3.0)))
                .with_term(0.3, random_vec(&mut rng, 40, 0.3)),
            a_vecs: DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-0.5..0.5)),
            u_vecs: DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-0.3..0.3)),
        };
        let inv = invert_finite_rank_block(&fr).unwrap();
        assert!(inv.coefficient_residual() < 1e-12);
        let dense = dense_inverse(&fr.to_dense()).unwrap();
        assert!(max_relative_error(&inv.to_dense().unwrap(), &dense) < 1e-12);
        assert!((inv.bottom_left() - inv.top_right().transpose()).amax() < 1e-12 * dense.amax());
    }

    #[test]
    fn finite_rank_singular_coefficients() {
        // 1×1 network, one mode: A = 1, C1 = 1, a = 1, u = 1 → I + μ − νμ = 1
        // is fine; make ν = 2, μ = 1 → 1 + 1 − 2 = 0
        let fr = FiniteRankBlock {
            a: DMatrix::from_element(1, 1, 0.5),
            c1: DiagPlusLowRank::diagonal(DVector::from_element(1, 1.0)),
            a_vecs: DMatrix::from_element(1, 1, 1.0),
            u_vecs: DMatrix::from_element(1, 1, 1.0),
        };
        assert!(matches!(
            invert_finite_rank_block(&fr),
            Err(LinalgError::SingularCoefficients { .. })
        ));
    }
}
