//! Foster-form lumped expansions of lossless impedances, the canonical
//! dressing that removes mode-mode couplings, and the two-port line with a
//! charge qubit on each end.
//!
//! Conventions: a 1st-form expansion is a series chain of parallel `C_α ∥ L_α`
//! stages; a 2nd-form expansion is a parallel bank of series `L_α C_α`
//! branches; a multiport expansion attaches every stage to the ports through
//! a turn-ratio row `T_α`. An infinite `L_α` is a pure capacitor.

use crate::block_linalg::{
    dense_inverse, invert_finite_rank_block, null_residual, smallest_eigenpair, DiagPlusLowRank,
    FiniteRankBlock, FiniteRankInverse, LinalgError,
};
pub use crate::circuit_model::{FosterExpansion, FosterForm};
use crate::constants::{ELEMENTARY_CHARGE, HBAR};
use crate::structured_eigen::{EigenError, LowRankEigen};
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Largest stage count for which dense eigenvectors are formed.
pub const DENSE_DRESS_CAP: usize = 2500;

/// `C_B eᵀC_α⁻¹e` above this is treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Relative `|s² + Ω_k²|` below which an evaluation point counts as a pole.
pub const POLE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FosterError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("evaluation point sits on the pole of stage {stage} (relative distance {distance:e})")]
    PoleProximity { stage: usize, distance: f64 },
    #[error(
        "capacitance matrix not invertible: C_A = 0 with divergent eᵀC⁻¹e = {e_cinv_e:e} (relative Schur complement {relative_schur:e})"
    )]
    NotInvertible { e_cinv_e: f64, relative_schur: f64 },
    #[error("dressing matrix is not positive (smallest eigenvalue {smallest:e})")]
    NotPositive { smallest: f64 },
    #[error("{n} stages exceed the dense limit {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("eigenvalue {index} is not positive ({value:e})")]
    Unstable { index: usize, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

impl FosterExpansion {
    /// `n` identical one-port stages.
    pub fn equal_stages(form: FosterForm, n: usize, cap: f64, ind: f64) -> Self {
        FosterExpansion {
            form,
            stage_caps: vec![cap; n],
            stage_inds: vec![ind; n],
            turn_ratios: vec![vec![1.0]; n],
            port_count: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.stage_caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stage_caps.is_empty()
    }

    /// First `n` stages.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        FosterExpansion {
            form: self.form,
            stage_caps: self.stage_caps[..n].to_vec(),
            stage_inds: self.stage_inds[..n].to_vec(),
            turn_ratios: self.turn_ratios[..n].to_vec(),
            port_count: self.port_count,
        }
    }

    /// Stage resonances `1/√(L_α C_α)`, zero for pure capacitors, rad/s.
    pub fn resonances(&self) -> Vec<f64> {
        self.stage_caps
            .iter()
            .zip(&self.stage_inds)
            .map(|(c, l)| {
                if l.is_finite() {
                    1.0 / (l * c).sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), FosterError> {
        if self.stage_inds.len() != self.len() || self.turn_ratios.len() != self.len() {
            return Err(FosterError::Dimension(
                "stage tables of different lengths".into(),
            ));
        }
        if self.turn_ratios.iter().any(|t| t.len() != self.port_count) {
            return Err(FosterError::Dimension(
                "turn ratio row length differs from port count".into(),
            ));
        }
        if let Some(&c) = self
            .stage_caps
            .iter()
            .find(|c| !(**c > 0.0 && c.is_finite()))
        {
            return Err(FosterError::InvalidParameter {
                name: "stage capacitance",
                value: c,
            });
        }
        if let Some(&l) = self.stage_inds.iter().find(|l| !(**l > 0.0)) {
            return Err(FosterError::InvalidParameter {
                name: "stage inductance",
                value: l,
            });
        }
        Ok(())
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), FosterError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FosterError::InvalidParameter { name, value })
    }
}

/// Lumped two-port expansion of a lossless line: stage 0 is the capacitor
/// `cL` with a virtual infinite inductor, stages `k = 1..=n` are
/// `cL/2 ∥ 2lL/(kπ)²` with turn ratios `[1, (−1)^k]`.
pub fn synthesize_tl_two_port(
    c: f64,
    l: f64,
    length: f64,
    n: usize,
) -> Result<FosterExpansion, FosterError> {
    positive("c", c)?;
    positive("l", l)?;
    positive("length", length)?;
    if n == 0 {
        return Err(FosterError::InvalidParameter {
            name: "stages",
            value: 0.0,
        });
    }
    let c0 = c * length;
    let mut caps = vec![c0];
    let mut inds = vec![f64::INFINITY];
    let mut ratios = vec![vec![1.0, 1.0]];
    for k in 1..=n {
        let kf = k as f64;
        caps.push(0.5 * c0);
        inds.push(2.0 * l * length / (kf * kf * PI * PI));
        ratios.push(vec![1.0, if k % 2 == 0 { 1.0 } else { -1.0 }]);
    }
    Ok(FosterExpansion {
        form: FosterForm::Multiport,
        stage_caps: caps,
        stage_inds: inds,
        turn_ratios: ratios,
        port_count: 2,
    })
}

/// Impedance matrix at complex frequency `s`.
///
/// 1st form and multiport: `Σ_α T_αᵀT_α (s/C_α)/(s² + Ω_α²)`. 2nd form: the
/// inverse of the admittance `Σ_α (s/L_α)/(s² + Ω_α²)`.
pub fn impedance_eval(
    f: &FosterExpansion,
    s: Complex<f64>,
) -> Result<DMatrix<Complex<f64>>, FosterError> {
    f.validate()?;
    let m = f.port_count;
    let s2 = s * s;
    let mut z = DMatrix::<Complex<f64>>::zeros(m, m);
    let mut y = Complex::new(0.0, 0.0);
    for (k, ((&c, &l), t)) in f
        .stage_caps
        .iter()
        .zip(&f.stage_inds)
        .zip(&f.turn_ratios)
        .enumerate()
    {
        let w2 = if l.is_finite() { 1.0 / (l * c) } else { 0.0 };
        let den = s2 + w2;
        let distance = den.norm() / s2.norm().max(w2);
        if distance <= POLE_TOL || s.norm() == 0.0 && w2 == 0.0 {
            return Err(FosterError::PoleProximity { stage: k, distance });
        }
        match f.form {
            FosterForm::Foster2 => {
                if l.is_finite() {
                    y += s / (l * den);
                } else {
                    // a lone capacitor branch
                    y += s * c;
                }
            }
            _ => {
                let zk = s / (c * den);
                for i in 0..m {
                    for j in 0..m {
                        z[(i, j)] += zk * t[i] * t[j];
                    }
                }
            }
        }
    }
    if f.form == FosterForm::Foster2 {
        if y.norm() == 0.0 {
            return Err(FosterError::PoleProximity {
                stage: 0,
                distance: 0.0,
            });
        }
        z[(0, 0)] = y.inv();
    }
    Ok(z)
}

/// `Z₀ [[coth, csch], [csch, coth]](s√(lc)L)` for a lossless line.
pub fn tl_impedance_exact(c: f64, l: f64, length: f64, s: Complex<f64>) -> DMatrix<Complex<f64>> {
    let z0 = (l / c).sqrt();
    let x = s * (l * c).sqrt() * length;
    let sh = x.sinh();
    let coth = x.cosh() / sh;
    let csch = sh.inv();
    DMatrix::from_row_slice(2, 2, &[coth * z0, csch * z0, csch * z0, coth * z0])
}

/// Hamiltonian after dressing:
/// `½ qᵀ P q + qᵀ X p̄ + Σ_α [p̄_α²/(2M₀) + M₀Ω_α² z̄_α²/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedHamiltonian {
    /// `P`, order `p × p`.
    pub network_inverse_cap: DMatrix<f64>,
    /// `X`, order `p × N`, columns ordered like `omega`.
    pub cross: DMatrix<f64>,
    pub m0: f64,
    /// Ascending, rad/s.
    pub omega: Vec<f64>,
}

impl DressedHamiltonian {
    /// Full inverse capacitance in the final variables.
    pub fn inverse_capacitance(&self) -> DMatrix<f64> {
        let (p, n) = self.cross.shape();
        let mut m = DMatrix::zeros(p + n, p + n);
        m.view_mut((0, 0), (p, p))
            .copy_from(&self.network_inverse_cap);
        m.view_mut((0, p), (p, n)).copy_from(&self.cross);
        m.view_mut((p, 0), (n, p))
            .copy_from(&self.cross.transpose());
        for a in 0..n {
            m[(p + a, p + a)] = 1.0 / self.m0;
        }
        m
    }

    /// Full inverse inductance in the final variables (zero network block).
    pub fn inverse_inductance(&self) -> DMatrix<f64> {
        let (p, n) = self.cross.shape();
        let mut m = DMatrix::zeros(p + n, p + n);
        for (a, w) in self.omega.iter().enumerate() {
            m[(p + a, p + a)] = self.m0 * w * w;
        }
        m
    }
}

/// Dense normal-mode data of a dressed impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModes {
    pub m_alpha: DMatrix<f64>,
    /// Ascending, rad/s.
    pub frequencies: Vec<f64>,
    /// Rotated coupling vectors, one column per port, rows ordered like
    /// `frequencies`.
    pub coupling_vectors: DMatrix<f64>,
    /// Columns are the eigenvectors `U` (first significant entry positive).
    pub rotation: DMatrix<f64>,
    /// `‖K − U Ω² Uᵀ‖ / ‖K‖` for the diagonalised inductance `K`.
    pub eig_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DressedImpedance {
    pub m0: f64,
    /// Gram matrix of the coupling vectors, `f_i · f_j`.
    pub norm: DMatrix<f64>,
    /// Analytic infinite-stage value of `norm`, when finite.
    pub limit_norm: Option<DMatrix<f64>>,
    /// Present when the stage count is at most [`DENSE_DRESS_CAP`].
    pub modes: Option<NormalModes>,
}

/// Symmetric eigen-decomposition, ascending, each eigenvector's first
/// significant component made positive.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        let big = col.amax();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-8 * big) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vecs.set_column(j, &col);
    }
    (order.iter().map(|&i| eig.eigenvalues[i]).collect(), vecs)
}

/// `M^{1/2}` and `M^{-1/2}` of a symmetric positive matrix.
fn sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), FosterError> {
    let (vals, vecs) = sorted_eigen(m);
    if vals[0] <= 0.0 {
        return Err(FosterError::NotPositive { smallest: vals[0] });
    }
    let half = &vecs
        * DMatrix::from_diagonal(&DVector::from_iterator(
            vals.len(),
            vals.iter().map(|v| v.sqrt()),
        ));
    let ihalf = &vecs
        * DMatrix::from_diagonal(&DVector::from_iterator(
            vals.len(),
            vals.iter().map(|v| 1.0 / v.sqrt()),
        ));
    Ok((&half * vecs.transpose(), &ihalf * vecs.transpose()))
}

fn inverse_inductances(stages: &FosterExpansion) -> DVector<f64> {
    DVector::from_iterator(
        stages.len(),
        stages
            .stage_inds
            .iter()
            .map(|l| if l.is_finite() { 1.0 / l } else { 0.0 }),
    )
}

/// Rotate to normal modes: `K = M^{-1/2} L⁻¹ M^{-1/2} = U Ω² Uᵀ`.
fn normal_rotation(
    m_ihalf: &DMatrix<f64>,
    linv: &DVector<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>, f64), FosterError> {
    let k = m_ihalf * DMatrix::from_diagonal(linv) * m_ihalf;
    let k = 0.5 * (&k + k.transpose());
    let (vals, u) = sorted_eigen(&k);
    let recon = &u * DMatrix::from_diagonal(&DVector::from_column_slice(&vals)) * u.transpose();
    let residual = (&k - recon).norm() / k.norm().max(f64::MIN_POSITIVE);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let omega = vals
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v < -1e-12 * scale {
                Err(FosterError::Unstable { index: i, value: v })
            } else {
                Ok(v.max(0.0).sqrt())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((omega, u, residual))
}

/// Single-port capacitive coupling `C_A` to ground, `C_B` into a 1st-form
/// chain, dressed with `t = C_B/C_Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Foster1Dressing {
    pub t: f64,
    /// `C_Σ` of the network node.
    pub a: f64,
    /// `tC_Σ − C_B`; zero at the optimal dressing.
    pub b: f64,
    /// `C_B − 2C_B t + C_Σ t²`; the series capacitance at the optimum.
    pub d: f64,
    /// `eᵀC_α⁻¹e`, 1/F.
    pub e_cinv_e: f64,
    /// `eᵀM_α⁻¹e`, 1/F.
    pub e_minv_e: f64,
    /// Coefficient `C_B/(M₀C_Σ)` of `q_A Σ f̄_α p̄_α`.
    pub coupling_coefficient: f64,
    /// `1/C_Σ + t²|f|²/M₀`, tends to `1/C_A`.
    pub network_inverse_cap: f64,
    pub dressed: DressedImpedance,
    pub hamiltonian: Option<DressedHamiltonian>,
}

/// Dress a 1st-form chain coupled through `C_B` to a node with `C_A` to
/// ground. `m0` defaults to the first stage capacitance.
pub fn foster1_dress(
    c_a: f64,
    c_b: f64,
    stages: &FosterExpansion,
    m0: Option<f64>,
) -> Result<Foster1Dressing, FosterError> {
    stages.validate()?;
    if stages.is_empty() {
        return Err(FosterError::InvalidParameter {
            name: "stages",
            value: 0.0,
        });
    }
    positive("C_B", c_b)?;
    if !(c_a >= 0.0 && c_a.is_finite()) {
        return Err(FosterError::InvalidParameter {
            name: "C_A",
            value: c_a,
        });
    }
    let m0 = m0.unwrap_or(stages.stage_caps[0]);
    positive("M0", m0)?;
    let c_sigma = c_a + c_b;
    let s: f64 = stages.stage_caps.iter().map(|c| 1.0 / c).sum();
    if c_a == 0.0 && c_b * s >= DIVERGENCE_THRESHOLD {
        // Schur complement of the node: C_B/(1 + C_B s), against C_B N.
        let relative_schur = c_b / (1.0 + c_b * s) / (c_b * stages.len() as f64);
        return Err(FosterError::NotInvertible {
            e_cinv_e: s,
            relative_schur,
        });
    }
    let t = c_b / c_sigma;
    let b = t * c_sigma - c_b;
    let d = c_b - 2.0 * c_b * t + c_sigma * t * t;
    let e_minv_e = s / (1.0 + d * s);
    let f2 = m0 * e_minv_e;
    let coupling_coefficient = c_b / (m0 * c_sigma);
    let network_inverse_cap = 1.0 / c_sigma + t * t * f2 / m0;
    let n = stages.len();
    let (modes, hamiltonian) = if n <= DENSE_DRESS_CAP {
        let ones = DVector::from_element(n, 1.0);
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&stages.stage_caps))
            + d * &ones * ones.transpose();
        let (_, m_ihalf) = sqrt_pair(&m)?;
        let f = m0.sqrt() * &m_ihalf * &ones;
        let (omega, u, eig_residual) = normal_rotation(&m_ihalf, &inverse_inductances(stages))?;
        let fbar = u.transpose() * f;
        let cross = DMatrix::from_row_slice(1, n, (coupling_coefficient * &fbar).as_slice());
        let ham = DressedHamiltonian {
            network_inverse_cap: DMatrix::from_element(1, 1, network_inverse_cap),
            cross,
            m0,
            omega: omega.clone(),
        };
        let modes = NormalModes {
            m_alpha: m,
            frequencies: omega,
            coupling_vectors: DMatrix::from_column_slice(n, 1, fbar.as_slice()),
            rotation: u,
            eig_residual,
        };
        (Some(modes), Some(ham))
    } else {
        (None, None)
    };
    let limit_norm = (d > 0.0).then(|| DMatrix::from_element(1, 1, m0 / d));
    Ok(Foster1Dressing {
        t,
        a: c_sigma,
        b,
        d,
        e_cinv_e: s,
        e_minv_e,
        coupling_coefficient,
        network_inverse_cap,
        dressed: DressedImpedance {
            m0,
            norm: DMatrix::from_element(1, 1, f2),
            limit_norm,
            modes,
        },
        hamiltonian,
    })
}

/// Direct check of the 1st-form capacitance matrix
/// `[[C_Σ, −C_B eᵀ], [−C_B e, C_α + C_B eeᵀ]]` along the node's Schur
/// direction `w = (1, C_B (C_α + C_B eeᵀ)⁻¹ e)`, which becomes a null vector
/// when `C_A = 0` and `eᵀC_α⁻¹e` diverges.
#[derive(Debug, Clone, PartialEq)]
pub struct NullCheck {
    /// Smallest eigenvalue of the dense matrix over its spectral radius.
    pub relative_eigenvalue: f64,
    pub witness: DVector<f64>,
    /// `wᵀCw / (‖C‖ wᵀw)`.
    pub rayleigh: f64,
    /// `‖C w‖/(‖C‖‖w‖)`.
    pub residual: f64,
}

pub fn foster1_capacitance(c_a: f64, c_b: f64, stages: &FosterExpansion) -> DMatrix<f64> {
    let n = stages.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = c_a + c_b;
    for i in 0..n {
        m[(0, i + 1)] = -c_b;
        m[(i + 1, 0)] = -c_b;
        for j in 0..n {
            m[(i + 1, j + 1)] = c_b;
        }
        m[(i + 1, i + 1)] += stages.stage_caps[i];
    }
    m
}

pub fn foster1_null_check(
    c_a: f64,
    c_b: f64,
    stages: &FosterExpansion,
) -> Result<NullCheck, FosterError> {
    if stages.len() > DENSE_DRESS_CAP {
        return Err(FosterError::TooLarge {
            n: stages.len(),
            cap: DENSE_DRESS_CAP,
        });
    }
    stages.validate()?;
    let c = foster1_capacitance(c_a, c_b, stages);
    let (relative_eigenvalue, _) = smallest_eigenpair(&c);
    let n = stages.len();
    let s: f64 = stages.stage_caps.iter().map(|c| 1.0 / c).sum();
    let mut witness = DVector::from_element(n + 1, 1.0);
    for i in 0..n {
        witness[i + 1] = c_b / stages.stage_caps[i] / (1.0 + c_b * s);
    }
    let radius = c.clone().symmetric_eigen().eigenvalues.amax();
    let rayleigh = witness.dot(&(&c * &witness)) / (radius * witness.norm_squared());
    let residual = null_residual(&c, &witness);
    Ok(NullCheck {
        relative_eigenvalue,
        witness,
        rayleigh,
        residual,
    })
}

/// 2nd-form bank on a node with capacitance `C_A`, in the variables where the
/// coupling is capacitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Foster2Dressing {
    /// `Σ_α C_α / C₀`.
    pub e_norm2: f64,
    /// Coefficient `1/C_A` of `q_A Σ f_α ρ_α`.
    pub coupling_coefficient: f64,
    pub dressed: DressedImpedance,
    pub hamiltonian: Option<DressedHamiltonian>,
}

/// `M_α⁻¹ = C₀⁻¹ 1 + C_A⁻¹ e eᵀ` with `e = C₀^{-1/2} C_α^{1/2} 1`;
/// `|f|² = eᵀM_α e / M₀ → C_A/M₀`. `C₀` is the first stage capacitance and
/// `m0` defaults to it.
pub fn foster2_dress(
    c_a: f64,
    stages: &FosterExpansion,
    m0: Option<f64>,
) -> Result<Foster2Dressing, FosterError> {
    stages.validate()?;
    if stages.is_empty() {
        return Err(FosterError::InvalidParameter {
            name: "stages",
            value: 0.0,
        });
    }
    positive("C_A", c_a)?;
    let c0 = stages.stage_caps[0];
    let m0 = m0.unwrap_or(c0);
    positive("M0", m0)?;
    let n = stages.len();
    let e = DVector::from_iterator(n, stages.stage_caps.iter().map(|c| (c / c0).sqrt()));
    let e2 = e.norm_squared();
    // Sherman-Morrison: eᵀMe = C₀|e|²/(1 + C₀|e|²/C_A).
    let eme = c0 * e2 / (1.0 + c0 * e2 / c_a);
    let f2 = eme / m0;
    let (modes, hamiltonian) = if n <= DENSE_DRESS_CAP {
        let minv = DMatrix::<f64>::identity(n, n) / c0 + (&e * e.transpose()) / c_a;
        let m = dense_inverse(&minv)?;
        let m = 0.5 * (&m + m.transpose());
        let (m_half, m_ihalf) = sqrt_pair(&m)?;
        // Inductance in the rescaled fluxes: C₀ C_α^{-1/2} L_α⁻¹ C_α^{-1/2}.
        let linv = DVector::from_iterator(
            n,
            stages
                .stage_caps
                .iter()
                .zip(&stages.stage_inds)
                .map(|(c, l)| if l.is_finite() { c0 / (c * l) } else { 0.0 }),
        );
        let (omega, u, eig_residual) = normal_rotation(&m_ihalf, &linv)?;
        let f = u.transpose() * (&m_half * &e) / m0.sqrt();
        let cross = DMatrix::from_row_slice(1, n, (&f / c_a).as_slice());
        let ham = DressedHamiltonian {
            network_inverse_cap: DMatrix::from_element(1, 1, 1.0 / c_a),
            cross,
            m0,
            omega: omega.clone(),
        };
        let modes = NormalModes {
            m_alpha: m,
            frequencies: omega,
            coupling_vectors: DMatrix::from_column_slice(n, 1, f.as_slice()),
            rotation: u,
            eig_residual,
        };
        (Some(modes), Some(ham))
    } else {
        (None, None)
    };
    Ok(Foster2Dressing {
        e_norm2: e2,
        coupling_coefficient: 1.0 / c_a,
        dressed: DressedImpedance {
            m0,
            norm: DMatrix::from_element(1, 1, f2),
            limit_norm: Some(DMatrix::from_element(1, 1, c_a / m0)),
            modes,
        },
        hamiltonian,
    })
}

/// Canonical dressing of `[[A, −Σ a_i u_iᵀ], [−Σ u_i a_iᵀ, C_α + Σ u_i u_iᵀ]]`
/// by `M_α = C_α + (δ_ij − a_iᵀA⁻¹a_j) u_i u_jᵀ`.
#[derive(Debug, Clone)]
pub struct MultiportDressing {
    pub coefficients: FiniteRankInverse,
    /// `u_iᵀM_α⁻¹u_j`.
    pub coupling_matrix: DMatrix<f64>,
    pub smallest_eigenvalue: f64,
    /// `max |M^{1/2} D⁻¹ M^{1/2} − 1|`.
    pub identity_residual: f64,
    pub dressed: DressedImpedance,
    pub hamiltonian: DressedHamiltonian,
}

/// Network block `A`, diagonal stage capacitances and inverse inductances,
/// `a_vecs` (`p × M`) and `u_vecs` (`N × M`).
pub fn multiport_dressing(
    a: &DMatrix<f64>,
    stage_caps: &[f64],
    stage_inv_inds: &[f64],
    a_vecs: &DMatrix<f64>,
    u_vecs: &DMatrix<f64>,
    m0: Option<f64>,
) -> Result<MultiportDressing, FosterError> {
    let n = stage_caps.len();
    if stage_inv_inds.len() != n
        || u_vecs.nrows() != n
        || a_vecs.nrows() != a.nrows()
        || a_vecs.ncols() != u_vecs.ncols()
    {
        return Err(FosterError::Dimension(
            "multiport block sizes disagree".into(),
        ));
    }
    if n > DENSE_DRESS_CAP {
        return Err(FosterError::TooLarge {
            n,
            cap: DENSE_DRESS_CAP,
        });
    }
    let m0 = m0.unwrap_or(stage_caps[0]);
    positive("M0", m0)?;
    let block = FiniteRankBlock {
        a: a.clone(),
        c1: DiagPlusLowRank::diagonal(DVector::from_column_slice(stage_caps)),
        a_vecs: a_vecs.clone(),
        u_vecs: u_vecs.clone(),
    };
    let coeff = invert_finite_rank_block(&block)?;
    let ports = a_vecs.ncols();
    let w = DMatrix::<f64>::identity(ports, ports) - &coeff.nu;
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(stage_caps))
        + u_vecs * &w * u_vecs.transpose();
    let m = 0.5 * (&m + m.transpose());
    let (vals, _) = sorted_eigen(&m);
    if vals[0] <= 0.0 {
        return Err(FosterError::NotPositive { smallest: vals[0] });
    }
    let (m_half, m_ihalf) = sqrt_pair(&m)?;
    let qinv = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        stage_caps.iter().map(|c| 1.0 / c),
    ));
    let dinv = &qinv + &coeff.qu * &coeff.lambda * coeff.qu.transpose();
    let identity_residual = (&m_half * &dinv * &m_half - DMatrix::<f64>::identity(n, n)).amax();
    let minv = dense_inverse(&m)?;
    let coupling_matrix = u_vecs.transpose() * &minv * u_vecs;
    let (omega, u, eig_residual) =
        normal_rotation(&m_ihalf, &DVector::from_column_slice(stage_inv_inds))?;
    let cross = coeff.top_right() * &m_half * &u / m0.sqrt();
    // Port coupling vectors f_i = M₀^{1/2} Uᵀ M^{-1/2} u_i, Gram m0 uᵀM⁻¹u.
    let fvecs = u.transpose() * &m_ihalf * u_vecs * m0.sqrt();
    let hamiltonian = DressedHamiltonian {
        network_inverse_cap: coeff.top_left(),
        cross,
        m0,
        omega: omega.clone(),
    };
    let dressed = DressedImpedance {
        m0,
        norm: &coupling_matrix * m0,
        limit_norm: None,
        modes: Some(NormalModes {
            m_alpha: m,
            frequencies: omega,
            coupling_vectors: fvecs,
            rotation: u,
            eig_residual,
        }),
    };
    Ok(MultiportDressing {
        coefficients: coeff,
        coupling_matrix,
        smallest_eigenvalue: vals[0],
        identity_residual,
        dressed,
        hamiltonian,
    })
}

/// Oracle: apply `Φ_α = M₀^{1/2} M^{-1/2} U z̄` to the full dense capacitance
/// (network first, `p` rows) and invert by LU.
pub fn dense_canonical_transform(
    cap: &DMatrix<f64>,
    p: usize,
    stage_inv_inds: &[f64],
    m_alpha: &DMatrix<f64>,
    m0: f64,
) -> Result<DressedHamiltonian, FosterError> {
    let n = cap.nrows() - p;
    let (m_half, m_ihalf) = sqrt_pair(m_alpha)?;
    let (omega, u, _) = normal_rotation(&m_ihalf, &DVector::from_column_slice(stage_inv_inds))?;
    let cinv = dense_inverse(cap)?;
    // J⁻¹ = diag(1, M₀^{-1/2} Uᵀ M^{1/2}).
    let mut jinv = DMatrix::zeros(p + n, p + n);
    jinv.view_mut((0, 0), (p, p)).fill_with_identity();
    jinv.view_mut((p, p), (n, n))
        .copy_from(&(u.transpose() * &m_half / m0.sqrt()));
    let cz = &jinv * cinv * jinv.transpose();
    Ok(DressedHamiltonian {
        network_inverse_cap: cz.view((0, 0), (p, p)).into_owned(),
        cross: cz.view((0, p), (p, n)).into_owned(),
        m0,
        omega,
    })
}

/// Two charge qubits on the ends of an open line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example3Params {
    pub c_g1: f64,
    pub c_j1: f64,
    pub c_g2: f64,
    pub c_j2: f64,
    /// F/m.
    pub c: f64,
    /// H/m.
    pub l: f64,
    /// m.
    pub length: f64,
}

impl Example3Params {
    /// Port 2 carries half the capacitances of port 1 on a 9.4 mm line.
    pub fn two_qubit_reference() -> Self {
        Example3Params {
            c_g1: 40.3e-15,
            c_j1: 5.13e-15,
            c_g2: 20.15e-15,
            c_j2: 2.565e-15,
            c: 249e-12,
            l: 623e-9,
            length: 9.4e-3,
        }
    }

    fn validate(&self) -> Result<(), FosterError> {
        for (name, v) in [
            ("C_J1", self.c_j1),
            ("C_J2", self.c_j2),
            ("c", self.c),
            ("l", self.l),
            ("length", self.length),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [("C_g1", self.c_g1), ("C_g2", self.c_g2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FosterError::InvalidParameter { name, value: v });
            }
        }
        Ok(())
    }

    fn block(&self, n: usize) -> Result<(FiniteRankBlock, FosterExpansion), FosterError> {
        self.validate()?;
        let stages = synthesize_tl_two_port(self.c, self.l, self.length, n)?;
        let caps = DVector::from_column_slice(&stages.stage_caps);
        let mut a_vecs = DMatrix::zeros(2, 2);
        a_vecs[(0, 0)] = self.c_g1.sqrt();
        a_vecs[(1, 1)] = self.c_g2.sqrt();
        let mut u_vecs = DMatrix::zeros(n + 1, 2);
        for (k, t) in stages.turn_ratios.iter().enumerate() {
            u_vecs[(k, 0)] = self.c_g1.sqrt() * t[0];
            u_vecs[(k, 1)] = self.c_g2.sqrt() * t[1];
        }
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[
            self.c_g1 + self.c_j1,
            self.c_g2 + self.c_j2,
        ]));
        Ok((
            FiniteRankBlock {
                a,
                c1: DiagPlusLowRank::diagonal(caps),
                a_vecs,
                u_vecs,
            },
            stages,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example3Spectrum {
    /// Ascending, rad/s.
    pub omega: Vec<f64>,
    /// `g_ασ` for ports 1 and 2, rad/s, for the charge number operator
    /// `q_σ = 2e n_σ`. Signs fixed so that the port-1 entry is non-negative.
    pub g: Vec<[f64; 2]>,
    pub mu: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub rho: DMatrix<f64>,
}

impl Example3Spectrum {
    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / (2.0 * PI)).collect()
    }

    /// Mode index of the largest `|g_ασ|`.
    pub fn argmax(&self, port: usize) -> usize {
        self.g
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, g)| {
                if g[port].abs() > b.1 {
                    (i, g[port].abs())
                } else {
                    b
                }
            })
            .0
    }
}

fn orient(kappa: &mut [[f64; 2]]) {
    for k in kappa.iter_mut() {
        let lead = if k[0] != 0.0 { k[0] } else { k[1] };
        if lead < 0.0 {
            k[0] = -k[0];
            k[1] = -k[1];
        }
    }
}

fn couplings(omega: &[f64], kappa: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut g: Vec<[f64; 2]> = omega
        .iter()
        .zip(kappa)
        .map(|(w, k)| {
            let s = 2.0 * ELEMENTARY_CHARGE / (2.0 * HBAR * w).sqrt();
            [s * k[0], s * k[1]]
        })
        .collect();
    orient(&mut g);
    g
}

/// Normal modes of the two-port line after removing the free stage-0 pair.
///
/// The retained mode block is `K = ℓ D̃⁻¹ ℓ` with `ℓ_k = L_k^{-1/2}`, which is
/// `diag(Ω_k²)` plus a rank-two update; it is diagonalised through secular
/// equations in O(N²) time on `threads` workers.
pub fn example3_spectrum(
    params: &Example3Params,
    n: usize,
    threads: usize,
) -> Result<Example3Spectrum, FosterError> {
    let (block, stages) = params.block(n)?;
    let coeff = invert_finite_rank_block(&block)?;
    let ell: Vec<f64> = stages.stage_inds[1..]
        .iter()
        .map(|l| 1.0 / l.sqrt())
        .collect();
    let poles: Vec<f64> = (1..=n)
        .map(|k| 1.0 / (stages.stage_inds[k] * stages.stage_caps[k]))
        .collect();
    // λ is symmetric in exact arithmetic.
    let lambda = 0.5 * (&coeff.lambda + coeff.lambda.transpose());
    let le = lambda.clone().symmetric_eigen();
    let mut terms = Vec::new();
    for r in 0..2 {
        let theta = le.eigenvalues[r];
        let z = le.eigenvectors.column(r);
        let v: Vec<f64> = (1..=n)
            .map(|k| ell[k - 1] * (z[0] * coeff.qu[(k, 0)] + z[1] * coeff.qu[(k, 1)]))
            .collect();
        if theta != 0.0 && v.iter().any(|x| *x != 0.0) {
            terms.push((theta, v));
        }
    }
    let eig = LowRankEigen::with_threads(&poles, &terms, threads)?;
    let omega = positive_roots(eig.values())?;
    let cross = coeff.top_right();
    let mut kappa = vec![[0.0; 2]; n];
    for s in 0..2 {
        let x: Vec<f64> = (1..=n).map(|k| ell[k - 1] * cross[(s, k)]).collect();
        for (a, y) in eig.project(&x).into_iter().enumerate() {
            kappa[a][s] = y;
        }
    }
    Ok(Example3Spectrum {
        g: couplings(&omega, kappa),
        omega,
        mu: coeff.mu,
        nu: coeff.nu,
        lambda: coeff.lambda,
        rho: coeff.rho,
    })
}

fn positive_roots(values: &[f64]) -> Result<Vec<f64>, FosterError> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                Ok(v.sqrt())
            } else {
                Err(FosterError::Unstable { index: i, value: v })
            }
        })
        .collect()
}

/// Dense-LU oracle for [`example3_spectrum`].
pub fn example3_dense(params: &Example3Params, n: usize) -> Result<Example3Spectrum, FosterError> {
    if n > DENSE_DRESS_CAP {
        return Err(FosterError::TooLarge {
            n,
            cap: DENSE_DRESS_CAP,
        });
    }
    let (block, stages) = params.block(n)?;
    let coeff = invert_finite_rank_block(&block)?;
    let cinv = dense_inverse(&block.to_dense())?;
    // Network rows 0..2, stage 0 at row 2 (dropped), stages 1..=n after it.
    let dt = cinv.view((3, 3), (n, n)).into_owned();
    let ell = DVector::from_iterator(n, stages.stage_inds[1..].iter().map(|l| 1.0 / l.sqrt()));
    let k = DMatrix::from_diagonal(&ell) * dt * DMatrix::from_diagonal(&ell);
    let k = 0.5 * (&k + k.transpose());
    let (vals, v) = sorted_eigen(&k);
    let omega = positive_roots(&vals)?;
    let mut kappa = vec![[0.0; 2]; n];
    for s in 0..2 {
        let x = DVector::from_iterator(n, (0..n).map(|j| ell[j] * cinv[(s, 3 + j)]));
        let y = v.transpose() * x;
        for a in 0..n {
            kappa[a][s] = y[a];
        }
    }
    Ok(Example3Spectrum {
        g: couplings(&omega, kappa),
        omega,
        mu: coeff.mu,
        nu: coeff.nu,
        lambda: coeff.lambda,
        rho: coeff.rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stages(rng: &mut ChaCha8Rng, n: usize) -> FosterExpansion {
        let caps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5e-12..2e-12)).collect();
        let inds: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5e-9..2e-9)).collect();
        FosterExpansion {
            form: FosterForm::Foster1,
            stage_caps: caps,
            stage_inds: inds,
            turn_ratios: vec![vec![1.0]; n],
            port_count: 1,
        }
    }

    #[test]
    fn tl_stage_values() {
        let f = synthesize_tl_two_port(249e-12, 623e-9, 9.4e-3, 10).unwrap();
        assert!((f.stage_caps[0] - 2.3406e-12).abs() < 1e-16);
        assert!(f.stage_inds[0].is_infinite());
        assert!((f.stage_inds[1] - 2.0 * 623e-9 * 9.4e-3 / (PI * PI)).abs() < 1e-20);
        for (k, t) in f.turn_ratios.iter().enumerate() {
            assert_eq!(t[1], if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        let w = f.resonances();
        let f1 = w[1] / (2.0 * PI);
        assert!((f1 * 2.0 * 9.4e-3 * (623e-9f64 * 249e-12).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tl_impedance_converges() {
        let (c, l, len) = (249e-12, 623e-9, 9.4e-3);
        let f = synthesize_tl_two_port(c, l, len, 200).unwrap();
        let w = f.resonances();
        // The dropped tail is about 2ω√(lc)L/(π²N) in units of Z₀, so the
        // relative error is smallest where |Z| is large, near Ω₁.
        let s = Complex::new(0.0, 1.05 * w[1]);
        let z = impedance_eval(&f, s).unwrap();
        let exact = tl_impedance_exact(c, l, len, s);
        for i in 0..2 {
            for j in 0..2 {
                let err = (z[(i, j)] - exact[(i, j)]).norm() / exact[(i, j)].norm();
                assert!(err < 1e-3, "{i}{j}: {err}");
            }
        }
        // Away from Ω₁ the error still falls like 1/N.
        let s = Complex::new(0.0, 1.3 * w[1]);
        let exact = tl_impedance_exact(c, l, len, s);
        let err = |n: usize| {
            let z = impedance_eval(&synthesize_tl_two_port(c, l, len, n).unwrap(), s).unwrap();
            (z[(0, 0)] - exact[(0, 0)]).norm() / exact[(0, 0)].norm()
        };
        let ratio = err(200) / err(400);
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
        assert_eq!(z[(0, 1)], z[(1, 0)]);
        let s0 = Complex::new(1e-3, 0.0);
        let z0 = impedance_eval(&f, s0).unwrap() * s0;
        for x in z0.iter() {
            assert!((x.re * c * len - 1.0).abs() < 1e-6);
        }
        assert!(matches!(
            impedance_eval(&f, Complex::new(0.0, w[3])),
            Err(FosterError::PoleProximity { stage: 3, .. })
        ));
    }

    #[test]
    fn foster1_single_stage_against_direct_inverse() {
        let stages = FosterExpansion::equal_stages(FosterForm::Foster1, 1, 1e-12, 2e-9);
        let (c_a, c_b) = (3e-15, 7e-15);
        let r = foster1_dress(c_a, c_b, &stages, None).unwrap();
        assert!(r.b.abs() <= 4.0 * f64::EPSILON * c_b);
        assert!((r.d - c_a * c_b / (c_a + c_b)).abs() < 1e-30);
        let ham = r.hamiltonian.unwrap();
        let modes = r.dressed.modes.unwrap();
        let oracle = dense_canonical_transform(
            &foster1_capacitance(c_a, c_b, &stages),
            1,
            &[1.0 / 2e-9],
            &modes.m_alpha,
            1e-12,
        )
        .unwrap();
        let a = ham.inverse_capacitance();
        let b = oracle.inverse_capacitance();
        assert!((&a - &b).amax() <= 1e-14 * b.amax(), "{a} vs {b}");
        // Scalar closed form of the only frequency: 1/√(L(C + d)).
        let w = 1.0 / (2e-9 * (1e-12 + r.d)).sqrt();
        assert!((ham.omega[0] / w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn foster1_equivalent_to_multiport() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [5, 60, 200] {
            let stages = random_stages(&mut rng, n);
            let (c_a, c_b) = (rng.gen_range(1e-15..1e-14), rng.gen_range(1e-15..5e-14));
            let r = foster1_dress(c_a, c_b, &stages, None).unwrap();
            let ham = r.hamiltonian.unwrap();
            let a = DMatrix::from_element(1, 1, c_a + c_b);
            let av = DMatrix::from_element(1, 1, c_b.sqrt());
            let uv = DMatrix::from_element(n, 1, c_b.sqrt());
            let linv: Vec<f64> = stages.stage_inds.iter().map(|l| 1.0 / l).collect();
            let mp = multiport_dressing(&a, &stages.stage_caps, &linv, &av, &uv, None).unwrap();
            let (x, y) = (
                ham.inverse_capacitance(),
                mp.hamiltonian.inverse_capacitance(),
            );
            assert!(
                (&x - &y).amax() <= 1e-12 * y.amax(),
                "n = {n}: {}",
                (&x - &y).amax() / y.amax()
            );
            let (x, y) = (
                ham.inverse_inductance(),
                mp.hamiltonian.inverse_inductance(),
            );
            assert!((&x - &y).amax() <= 1e-12 * y.amax());
            assert!(mp.identity_residual < 1e-10);
            assert!(r.dressed.modes.as_ref().unwrap().eig_residual < 1e-10);
        }
    }

    #[test]
    fn foster1_norm_monotone_and_bounded() {
        let (c_a, c_b) = (5e-15, 20e-15);
        let mut last = 0.0;
        for n in [10, 100, 1000, 10_000] {
            let stages = FosterExpansion::equal_stages(FosterForm::Foster1, n, 1e-14, 1e-9);
            let r = foster1_dress(c_a, c_b, &stages, None).unwrap();
            let f2 = r.dressed.norm[(0, 0)];
            let lim = r.dressed.limit_norm.as_ref().unwrap()[(0, 0)];
            assert!(f2 > last && f2 <= lim * (1.0 + 1e-14));
            last = f2;
        }
    }

    #[test]
    fn m0_does_not_change_physics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stages = random_stages(&mut rng, 40);
        let a = foster1_dress(4e-15, 9e-15, &stages, Some(1e-12)).unwrap();
        let b = foster1_dress(4e-15, 9e-15, &stages, Some(3.7e-13)).unwrap();
        let (ha, hb) = (a.hamiltonian.unwrap(), b.hamiltonian.unwrap());
        // Coupling energy scale X_α²·M₀ is invariant, as are the frequencies.
        for i in 0..40 {
            let ea = ha.cross[(0, i)].powi(2) * ha.m0;
            let eb = hb.cross[(0, i)].powi(2) * hb.m0;
            assert!((ea / eb - 1.0).abs() < 1e-10);
            assert!((ha.omega[i] / hb.omega[i] - 1.0).abs() < 1e-12);
        }
        assert!((a.network_inverse_cap / b.network_inverse_cap - 1.0).abs() < 1e-14);
    }

    #[test]
    fn foster1_pathology() {
        let stages = FosterExpansion::equal_stages(FosterForm::Foster1, 200, 1e-26, 1e-9);
        match foster1_dress(0.0, 1e-13, &stages, None) {
            Err(FosterError::NotInvertible { relative_schur, .. }) => {
                assert!(relative_schur < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let check = foster1_null_check(0.0, 1e-13, &stages).unwrap();
        assert!(check.relative_eigenvalue.abs() < 1e-12);
        assert!(check.rayleigh < 1e-12 && check.residual < 1e-12);
        let healthy = foster1_null_check(1e-15, 1e-13, &stages).unwrap();
        assert!(healthy.rayleigh > 1e-12);
    }

    #[test]
    fn foster2_limits_and_oracle() {
        let c_a = 2e-13;
        let stages = FosterExpansion::equal_stages(FosterForm::Foster2, 10_000, 1e-12, 1e-9);
        let r = foster2_dress(c_a, &stages, None).unwrap();
        let ratio = r.dressed.norm[(0, 0)] * r.dressed.m0 / c_a;
        assert!((0.99..=1.0).contains(&ratio), "{ratio}");
        assert!(r.dressed.modes.is_none());

        // Single stage: closed form and direct inversion.
        let one = FosterExpansion::equal_stages(FosterForm::Foster2, 1, 1e-12, 1e-9);
        let r = foster2_dress(c_a, &one, None).unwrap();
        let m = 1.0 / (1.0 / 1e-12 + 1.0 / c_a);
        assert!((r.dressed.norm[(0, 0)] - m / 1e-12).abs() < 1e-14);
        let modes = r.dressed.modes.unwrap();
        assert!((modes.m_alpha[(0, 0)] / m - 1.0).abs() < 1e-14);
        // Frequency of L in series with C ∥ ... : 1/√(L·M) in these variables.
        assert!((modes.frequencies[0] * (1e-9 * m).sqrt() - 1.0).abs() < 1e-12);

        // Stage capacitances to zero: coupling vanishes.
        let tiny = FosterExpansion {
            stage_caps: vec![1e-30, 1e-30],
            ..FosterExpansion::equal_stages(FosterForm::Foster2, 2, 1.0, 1e-9)
        };
        let r = foster2_dress(c_a, &tiny, Some(1e-12)).unwrap();
        assert!(r.dressed.norm[(0, 0)] < 1e-17);
    }

    #[test]
    fn foster2_against_direct_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let mut stages = random_stages(&mut rng, n);
        stages.form = FosterForm::Foster2;
        let c_a = 3e-14;
        let r = foster2_dress(c_a, &stages, None).unwrap();
        let ham = r.hamiltonian.unwrap();
        // Original variables: [Φ_A, Φ_α] with C = [[C_A + ΣC, −cᵀ], [−c, C_α]].
        let mut cap = DMatrix::zeros(n + 1, n + 1);
        cap[(0, 0)] = c_a + stages.stage_caps.iter().sum::<f64>();
        for i in 0..n {
            cap[(0, i + 1)] = -stages.stage_caps[i];
            cap[(i + 1, 0)] = -stages.stage_caps[i];
            cap[(i + 1, i + 1)] = stages.stage_caps[i];
        }
        // Rescaled fluxes ψ = C₀^{-1/2} C_α^{1/2} Φ turn M_α into the stage block.
        let c0 = stages.stage_caps[0];
        let mut s = DMatrix::<f64>::identity(n + 1, n + 1);
        for i in 0..n {
            s[(i + 1, i + 1)] = (c0 / stages.stage_caps[i]).sqrt();
        }
        let cap_psi = &s * cap * &s;
        let linv: Vec<f64> = stages
            .stage_caps
            .iter()
            .zip(&stages.stage_inds)
            .map(|(c, l)| c0 / (c * l))
            .collect();
        let oracle =
            dense_canonical_transform(&cap_psi, 1, &linv, &r.dressed.modes.unwrap().m_alpha, c0)
                .unwrap();
        let (x, y) = (ham.inverse_capacitance(), oracle.inverse_capacitance());
        assert!(
            (&x - &y).amax() <= 1e-10 * y.amax(),
            "{}",
            (&x - &y).amax() / y.amax()
        );
        for (a, b) in ham.omega.iter().zip(&oracle.omega) {
            assert!((a / b - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn multiport_random_two_port_against_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (p, n) = (3, 50);
        let x = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        let a = (&x * x.transpose() + DMatrix::identity(p, p) * 3.0) * 1e-14;
        let av = DMatrix::from_fn(p, 2, |_, _| rng.gen_range(0.0..0.05e-7));
        let uv = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0) * 1e-7);
        let caps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5e-12..2e-12)).collect();
        let linv: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5e9..2e9)).collect();
        let mp = multiport_dressing(&a, &caps, &linv, &av, &uv, None).unwrap();
        let block = FiniteRankBlock {
            a: a.clone(),
            c1: DiagPlusLowRank::diagonal(DVector::from_column_slice(&caps)),
            a_vecs: av,
            u_vecs: uv,
        };
        let oracle = dense_canonical_transform(
            &block.to_dense(),
            p,
            &linv,
            &mp.dressed.modes.as_ref().unwrap().m_alpha,
            caps[0],
        )
        .unwrap();
        let (x, y) = (
            mp.hamiltonian.inverse_capacitance(),
            oracle.inverse_capacitance(),
        );
        assert!(
            (&x - &y).amax() <= 1e-10 * y.amax(),
            "{}",
            (&x - &y).amax() / y.amax()
        );
        assert!(mp.identity_residual < 1e-10);
    }

    #[test]
    fn multiport_rejects_non_positive_dressing() {
        // ν > 1 flips the sign of the rank-one term and overwhelms C_α.
        let a = DMatrix::from_element(1, 1, 1e-15);
        let av = DMatrix::from_element(1, 1, 1e-7);
        let uv = DMatrix::from_element(3, 1, 1e-5);
        match multiport_dressing(&a, &[1e-12; 3], &[1e9; 3], &av, &uv, None) {
            Err(FosterError::NotPositive { smallest }) => assert!(smallest < 0.0),
            Err(FosterError::Linalg(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn example3_structured_matches_dense() {
        let p = Example3Params::two_qubit_reference();
        for n in [7, 200] {
            let fast = example3_spectrum(&p, n, 2).unwrap();
            let slow = example3_dense(&p, n).unwrap();
            for a in 0..n {
                assert!(
                    (fast.omega[a] / slow.omega[a] - 1.0).abs() < 1e-10,
                    "mode {a}"
                );
                let scale = slow
                    .g
                    .iter()
                    .map(|g| g[0].abs().max(g[1].abs()))
                    .fold(0.0, f64::max);
                for s in 0..2 {
                    assert!(
                        (fast.g[a][s] - slow.g[a][s]).abs() < 1e-8 * scale,
                        "mode {a} port {s}"
                    );
                }
            }
        }
    }

    #[test]
    fn example3_mu_parity_and_limits() {
        let p = Example3Params::two_qubit_reference();
        let even = example3_spectrum(&p, 100, 1).unwrap();
        let odd = example3_spectrum(&p, 101, 1).unwrap();
        let c0 = p.c * p.length;
        let expected = (p.c_g1 * p.c_g2).sqrt() / c0;
        assert!((even.mu[(0, 1)] / expected - 1.0).abs() < 1e-12);
        assert!((odd.mu[(0, 1)] / expected + 1.0).abs() < 1e-12);
        assert!((even.nu[(0, 0)] - p.c_g1 / (p.c_g1 + p.c_j1)).abs() < 1e-15);
        let big = example3_spectrum(&p, 4000, 2).unwrap();
        assert!(big.lambda.amax() < even.lambda.amax() / 5.0);
        assert!(big.rho[(0, 1)].abs() < 1e-2 * big.rho[(0, 0)].abs());
        // β = μ(1 + μ − νμ)⁻¹ approaches diag(C_Σσ/C_Jσ) like 1/N.
        let id = DMatrix::<f64>::identity(2, 2);
        let beta = &big.mu * (&id + &big.mu - &big.nu * &big.mu).try_inverse().unwrap();
        for (s, cg, cj) in [(0, p.c_g1, p.c_j1), (1, p.c_g2, p.c_j2)] {
            let slack = 2.0 / (big.mu[(s, s)] * (1.0 - big.nu[(s, s)]));
            assert!((beta[(s, s)] * cj / (cg + cj) - 1.0).abs() < slack);
        }
        assert!(beta[(0, 1)].abs() < 1e-2 * beta[(0, 0)]);
    }

    #[test]
    fn example3_spectrum_moves_monotonically() {
        let p = Example3Params::two_qubit_reference();
        let runs: Vec<_> = [100, 200, 400]
            .iter()
            .map(|&n| example3_spectrum(&p, n, 2).unwrap())
            .collect();
        for a in 0..5 {
            let w: Vec<f64> = runs.iter().map(|r| r.omega[a]).collect();
            let up = w[0] <= w[1] && w[1] <= w[2];
            let down = w[0] >= w[1] && w[1] >= w[2];
            assert!(up || down, "mode {a}: {w:?}");
        }
    }
}
