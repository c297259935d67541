//! Eigen-decomposition of `diag(d) + Σ θ_r v_r v_rᵀ` for a handful of terms.
//!
//! Each term is applied as a rank-one update whose eigenvalues solve a
//! secular equation between consecutive poles. Eigenvectors are never
//! formed: they are kept implicitly as `(D − λ)⁻¹ z` and applied in O(N) per
//! mode, so a full projection costs O(N²) time and O(N) memory. This is what
//! makes the N = 6000 two-port ladder tractable.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("poles {0} and {1} coincide; structured update needs distinct poles")]
    DegeneratePoles(usize, usize),
    #[error("secular root {index} did not converge (bracket width {width:e})")]
    NoConvergence { index: usize, width: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
enum Root {
    /// Eigenvector is the unit vector of this pole.
    Deflated(usize),
    /// Eigenvalue `d[origin] + tau`, vector `z_k / ((d_k − d_origin) − tau)` scaled by `inv_norm`.
    Secular {
        origin: usize,
        tau: f64,
        inv_norm: f64,
    },
}

/// One rank-one update `diag(d) + θ z zᵀ` with ascending `d`.
#[derive(Debug, Clone)]
pub struct RankOneUpdate {
    d: Vec<f64>,
    z: Vec<f64>,
    roots: Vec<Root>,
    values: Vec<f64>,
    threads: usize,
}

/// Map `f` over `0..n` on up to `threads` scoped workers, keeping order.
fn par_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    (t * chunk..((t + 1) * chunk).min(n))
                        .map(f)
                        .collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

impl RankOneUpdate {
    pub fn new(d: &[f64], z: &[f64], theta: f64) -> Result<Self, EigenError> {
        Self::with_threads(d, z, theta, 1)
    }

    pub fn with_threads(
        d: &[f64],
        z: &[f64],
        theta: f64,
        threads: usize,
    ) -> Result<Self, EigenError> {
        let n = d.len();
        if z.len() != n {
            return Err(EigenError::Dimension(format!(
                "poles {n}, vector {}",
                z.len()
            )));
        }
        if d.iter().chain(z).any(|x| !x.is_finite()) || !theta.is_finite() {
            return Err(EigenError::NonFinite);
        }
        let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let znorm2: f64 = z.iter().map(|x| x * x).sum();
        let zmax = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let ztol = 1e-15 * zmax.max(f64::MIN_POSITIVE);
        let active: Vec<usize> = if theta == 0.0 || znorm2 == 0.0 {
            Vec::new()
        } else {
            (0..n).filter(|&k| z[k].abs() > ztol).collect()
        };
        for w in active.windows(2) {
            if d[w[1]] - d[w[0]] <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(EigenError::DegeneratePoles(w[0], w[1]));
            }
        }
        let mut roots: Vec<(f64, Root)> = Vec::with_capacity(n);
        let mut is_active = vec![false; n];
        for &k in &active {
            is_active[k] = true;
        }
        for k in 0..n {
            if !is_active[k] {
                roots.push((d[k], Root::Deflated(k)));
            }
        }
        let m = active.len();
        let reach = theta.abs() * active.iter().map(|&k| z[k] * z[k]).sum::<f64>();
        let solved = par_map(m, threads, |j| {
            // Bracket (lo, hi) in absolute terms; one end may be a pole.
            let (lo, hi) = if theta > 0.0 {
                let lo = d[active[j]];
                let hi = if j + 1 < m {
                    d[active[j + 1]]
                } else {
                    lo + reach
                };
                (lo, hi)
            } else {
                let hi = d[active[j]];
                let lo = if j > 0 { d[active[j - 1]] } else { hi - reach };
                (lo, hi)
            };
            let root = solve_secular_root(d, z, theta, &active, j, lo, hi)?;
            let Root::Secular { origin, tau, .. } = root else {
                unreachable!()
            };
            let mut s = 0.0;
            for &k in &active {
                let q = z[k] / ((d[k] - d[origin]) - tau);
                s += q * q;
            }
            let inv_norm = 1.0 / s.sqrt();
            Ok((
                d[origin] + tau,
                Root::Secular {
                    origin,
                    tau,
                    inv_norm,
                },
            ))
        });
        for r in solved {
            roots.push(r?);
        }
        roots.sort_by(|a, b| a.0.total_cmp(&b.0));
        let values = roots.iter().map(|r| r.0).collect();
        Ok(Self {
            d: d.to_vec(),
            z: z.to_vec(),
            roots: roots.into_iter().map(|r| r.1).collect(),
            values,
            threads,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn component(&self, root: Root, k: usize) -> f64 {
        match root {
            Root::Deflated(p) => f64::from(u8::from(p == k)),
            Root::Secular {
                origin,
                tau,
                inv_norm,
            } => {
                if self.z[k] == 0.0 {
                    0.0
                } else {
                    self.z[k] / ((self.d[k] - self.d[origin]) - tau) * inv_norm
                }
            }
        }
    }

    /// Column `j` of the eigenvector matrix.
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.d.len())
            .map(|k| self.component(self.roots[j], k))
            .collect()
    }

    /// `Qᵀx`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        par_map(self.roots.len(), self.threads, |j| match self.roots[j] {
            Root::Deflated(p) => x[p],
            Root::Secular {
                origin,
                tau,
                inv_norm,
            } => {
                let o = self.d[origin];
                let s: f64 = x
                    .iter()
                    .zip(self.z.iter().zip(&self.d))
                    .filter(|(_, (z, _))| **z != 0.0)
                    .map(|(xk, (z, d))| z / ((d - o) - tau) * xk)
                    .sum();
                s * inv_norm
            }
        })
    }

    /// `Q y`.
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d.len()];
        for (j, &r) in self.roots.iter().enumerate() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += self.component(r, k) * y[j];
            }
        }
        out
    }
}

/// Secular function `1 + θ Σ z_k² / ((d_k − d_o) − τ)` and its τ-derivative.
fn secular_eval(
    d: &[f64],
    z: &[f64],
    theta: f64,
    active: &[usize],
    origin: usize,
    tau: f64,
) -> (f64, f64) {
    let o = d[origin];
    let (mut f, mut df) = (0.0, 0.0);
    for &k in active {
        let r = 1.0 / ((d[k] - o) - tau);
        let t = z[k] * z[k] * r;
        f += t;
        df += t * r;
    }
    (1.0 + theta * f, theta * df)
}

fn solve_secular_root(
    d: &[f64],
    z: &[f64],
    theta: f64,
    active: &[usize],
    j: usize,
    lo: f64,
    hi: f64,
) -> Result<Root, EigenError> {
    // Origin: the pole bounding the interval on the side holding the root.
    let pole_lo = if theta > 0.0 {
        Some(active[j])
    } else if j > 0 {
        Some(active[j - 1])
    } else {
        None
    };
    let pole_hi = if theta > 0.0 {
        active.get(j + 1).copied()
    } else {
        Some(active[j])
    };
    let mid = 0.5 * (lo + hi);
    let origin = match (pole_lo, pole_hi) {
        (Some(a), Some(b)) => {
            let (f, _) = secular_eval(d, z, theta, active, a, mid - d[a]);
            // f rises from −∞ to +∞ across the interval when θ > 0 and
            // falls from +∞ to −∞ when θ < 0.
            let root_left = if theta > 0.0 { f > 0.0 } else { f < 0.0 };
            if root_left {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!(),
    };
    let o = d[origin];
    let (mut tlo, mut thi) = (lo - o, hi - o);
    let increasing = theta > 0.0;
    let mut tau = 0.5 * (tlo + thi);
    for _ in 0..200 {
        let (f, df) = secular_eval(d, z, theta, active, origin, tau);
        if f == 0.0 {
            return Ok(Root::Secular {
                origin,
                tau,
                inv_norm: 1.0,
            });
        }
        if (f < 0.0) == increasing {
            tlo = tau;
        } else {
            thi = tau;
        }
        // Rational step: fit a + b/(δ − τ) around the origin pole (δ = 0).
        let gap = -tau;
        let b = df * gap * gap;
        let a = f - b / gap;
        let mut next = if a != 0.0 && b.is_finite() {
            b / a
        } else {
            f64::NAN
        };
        if !(next > tlo && next < thi) {
            next = tau - f / df;
        }
        if !(next > tlo && next < thi) {
            next = 0.5 * (tlo + thi);
        }
        let width = thi - tlo;
        if width <= 4.0 * f64::EPSILON * (tau.abs().max(next.abs()))
            || (next - tau).abs() <= 2.0 * f64::EPSILON * tau.abs()
        {
            return Ok(Root::Secular {
                origin,
                tau: next,
                inv_norm: 1.0,
            });
        }
        tau = next;
    }
    let width = thi - tlo;
    if width <= 1e-12 * (o.abs() + tau.abs()) {
        Ok(Root::Secular {
            origin,
            tau,
            inv_norm: 1.0,
        })
    } else {
        Err(EigenError::NoConvergence { index: j, width })
    }
}

/// Eigen-decomposition of `diag(d) + Σ θ_r v_r v_rᵀ` via successive updates.
#[derive(Debug, Clone)]
pub struct LowRankEigen {
    perm: Vec<usize>,
    stages: Vec<RankOneUpdate>,
    values: Vec<f64>,
}

impl LowRankEigen {
    pub fn new(diag: &[f64], terms: &[(f64, Vec<f64>)]) -> Result<Self, EigenError> {
        Self::with_threads(diag, terms, 1)
    }

    /// Same as [`LowRankEigen::new`] with root finding and projections
    /// spread over `threads` workers. Results do not depend on `threads`.
    pub fn with_threads(
        diag: &[f64],
        terms: &[(f64, Vec<f64>)],
        threads: usize,
    ) -> Result<Self, EigenError> {
        let n = diag.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let mut poles: Vec<f64> = perm.iter().map(|&i| diag[i]).collect();
        let mut stages: Vec<RankOneUpdate> = Vec::new();
        for (theta, v) in terms {
            if v.len() != n {
                return Err(EigenError::Dimension(format!(
                    "term of length {} for order {n}",
                    v.len()
                )));
            }
            let mut z: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            for s in &stages {
                z = s.project(&z);
            }
            let stage = RankOneUpdate::with_threads(&poles, &z, *theta, threads)?;
            poles = stage.values().to_vec();
            stages.push(stage);
        }
        Ok(Self {
            perm,
            stages,
            values: poles,
        })
    }

    /// Ascending eigenvalues.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinates of `x` in the eigenbasis, ordered like `values`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&i| x[i]).collect();
        for s in &self.stages {
            y = s.project(&y);
        }
        y
    }

    /// Eigenvector `j` in the original coordinates (O(N²) per call).
    pub fn vector(&self, j: usize) -> Vec<f64> {
        let n = self.values.len();
        let mut y = vec![0.0; n];
        y[j] = 1.0;
        for s in self.stages.iter().rev() {
            y = s.expand(&y);
        }
        let mut out = vec![0.0; n];
        for (p, &i) in self.perm.iter().enumerate() {
            out[i] = y[p];
        }
        out
    }
}
