use crate::output::{emit, json_text, write, Cell, Table};
use crate::{CliError, OutputArgs, Preset, SourceArgs, ThreadArgs};
use clap::{Args, ValueEnum};
use cqed_core::circuit_model::{
    parse_circuit, CircuitSpec, CouplerSpec, CouplingMode, FarEnd, LineSegment,
};
use cqed_core::foster_synthesis::{
    example3_spectrum, synthesize_tl_two_port, Example3Params, FosterExpansion,
};
use cqed_core::hamiltonian_assembly::{
    charge_qubit_couplings_approx, check_invertibility as diagnose, default_n_alpha,
    optimal_alpha_beta, quantize as assemble_all, AssemblyError, ChargeQubitParams,
};
use cqed_core::mode_basis::{build_finite_modes, ModeBasis};
use cqed_core::secular_solver::{solve_point_secular, BoundaryParams, ProblemKind, DEFAULT_TOL};
use cqed_core::spectral_density::{
    fit_asymptotic_exponent, halfline_spectral, inductive_spectral, spin_capacitive_spectral,
    tail_window, FitWindow, Site,
};
use cqed_core::validation::{run_all, run_suite, SuiteConfig, SUITES};
use nalgebra::DMatrix;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::Path;

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn compute_err(e: impl std::fmt::Display) -> CliError {
    CliError::Computation(e.to_string())
}

fn assembly_err(e: AssemblyError) -> CliError {
    match e {
        AssemblyError::UnsupportedTopology(_) | AssemblyError::InvalidParameter { .. } => {
            input_err(e)
        }
        _ => compute_err(e),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn device_a_header() -> Value {
    let p = ChargeQubitParams::device_a();
    json!({
        "name": "device-a",
        "description": "charge qubit capacitively coupled to the open end of a 4.7 mm line shorted at the far end",
        "parameters": { "C_g_F": p.c_g, "C_J_F": p.c_j, "c_F_per_m": p.c, "l_H_per_m": p.l, "length_m": p.length }
    })
}

fn two_qubit_header(p: &Example3Params) -> Value {
    json!({
        "name": "fig9",
        "description": "two charge qubits on the ends of a 9.4 mm open line, port 2 at half the capacitances of port 1",
        "parameters": p
    })
}

/// Circuit from `--input` or a single-port preset.
struct Loaded {
    spec: CircuitSpec,
    preset: Option<Value>,
}

fn load_circuit(src: &SourceArgs, default: Option<Preset>) -> Result<Loaded, CliError> {
    if let Some(path) = &src.input {
        let spec = parse_circuit(&read_text(path)?).map_err(input_err)?;
        return Ok(Loaded { spec, preset: None });
    }
    match src.preset.or(default) {
        Some(Preset::DeviceA) => Ok(Loaded {
            spec: ChargeQubitParams::device_a().to_circuit(),
            preset: Some(device_a_header()),
        }),
        Some(Preset::Fig9) => Err(CliError::Input(
            "preset fig9 is only available for example3".into(),
        )),
        None => Err(CliError::Input(
            "either --input or --preset is required".into(),
        )),
    }
}

/// Single point coupler at the end of a finite line.
struct EndCoupled {
    coupler: CouplerSpec,
    line: LineSegment,
    length: f64,
    bp: BoundaryParams,
}

fn end_coupled(spec: &CircuitSpec) -> Result<EndCoupled, CliError> {
    let [coupler] = spec.couplers[..] else {
        return Err(CliError::Input(format!(
            "expected exactly one coupler, found {}",
            spec.couplers.len()
        )));
    };
    if coupler.mode != CouplingMode::Point || coupler.position != 0.0 {
        return Err(CliError::Input(
            "the coupler must be a point coupler at position 0".into(),
        ));
    }
    let line = spec.lines[coupler.line];
    let length = line
        .length
        .finite()
        .ok_or_else(|| CliError::Input("the coupled line must have finite length".into()))?;
    let d = optimal_alpha_beta(spec).map_err(assembly_err)?[0];
    let kind = match line.far_end {
        FarEnd::Short => ProblemKind::PointEnd,
        FarEnd::Open => ProblemKind::PointEndOpen,
    };
    Ok(EndCoupled {
        coupler,
        line,
        length,
        bp: BoundaryParams {
            alpha: d.alpha,
            beta: d.beta,
            kind,
        },
    })
}

fn solve_basis(ec: &EndCoupled, n: usize, tol: f64) -> Result<ModeBasis, CliError> {
    let ks = solve_point_secular(ec.bp, ec.length, n, tol).map_err(compute_err)?;
    build_finite_modes(&ks, ec.bp, &ec.line, default_n_alpha(&ec.line, ec.length))
        .map_err(compute_err)
}

fn check_n(n: usize) -> Result<usize, CliError> {
    if n == 0 {
        Err(CliError::Input("--n-max must be at least 1".into()))
    } else {
        Ok(n)
    }
}

// modes -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FarEndArg {
    Short,
    Open,
}

#[derive(Args, Debug)]
pub struct ModesArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 200)]
    n_max: usize,
    /// Relative tolerance of the root solver.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Capacitive dressing length, m (ignored with --input/--preset).
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Inductive dressing length, m; "inf" disconnects.
    #[arg(long, default_value_t = f64::INFINITY)]
    beta: f64,
    /// Line length, m.
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    /// Capacitance per length, F/m.
    #[arg(long, default_value_t = 249e-12)]
    c: f64,
    /// Inductance per length, H/m.
    #[arg(long, default_value_t = 623e-9)]
    l: f64,
    #[arg(long, value_enum, default_value_t = FarEndArg::Short)]
    far_end: FarEndArg,
}

pub fn modes(a: &ModesArgs) -> Result<(), CliError> {
    let n = check_n(a.n_max)?;
    let (ec, preset) = if a.source.input.is_some() || a.source.preset.is_some() {
        let loaded = load_circuit(&a.source, None)?;
        (end_coupled(&loaded.spec)?, loaded.preset)
    } else {
        let (line, kind) = match a.far_end {
            FarEndArg::Short => (
                LineSegment::shorted(a.c, a.l, a.length),
                ProblemKind::PointEnd,
            ),
            FarEndArg::Open => (
                LineSegment::open(a.c, a.l, a.length),
                ProblemKind::PointEndOpen,
            ),
        };
        let ec = EndCoupled {
            coupler: ChargeQubitParams::device_a().to_circuit().couplers[0],
            line,
            length: a.length,
            bp: BoundaryParams {
                alpha: a.alpha,
                beta: a.beta,
                kind,
            },
        };
        (ec, None)
    };
    let basis = solve_basis(&ec, n, a.tol)?;
    let (s1, s2) = basis.partial_sums();
    let mut t = Table::new(&[
        "n",
        "k_n",
        "f_n_Hz",
        "u_n0",
        "partial_sum_s1",
        "partial_sum_s2",
    ]);
    for i in 0..basis.len() {
        t.row(vec![
            i.into(),
            basis.k[i].into(),
            basis.frequency(i).into(),
            basis.endpoint[i].into(),
            s1[i].into(),
            s2.as_ref().map(|s| s[i]).into(),
        ]);
    }
    emit(&a.out, t, || {
        json!({
            "preset": preset,
            "problem": { "alpha_m": ec.bp.alpha, "beta_m": ec.bp.beta, "length_m": ec.length,
                         "far_end": format!("{:?}", ec.line.far_end).to_lowercase(), "n_alpha_F": basis.n_alpha },
            "k_rad_per_m": basis.k,
            "f_Hz": (0..basis.len()).map(|i| basis.frequency(i)).collect::<Vec<_>>(),
            "u0": basis.endpoint,
            "partial_sum_s1": s1,
            "partial_sum_s2": s2,
        })
    })
}

// quantize --------------------------------------------------------------

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, default_value_t = 200)]
    n_max: usize,
    /// Exact wavenumbers (default).
    #[arg(long, conflicts_with = "approx")]
    exact: bool,
    /// Open-line approximation; single charge qubit circuits only.
    #[arg(long)]
    approx: bool,
}

/// Recover the charge-qubit parameters of a one-node, one-line circuit.
fn as_charge_qubit(spec: &CircuitSpec) -> Result<ChargeQubitParams, CliError> {
    let ec = end_coupled(spec)?;
    let block = &spec.blocks[ec.coupler.block];
    if block.order() != 1 || block.cap_coupling[0] != 1.0 || ec.coupler.l_g.is_finite() {
        return Err(CliError::Input(
            "--approx needs a single-node block coupled capacitively with weight 1".into(),
        ));
    }
    Ok(ChargeQubitParams {
        c_g: ec.coupler.c_g,
        c_j: block.cap_matrix[(0, 0)] - ec.coupler.c_g,
        c: ec.line.c,
        l: ec.line.l,
        length: ec.length,
        far_end: ec.line.far_end,
    })
}

const QUANTIZE_HEADER: [&str; 5] = [
    "n",
    "f_n_Hz",
    "g_capacitive_Hz",
    "g_inductive_Hz",
    "channel_id",
];

pub fn quantize(a: &QuantizeArgs) -> Result<(), CliError> {
    let n = check_n(a.n_max)?;
    let loaded = load_circuit(&a.source, None)?;
    let mut t = Table::new(&QUANTIZE_HEADER);
    if a.approx {
        let p = as_charge_qubit(&loaded.spec)?;
        let table = charge_qubit_couplings_approx(&p, n);
        for i in 0..table.len() {
            t.row(vec![
                i.into(),
                table.f[i].into(),
                (table.g[i] / (2.0 * PI)).into(),
                Cell::Empty,
                0usize.into(),
            ]);
        }
        return emit(&a.out, t, || {
            json!({
                "preset": loaded.preset,
                "approximation": "open_line",
                "warning": table.warning,
                "k_rad_per_m": table.k,
                "f_Hz": table.f,
                "g_capacitive_rad_s": table.g,
            })
        });
    }
    let h = assemble_all(&loaded.spec, n).map_err(assembly_err)?;
    for (ci, ch) in h.channels.iter().enumerate() {
        let sector = h
            .sectors
            .iter()
            .find(|s| s.line == ch.line)
            .ok_or_else(|| compute_err("channel without a line sector"))?;
        for i in 0..sector.frequencies.len() {
            t.row(vec![
                i.into(),
                sector.frequencies[i].into(),
                (h.cap_couplings[ci][i] / (2.0 * PI)).into(),
                (h.ind_couplings[ci][i] / (2.0 * PI)).into(),
                ci.into(),
            ]);
        }
    }
    emit(&a.out, t, || {
        json!({
            "preset": loaded.preset,
            "dressing": h.dressing.iter().map(|d| json!({
                "coupler": d.coupler, "alpha_m": d.alpha, "beta_m": d.beta,
            })).collect::<Vec<_>>(),
            "network": h.network_cap_inv.iter().zip(&h.network_ind_inv).map(|(c, l)| json!({
                "cap_inv_per_F": rows(c),
                "ind_inv_per_H": rows(l),
            })).collect::<Vec<_>>(),
            "sectors": h.sectors.iter().map(|s| json!({
                "line": s.line, "n_alpha_F": s.n_alpha, "k_rad_per_m": s.wavenumbers, "f_Hz": s.frequencies,
            })).collect::<Vec<_>>(),
            "channels": h.channels.iter().enumerate().map(|(ci, ch)| json!({
                "id": ci, "coupler": ch.coupler, "block": ch.block, "line": ch.line,
                "cap_vector": ch.cap_vector.as_slice(), "ind_vector_per_H": ch.ind_vector.as_slice(),
                "g_capacitive_rad_s": h.cap_couplings[ci], "g_inductive_rad_s": h.ind_couplings[ci],
            })).collect::<Vec<_>>(),
        })
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

// foster ----------------------------------------------------------------

#[derive(Args, Debug)]
pub struct FosterArgs {
    /// Circuit description; its impedances are dumped.
    #[arg(long, conflicts_with = "preset")]
    input: Option<std::path::PathBuf>,
    /// Synthesize the line of this preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[command(flatten)]
    out: OutputArgs,
    /// Stages of the synthesized line.
    #[arg(long, default_value_t = 200)]
    n_max: usize,
    /// Capacitance per length of the synthesized line, F/m.
    #[arg(long, default_value_t = 249e-12)]
    c: f64,
    /// Inductance per length, H/m.
    #[arg(long, default_value_t = 623e-9)]
    l: f64,
    /// Line length, m.
    #[arg(long, default_value_t = 9.4e-3)]
    length: f64,
}

pub fn foster(a: &FosterArgs) -> Result<(), CliError> {
    let expansions: Vec<FosterExpansion> = if let Some(path) = &a.input {
        let spec = parse_circuit(&read_text(path)?).map_err(input_err)?;
        if spec.impedances.is_empty() {
            return Err(CliError::Input("the circuit has no impedances".into()));
        }
        spec.impedances
    } else {
        let (c, l, len) = match a.preset {
            Some(Preset::Fig9) => {
                let p = Example3Params::two_qubit_reference();
                (p.c, p.l, p.length)
            }
            Some(Preset::DeviceA) => {
                let p = ChargeQubitParams::device_a();
                (p.c, p.l, p.length)
            }
            None => (a.c, a.l, a.length),
        };
        vec![synthesize_tl_two_port(c, l, len, check_n(a.n_max)?).map_err(input_err)?]
    };
    let ports = expansions.iter().map(|e| e.port_count).max().unwrap_or(0);
    let mut header = vec![
        "impedance".to_string(),
        "stage".into(),
        "form".into(),
        "C_F".into(),
        "L_H".into(),
        "f_Hz".into(),
    ];
    header.extend((1..=ports).map(|p| format!("t_port{p}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for (zi, z) in expansions.iter().enumerate() {
        let form = serde_json::to_value(z.form)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        for s in 0..z.len() {
            let (cap, ind) = (z.stage_caps[s], z.stage_inds[s]);
            let f = ind
                .is_finite()
                .then(|| 1.0 / (2.0 * PI * (cap * ind).sqrt()));
            let mut row: Vec<Cell> = vec![
                zi.into(),
                s.into(),
                form.as_str().into(),
                cap.into(),
                ind.is_finite().then_some(ind).into(),
                f.into(),
            ];
            row.extend((0..ports).map(|p| z.turn_ratios[s].get(p).copied().into()));
            t.row(row);
        }
    }
    emit(&a.out, t, || json!({ "impedances": expansions }))
}

// example3 --------------------------------------------------------------

#[derive(Args, Debug)]
pub struct Example3Args {
    /// JSON object with c_g1, c_j1, c_g2, c_j2, c, l, length in SI units.
    #[arg(long, conflicts_with = "preset")]
    input: Option<std::path::PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[command(flatten)]
    out: OutputArgs,
    /// Foster stages of the line.
    #[arg(long, default_value_t = 6000)]
    n_max: usize,
    #[command(flatten)]
    threads: ThreadArgs,
}

pub fn example3(a: &Example3Args) -> Result<(), CliError> {
    let (params, preset) = match (&a.input, a.preset) {
        (Some(path), _) => {
            let p: Example3Params = serde_json::from_str(&read_text(path)?).map_err(input_err)?;
            (p, None)
        }
        (None, None | Some(Preset::Fig9)) => {
            let p = Example3Params::two_qubit_reference();
            (p, Some(two_qubit_header(&p)))
        }
        (None, Some(Preset::DeviceA)) => {
            return Err(CliError::Input("example3 takes --preset fig9".into()));
        }
    };
    let r = example3_spectrum(&params, check_n(a.n_max)?, a.threads.resolve()).map_err(
        |e| match e {
            cqed_core::foster_synthesis::FosterError::InvalidParameter { .. } => input_err(e),
            _ => compute_err(e),
        },
    )?;
    let f = r.frequencies_hz();
    let mut t = Table::new(&[
        "alpha",
        "f_alpha_Hz",
        "g_alpha_port1_Hz",
        "g_alpha_port2_Hz",
    ]);
    for (i, g) in r.g.iter().enumerate() {
        t.row(vec![
            (i + 1).into(),
            f[i].into(),
            (g[0] / (2.0 * PI)).into(),
            (g[1] / (2.0 * PI)).into(),
        ]);
    }
    emit(&a.out, t, || {
        json!({
            "preset": preset,
            "params": params,
            "stages": a.n_max,
            "f_Hz": f,
            "g_port1_rad_s": r.g.iter().map(|g| g[0]).collect::<Vec<_>>(),
            "g_port2_rad_s": r.g.iter().map(|g| g[1]).collect::<Vec<_>>(),
            "argmax_port1": r.argmax(0) + 1,
            "argmax_port2": r.argmax(1) + 1,
        })
    })
}

// spectral --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    /// Discrete comb of the inductive coupling.
    Inductive,
    /// Discrete comb of the spin-capacitive coupling.
    SpinCapacitive,
    /// Closed-form J^C and J^L of the half-infinite line.
    Halfline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SiteArg {
    Coupling,
    Far,
}

#[derive(Args, Debug)]
pub struct SpectralArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Modes in a discrete comb.
    #[arg(long, default_value_t = 2000)]
    n_max: usize,
    /// Replace the coupling inductance, H.
    #[arg(long)]
    l_g: Option<f64>,
    #[arg(long, value_enum, default_value_t = SiteArg::Coupling)]
    site: SiteArg,
    /// Global constant of the spin-capacitive density.
    #[arg(long, default_value_t = 1.0)]
    prefactor: f64,
    /// Half-line grid, Hz; defaults bracket the capacitive crossover by three decades.
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long, default_value_t = 601)]
    points: usize,
    /// Fit window, Hz; defaults to the top decade of the samples.
    #[arg(long)]
    fit_lo: Option<f64>,
    #[arg(long)]
    fit_hi: Option<f64>,
    /// Where the JSON summary goes when emitting CSV (default stderr).
    #[arg(long)]
    summary: Option<std::path::PathBuf>,
}

pub fn spectral(a: &SpectralArgs) -> Result<(), CliError> {
    let mut loaded = load_circuit(&a.source, Some(Preset::DeviceA))?;
    if let Some(l_g) = a.l_g {
        if !(l_g > 0.0) {
            return Err(CliError::Input(format!(
                "--l-g must be positive, got {l_g}"
            )));
        }
        for c in &mut loaded.spec.couplers {
            c.l_g = l_g;
        }
    }
    let ec = end_coupled(&loaded.spec)?;
    let two_pi = 2.0 * PI;
    // (label, omega rad/s, J)
    let mut series: Vec<(&'static str, Vec<f64>, Vec<f64>)> = Vec::new();
    match a.kind {
        KindArg::Inductive | KindArg::SpinCapacitive => {
            let basis = solve_basis(&ec, check_n(a.n_max)?, DEFAULT_TOL)?;
            let site = match a.site {
                SiteArg::Coupling => Site::Coupling,
                SiteArg::Far => Site::Far,
            };
            let j = if a.kind == KindArg::Inductive {
                inductive_spectral(&basis, ec.coupler.l_g, site)
            } else {
                spin_capacitive_spectral(&basis, a.prefactor, site)
            }
            .map_err(input_err)?;
            series.push((j.kind.label(), j.omega, j.weight));
        }
        KindArg::Halfline => {
            let h = halfline_spectral(ec.bp.alpha, ec.bp.beta, ec.line.c, ec.line.l, a.prefactor)
                .map_err(input_err)?;
            let centre = h.omega_alpha() / two_pi;
            let lo = a.omega_min.unwrap_or(centre * 1e-3);
            let hi = a.omega_max.unwrap_or(centre * 1e3);
            if !(lo > 0.0 && hi > lo) || a.points < 2 {
                return Err(CliError::Input(
                    "half-line grid needs 0 < omega-min < omega-max and at least 2 points".into(),
                ));
            }
            let omegas: Vec<f64> = (0..a.points)
                .map(|i| two_pi * lo * (hi / lo).powf(i as f64 / (a.points - 1) as f64))
                .collect();
            let (jc, jl) = h.sample(&omegas);
            for j in [jc, jl] {
                series.push((j.kind.label(), j.omega, j.weight));
            }
        }
    }
    let mut t = Table::new(&["omega_Hz", "J_value", "kind"]);
    let mut fits = Vec::new();
    for (label, omega, weight) in &series {
        for (w, j) in omega.iter().zip(weight) {
            t.row(vec![(w / two_pi).into(), (*j).into(), (*label).into()]);
        }
        let tail = tail_window(omega);
        let lo = a.fit_lo.map_or(tail.lo, |f| f * two_pi);
        let hi = a.fit_hi.map_or(tail.hi, |f| f * two_pi);
        let samples: Vec<(f64, f64)> = omega.iter().copied().zip(weight.iter().copied()).collect();
        fits.push(match fit_asymptotic_exponent(&samples, FitWindow::new(lo, hi)) {
            Ok(fit) => json!({ "kind": label, "fit_lo_Hz": lo / two_pi, "fit_hi_Hz": hi / two_pi, "fit": fit }),
            Err(e) => json!({ "kind": label, "fit_lo_Hz": lo / two_pi, "fit_hi_Hz": hi / two_pi, "fit": null, "fit_error": e.to_string() }),
        });
    }
    let summary = json!({
        "preset": loaded.preset,
        "alpha_m": ec.bp.alpha,
        "beta_m": ec.bp.beta,
        "exponents": fits,
    });
    match a.out.emit {
        crate::Emit::Csv => {
            write(&a.out, &t.into_string())?;
            match &a.summary {
                Some(path) => std::fs::write(path, json_text(&summary))?,
                None => eprint!("{}", json_text(&summary)),
            }
            Ok(())
        }
        crate::Emit::Json => {
            let samples: Vec<Value> = series
                .iter()
                .map(|(label, omega, weight)| {
                    json!({
                        "kind": label,
                        "omega_Hz": omega.iter().map(|w| w / two_pi).collect::<Vec<_>>(),
                        "J": weight,
                    })
                })
                .collect();
            write(
                &a.out,
                &json_text(&json!({ "summary": summary, "series": samples })),
            )
        }
    }
}

// check-invertibility ---------------------------------------------------

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    out: OutputArgs,
    /// Modes in the dense confirmation.
    #[arg(long, default_value_t = 200)]
    n_max: usize,
}

pub fn check_invertibility(a: &CheckArgs) -> Result<(), CliError> {
    let loaded = load_circuit(&a.source, None)?;
    let reports = diagnose(&loaded.spec, check_n(a.n_max)?).map_err(assembly_err)?;
    let mut t = Table::new(&[
        "coupler",
        "cap_condition",
        "ind_condition",
        "cap_degenerate",
        "ind_degenerate",
        "cap_min_eigenvalue",
        "ind_min_eigenvalue",
    ]);
    for (ci, r) in &reports {
        t.row(vec![
            (*ci).into(),
            r.cap_condition.into(),
            r.ind_condition.into(),
            r.cap_degenerate.into(),
            r.ind_degenerate.into(),
            r.cap_min_eigenvalue.into(),
            r.ind_min_eigenvalue.into(),
        ]);
    }
    emit(&a.out, t, || {
        json!({
            "preset": loaded.preset,
            "couplers": reports.iter().map(|(ci, r)| json!({
                "coupler": ci,
                "cap_condition": r.cap_condition,
                "ind_condition": r.ind_condition,
                "cap_degenerate": r.cap_degenerate,
                "ind_degenerate": r.ind_degenerate,
                "cap_min_eigenvalue": r.cap_min_eigenvalue,
                "ind_min_eigenvalue": r.ind_min_eigenvalue,
                "cap_witness": r.cap_witness.as_ref().map(|v| v.as_slice().to_vec()),
                "ind_witness": r.ind_witness.as_ref().map(|v| v.as_slice().to_vec()),
            })).collect::<Vec<_>>(),
        })
    })
}

// validate --------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Smaller randomized samples, same thresholds.
    #[arg(long)]
    quick: bool,
    /// Run only these suites.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suite: Vec<String>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    output: Option<std::path::PathBuf>,
    #[command(flatten)]
    threads: ThreadArgs,
}

pub fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let cfg = SuiteConfig {
        quick: a.quick,
        threads: a.threads.resolve(),
    };
    let outcomes = if a.suite.is_empty() {
        run_all(cfg)
    } else {
        a.suite.iter().filter_map(|s| run_suite(s, cfg)).collect()
    };
    let text = if a.json {
        json_text(&json!(outcomes))
    } else {
        let mut s = String::new();
        for o in &outcomes {
            let tag = if o.passed { "PASS" } else { "FAIL" };
            s += &format!(
                "{tag}  {:>2}  {:<24} {:>8.2} s  {}\n",
                o.id, o.name, o.seconds, o.detail
            );
        }
        s
    };
    let out = OutputArgs {
        output: a.output.clone(),
        emit: crate::Emit::Csv,
    };
    write(&out, &text)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::ValidationFailed {
            failed,
            total: outcomes.len(),
        });
    }
    Ok(())
}
