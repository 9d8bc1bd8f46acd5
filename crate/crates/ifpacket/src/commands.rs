//! Subcommands. Each returns a [`Report`] whose checks decide the exit code.
use crate::input::{apply_eps3, default_seed, parse_list, parse_profile, RunConfig};
use crate::output::{
    complex_field_table, emit_report, mode_table, sibling, write_correctors, write_snapshot, Check, CorrectorFile, Report, Table,
    CORRECTOR_FIELDS,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ifpacket_core::correctors::compute_correctors;
use ifpacket_core::eigensolver::{analyze_dispersion, dispersion_scan, ModeSolver, Scheme, RESONANCE_MARGIN};
use ifpacket_core::harness::{
    compat_audit, defect_scalings, eigen_reproduction, fit_slope, linear_carrier_study, residual_scaling, run_packet, run_packet_on,
    DefectScalingRow, PacketSpec, RunSettings,
};
use ifpacket_core::nls::{self, EnvelopeField};
use ifpacket_core::{Complex64, Grid1D, Grid2D, PiecewiseProfile};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "ifpacket", version, about = "Interface-localized wave packets in Kerr media")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Guided-mode eigenvalues, dispersion curve and domain extrapolation.
    Dispersion(DispersionArgs),
    /// Mode, k-derivatives and higher-order correctors at k0.
    Correctors(CorrectorArgs),
    /// Split-step NLS runs with invariant tracking.
    NlsTest(NlsArgs),
    /// Maxwell residual of both ansatz levels over an eps sweep.
    ResidualScaling(ResidualArgs),
    /// One Maxwell run from a config file with snapshots and diagnostics.
    Evolve(EvolveArgs),
    /// Error of the ansatz over long runs, or the linear carrier grid study.
    Convergence(ConvergenceArgs),
    /// Compatibility defects of the zero field, linear carriers and the extended ansatz.
    CompatAudit(CompatArgs),
}

/// Options shared by every command that needs a medium.
#[derive(Debug, Clone, Args)]
pub struct MediumArgs {
    /// `exp-step` or `table:<minus.csv>,<plus.csv>`.
    #[arg(long, default_value = "exp-step")]
    pub profile: String,
    /// `const:<v>` or `sides:<minus>,<plus>`.
    #[arg(long, default_value = "const:1.0")]
    pub eps3: String,
    #[arg(long, default_value_t = 0.5)]
    pub k0: f64,
    /// Eigenvalue seed near the wanted mode; defaults to just below the continuum edge.
    #[arg(long)]
    pub omega_seed: Option<f64>,
}

impl MediumArgs {
    pub fn profile(&self) -> Result<PiecewiseProfile> {
        apply_eps3(parse_profile(&self.profile, Path::new("."))?, &self.eps3)
    }

    pub fn seed(&self, profile: &PiecewiseProfile) -> f64 {
        self.omega_seed.unwrap_or_else(|| default_seed(profile, self.k0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Lifted,
    Staggered,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Lifted => Scheme::Lifted,
            SchemeArg::Staggered => Scheme::Staggered,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DispersionArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, default_value_t = 0.3)]
    pub kmin: f64,
    #[arg(long, default_value_t = 0.7)]
    pub kmax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dk: f64,
    #[arg(long, default_value_t = 200.0)]
    pub d: f64,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Lifted)]
    pub scheme: SchemeArg,
    /// Step of the Richardson differences for nu1, nu2.
    #[arg(long, default_value_t = 0.02)]
    pub dk_derivative: f64,
    /// Domain half-widths for the extrapolated nu0, e.g. `100,200,400`.
    #[arg(long)]
    pub extrapolate: Option<String>,
    /// Check the extrapolated nu0 against this value (tolerance `--nu0-tol`).
    #[arg(long)]
    pub nu0_ref: Option<f64>,
    #[arg(long, default_value_t = 5e-3)]
    pub nu0_tol: f64,
    /// Check omega(3 k0) against this value (tolerance `--omega3-tol`).
    #[arg(long)]
    pub omega3_ref: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub omega3_tol: f64,
    /// Half-widths whose successive eigenvalue differences must decrease strictly.
    #[arg(long)]
    pub doubling: Option<String>,
    #[arg(long, default_value = "curve.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CorrectorArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, default_value_t = 60.0)]
    pub d: f64,
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    #[arg(long, default_value = "correctors.bin")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NlsProfile {
    Soliton,
    Gaussian,
}

#[derive(Debug, Clone, Args)]
pub struct NlsArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub nu2: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    #[arg(long, value_enum, default_value_t = NlsProfile::Soliton)]
    pub profile: NlsProfile,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long = "dT", default_value_t = 1e-3)]
    pub dt: f64,
    /// Soliton height or Gaussian amplitude.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Gaussian width.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Periodic box length; defaults to 80 widths, so the sech tail at the seam is below 1e-15.
    #[arg(long)]
    pub length: Option<f64>,
    /// Record invariants every this many steps.
    #[arg(long, default_value_t = 10)]
    pub every: usize,
    #[arg(long, default_value = "nls.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, default_value = "0.1,0.05,0.025,0.0125")]
    pub eps: String,
    #[arg(long, default_value_t = 60.0)]
    pub d: f64,
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    #[command(flatten)]
    pub packet: PacketArgs,
    /// Largest allowed log-log slope decrease of the scaled divergence and jump quantities.
    #[arg(long, default_value_t = 0.1)]
    pub growth_tol: f64,
    #[arg(long, default_value = "res.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PacketArgs {
    /// Gaussian envelope amplitude.
    #[arg(long, default_value_t = 1.0)]
    pub amp: f64,
    /// Gaussian envelope width in X.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    /// Envelope period in X.
    #[arg(long, default_value_t = 16.0)]
    pub period_x: f64,
    #[arg(long, default_value_t = 0.8)]
    pub dx2_max: f64,
}

impl PacketArgs {
    pub fn spec(&self) -> PacketSpec {
        PacketSpec {
            shape: ifpacket_core::harness::EnvelopeShape::Gaussian { amp: self.amp, width: self.width },
            period_x: self.period_x,
            dx2_max: self.dx2_max,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Packet,
    Carrier,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, value_enum, default_value_t = Study::Packet)]
    pub study: Study,
    #[arg(long, default_value = "0.1,0.07,0.05")]
    pub eps: String,
    #[arg(long = "T0", default_value_t = 0.25)]
    pub t0: f64,
    #[arg(long, default_value_t = 60.0)]
    pub d: f64,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long, default_value_t = 0.5)]
    pub dt_cfl: f64,
    #[arg(long, default_value_t = 50)]
    pub snapshot_every: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub nls_dt: f64,
    /// Required slope of the sup-in-time error against eps.
    #[arg(long, default_value_t = 1.3)]
    pub min_slope: f64,
    /// Carrier study: grid spacings, coarse to fine.
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub hs: String,
    /// Carrier study: half-width of the x1 domain.
    #[arg(long, default_value_t = 60.0)]
    pub carrier_d: f64,
    /// Carrier study: refinement of the reference grid beyond the finest level (even).
    #[arg(long, default_value_t = 8)]
    pub ratio: usize,
    /// Carrier study: final time; defaults to one temporal period.
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value = "convergence_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompatArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, default_value = "0.1,0.05,0.025")]
    pub eps: String,
    #[arg(long, default_value_t = 60.0)]
    pub d: f64,
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long, default_value_t = 60.0)]
    pub carrier_d: f64,
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub hs: String,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value = "compat.csv")]
    pub out: PathBuf,
}

/// Runs a parsed command and writes its outputs.
pub fn run(cli: Cli) -> Result<Report> {
    match cli.command {
        Command::Dispersion(a) => dispersion(&a),
        Command::Correctors(a) => correctors(&a),
        Command::NlsTest(a) => nls_test(&a),
        Command::ResidualScaling(a) => residual(&a),
        Command::Evolve(a) => evolve(&a),
        Command::Convergence(a) => convergence(&a),
        Command::CompatAudit(a) => compat(&a),
    }
}

fn k_values(kmin: f64, kmax: f64, dk: f64) -> Result<Vec<f64>> {
    if !(dk > 0.0 && kmax >= kmin && kmin > 0.0) {
        bail!("need 0 < kmin <= kmax and dk > 0");
    }
    let n = ((kmax - kmin) / dk + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| kmin + i as f64 * dk).collect())
}

pub fn dispersion(a: &DispersionArgs) -> Result<Report> {
    let profile = a.medium.profile()?;
    let k0 = a.medium.k0;
    let seed = a.medium.seed(&profile);
    let scheme: Scheme = a.scheme.into();
    let solver = ModeSolver::new(scheme, &Grid1D::new(a.d, a.h)?, &profile)?;
    let mut rep = Report::new("dispersion");

    let ks = k_values(a.kmin, a.kmax, a.dk)?;
    let curve = dispersion_scan(&solver, &ks, seed)?;
    let mut t = Table::new(&a.out, &["k", "omega", "residual", "gap"]);
    for p in &curve.points {
        t.push(vec![p.k, p.omega, p.residual, p.gap]);
    }
    rep.tables.push(t);
    rep.checks.push(Check::flag(
        "continuation over [kmin, kmax]",
        curve.lost_at.unwrap_or(f64::NAN),
        "mode found at every k",
        curve.lost_at.is_none(),
    ));

    let data = analyze_dispersion(&solver, k0, seed, &[], a.dk_derivative)?;
    rep.note("nu0", data.nu0);
    rep.note("nu1", data.nu1);
    rep.note("nu2", data.nu2);
    rep.note("gap", data.gap);
    rep.note("omega_3k0", data.omega_3k0.map_or("none".into(), |w| w.to_string()));
    rep.checks.push(Check::flag("simple eigenvalue", data.audit.gap, "gap > 1e-4", data.audit.simple));
    rep.checks.push(Check::flag(
        "below the continuum on both sides",
        data.audit.continuum_margin.0.min(data.audit.continuum_margin.1),
        "> 0",
        data.audit.below_continuum,
    ));
    let margin = data.audit.resonance_margin.unwrap_or(f64::NAN);
    rep.checks.push(Check::flag(
        "no third-harmonic resonance",
        margin,
        &format!("|3 nu0 - omega(3 k0)| > {RESONANCE_MARGIN}"),
        data.audit.non_resonant,
    ));
    if let Some(r) = a.omega3_ref {
        rep.checks.push(Check::within("omega(3 k0)", data.omega_3k0.unwrap_or(f64::NAN), r, a.omega3_tol));
    }
    let mode = solver.mode(k0, data.nu0)?;
    rep.tables.push(mode_table(sibling(&a.out, "_mode", "csv"), solver.grid(), &mode.w));

    if let Some(list) = &a.extrapolate {
        let ds = parse_list(list)?;
        let er = eigen_reproduction(&profile, k0, a.h, &ds, data.nu0, scheme)?;
        let mut t = Table::new(sibling(&a.out, "_extrapolation", "csv"), &["d", "omega", "margin_mass"]);
        for &(d, w, m) in &er.levels {
            t.push(vec![d, w, m]);
        }
        t.footer.push(("extrapolated".into(), vec![er.extrapolated]));
        rep.tables.push(t);
        rep.note("nu0_extrapolated", er.extrapolated);
        rep.checks.push(Check::flag(
            "mode localized on the largest domain",
            er.levels.last().map_or(f64::NAN, |l| l.2),
            "passes the filter",
            er.localized,
        ));
        if let Some(r) = a.nu0_ref {
            rep.checks.push(Check::within("extrapolated nu0", er.extrapolated, r, a.nu0_tol));
        }
    }
    if let Some(list) = &a.doubling {
        let ds = parse_list(list)?;
        let er = eigen_reproduction(&profile, k0, a.h, &ds, data.nu0, scheme)?;
        let mut t = Table::new(sibling(&a.out, "_doubling", "csv"), &["d", "omega", "diff_to_next"]);
        for (i, &(d, w, _)) in er.levels.iter().enumerate() {
            t.push(vec![d, w, er.differences.get(i).copied().unwrap_or(f64::NAN)]);
        }
        rep.tables.push(t);
        let decreasing = er.differences.windows(2).all(|w| w[1] < w[0]);
        let worst = er.differences.windows(2).map(|w| w[1] / w[0]).fold(0.0f64, f64::max);
        rep.checks.push(Check::flag("|omega(d) - omega(2d)| strictly decreasing", worst, "successive ratios < 1", decreasing));
    }
    emit_report(&rep, &sibling(&a.out, "_summary", "txt"))?;
    Ok(rep)
}

#[derive(Debug, Serialize)]
struct CorrectorSummary {
    k0: f64,
    d: f64,
    h: f64,
    nu0: f64,
    nu1: f64,
    nu2: f64,
    kappa: f64,
    kappa_quadrature: f64,
    residuals: [f64; 4],
    solvability: [f64; 3],
    orthogonality: [f64; 3],
    jump_identity_p: f64,
    jump_identity_h: f64,
    jump_eps1_dkw1: f64,
}

pub fn correctors(a: &CorrectorArgs) -> Result<Report> {
    let profile = a.medium.profile()?;
    let grid = Grid1D::new(a.d, a.h)?;
    let set = compute_correctors(&grid, &profile, a.medium.k0, a.medium.seed(&profile))?;
    let r = &set.report;
    let mut rep = Report::new("correctors");
    rep.note("kappa", set.kappa);
    rep.note("nu", format!("{} {} {}", set.nu.0, set.nu.1, set.nu.2));
    for (name, v) in [("dkw", r.residual_dkw), ("dk2w", r.residual_dk2w), ("p", r.residual_p), ("h", r.residual_h)] {
        rep.checks.push(Check::at_most(&format!("relative residual of {name}"), v, 1e-8));
    }
    rep.checks.push(Check::at_most("|<RHS_p, m>|", r.defect_p, 1e-6));
    rep.checks.push(Check::at_most("jump identity for p", r.jump_identity_p, 1e-4));
    rep.checks.push(Check::at_most("jump identity for h", r.jump_identity_h, 1e-4));

    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = CorrectorFile::from_set(&set);
    write_correctors(&a.out, &file)?;
    for (name, f) in CORRECTOR_FIELDS.iter().zip(&file.fields) {
        rep.tables.push(complex_field_table(sibling(&a.out, &format!("_{name}"), "csv"), &grid, f));
    }
    let summary = CorrectorSummary {
        k0: set.k0(),
        d: a.d,
        h: a.h,
        nu0: set.nu.0,
        nu1: set.nu.1,
        nu2: set.nu.2,
        kappa: set.kappa,
        kappa_quadrature: r.kappa_quadrature,
        residuals: [r.residual_dkw, r.residual_dk2w, r.residual_p, r.residual_h],
        solvability: [r.defect_dkw, r.defect_dk2w, r.defect_p],
        orthogonality: [r.orth_dkw, r.orth_dk2w, r.orth_p],
        jump_identity_p: r.jump_identity_p,
        jump_identity_h: r.jump_identity_h,
        jump_eps1_dkw1: r.jump_eps1_dkw1,
    };
    std::fs::write(sibling(&a.out, "", "json"), serde_json::to_string_pretty(&summary)?)?;
    emit_report(&rep, &sibling(&a.out, "_summary", "txt"))?;
    Ok(rep)
}

/// Exact solution `(X, T) -> A`.
type Exact = Box<dyn Fn(f64, f64) -> Complex64>;

/// Exact solution of the run, when one is known.
fn nls_exact(a: &NlsArgs) -> Result<Option<Exact>> {
    let (eta, nu2, kappa, w) = (a.eta, a.nu2, a.kappa, a.width);
    Ok(match a.profile {
        NlsProfile::Soliton => {
            nls::soliton_parameters(eta, nu2, kappa)?;
            Some(Box::new(move |x, t| nls::soliton_exact(x, t, eta, nu2, kappa).expect("parameters checked")))
        }
        // i A_T = -nu2/2 A_XX keeps a Gaussian Gaussian: A = s^{-1/2} exp(-X^2 / (2 w^2 s)), s = 1 + i nu2 T / w^2
        NlsProfile::Gaussian if kappa == 0.0 => Some(Box::new(move |x, t| {
            let s = Complex64::new(1.0, nu2 * t / (w * w));
            eta * (-(x * x) / (2.0 * w * w * s)).exp() / s.sqrt()
        })),
        NlsProfile::Gaussian => None,
    })
}

fn nls_initial(a: &NlsArgs) -> Result<EnvelopeField> {
    let width = match a.profile {
        NlsProfile::Soliton => 1.0 / nls::soliton_parameters(a.eta, a.nu2, a.kappa)?.0,
        NlsProfile::Gaussian => a.width,
    };
    let len = a.length.unwrap_or(80.0 * width);
    let (eta, w, beta) = (a.eta, a.width, width);
    let f = move |x: f64| match a.profile {
        NlsProfile::Soliton => Complex64::new(eta / (x / beta).cosh(), 0.0),
        NlsProfile::Gaussian => Complex64::new(eta * (-x * x / (2.0 * w * w)).exp(), 0.0),
    };
    Ok(EnvelopeField::from_fn(a.n, -0.5 * len, len, f)?)
}

fn max_error(a: &EnvelopeField, exact: &dyn Fn(f64, f64) -> Complex64, modulus: bool) -> f64 {
    (0..a.n()).fold(0.0f64, |m, j| {
        let e = exact(a.x(j), a.t);
        let v = a.values[j];
        m.max(if modulus { (v.norm() - e.norm()).abs() } else { (v - e).norm() })
    })
}

pub fn nls_test(a: &NlsArgs) -> Result<Report> {
    if a.steps == 0 || a.every == 0 || !(a.dt > 0.0) {
        bail!("steps, every and dT must be positive");
    }
    let exact = nls_exact(a)?;
    let a0 = nls_initial(a)?;
    let mut rep = Report::new("nls-test");
    let mut t = Table::new(&a.out, &["T", "mass", "hamiltonian", "max_err", "max_modulus_err"]);
    let (m0, _) = nls::invariants(&a0, a.nu2, a.kappa)?;
    let mut cur = a0.clone();
    let (mut drift, mut err, mut merr) = (0.0f64, 0.0f64, 0.0f64);
    let errors = |a: &EnvelopeField| exact.as_ref().map_or((f64::NAN, f64::NAN), |f| (max_error(a, f, false), max_error(a, f, true)));
    let (e, me) = errors(&cur);
    t.push(vec![cur.t, m0, nls::invariants(&cur, a.nu2, a.kappa)?.1, e, me]);
    let mut done = 0;
    while done < a.steps {
        let m = a.every.min(a.steps - done);
        cur = nls::evolve(&cur, a.nu2, a.kappa, a.dt, m)?;
        done += m;
        let (mass, ham) = nls::invariants(&cur, a.nu2, a.kappa)?;
        drift = drift.max((mass - m0).abs() / m0);
        let (e, me) = errors(&cur);
        if exact.is_some() {
            err = err.max(e);
            merr = merr.max(me);
        }
        t.push(vec![cur.t, mass, ham, e, me]);
    }
    rep.tables.push(t);
    rep.note("final_T", cur.t);
    rep.checks.push(Check::at_most("relative mass drift", drift, 1e-10));
    match (a.profile, exact.as_ref()) {
        (NlsProfile::Soliton, Some(f)) => {
            rep.checks.push(Check::at_most("soliton modulus error", merr, 1e-6));
            let mut pairs = Vec::new();
            for r in [1usize, 2, 4] {
                let dt = a.dt / r as f64;
                let n = a.steps * r;
                let end = nls::evolve(&a0, a.nu2, a.kappa, dt, n)?;
                pairs.push((dt, max_error(&end, f.as_ref(), false)));
            }
            let mut ot = Table::new(sibling(&a.out, "_order", "csv"), &["dT", "max_err"]);
            for &(dt, e) in &pairs {
                ot.push(vec![dt, e]);
            }
            let (slope, _) = fit_slope(&pairs)?;
            ot.footer.push(("slope".into(), vec![slope]));
            rep.tables.push(ot);
            rep.checks.push(Check::within("Strang order in dT", slope, 2.0, 0.1));
        }
        (NlsProfile::Gaussian, Some(_)) => {
            rep.checks.push(Check::at_most("linear propagator mismatch", err, 1e-8));
        }
        _ => {}
    }
    emit_report(&rep, &sibling(&a.out, "_summary", "txt"))?;
    Ok(rep)
}

pub fn residual(a: &ResidualArgs) -> Result<Report> {
    let profile = a.medium.profile()?;
    let eps = parse_list(&a.eps)?;
    let set = compute_correctors(&Grid1D::new(a.d, a.h)?, &profile, a.medium.k0, a.medium.seed(&profile))?;
    let spec = a.packet.spec();
    let rs = residual_scaling(&set, &eps, &spec)?;
    let mut rep = Report::new("residual-scaling");
    let mut t = Table::new(&a.out, &["eps", "res_l2_uans", "res_l2_uext"]);
    for r in &rs.rows {
        t.push(vec![r.eps, r.res_l2_uans, r.res_l2_uext]);
    }
    t.footer.push(("slope".into(), vec![rs.uans.slope, rs.uext.slope]));
    t.footer.push(("fit_residual".into(), vec![rs.uans.fit_residual, rs.uext.fit_residual]));
    rep.tables.push(t);
    let mut ot = Table::new(sibling(&a.out, "_oracle", "csv"), &["eps", "oracle_gap", "gap_per_envelope_length_over_eps4"]);
    for r in &rs.rows {
        ot.push(vec![r.eps, r.oracle_gap, r.oracle_gap * r.eps.sqrt() / r.eps.powi(4)]);
    }
    ot.footer.push(("slope".into(), vec![rs.oracle_plain_slope, rs.oracle.slope]));
    rep.tables.push(ot);
    rep.checks.push(Check::within("residual slope of U_ans", rs.uans.slope, 1.5, 0.15));
    rep.checks.push(Check::within("residual slope of U_ext", rs.uext.slope, 3.5, 0.15));
    rep.checks.push(Check::at_least("slope of the eps^4 oracle gap / eps^4", rs.oracle.slope, 0.8));
    rep.note("oracle_gap_slope_plain_l2", rs.oracle_plain_slope);

    let rows = defect_scalings(&set, &eps, &spec)?;
    let mut rt = Table::new(
        sibling(&a.out, "_defects", "csv"),
        &["eps", "div_uans_over_eps1.5", "jump_uans_over_eps3", "jump_uext_over_eps4", "initial_gap_over_eps1.5"],
    );
    for r in &rows {
        rt.push(vec![r.eps, r.div_uans, r.jump_uans, r.jump_uext, r.initial_gap]);
    }
    type Quantity = (&'static str, fn(&DefectScalingRow) -> f64);
    let quantities: [Quantity; 4] = [
        ("|div D(U_ans)| / eps^1.5", |r| r.div_uans),
        ("max |jump D1(U_ans)| / eps^3", |r| r.jump_uans),
        ("max |jump D1(U_ext)| / eps^4", |r| r.jump_uext),
        ("|U_ext - U_ans|(0) / eps^1.5", |r| r.initial_gap),
    ];
    let mut slopes = Vec::new();
    for (name, f) in quantities {
        let pairs: Vec<_> = rows.iter().map(|r| (r.eps, f(r))).collect();
        let (s, _) = fit_slope(&pairs)?;
        slopes.push(s);
        rep.checks.push(Check::at_least(&format!("{name}: log-log slope (no growth as eps -> 0)"), s, -a.growth_tol));
    }
    rt.footer.push(("slope".into(), slopes));
    rep.tables.push(rt);
    emit_report(&rep, &sibling(&a.out, "_summary", "txt"))?;
    Ok(rep)
}

fn settings(cfl: f64, every: usize, nls_dt: f64) -> RunSettings {
    RunSettings { cfl, snapshot_every: every, nls_dt }
}

fn series_table(path: PathBuf, rows: &[ifpacket_core::harness::DiagnosticRow]) -> Table {
    let mut t = Table::new(path, &["t", "err_l2", "err_broken1", "div_drift", "jump_D1", "omega_margin"]);
    for r in rows {
        t.push(vec![r.t, r.err_l2, r.err_broken1, r.div_drift, r.jump_d1, r.omega_margin]);
    }
    t
}

fn run_checks(rep: &mut Report, rows: &[ifpacket_core::harness::DiagnosticRow], label: &str) {
    let margin = rows.iter().map(|r| r.omega_margin).fold(f64::INFINITY, f64::min);
    rep.checks.push(Check::flag(&format!("{label}omega margin positive throughout"), margin, "> 0", margin > 0.0));
    let drift = rows.iter().map(|r| r.div_drift).fold(0.0f64, f64::max);
    rep.checks.push(Check::at_most(&format!("{label}divergence drift"), drift, 1e-10));
    let j0 = rows.first().map_or(0.0, |r| r.jump_d1);
    let jd = rows.iter().map(|r| (r.jump_d1 - j0).abs()).fold(0.0f64, f64::max);
    rep.checks.push(Check::at_most(&format!("{label}change of max |jump D1|"), jd, 1e-10));
}

pub fn evolve(a: &EvolveArgs) -> Result<Report> {
    let cfg = RunConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let profile = apply_eps3(parse_profile(&cfg.profile, base)?, &cfg.eps3)?;
    let g1 = Grid1D::new(cfg.grid.d, cfg.grid.h)?;
    let seed = cfg.omega_seed.unwrap_or_else(|| default_seed(&profile, cfg.k0));
    let set = compute_correctors(&g1, &profile, cfg.k0, seed)?;
    let g2 = Grid2D::centered(g1, cfg.grid.x2_extent, cfg.grid.n_x2)?;
    let spec = cfg.packet();
    let ifpacket_core::harness::EnvelopeShape::Gaussian { amp, width } = spec.shape else { unreachable!() };
    let env = EnvelopeField::from_fn(g2.n_x2, cfg.eps * g2.x2_min, cfg.eps * g2.length_x2(), |x| {
        Complex64::new(amp * (-x * x / (2.0 * width * width)).exp(), 0.0)
    })?;
    let out = base.join(&cfg.out_dir);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut k = 0usize;
    let run = run_packet_on(&set, cfg.eps, cfg.t0, &g2, env, &settings(cfg.dt_cfl, cfg.snapshot_every, cfg.nls_dt), |_, st| {
        let path = out.join(format!("snap_{k:05}.bin"));
        k += 1;
        write_snapshot(&path, &st.e.to_field2d()).map_err(|e| ifpacket_core::Error::InvalidArgument(e.to_string()))
    })?;
    let mut rep = Report::new("evolve");
    rep.note("n_steps", run.n_steps);
    rep.note("dt", run.dt);
    rep.note("snapshots", k);
    rep.note("sup_err_broken1", run.sup_err);
    rep.tables.push(series_table(out.join("diagnostics.csv"), &run.series));
    run_checks(&mut rep, &run.series, "");
    emit_report(&rep, &out.join("summary.txt"))?;
    Ok(rep)
}

pub fn convergence(a: &ConvergenceArgs) -> Result<Report> {
    let profile = a.medium.profile()?;
    let k0 = a.medium.k0;
    let seed = a.medium.seed(&profile);
    std::fs::create_dir_all(&a.out_dir)?;
    let mut rep = Report::new("convergence");
    match a.study {
        Study::Packet => {
            let eps = parse_list(&a.eps)?;
            let set = compute_correctors(&Grid1D::new(a.d, a.h)?, &profile, k0, seed)?;
            let st = settings(a.dt_cfl, a.snapshot_every, a.nls_dt);
            let mut t = Table::new(a.out_dir.join("convergence.csv"), &["eps", "sup_err_broken1", "n_x2", "dt", "n_steps"]);
            let mut pairs = Vec::new();
            for &e in &eps {
                let run = run_packet(&set, e, a.t0, &a.packet.spec(), &st, |_, _| Ok(()))?;
                let s = series_table(a.out_dir.join(format!("series_eps{e}.csv")), &run.series);
                s.write()?;
                rep.tables.push(s);
                run_checks(&mut rep, &run.series, &format!("eps = {e}: "));
                t.push(vec![e, run.sup_err, run.grid2.n_x2 as f64, run.dt, run.n_steps as f64]);
                pairs.push((e, run.sup_err));
            }
            let (slope, res) = fit_slope(&pairs)?;
            t.footer.push(("slope".into(), vec![slope]));
            t.footer.push(("fit_residual".into(), vec![res]));
            rep.tables.push(t);
            rep.checks.push(Check::at_least("slope of sup_t |U - U_ans| against eps", slope, a.min_slope));
        }
        Study::Carrier => {
            let hs = parse_list(&a.hs)?;
            let linear = profile.with_eps3_scaled(0.0);
            let omega_guess = compute_correctors(&Grid1D::new(a.carrier_d, hs[0])?, &linear, k0, seed)?.nu.0;
            let t_end = a.t_end.unwrap_or(2.0 * std::f64::consts::PI / omega_guess);
            let cs = linear_carrier_study(&linear, k0, seed, a.carrier_d, &hs, a.ratio, t_end)?;
            let mut t = Table::new(a.out_dir.join("carrier.csv"), &["h", "omega", "error", "jump_drift", "div_drift"]);
            for l in &cs.levels {
                t.push(vec![l.h, l.omega, l.error, l.jump_drift, l.div_drift]);
            }
            t.footer.push(("order".into(), cs.orders.clone()));
            rep.tables.push(t);
            rep.note("omega_reference", cs.omega_reference);
            rep.note("t_end", t_end);
            for (i, o) in cs.orders.iter().enumerate() {
                rep.checks.push(Check::at_least(&format!("carrier order, levels {} -> {}", i, i + 1), *o, 2.0));
            }
            let jd = cs.levels.iter().map(|l| l.jump_drift).fold(0.0f64, f64::max);
            let dd = cs.levels.iter().map(|l| l.div_drift).fold(0.0f64, f64::max);
            rep.checks.push(Check::at_most("carrier jump D1 drift", jd, 1e-10));
            rep.checks.push(Check::at_most("carrier divergence drift", dd, 1e-10));
        }
    }
    emit_report(&rep, &a.out_dir.join("summary.txt"))?;
    Ok(rep)
}

pub fn compat(a: &CompatArgs) -> Result<Report> {
    let profile = a.medium.profile()?;
    let eps = parse_list(&a.eps)?;
    let hs = parse_list(&a.hs)?;
    let set = compute_correctors(&Grid1D::new(a.d, a.h)?, &profile, a.medium.k0, a.medium.seed(&profile))?;
    let audit = compat_audit(&set, &profile, &eps, &a.packet.spec(), a.carrier_d, &hs, a.order)?;
    let mut rep = Report::new("compat-audit");
    let header = ["param", "order", "max2", "l2_2", "max3", "l2_3"];
    let mut push = |name: &str, cases: &[(f64, Vec<ifpacket_core::maxwell2d::CompatDefect>)]| {
        let mut t = Table::new(sibling(&a.out, name, "csv"), &header);
        for (p, defects) in cases {
            for c in defects {
                t.push(vec![*p, c.order as f64, c.max2, c.l2_2, c.max3, c.l2_3]);
            }
        }
        rep.tables.push(t);
    };
    push("_zero", &[(0.0, audit.zero.clone())]);
    push("_carrier", &audit.carrier);
    push("_uext", &audit.uext);
    let zmax = audit.zero.iter().fold(0.0f64, |m, c| m.max(c.max2).max(c.max3));
    rep.checks.push(Check::at_most("zero field defects", zmax, 0.0));
    let levels: Vec<f64> = (0..audit.carrier.len()).map(|i| audit.carrier_level_defect(i)).collect();
    let shrinking = levels.windows(2).all(|w| w[1] < w[0]);
    let worst = levels.windows(2).map(|w| w[1] / w[0]).fold(0.0f64, f64::max);
    rep.checks.push(Check::flag("linear carrier defects shrink under refinement", worst, "successive ratios < 1", shrinking));
    let finest = levels.last().copied().unwrap_or(f64::NAN);
    rep.note("carrier_finest_defect", finest);
    let uext: Vec<f64> = audit.uext.iter().map(|(_, d)| d.iter().skip(1).fold(0.0f64, |m, c| m.max(c.max2).max(c.max3))).collect();
    rep.checks.push(Check::flag(
        "U_ext(0) defects decrease with eps at every order",
        uext.last().copied().unwrap_or(f64::NAN),
        "strictly monotone",
        audit.uext_monotone(),
    ));
    emit_report(&rep, &sibling(&a.out, "_summary", "txt"))?;
    Ok(rep)
}
