//! Profile specifications, list arguments and the run-config file.
use anyhow::{bail, Context, Result};
use ifpacket_core::harness::{EnvelopeShape, PacketSpec};
use ifpacket_core::profile::{SideFn, Table};
use ifpacket_core::PiecewiseProfile;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// `exp-step` or `table:<minus.csv>,<plus.csv>` (two columns `x1, eps1` per file).
pub fn parse_profile(spec: &str, base: &Path) -> Result<PiecewiseProfile> {
    if spec == "exp-step" {
        return Ok(PiecewiseProfile::exp_step(1.0));
    }
    let Some(files) = spec.strip_prefix("table:") else {
        bail!("unknown profile {spec:?}; expected exp-step or table:<minus.csv>,<plus.csv>");
    };
    let (minus, plus) = files.split_once(',').context("table profile needs two files separated by a comma")?;
    let eps1_minus = read_side_table(&base.join(minus))?;
    let eps1_plus = read_side_table(&base.join(plus))?;
    Ok(PiecewiseProfile::new(eps1_minus, eps1_plus, SideFn::Const(1.0), SideFn::Const(1.0), 1.0))
}

/// Two-column CSV `x1, value`, optionally with a header row.
pub fn read_side_table(path: &Path) -> Result<SideFn> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}:{}: expected 2 columns, found {}", path.display(), line + 1, rec.len());
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(v)) => {
                xs.push(x);
                vs.push(v);
            }
            _ if line == 0 => continue,
            _ => bail!("{}:{}: not a number", path.display(), line + 1),
        }
    }
    Ok(SideFn::Tabulated(Table::new(xs, vs)?))
}

/// `const:<v>` on both sides or `sides:<minus>,<plus>`.
pub fn apply_eps3(profile: PiecewiseProfile, spec: &str) -> Result<PiecewiseProfile> {
    if let Some(v) = spec.strip_prefix("const:") {
        let v: f64 = v.parse().with_context(|| format!("bad eps3 value in {spec:?}"))?;
        return Ok(profile.with_eps3(SideFn::Const(v), SideFn::Const(v)));
    }
    if let Some(v) = spec.strip_prefix("sides:") {
        let (a, b) = v.split_once(',').context("sides: needs two values")?;
        return Ok(profile.with_eps3(SideFn::Const(a.parse()?), SideFn::Const(b.parse()?)));
    }
    bail!("unknown eps3 spec {spec:?}; expected const:<v> or sides:<minus>,<plus>")
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?}"))).collect()
}

/// Default eigenvalue seed: just below the continuum edge at `k0`.
pub fn default_seed(profile: &PiecewiseProfile, k0: f64) -> f64 {
    0.99 * k0 / (profile.mu0 * profile.eps1_inf_minus.max(profile.eps1_inf_plus)).sqrt()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: f64,
    pub h: f64,
    /// Length of the periodic `x2` box; `k0 x2_extent / 2 pi` must be an integer.
    pub x2_extent: f64,
    pub n_x2: usize,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    #[serde(default = "one")]
    pub amp: f64,
    #[serde(default = "one")]
    pub width: f64,
}

fn one() -> f64 {
    1.0
}

/// Run-config file of `evolve`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: String,
    #[serde(default = "default_eps3")]
    pub eps3: String,
    pub k0: f64,
    pub eps: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub grid: GridSection,
    pub dt_cfl: f64,
    pub snapshot_every: usize,
    pub omega_seed: Option<f64>,
    #[serde(default = "default_nls_dt")]
    pub nls_dt: f64,
    pub envelope: Option<EnvelopeSection>,
    /// Directory for snapshots and diagnostics, relative to the config file.
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_eps3() -> String {
    "const:1.0".into()
}

fn default_nls_dt() -> f64 {
    1e-4
}

fn default_out() -> PathBuf {
    PathBuf::from("evolve_out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            bail!("eps must lie in (0, 1)");
        }
        if !(self.t0 > 0.0) {
            bail!("T0 must be positive");
        }
        if !(self.dt_cfl > 0.0 && self.dt_cfl <= 1.0) {
            bail!("dt_cfl must lie in (0, 1]");
        }
        if self.snapshot_every == 0 {
            bail!("snapshot_every must be positive");
        }
        let turns = self.k0 * self.grid.x2_extent / (2.0 * std::f64::consts::PI);
        if (turns - turns.round()).abs() > 1e-9 * turns.max(1.0) {
            bail!("k0 * x2_extent / (2 pi) = {turns} must be an integer");
        }
        Ok(())
    }

    pub fn packet(&self) -> PacketSpec {
        let env = self.envelope.clone().unwrap_or(EnvelopeSection { amp: 1.0, width: 1.0 });
        PacketSpec { shape: EnvelopeShape::Gaussian { amp: env.amp, width: env.width }, ..PacketSpec::default() }
    }
}
