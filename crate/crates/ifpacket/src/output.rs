//! File formats: CSV tables, corrector and snapshot binaries, run summaries.
use anyhow::{bail, ensure, Context, Result};
use ifpacket_core::correctors::CorrectorSet;
use ifpacket_core::field::{Blocks, Field2D};
use ifpacket_core::stagger::{collocate, Stag};
use ifpacket_core::{Complex64, Grid1D, Grid2D};
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Rectangular numeric table with optional labelled footer rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Rows whose first cell is a label, e.g. fitted slopes.
    pub footer: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(path: impl Into<PathBuf>, header: &[&str]) -> Self {
        Self { path: path.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), footer: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self) -> Result<()> {
        if let Some(dir) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w =
            csv::WriterBuilder::new().flexible(true).from_path(&self.path).with_context(|| format!("writing {}", self.path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| fmt_num(*v)))?;
        }
        for (label, vals) in &self.footer {
            w.write_record(std::iter::once(label.clone()).chain(vals.iter().map(|v| fmt_num(*v))))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Header row plus numeric body of a CSV written by [`Table::write`], footer rows skipped.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        match rec.iter().map(str::parse::<f64>).collect::<Result<Vec<_>, _>>() {
            Ok(r) => rows.push(r),
            Err(_) => continue,
        }
    }
    Ok((header, rows))
}

fn node_rows(grid: &Grid1D) -> Vec<(f64, usize, bool)> {
    let iface = grid.interface_index;
    let mut out = Vec::with_capacity(grid.len() + 1);
    for i in 0..grid.len() {
        if i == iface {
            out.push((grid.x(i), i, false));
            out.push((grid.x(i), 0, true));
        } else if i < iface {
            out.push((grid.x(i), i, false));
        } else {
            out.push((grid.x(i), i - iface, true));
        }
    }
    out
}

/// Mode table `x1, w1, Im(w2), w3` at the nodes; the interface node appears twice
/// (left then right limit of `w1`), `w2` is interpolated from the half nodes.
pub fn mode_table(path: impl Into<PathBuf>, grid: &Grid1D, w: &Stag<f64>) -> Table {
    let mut t = Table::new(path, &["x1", "w1", "Im(w2)", "w3"]);
    let c = collocate(w, grid.interface_index);
    for (x, k, plus) in node_rows(grid) {
        let i = if plus { k + grid.interface_index } else { k };
        let w1 = if plus { c.u1p[k] } else { c.u1m[k] };
        t.push(vec![x, w1, c.u2[i], c.u3[i]]);
    }
    t
}

/// Complex corrector field at the nodes, same row layout as [`mode_table`].
pub fn complex_field_table(path: impl Into<PathBuf>, grid: &Grid1D, v: &Stag<Complex64>) -> Table {
    let mut t = Table::new(path, &["x1", "re1", "im1", "re2", "im2", "re3", "im3"]);
    let iface = grid.interface_index;
    let re = collocate(&v.re(), iface);
    let im = collocate(&v.im(), iface);
    for (x, k, plus) in node_rows(grid) {
        let i = if plus { k + iface } else { k };
        let (r1, i1) = if plus { (re.u1p[k], im.u1p[k]) } else { (re.u1m[k], im.u1m[k]) };
        t.push(vec![x, r1, i1, re.u2[i], im.u2[i], re.u3[i], im.u3[i]]);
    }
    t
}

const CORRECTOR_MAGIC: &[u8; 8] = b"IFPCOR01";
const SNAPSHOT_MAGIC: &[u8; 8] = b"IFPSNP01";

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Scalars and fields stored in a corrector file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorFile {
    pub d: f64,
    pub h: f64,
    pub k0: f64,
    pub nu: (f64, f64, f64),
    pub kappa: f64,
    /// `m, dkw, dk2w, p, h` in this order.
    pub fields: Vec<Stag<Complex64>>,
}

pub const CORRECTOR_FIELDS: [&str; 5] = ["m", "dkw", "dk2w", "p", "h"];

impl CorrectorFile {
    pub fn from_set(set: &CorrectorSet) -> Self {
        let g = &set.medium.grid;
        Self {
            d: g.d,
            h: g.h,
            k0: set.k0(),
            nu: set.nu,
            kappa: set.kappa,
            fields: vec![set.m.to_complex(), set.dkw.clone(), set.dk2w.clone(), set.p.clone(), set.h.clone()],
        }
    }
}

/// Little-endian layout: magic, `d h k0 nu0 nu1 nu2 kappa`, field count, then
/// per field the arrays `c1m c1p c2 c3`, each as a length and `(re, im)` pairs.
pub fn write_correctors(path: &Path, f: &CorrectorFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    w.write_all(CORRECTOR_MAGIC)?;
    for v in [f.d, f.h, f.k0, f.nu.0, f.nu.1, f.nu.2, f.kappa] {
        put_f64(&mut w, v)?;
    }
    put_u64(&mut w, f.fields.len() as u64)?;
    for s in &f.fields {
        for arr in [&s.c1m, &s.c1p, &s.c2, &s.c3] {
            put_u64(&mut w, arr.len() as u64)?;
            for z in arr.iter() {
                put_f64(&mut w, z.re)?;
                put_f64(&mut w, z.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_correctors(path: &Path) -> Result<CorrectorFile> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("reading {}", path.display()))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    ensure!(&magic == CORRECTOR_MAGIC, "{} is not a corrector file", path.display());
    let mut s = [0.0; 7];
    for v in s.iter_mut() {
        *v = get_f64(&mut r)?;
    }
    let n = get_u64(&mut r)? as usize;
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let mut arrs: [Vec<Complex64>; 4] = Default::default();
        for arr in arrs.iter_mut() {
            let len = get_u64(&mut r)? as usize;
            ensure!(len < 1 << 32, "corrupt array length {len}");
            for _ in 0..len {
                let re = get_f64(&mut r)?;
                arr.push(Complex64::new(re, get_f64(&mut r)?));
            }
        }
        let [c1m, c1p, c2, c3] = arrs;
        fields.push(Stag { c1m, c1p, c2, c3 });
    }
    Ok(CorrectorFile { d: s[0], h: s[1], k0: s[2], nu: (s[3], s[4], s[5]), kappa: s[6], fields })
}

/// Little-endian layout: magic, `n_minus n_plus n_x2` (u64), `t d h x2_min x2_max`
/// (f64), then for each component `E1, E2, H3` the minus block and the plus
/// block, row-major with one row per `x1` node.
pub fn write_snapshot(path: &Path, f: &Field2D) -> Result<()> {
    let g = &f.grid;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    w.write_all(SNAPSHOT_MAGIC)?;
    put_u64(&mut w, g.grid_x1.n_minus as u64)?;
    put_u64(&mut w, g.grid_x1.n_plus as u64)?;
    put_u64(&mut w, g.n_x2 as u64)?;
    for v in [f.time_stamp, g.grid_x1.d, g.grid_x1.h, g.x2_min, g.x2_max] {
        put_f64(&mut w, v)?;
    }
    for comp in f.components() {
        for block in [&comp.minus, &comp.plus] {
            for v in block {
                put_f64(&mut w, *v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Field2D> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("reading {}", path.display()))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    ensure!(&magic == SNAPSHOT_MAGIC, "{} is not a snapshot file", path.display());
    let n_minus = get_u64(&mut r)? as usize;
    let n_plus = get_u64(&mut r)? as usize;
    let n_x2 = get_u64(&mut r)? as usize;
    let mut hdr = [0.0; 5];
    for v in hdr.iter_mut() {
        *v = get_f64(&mut r)?;
    }
    let [t, d, h, x2_min, x2_max] = hdr;
    let g1 = Grid1D::new(d, h)?;
    if g1.n_minus != n_minus || g1.n_plus != n_plus {
        bail!("snapshot header is inconsistent: {n_minus} + {n_plus} nodes for d = {d}, h = {h}");
    }
    let g2 = Grid2D::new(g1, x2_min, x2_max, n_x2)?;
    let mut f = Field2D::zeros(&g2, t);
    for comp in f.components_mut() {
        let Blocks { minus, plus } = comp;
        for block in [minus, plus] {
            for v in block.iter_mut() {
                *v = get_f64(&mut r)?;
            }
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    ensure!(rest.is_empty(), "trailing bytes in {}", path.display());
    Ok(f)
}

/// Outcome of one acceptance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Human-readable requirement, e.g. `<= 1e-8`.
    pub requirement: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, requirement: format!("<= {bound:e}"), pass: measured <= bound }
    }

    pub fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, requirement: format!(">= {bound}"), pass: measured >= bound }
    }

    pub fn within(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Self { name: name.into(), measured, requirement: format!("{target} +- {tol}"), pass: (measured - target).abs() <= tol }
    }

    pub fn flag(name: &str, measured: f64, requirement: &str, pass: bool) -> Self {
        Self { name: name.into(), measured, requirement: requirement.into(), pass }
    }

    pub fn line(&self) -> String {
        format!("{} {}: measured {:.6e}, required {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.measured, self.requirement)
    }
}

/// Everything a subcommand produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub command: String,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    /// Free-form `key = value` lines for the summary.
    pub notes: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), ..Self::default() }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.command);
        for (k, v) in &self.notes {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
        }
        s.push_str(if self.passed() { "all checks passed\n" } else { "some checks failed\n" });
        s
    }
}

/// Writes every table and `summary` (a text file listing each check).
pub fn emit_report(report: &Report, summary: &Path) -> Result<()> {
    for t in &report.tables {
        t.write()?;
    }
    if let Some(dir) = summary.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(summary, report.summary()).with_context(|| format!("writing {}", summary.display()))?;
    Ok(())
}

/// `<stem><suffix>.<ext>` next to `path`.
pub fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}
