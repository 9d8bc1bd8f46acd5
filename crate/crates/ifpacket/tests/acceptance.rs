//! Every acceptance criterion through the command line, one PASS/FAIL line each.
//! Runs without the libtest harness so the lines are printed as they finish;
//! the process fails if any criterion fails.
use clap::Parser;
use ifpacket::output::{Check, Report};
use ifpacket::{run, Cli};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

/// Report of one command and its wall time in seconds.
fn invoke(args: &[&str]) -> (Result<Report, String>, f64) {
    let t = Instant::now();
    let r = Cli::try_parse_from(std::iter::once("ifpacket").chain(args.iter().copied()))
        .map_err(|e| e.to_string())
        .and_then(|cli| run(cli).map_err(|e| format!("{e:#}")));
    (r, t.elapsed().as_secs_f64())
}

fn pick<'a>(rep: &'a Report, prefixes: &[&str]) -> Vec<&'a Check> {
    rep.checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))).collect()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn judge(checks: Vec<&Check>) -> Outcome {
    if checks.is_empty() {
        return Outcome { pass: false, detail: "no checks produced".into() };
    }
    Outcome {
        pass: checks.iter().all(|c| c.pass),
        detail: checks.iter().map(|c| format!("{} = {:.6e} ({})", c.name, c.measured, c.requirement)).collect::<Vec<_>>().join("; "),
    }
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = tmp.path();
    let mut failed = 0;
    let mut report = |id: usize, title: &str, secs: f64, o: Result<Outcome, String>| {
        let line = match o {
            Ok(o) => {
                failed += usize::from(!o.pass);
                format!("{} {id:>2} {title} [{secs:.1} s]: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail)
            }
            Err(e) => {
                failed += 1;
                format!("FAIL {id:>2} {title} [{secs:.1} s]: error: {e}")
            }
        };
        println!("{line}");
    };

    // 1-3 share one dispersion run: h = 0.01, mode at d = 200
    let (disp, secs) = invoke(&[
        "dispersion",
        "--kmin",
        "0.45",
        "--kmax",
        "0.55",
        "--dk",
        "0.05",
        "--extrapolate",
        "100,200,400",
        "--nu0-ref",
        "0.494",
        "--omega3-ref",
        "1.404",
        "--doubling",
        "25,50,100,200",
        "--out",
        &path(dir, "curve.csv"),
    ]);
    let on = |r: &Result<Report, String>, prefixes: &[&str]| r.as_ref().map(|r| judge(pick(r, prefixes))).map_err(Clone::clone);
    report(1, "eigenvalue reproduction", secs, on(&disp, &["extrapolated nu0", "mode localized"]));
    report(2, "third-harmonic eigenvalue", secs, on(&disp, &["omega(3 k0)", "no third-harmonic"]));
    report(3, "domain-size convergence", secs, on(&disp, &["|omega(d) - omega(2d)|"]));

    let (r, secs) = invoke(&["correctors", "--out", &path(dir, "correctors.bin")]);
    report(4, "corrector consistency", secs, on(&r, &["relative residual", "|<RHS_p, m>|", "jump identity"]));

    let (res, res_secs) = invoke(&["residual-scaling", "--eps", "0.1,0.05,0.025,0.0125", "--out", &path(dir, "res.csv")]);
    report(5, "residual scaling", res_secs, on(&res, &["residual slope"]));
    report(6, "fourth-order residual oracle", res_secs, on(&res, &["slope of the eps^4 oracle"]));

    let (a, sa) =
        invoke(&["nls-test", "--nu2", "-0.1154", "--kappa", "0.5", "--steps", "1000", "--dT", "1e-3", "--out", &path(dir, "soliton.csv")]);
    let (b, sb) = invoke(&[
        "nls-test",
        "--nu2",
        "-0.1154",
        "--kappa",
        "0",
        "--profile",
        "gaussian",
        "--steps",
        "1000",
        "--dT",
        "1e-3",
        "--out",
        &path(dir, "linear.csv"),
    ]);
    let nls = a.and_then(|a| b.map(|b| judge(a.checks.iter().chain(&b.checks).collect())));
    report(7, "NLS solver", sa + sb, nls);

    let (r, secs) = invoke(&["convergence", "--study", "carrier", "--hs", "0.2,0.1,0.05", "--out-dir", &path(dir, "carrier")]);
    report(8, "linear Maxwell exactness", secs, on(&r, &["carrier"]));

    let (r, secs) = invoke(&[
        "convergence",
        "--study",
        "packet",
        "--eps",
        "0.1,0.07,0.05",
        "--T0",
        "0.25",
        "--h",
        "0.1",
        "--min-slope",
        "1.3",
        "--out-dir",
        &path(dir, "packet"),
    ]);
    report(9, "approximation over long times", secs, on(&r, &["slope of sup_t"]));

    report(10, "divergence and jump scalings", res_secs, on(&res, &["|div D", "max |jump D1"]));

    let (r, secs) = invoke(&["compat-audit", "--eps", "0.1,0.05,0.025", "--hs", "0.2,0.1,0.05,0.025", "--out", &path(dir, "compat.csv")]);
    report(11, "compatibility audit", secs, r.map(|r| judge(r.checks.iter().collect())));

    if failed == 0 {
        println!("acceptance: all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 11 criteria failed");
        ExitCode::FAILURE
    }
}
