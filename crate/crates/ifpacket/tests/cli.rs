use clap::Parser;
use ifpacket::input::RunConfig;
use ifpacket::output::read_table;
use ifpacket::{run, Cli};
use std::path::Path;

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("ifpacket").chain(args.iter().copied())).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    // seven carrier wavelengths, 16 / eps envelope widths
    let text = format!(
        "profile = \"exp-step\"\nk0 = 0.5\neps = 0.2\nT0 = 0.004\ndt_cfl = 0.5\nsnapshot_every = 4\n{extra}\n\
         [grid]\nd = 60.0\nh = 0.2\nx2_extent = {}\nn_x2 = 128\n",
        28.0 * std::f64::consts::PI
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn parsing_rejects_bad_input() {
    assert!(Cli::try_parse_from(["ifpacket", "nope"]).is_err());
    assert!(Cli::try_parse_from(["ifpacket", "nls-test", "--kappa", "1"]).is_err());
    assert!(Cli::try_parse_from(["ifpacket", "convergence", "--study", "sideways"]).is_err());
    assert!(Cli::try_parse_from(["ifpacket", "nls-test", "--nu2", "-0.1", "--kappa", "-0.5"]).is_ok());
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "");
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!(cfg.eps3, "const:1.0");
    assert_eq!(cfg.grid.n_x2, 128);
    std::fs::write(&p, std::fs::read_to_string(&p).unwrap().replace("x2_extent = ", "x2_extent = 1.0 + ")).unwrap();
    assert!(RunConfig::load(&p).is_err());
    let p = write_config(dir.path(), "colour = 3");
    assert!(RunConfig::load(&p).is_err());
}

#[test]
fn nls_soliton_run_writes_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nls.csv");
    let rep =
        run(cli(&["nls-test", "--nu2", "-0.12", "--kappa", "0.8", "--steps", "200", "--every", "50", "--out", out.to_str().unwrap()]))
            .unwrap();
    assert!(rep.passed(), "{}", rep.summary());
    let (header, rows) = read_table(&out).unwrap();
    assert_eq!(header[0], "T");
    assert_eq!(rows.len(), 5);
}

#[test]
fn evolve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "out_dir = \"a\"");
    let rep = run(cli(&["evolve", "--config", cfg.to_str().unwrap()])).unwrap();
    assert!(rep.passed(), "{}", rep.summary());
    let cfg = write_config(dir.path(), "out_dir = \"b\"");
    run(cli(&["evolve", "--config", cfg.to_str().unwrap()])).unwrap();
    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "diagnostics.csv"), read("b", "diagnostics.csv"));
    let snaps: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .filter_map(|e| {
            let n = e.unwrap().file_name().into_string().unwrap();
            n.starts_with("snap_").then_some(n)
        })
        .collect();
    assert!(snaps.len() >= 2);
    for s in &snaps {
        assert_eq!(read("a", s), read("b", s), "{s}");
    }
    let (_, rows) = read_table(&dir.path().join("a/diagnostics.csv")).unwrap();
    assert_eq!(rows.len(), snaps.len());
    assert!(rows[0][0] == 0.0);
}

#[test]
fn tabulated_profile_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let minus: String = (0..=300).rev().map(|i| format!("{},1.0\n", -0.2 * i as f64)).collect();
    let plus: String = (0..=1200)
        .map(|i| {
            let x = 0.05 * i as f64;
            format!("{x},{}\n", 1.0 + (-x).exp())
        })
        .collect();
    std::fs::write(dir.path().join("m.csv"), format!("x1,eps1\n{minus}")).unwrap();
    std::fs::write(dir.path().join("p.csv"), plus).unwrap();
    let base = dir.path().to_str().unwrap();
    let spec = format!("table:{base}/m.csv,{base}/p.csv");
    let nu0 = |profile: &str| {
        let out = dir.path().join(format!("c{}.bin", profile.len()));
        let rep = run(cli(&["correctors", "--profile", profile, "--h", "0.2", "--out", out.to_str().unwrap()])).unwrap();
        rep.notes.iter().find(|(k, _)| k == "nu").unwrap().1.split(' ').next().unwrap().parse::<f64>().unwrap()
    };
    let (a, b) = (nu0("exp-step"), nu0(&spec));
    assert!((a - b).abs() < 1e-4, "{a} vs {b}");
}
