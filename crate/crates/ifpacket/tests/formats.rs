use ifpacket::output::{read_correctors, read_snapshot, read_table, write_correctors, write_snapshot, CorrectorFile, Table};
use ifpacket_core::correctors::compute_correctors;
use ifpacket_core::field::Field2D;
use ifpacket_core::{Grid1D, Grid2D, PiecewiseProfile};

#[test]
fn table_round_trips_exact_floats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/t.csv");
    let mut t = Table::new(&path, &["eps", "value"]);
    t.push(vec![0.1, 1.0 / 3.0]);
    t.push(vec![0.05, -2.5e-17]);
    t.footer.push(("slope".into(), vec![1.4999999999999998]));
    t.write().unwrap();
    let (header, rows) = read_table(&path).unwrap();
    assert_eq!(header, ["eps", "value"]);
    assert_eq!(rows, t.rows);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.ends_with("slope,1.4999999999999998\n"), "{text}");
}

#[test]
fn empty_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    Table::new(&path, &["t", "err"]).write().unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,err\n");
    assert!(read_table(&path).unwrap().1.is_empty());
}

#[test]
fn corrector_file_round_trips() {
    let set = compute_correctors(&Grid1D::new(60.0, 0.2).unwrap(), &PiecewiseProfile::exp_step(1.0), 0.5, 0.49).unwrap();
    let f = CorrectorFile::from_set(&set);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    write_correctors(&path, &f).unwrap();
    assert_eq!(read_correctors(&path).unwrap(), f);
    std::fs::write(&path, b"IFPSNP01").unwrap();
    assert!(read_correctors(&path).is_err());
}

#[test]
fn snapshot_round_trips_and_rejects_trailing_bytes() {
    let g2 = Grid2D::new(Grid1D::new(3.0, 0.5).unwrap(), -2.0, 2.0, 4).unwrap();
    let f = Field2D::from_fn(&g2, 1.25, |side, x1, x2| {
        let s = if side == ifpacket_core::Side::Minus { -1.0 } else { 1.0 };
        [s + x1, x1 * x2, x2.sin()]
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    write_snapshot(&path, &f).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(back.time_stamp, 1.25);
    assert_eq!(back.u1, f.u1);
    assert_eq!(back.u2, f.u2);
    assert_eq!(back.u3, f.u3);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_snapshot(&path).is_err());
}
