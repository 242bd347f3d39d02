//! Replays the checked-in fuzz seeds through the same checks as the fuzz targets.

use std::path::{Path, PathBuf};

use kthprice::cli::RunConfig;
use kthprice::dists::{parse_spec_offline, Expr};
use kthprice::simulate::SimulationReport;
use kthprice::verify::VerificationReport;
use kthprice::Jet;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn dist_spec_seeds() {
    let mut parsed = 0;
    for (path, s) in seeds("dist_spec") {
        if let Ok(d) = parse_spec_offline(&s) {
            assert_eq!(parse_spec_offline(&d.to_string()).unwrap(), d, "{}", path.display());
            parsed += 1;
        }
    }
    assert!(parsed >= 4);
}

#[test]
fn quantile_expr_seeds() {
    for (path, s) in seeds("quantile_expr") {
        if let Ok(e) = Expr::parse(&s) {
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{}", path.display());
            let _ = e.eval(0.5);
            let _ = e.eval_jet(&Jet::variable(0.5, 4));
        }
    }
}

#[test]
fn run_config_seeds() {
    let ok = seeds("run_config").iter().filter(|(_, s)| RunConfig::from_toml(s).is_ok()).count();
    assert_eq!(ok, 2);
}

#[test]
fn report_seeds() {
    for (path, s) in seeds("reports") {
        let v = VerificationReport::from_toml(&s).map(|r| VerificationReport::from_toml(&r.to_toml()).unwrap());
        let m = SimulationReport::from_toml(&s).map(|r| SimulationReport::from_toml(&r.to_toml()).unwrap());
        assert!(v.is_ok() || m.is_ok(), "{} parses as neither report", path.display());
    }
}
