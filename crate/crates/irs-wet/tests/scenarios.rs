//! End-to-end checks of the bundled experiment scenarios: every shipped
//! configuration must validate and run under its smoke budget, and reruns
//! must be byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use irs_wet::scenario::{load_scenario, run_scenario, RunOverrides};

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn all_bundled_scenarios_run_under_the_smoke_budget() {
    let t0 = Instant::now();
    let out_root = std::env::temp_dir().join("irs_wet_scenarios_smoke");
    let _ = fs::remove_dir_all(&out_root);
    let mut count = 0;
    for fig in ["fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"] {
        let cfg = scenario_dir().join(format!("{fig}.cfg"));
        load_scenario(&cfg).unwrap_or_else(|e| panic!("{fig}: {e}"));
        let overrides = RunOverrides {
            out_dir: Some(out_root.join(fig)),
            smoke: true,
            ..Default::default()
        };
        let report = run_scenario(&cfg, &overrides).unwrap_or_else(|e| panic!("{fig}: {e}"));
        assert!(report.failures.is_empty(), "{fig}: {:?}", report.failures);
        assert!(!report.csv_paths.is_empty(), "{fig} wrote no tables");
        for path in &report.csv_paths {
            let text = fs::read_to_string(path).unwrap();
            assert!(text.lines().count() > 1, "{} is empty", path.display());
        }
        count += 1;
    }
    let elapsed = t0.elapsed();
    println!("{count} scenarios ran in {:.1}s under the smoke budget", elapsed.as_secs_f64());
    assert!(elapsed.as_secs_f64() < 300.0, "smoke budget (5 minutes) exceeded");
}

#[test]
fn smoke_rerun_is_byte_identical() {
    let cfg = scenario_dir().join("fig9.cfg");
    let root = std::env::temp_dir().join("irs_wet_scenarios_det");
    let _ = fs::remove_dir_all(&root);
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let overrides = RunOverrides {
            out_dir: Some(root.join(sub)),
            smoke: true,
            ..Default::default()
        };
        let report = run_scenario(&cfg, &overrides).unwrap();
        let mut blobs = Vec::new();
        for path in &report.csv_paths {
            blobs.push(fs::read(path).unwrap());
        }
        outputs.push(blobs);
    }
    assert_eq!(outputs[0], outputs[1]);
}
