//! Drives a bundled scenario through the library API in smoke mode and
//! renders one chart from the resulting CSV — the same flow as the `wetsim`
//! command line.
//!
//! Run with: `cargo run --release --example figure_pipeline`

use irs_wet::plot::{emit_plot, PlotSpec};
use irs_wet::scenario::{run_scenario, RunOverrides};
use std::path::Path;

fn main() -> irs_wet::Result<()> {
    let out = std::env::temp_dir().join("wetsim_figure_pipeline");
    let overrides = RunOverrides {
        out_dir: Some(out.clone()),
        smoke: true,
        ..Default::default()
    };
    let report = run_scenario(Path::new("scenarios/fig3.cfg"), &overrides)?;
    for path in &report.csv_paths {
        println!("wrote {}", path.display());
    }

    let csv = out.join("fig3_accpm.csv");
    let mut spec = PlotSpec::new("n_a", "ne_p");
    spec.series = Some("m_t".into());
    spec.title = Some("estimator learning curve (smoke budget)".into());
    spec.log_y = true;
    let svg = out.join("fig3.svg");
    emit_plot(&csv, &spec, &svg)?;
    println!("wrote {}", svg.display());
    Ok(())
}
