//! Every stage end to end into an output directory, as the `all` subcommand does.

use inventor_did::pipeline::{cmd_all, RunConfig};

fn main() -> inventor_did::Result<()> {
    env_logger::init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into());
    let cfg = RunConfig {
        output_dir: out.clone().into(),
        windows: vec![3, 4, 5, 6],
        ..RunConfig::default()
    };
    if let Some(report) = cmd_all(&cfg)? {
        print!("{}", report.render());
    }
    println!("outputs under {out}");
    Ok(())
}
