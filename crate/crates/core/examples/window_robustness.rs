//! Re-estimates the main table for several after-window lengths.

use inventor_did::corpus::Corpus;
use inventor_did::pipeline::{window_robustness, RunConfig};
use inventor_did::synth::{run_config_for, simulate, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let cfg = SynthConfig::default();
    let data = simulate(&cfg)?;
    let corpus = Corpus::new(data.patents);
    let run = run_config_for(&cfg, &RunConfig::default());
    let h = window_robustness(&corpus, &data.deals, &[], &run, &[3, 4, 5, 6])?;
    print!("{}", h.render_summary());
    println!("agree within 3 se: {}", h.agree());
    Ok(())
}
