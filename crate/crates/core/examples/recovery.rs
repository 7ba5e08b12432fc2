//! Checks that the pipeline recovers the effects injected by the generator.

use inventor_did::pipeline::RunConfig;
use inventor_did::synth::{recovery_run, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let report = recovery_run(&SynthConfig::default(), &RunConfig::default())?;
    print!("{}", report.render());
    Ok(())
}
