//! Generates a small synthetic corpus and prints the injected truth.
//!
//! ```bash
//! cargo run --example synthetic_corpus -- /tmp/synth
//! ```

use inventor_did::synth::{self, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synth_out".into());
    let cfg = SynthConfig {
        n_treated_firms: 5,
        ..SynthConfig::default()
    };
    let files = synth::generate(&cfg, &dir)?;
    println!("wrote {} and {}", files.patents.display(), files.deals.display());
    for (k, v) in synth::read_truth(&files.truth)? {
        if k.starts_with("cell.stay") || k.starts_with("count.") {
            println!("{k} = {v}");
        }
    }
    Ok(())
}
