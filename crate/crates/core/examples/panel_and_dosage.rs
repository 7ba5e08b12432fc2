//! Builds the two-period panel and shows the similarity terciles.

use std::collections::BTreeMap;

use inventor_did::pipeline::RunConfig;
use inventor_did::synth::{simulated_stages, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let cfg = SynthConfig {
        n_treated_firms: 10,
        ..SynthConfig::default()
    };
    let staged = simulated_stages(&cfg, &RunConfig::default())?;
    let panel = &staged.panel;
    println!("{} pairs, {} rows, tercile cuts {:?}", panel.pairs(), panel.rows.len(), panel.cut_points);
    let mut by_group: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in panel.rows.iter().filter(|r| r.active) {
        let e = by_group.entry(format!("{} {:?}", r.dosage, r.period)).or_default();
        e.0 += usize::from(r.stay == Some(true));
        e.1 += 1;
    }
    for (group, (stay, n)) in by_group {
        println!("{group:<20} stay {:.3} of {n} active", stay as f64 / n as f64);
    }
    Ok(())
}
