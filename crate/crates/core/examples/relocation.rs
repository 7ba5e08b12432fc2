//! Great-circle distances and relocation of panel inventors.

use inventor_did::corpus::Corpus;
use inventor_did::geo::{haversine, relocation_table, GeoPoint};
use inventor_did::pipeline::{run_stages, RunConfig};
use inventor_did::synth::{run_config_for, simulate, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let munich = GeoPoint::new(48.137, 11.575).unwrap();
    let basel = GeoPoint::new(47.560, 7.588).unwrap();
    println!("Munich to Basel {:.1} km", haversine(munich, basel));

    let cfg = SynthConfig::default();
    let data = simulate(&cfg)?;
    let corpus = Corpus::new(data.patents);
    let run = run_config_for(&cfg, &RunConfig::default());
    let staged = run_stages(&corpus, &data.deals, &[], &run)?;
    let t = relocation_table(&staged.panel.rows, &corpus, (run.window.r, run.window.b, run.window.a))?;
    for g in &t.groups {
        println!(
            "acquired {:<5} stay {:<5} n {:>4}  mean {:>7.1} km  within 10 km {:.2}",
            g.acquired, g.stay, g.count, g.mean_km, g.share_within_10km
        );
    }
    Ok(())
}
