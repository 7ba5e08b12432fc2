//! Main and dosage regression tables on a synthetic panel with a known effect.

use inventor_did::estimators::report::{render_table, ReportColumn};
use inventor_did::estimators::{did_dosage, did_heckman, did_ols, DidOptions};
use inventor_did::pipeline::RunConfig;
use inventor_did::synth::{simulated_stages, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let cfg = SynthConfig {
        dosage_effect_profile: Some((-0.21, -0.15, -0.24)),
        ..SynthConfig::default()
    };
    let staged = simulated_stages(&cfg, &RunConfig::default())?;
    let rows = &staged.panel.rows;
    let opts = DidOptions::default();
    let main = [
        ReportColumn::ols("OLS", did_ols(rows, &opts)?, true, false),
        ReportColumn::heckman("Heckman (2S)", did_heckman(rows, &opts)?, true, false),
    ];
    println!("{}", render_table("Stay after the deal", "Stay", &main));
    let d = did_dosage(rows, &opts)?;
    let dosage = [
        ReportColumn::ols("OLS", d.ols, true, false),
        ReportColumn::heckman("Heckman (2S)", d.heckman, true, false),
    ];
    println!("{}", render_table("Stay by similarity to the acquirer", "Stay", &dosage));
    Ok(())
}
