//! Treatment cohorts, firm matches and inventor pairs on a synthetic corpus.

use inventor_did::cohort::{build_cohorts, WindowParams};
use inventor_did::corpus::{Corpus, YearSpan};
use inventor_did::matching::{balance_table, match_all, render_balance, SimilarityWeights};
use inventor_did::panel::pair_covariates;
use inventor_did::synth::{simulate, SynthConfig};

fn main() -> inventor_did::Result<()> {
    let data = simulate(&SynthConfig {
        n_treated_firms: 6,
        ..SynthConfig::default()
    })?;
    let corpus = Corpus::new(data.patents);
    let build = build_cohorts(&data.deals, &corpus, WindowParams::default(), YearSpan { start: 1990, end: 2010 })?;
    for a in &build.audit {
        println!("{:<14} {:<40} employees {}", a.deal_id, a.reason, a.employees);
    }
    let m = match_all(
        &build.cohorts,
        &corpus,
        &build.excluded_inventors,
        &SimilarityWeights::default(),
        0.8,
        0.9,
    )?;
    for f in &m.firm_matches {
        let controls: Vec<String> = f.controls.iter().map(|c| format!("{} ({:.3})", c.control_firm_id, c.score)).collect();
        println!("{} -> {}", f.cohort_id, controls.join(", "));
    }
    println!("{} inventor pairs", m.pairs.len());
    let covs = pair_covariates(&m.pairs, &build, &corpus)?;
    print!("{}", render_balance(&balance_table(&covs)?));
    Ok(())
}
