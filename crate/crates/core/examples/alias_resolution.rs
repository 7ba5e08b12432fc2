//! Name normalisation, edit distance and alias screening for one deal.

use inventor_did::corpus::{levenshtein, name_similarity, normalize_name, resolve_aliases, DealEvent, DealType};

fn main() -> inventor_did::Result<()> {
    let deal = DealEvent {
        acquired_id: "T1".into(),
        acquired_name: "Acme Polymers Inc.".into(),
        acquirer_id: "A1".into(),
        acquirer_name: "Globex Chemical Corp".into(),
        deal_year: 2001,
        deal_type: DealType::Acquisition,
    };
    let assignees = [
        ("T1", "Acme Polymers Inc."),
        ("T1b", "ACME POLYMERS"),
        ("A1", "Globex Chemical Corp"),
        ("X9", "Globex Chemicals"),
        ("Z3", "Initech"),
    ];
    println!("levenshtein(kitten, sitting) = {}", levenshtein("kitten", "sitting"));
    for (_, name) in &assignees {
        println!(
            "{name:<24} -> {:<20} sim to acquirer {:.3}",
            normalize_name(name),
            name_similarity(name, &deal.acquirer_name)
        );
    }
    let set = resolve_aliases(&deal, assignees.iter().copied(), 0.7)?;
    println!("confirmed: {:?}", set.confirmed_aliases);
    for c in &set.review_queue {
        println!("needs review: {} ({}) score {:.3}", c.assignee_id, c.assignee_name, c.score);
    }
    Ok(())
}
