#![allow(dead_code)]

use inventor_did::corpus::{Corpus, DealEvent, DealType, InventorEntry, PatentRecord};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small corpus with random firms, inventors, technology tags and deals.
/// Inventors file mostly for a home firm and sometimes for other firms, so
/// freelancers, multi-firm inventors and overlapping deals all occur.
pub fn random_corpus(seed: u64) -> (Corpus, Vec<DealEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_firms = rng.random_range(4..=9);
    let vocab: Vec<String> = (1..=rng.random_range(3..=6)).map(|g| format!("C08G{g:03}")).collect();
    let firms: Vec<String> = (0..n_firms).map(|f| format!("F{f}")).collect();
    let mut patents = Vec::new();
    let mut next = 0;
    for (f, firm) in firms.iter().enumerate() {
        let tags: Vec<String> = vocab.choose_multiple(&mut rng, 2).cloned().collect();
        for i in 0..rng.random_range(2..=8) {
            let inv = format!("I{f}-{i}");
            let loyalty: f64 = rng.random_range(0.1..1.0);
            for _ in 0..rng.random_range(1..=8) {
                let assignee = if rng.random::<f64>() < loyalty {
                    firm.clone()
                } else {
                    firms.choose(&mut rng).unwrap().clone()
                };
                let g = if rng.random::<f64>() < 0.8 {
                    tags.choose(&mut rng).unwrap().clone()
                } else {
                    vocab.choose(&mut rng).unwrap().clone()
                };
                next += 1;
                patents.push(PatentRecord {
                    patent_id: format!("P{next}"),
                    application_year: rng.random_range(1986..=2004),
                    assignee_name: format!("Firm {assignee}"),
                    assignee_id: assignee,
                    inventors: vec![InventorEntry {
                        inventor_id: inv.clone(),
                        location: None,
                    }],
                    ipc_main_groups: vec![g],
                });
            }
        }
    }
    let mut deals = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let pick: Vec<&String> = firms.choose_multiple(&mut rng, 2).collect();
        deals.push(DealEvent {
            acquired_id: pick[0].clone(),
            acquired_name: format!("Firm {}", pick[0]),
            acquirer_id: pick[1].clone(),
            acquirer_name: format!("Firm {}", pick[1]),
            deal_year: rng.random_range(1994..=2000),
            deal_type: if rng.random::<f64>() < 0.75 { DealType::Acquisition } else { DealType::OtherMa },
        });
    }
    (Corpus::new(patents), deals)
}
