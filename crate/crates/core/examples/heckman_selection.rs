//! Two-step selection model on simulated data with correlated errors.

use inventor_did::estimators::{heckman_two_step, DesignBuilder, SelectionModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> inventor_did::Result<()> {
    let (n, rho) = (5000, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut x, mut w, mut sel, mut y, mut x1) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let (xi, wi, u, v): (f64, f64, f64, f64) = (
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let s = 0.2 + 0.5 * xi + 1.5 * wi + u > 0.0;
        if s {
            y.push(1.0 + 0.5 * xi + rho * u + (1.0 - rho * rho).sqrt() * v);
            x1.push(xi);
        }
        x.push(xi);
        w.push(wi);
        sel.push(s);
    }
    let model = SelectionModel {
        selection: DesignBuilder::new((0..n).collect()).regressor("x", x).regressor("w", w).build()?,
        outcome: DesignBuilder::new((0..x1.len()).collect()).regressor("x", x1).build()?,
        selected: sel,
        y,
        exclusion: vec!["w".into()],
    };
    let h = heckman_two_step(&model, true)?;
    println!("slope {:.4} (true 0.5)", h.coef_of("x").unwrap());
    println!("beta_lambda {:.4}, rho {:.4}, sigma {:.4}", h.beta_lambda.unwrap(), h.rho.unwrap(), h.sigma);
    println!("{} of {} rows selected", h.n_selected, h.n_total);
    Ok(())
}
