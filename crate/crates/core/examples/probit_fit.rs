//! Probit on a 2x2 table reproduces the closed-form cell quantiles.

use inventor_did::estimators::{normal, probit, DesignBuilder};

fn main() -> inventor_did::Result<()> {
    // 30 of 100 succeed when x = 0, 70 of 100 when x = 1.
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (g, ones) in [(0.0, 30), (1.0, 70)] {
        for k in 0..100 {
            y.push(f64::from(u8::from(k < ones)));
            x.push(g);
        }
    }
    let fit = probit(&y, &DesignBuilder::new((0..y.len()).collect()).regressor("x", x).build()?)?;
    let b0 = normal::quantile(0.3);
    println!("constant {:.6} vs {:.6}", fit.coef[0], b0);
    println!("slope    {:.6} vs {:.6}", fit.coef[1], normal::quantile(0.7) - b0);
    println!("log-likelihood {:.4}", fit.log_likelihood);
    Ok(())
}
