//! Regression tables in the layout of the published results: coefficients
//! with significance stars, t statistics in parentheses underneath, a
//! first-stage block for selection models and a footer of fit statistics.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::csv_err;
use crate::error::Result;

use super::heckman::HeckmanResult;
use super::{terms, FitResult};

pub const RECORD_COLUMNS: [&str; 8] = ["spec", "block", "term", "estimate", "se", "t", "p", "stars"];

const FIRST_STAGE_TITLE: &str = "First stage regression, dependent variable Active";

/// `*` for p < 0.05, `**` for p < 0.01, `***` for p < 0.001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone)]
pub enum ColumnModel {
    Ols(FitResult),
    Heckman(HeckmanResult),
}

/// One column of a regression table.
#[derive(Debug, Clone)]
pub struct ReportColumn {
    pub title: String,
    pub model: ColumnModel,
    pub deal_year_effects: bool,
    pub company_effects: bool,
}

impl ReportColumn {
    pub fn ols(title: &str, fit: FitResult, deal_year_effects: bool, company_effects: bool) -> Self {
        ReportColumn {
            title: title.to_string(),
            model: ColumnModel::Ols(fit),
            deal_year_effects,
            company_effects,
        }
    }

    pub fn heckman(title: &str, h: HeckmanResult, deal_year_effects: bool, company_effects: bool) -> Self {
        ReportColumn {
            title: title.to_string(),
            model: ColumnModel::Heckman(h),
            deal_year_effects,
            company_effects,
        }
    }

    /// The outcome regression.
    pub fn main(&self) -> &FitResult {
        match &self.model {
            ColumnModel::Ols(f) => f,
            ColumnModel::Heckman(h) => &h.stage2,
        }
    }

    pub fn first_stage(&self) -> Option<&FitResult> {
        match &self.model {
            ColumnModel::Ols(_) => None,
            ColumnModel::Heckman(h) => h.stage1.as_ref(),
        }
    }

    fn selection(&self) -> Option<&HeckmanResult> {
        match &self.model {
            ColumnModel::Heckman(h) => Some(h),
            ColumnModel::Ols(_) => None,
        }
    }

    pub fn observations(&self) -> usize {
        match &self.model {
            ColumnModel::Ols(f) => f.n,
            ColumnModel::Heckman(h) => h.n_total,
        }
    }
}

fn is_fixed_effect(term: &str) -> bool {
    [terms::COMPANY_BLOCK, terms::DEAL_YEAR_BLOCK]
        .iter()
        .any(|b| term.strip_prefix(b).is_some_and(|r| r.starts_with('=')))
}

/// Visible terms in order of first appearance, constant last.
fn row_order<'a>(fits: impl Iterator<Item = &'a FitResult>) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for f in fits {
        for t in &f.terms {
            if !is_fixed_effect(t) && t != terms::CONSTANT && !order.contains(t) {
                order.push(t.clone());
            }
        }
    }
    if let Some(i) = order.iter().position(|t| t == terms::MILLS) {
        let m = order.remove(i);
        order.push(m);
    }
    order.push(terms::CONSTANT.to_string());
    order
}

struct Grid {
    label_width: usize,
    col_width: usize,
    out: String,
}

impl Grid {
    fn row(&mut self, label: &str, cells: &[String]) {
        let _ = write!(self.out, "{label:<w$}", w = self.label_width);
        for c in cells {
            let _ = write!(self.out, "{c:>w$}", w = self.col_width);
        }
        self.out.push('\n');
    }

    fn rule(&mut self, n: usize) {
        self.out.push_str(&"-".repeat(self.label_width + n * self.col_width));
        self.out.push('\n');
    }

    fn block(&mut self, fits: &[Option<&FitResult>]) {
        for term in row_order(fits.iter().flatten().copied()) {
            let mut est = Vec::new();
            let mut tstat = Vec::new();
            let mut any = false;
            for f in fits {
                match f.and_then(|f| f.index(&term).map(|i| (f, i))) {
                    Some((f, i)) => {
                        any = true;
                        est.push(format!("{:.3}{:<3}", f.coef[i], stars(f.p_value(i))));
                        tstat.push(format!("({:.2})   ", f.t[i]));
                    }
                    None => {
                        est.push(String::new());
                        tstat.push(String::new());
                    }
                }
            }
            if any {
                self.row(&term, &est);
                self.row("", &tstat);
            }
        }
    }
}

fn yes_no(b: bool) -> String {
    if b { "Yes" } else { "No" }.to_string()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.filter(|x| x.is_finite()).map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Plain-text table with one column per specification.
pub fn render_table(title: &str, dependent: &str, columns: &[ReportColumn]) -> String {
    let mut g = Grid {
        label_width: 30,
        col_width: columns.iter().map(|c| c.title.len() + 2).max().unwrap_or(0).max(16),
        out: String::new(),
    };
    let n = columns.len();
    g.out.push_str(title);
    g.out.push('\n');
    g.rule(n);
    let heads: Vec<String> = columns.iter().map(|c| c.title.clone()).collect();
    g.row(&format!("Dependent variable: {dependent}"), &heads);
    g.rule(n);
    let mains: Vec<Option<&FitResult>> = columns.iter().map(|c| Some(c.main())).collect();
    g.block(&mains);

    let firsts: Vec<Option<&FitResult>> = columns.iter().map(ReportColumn::first_stage).collect();
    if firsts.iter().any(Option::is_some) {
        g.rule(n);
        g.out.push_str(FIRST_STAGE_TITLE);
        g.out.push('\n');
        g.block(&firsts);
        g.rule(n);
        let athrho: Vec<String> = columns.iter().map(|c| opt(c.selection().and_then(|h| h.athrho), 3)).collect();
        let lnsigma: Vec<String> = columns.iter().map(|c| opt(c.selection().map(|h| h.lnsigma), 3)).collect();
        g.row("athrho", &athrho);
        g.row("lnsigma", &lnsigma);
    }
    g.rule(n);
    let footer: [(&str, Vec<String>); 6] = [
        ("Observations", columns.iter().map(|c| c.observations().to_string()).collect()),
        ("Log-likelihood", columns.iter().map(|c| opt(Some(c.main().log_likelihood), 2)).collect()),
        ("R2", columns.iter().map(|c| opt(c.main().r_squared, 3)).collect()),
        ("AIC", columns.iter().map(|c| opt(Some(c.main().aic), 2)).collect()),
        ("Deal Year Effects", columns.iter().map(|c| yes_no(c.deal_year_effects)).collect()),
        ("Company Effects", columns.iter().map(|c| yes_no(c.company_effects)).collect()),
    ];
    for (label, cells) in footer {
        g.row(label, &cells);
    }
    g.rule(n);
    g.out.push_str("t statistics in parentheses; * p<0.05, ** p<0.01, *** p<0.001\n");
    g.out
}

fn push_records(w: &mut csv::Writer<std::fs::File>, spec: &str, block: &str, f: &FitResult, path: &Path) -> Result<()> {
    for (i, term) in f.terms.iter().enumerate() {
        let p = f.p_value(i);
        w.write_record([
            spec,
            block,
            term,
            &format!("{:.10}", f.coef[i]),
            &format!("{:.10}", f.se[i]),
            &format!("{:.6}", f.t[i]),
            &format!("{p:.6e}"),
            stars(p),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    Ok(())
}

/// Machine-readable companion of [`render_table`]: one record per
/// coefficient, fixed effects included. Blocks are `main`, `first_stage` and
/// `aux` (athrho, lnsigma, lambda moments).
pub fn write_records(path: &Path, columns: &[ReportColumn]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(RECORD_COLUMNS).map_err(|e| csv_err(path, e))?;
    for c in columns {
        push_records(&mut w, &c.title, "main", c.main(), path)?;
        if let Some(f) = c.first_stage() {
            push_records(&mut w, &c.title, "first_stage", f, path)?;
        }
        if let Some(h) = c.selection() {
            let aux = [("athrho", h.athrho), ("lnsigma", Some(h.lnsigma)), ("rho", h.rho), ("sigma", Some(h.sigma))];
            for (term, v) in aux {
                w.write_record([c.title.as_str(), "aux", term, &opt(v, 10), "", "", "", ""])
                    .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))
}
