use std::collections::BTreeSet;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::terms;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Intercept,
    /// Continuous or binary regressor; collinearity is fatal.
    Regressor,
    /// Indicator that may legitimately be empty in a subsample (pruned when all zero).
    Indicator,
    /// Fixed-effect dummy; pruned when empty or spanned by earlier columns.
    FixedEffect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedTerm {
    pub term: String,
    pub reason: String,
}

/// Dense regression design with labelled rows and columns.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub row_ids: Vec<usize>,
    pub terms: Vec<String>,
    pub kinds: Vec<TermKind>,
    pub data: DMatrix<f64>,
    /// Reference categories and pruned columns.
    pub dropped: Vec<DroppedTerm>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn has_term(&self, term: &str) -> bool {
        self.index(term).is_some()
    }

    /// Rows `rows` (positions, not ids) of this design.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
            terms: self.terms.clone(),
            kinds: self.kinds.clone(),
            data: self.data.select_rows(rows),
            dropped: self.dropped.clone(),
        }
    }

    /// Copy of the design with one more regressor column appended.
    pub fn with_column(&self, name: &str, values: &[f64]) -> DesignMatrix {
        let mut data = self.data.clone().insert_column(self.ncols(), 0.0);
        data.set_column(self.ncols(), &DVector::from_column_slice(values));
        let mut out = self.clone();
        out.data = data;
        out.terms.push(name.to_string());
        out.kinds.push(TermKind::Regressor);
        out
    }
}

struct Column {
    name: String,
    kind: TermKind,
    values: Vec<f64>,
}

/// Accumulates columns and produces a full-rank [`DesignMatrix`].
pub struct DesignBuilder {
    row_ids: Vec<usize>,
    columns: Vec<Column>,
    dropped: Vec<DroppedTerm>,
}

impl DesignBuilder {
    /// Starts a design with an intercept column.
    pub fn new(row_ids: Vec<usize>) -> Self {
        let n = row_ids.len();
        DesignBuilder {
            row_ids,
            columns: vec![Column {
                name: terms::CONSTANT.into(),
                kind: TermKind::Intercept,
                values: vec![1.0; n],
            }],
            dropped: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, kind: TermKind, values: Vec<f64>) {
        assert_eq!(values.len(), self.row_ids.len(), "column {name} has the wrong length");
        self.columns.push(Column {
            name: name.to_string(),
            kind,
            values,
        });
    }

    pub fn regressor(mut self, name: &str, values: Vec<f64>) -> Self {
        self.push(name, TermKind::Regressor, values);
        self
    }

    /// Adds a column of an explicit kind.
    pub fn column(mut self, name: &str, kind: TermKind, values: Vec<f64>) -> Self {
        self.push(name, kind, values);
        self
    }

    pub fn indicator(mut self, name: &str, values: Vec<f64>) -> Self {
        self.push(name, TermKind::Indicator, values);
        self
    }

    /// Expands a categorical block into dummies, dropping `reference` (or
    /// the smallest category when `None`).
    pub fn dummies(mut self, block: &str, labels: &[String], reference: Option<&str>) -> Self {
        let cats: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        let Some(&first) = cats.iter().next() else {
            return self;
        };
        let reference = reference.filter(|r| cats.contains(r)).unwrap_or(first);
        self.dropped.push(DroppedTerm {
            term: format!("{block}={reference}"),
            reason: "reference category".into(),
        });
        for cat in cats.iter().filter(|c| **c != reference) {
            let values = labels.iter().map(|l| f64::from(u8::from(l == cat))).collect();
            self.push(&format!("{block}={cat}"), TermKind::FixedEffect, values);
        }
        self
    }

    pub fn build(self) -> Result<DesignMatrix> {
        let n = self.row_ids.len();
        let mut dropped = self.dropped;
        let mut kept: Vec<Column> = Vec::new();
        // Orthonormal basis of the kept columns.
        let mut basis: Vec<DVector<f64>> = Vec::new();

        for col in self.columns {
            let x = DVector::from_vec(col.values.clone());
            let norm = x.norm();
            if norm == 0.0 {
                match col.kind {
                    TermKind::Indicator | TermKind::FixedEffect => {
                        warn!("term `{}` has no observations in this sample; pruned", col.name);
                        dropped.push(DroppedTerm {
                            term: col.name,
                            reason: "no observations".into(),
                        });
                        continue;
                    }
                    _ => {
                        return Err(Error::RankDeficient(format!("column `{}` is identically zero", col.name)));
                    }
                }
            }
            let mut r = x.clone();
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&r);
                    r.axpy(-proj, q, 1.0);
                }
            }
            let rn = r.norm();
            if rn <= 1e-9 * norm {
                if col.kind == TermKind::FixedEffect {
                    dropped.push(DroppedTerm {
                        term: col.name,
                        reason: "collinear with earlier terms".into(),
                    });
                    continue;
                }
                let partners = collinear_partners(&kept, &x);
                return Err(Error::RankDeficient(format!(
                    "`{}` is collinear with [{}]",
                    col.name,
                    partners.join(", ")
                )));
            }
            basis.push(r / rn);
            kept.push(col);
        }
        if n < kept.len() {
            return Err(Error::RankDeficient(format!("{n} rows for {} terms", kept.len())));
        }
        let k = kept.len();
        let data = DMatrix::from_fn(n, k, |i, j| kept[j].values[i]);
        Ok(DesignMatrix {
            row_ids: self.row_ids,
            terms: kept.iter().map(|c| c.name.clone()).collect(),
            kinds: kept.iter().map(|c| c.kind).collect(),
            data,
            dropped,
        })
    }
}

fn collinear_partners(kept: &[Column], x: &DVector<f64>) -> Vec<String> {
    if kept.is_empty() {
        return Vec::new();
    }
    let n = x.len();
    let m = DMatrix::from_fn(n, kept.len(), |i, j| kept[j].values[i]);
    let svd = m.svd(true, true);
    match svd.solve(x, 1e-10) {
        Ok(beta) => kept
            .iter()
            .zip(beta.iter())
            .filter(|(_, b)| b.abs() > 1e-8)
            .map(|(c, _)| c.name.clone())
            .collect(),
        Err(_) => kept.iter().map(|c| c.name.clone()).collect(),
    }
}
