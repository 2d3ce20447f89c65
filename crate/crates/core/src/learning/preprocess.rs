//! Feature encoding fitted on training rows only: one-hot nominal columns,
//! median/mode imputation, and standardisation to zero mean and unit
//! (population) variance.

use std::collections::{BTreeMap, BTreeSet};

use crate::tabular::{Column, ColumnData, Dataset};

#[derive(Debug, Clone, PartialEq)]
enum Encoder {
    Numeric {
        name: String,
        fill: f64,
        mean: f64,
        std: f64,
    },
    OneHot {
        name: String,
        categories: Vec<String>,
        fill: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    encoders: Vec<Encoder>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

fn mode(col: &Column) -> Option<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..col.len() {
        if !col.is_missing(i) {
            *counts.entry(col.cell_string(i)).or_default() += 1;
        }
    }
    // most frequent, smallest value on ties
    counts
        .into_iter()
        .fold(None::<(String, usize)>, |best, (v, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((v, c)),
        })
        .map(|(v, _)| v)
}

impl Preprocessor {
    pub fn fit(train: &Dataset) -> Self {
        let encoders = train
            .predictors()
            .map(|c| match &c.data {
                ColumnData::Nominal(_) => {
                    let categories: BTreeSet<String> = (0..c.len())
                        .filter(|&i| !c.is_missing(i))
                        .map(|i| c.cell_string(i))
                        .collect();
                    Encoder::OneHot {
                        name: c.name.clone(),
                        categories: categories.into_iter().collect(),
                        fill: mode(c).unwrap_or_default(),
                    }
                }
                _ => {
                    let mut present = c.numeric_values();
                    let fill = median(&mut present);
                    let n = c.len().max(1) as f64;
                    let filled: Vec<f64> = (0..c.len()).map(|i| c.numeric(i).unwrap_or(fill)).collect();
                    let mean = filled.iter().sum::<f64>() / n;
                    let var = filled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                    Encoder::Numeric {
                        name: c.name.clone(),
                        fill,
                        mean,
                        std,
                    }
                }
            })
            .collect();
        Preprocessor { encoders }
    }

    pub fn n_features(&self) -> usize {
        self.encoders
            .iter()
            .map(|e| match e {
                Encoder::Numeric { .. } => 1,
                Encoder::OneHot { categories, .. } => categories.len(),
            })
            .sum()
    }

    /// Row-major feature matrix. Columns absent from `ds` are imputed.
    pub fn transform(&self, ds: &Dataset) -> Vec<Vec<f64>> {
        let n = ds.n_rows();
        let mut rows = vec![Vec::with_capacity(self.n_features()); n];
        for enc in &self.encoders {
            match enc {
                Encoder::Numeric { name, fill, mean, std } => {
                    let col = ds.column(name);
                    for (i, row) in rows.iter_mut().enumerate() {
                        let v = col.and_then(|c| c.numeric(i)).unwrap_or(*fill);
                        row.push((v - mean) / std);
                    }
                }
                Encoder::OneHot { name, categories, fill } => {
                    let col = ds.column(name);
                    for (i, row) in rows.iter_mut().enumerate() {
                        let v = match col {
                            Some(c) if !c.is_missing(i) => c.cell_string(i),
                            _ => fill.clone(),
                        };
                        row.extend(categories.iter().map(|cat| (*cat == v) as u8 as f64));
                    }
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    #[test]
    fn encodes_and_standardises() {
        let ds = Dataset::new(
            "p",
            vec![
                Column::new("x", ColumnData::Float(vec![Some(1.0), Some(3.0), None, Some(5.0)])),
                Column::nominal("c", [Some("b"), Some("a"), None, Some("b")]),
                Column::integer("y", [0, 1, 0, 1]),
            ],
            "y",
            None,
        )
        .unwrap();
        let p = Preprocessor::fit(&ds);
        assert_eq!(p.n_features(), 3);
        let m = p.transform(&ds);
        // median fill 3 -> column [1,3,3,5], mean 3
        assert_eq!(m[2][0], 0.0);
        let col: Vec<f64> = m.iter().map(|r| r[0]).collect();
        let var = col.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-12);
        // mode of c is "b"
        assert_eq!(&m[2][1..], &[0.0, 1.0]);
        assert_eq!(&m[1][1..], &[1.0, 0.0]);
    }
}
