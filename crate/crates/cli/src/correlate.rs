//! Pearson correlation between the named columns of a metrics table.

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};
use crate::matrix_file::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, n) in self.names.iter().enumerate() {
            out.push_str(n);
            for j in 0..self.names.len() {
                out.push(',');
                out.push_str(&self.values[(i, j)].to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn pearson_matrix(table: &Table) -> CliResult<CorrelationMatrix> {
    let data = &table.data;
    let (n, k) = data.shape();
    let names = match &table.header {
        Some(h) => h.clone(),
        None => (1..=k).map(|j| format!("column{j}")).collect(),
    };
    if k < 2 {
        return Err(CliError::Malformed(format!("need at least 2 columns, found {k}")));
    }
    if n < 3 {
        return Err(CliError::Malformed(format!("need at least 3 rows, found {n}")));
    }
    let mut centered = data.clone();
    for j in 0..k {
        let col = data.column(j);
        if col.max() == col.min() {
            return Err(CliError::ConstantColumn(names[j].clone()));
        }
        let mean = col.sum() / n as f64;
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let norms: Vec<f64> = (0..k).map(|j| centered.column(j).norm()).collect();
    let values = DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            1.0
        } else {
            (centered.column(a).dot(&centered.column(b)) / (norms[a] * norms[b])).clamp(-1.0, 1.0)
        }
    });
    Ok(CorrelationMatrix { names, values })
}
