//! Shared bridges from problem-level sets to solver-level programs.

use nalgebra::DVector;

use crate::convex::AffineRow;
use crate::problem::{InputBlock, InputSet};

/// Bounds and equality rows encoding an input set over `dim_u` leading
/// variables. When `whole_simplex` is set the single equality row is
/// omitted here and the consumer should install a simplex block instead.
pub(crate) struct InputLayout {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub eq_rows: Vec<AffineRow>,
    pub whole_simplex: bool,
}

pub(crate) fn input_layout(input: &InputSet, dim_u: usize) -> InputLayout {
    let mut lower = DVector::from_element(dim_u, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(dim_u, f64::INFINITY);
    let mut eq_rows = Vec::new();
    let mut whole_simplex = false;
    match input {
        InputSet::Box { lower: lo, upper: up } => {
            lower.copy_from(lo);
            upper.copy_from(up);
        }
        InputSet::Simplex => {
            for i in 0..dim_u {
                lower[i] = 0.0;
            }
            whole_simplex = true;
        }
        InputSet::BoxSimplexProduct { blocks } => {
            let mut offset = 0;
            for block in blocks {
                match block {
                    InputBlock::Box { lower: lo, upper: up } => {
                        for i in 0..lo.len() {
                            lower[offset + i] = lo[i];
                            upper[offset + i] = up[i];
                        }
                        offset += lo.len();
                    }
                    InputBlock::Simplex { len } => {
                        let mut coeffs = DVector::zeros(dim_u);
                        for i in 0..*len {
                            lower[offset + i] = 0.0;
                            coeffs[offset + i] = 1.0;
                        }
                        eq_rows.push(AffineRow::new(coeffs, 1.0));
                        offset += len;
                    }
                }
            }
        }
    }
    InputLayout {
        lower,
        upper,
        eq_rows,
        whole_simplex,
    }
}

/// Pads a row over the leading `dim` coordinates into `total` variables.
pub(crate) fn pad_row(row: &DVector<f64>, total: usize) -> DVector<f64> {
    let mut out = DVector::zeros(total);
    out.rows_mut(0, row.len()).copy_from(row);
    out
}
