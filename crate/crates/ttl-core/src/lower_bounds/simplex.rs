//! Dense two-phase revised simplex for small-row, many-column LPs.
//!
//! The moment problems solved in this module have a handful of equality
//! constraints (one per matched moment, plus mass rows) but grids of
//! thousands of candidate support points, so columns are generated on
//! demand through a closure instead of being stored. Numerical stability
//! comes from refactorizing the basis with an LU decomposition at every
//! iteration -- cheap at these row counts -- rather than maintaining an
//! updated inverse.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// max c'x  s.t.  A x = b, x >= 0, with A given column-wise.
pub struct LpProblem<'a> {
    pub rows: usize,
    pub cols: usize,
    pub b: Vec<f64>,
    /// Writes structural column j into the provided buffer of length `rows`.
    pub col: Box<dyn Fn(usize, &mut [f64]) + 'a>,
    pub cost: Box<dyn Fn(usize) -> f64 + 'a>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: f64,
    /// Structural indices of the final basis (length = rows).
    pub basis: Vec<usize>,
    /// Values of the basic variables, aligned with `basis`.
    pub x_basic: Vec<f64>,
    /// Dual multipliers y solving B' y = c_B.
    pub duals: Vec<f64>,
}

const FEAS_TOL: f64 = 1e-10;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

struct Tableau<'p, 'a> {
    prob: &'p LpProblem<'a>,
    /// Row sign flips applied so that the working rhs is nonnegative.
    row_sign: Vec<f64>,
    b: Vec<f64>,
    /// Basis entries; indices >= prob.cols denote artificial variables.
    basis: Vec<usize>,
}

impl<'p, 'a> Tableau<'p, 'a> {
    fn new(prob: &'p LpProblem<'a>) -> Self {
        let rows = prob.rows;
        let mut row_sign = vec![1.0; rows];
        let mut b = prob.b.clone();
        for i in 0..rows {
            if b[i] < 0.0 {
                row_sign[i] = -1.0;
                b[i] = -b[i];
            }
        }
        let basis = (0..rows).map(|i| prob.cols + i).collect();
        Tableau { prob, row_sign, b, basis }
    }

    /// Signed column j (artificials are unit vectors in the flipped frame).
    fn column(&self, j: usize, out: &mut [f64]) {
        if j >= self.prob.cols {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.prob.cols] = 1.0;
        } else {
            (self.prob.col)(j, out);
            for (v, s) in out.iter_mut().zip(&self.row_sign) {
                *v *= s;
            }
        }
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let rows = self.prob.rows;
        let mut m = DMatrix::zeros(rows, rows);
        let mut col = vec![0.0; rows];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..rows {
                m[(i, k)] = col[i];
            }
        }
        m
    }

    /// Runs the simplex with the given objective over the allowed columns.
    /// Returns the dual multipliers of the final basis.
    fn run(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        allow_artificial: bool,
        max_iters: usize,
    ) -> Result<Vec<f64>> {
        let rows = self.prob.rows;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        for _iter in 0..max_iters {
            let lu = self.basis_matrix().lu();
            let xb = lu
                .solve(&DVector::from_column_slice(&self.b))
                .ok_or_else(|| Error::Convergence("singular basis in simplex".into()))?;
            let cb = DVector::from_iterator(
                rows,
                self.basis.iter().map(|&j| if j >= self.prob.cols { cost_art(j) } else { cost(j) }),
            );
            // B' y = c_B.
            let y = self
                .basis_matrix()
                .transpose()
                .lu()
                .solve(&cb)
                .ok_or_else(|| Error::Convergence("singular basis transpose in simplex".into()))?;

            // Pricing: find an entering column with positive reduced cost.
            let mut enter: Option<(usize, f64)> = None;
            let ncols = self.prob.cols + if allow_artificial { rows } else { 0 };
            let mut buf = vec![0.0; rows];
            for j in 0..ncols {
                if self.basis.contains(&j) {
                    continue;
                }
                let cj = if j >= self.prob.cols { cost_art(j) } else { cost(j) };
                self.column(j, &mut buf);
                let mut ya = 0.0;
                for i in 0..rows {
                    ya += y[i] * buf[i];
                }
                let rc = cj - ya;
                if rc > OPT_TOL {
                    if bland {
                        enter = Some((j, rc));
                        break;
                    }
                    match enter {
                        Some((_, best)) if rc <= best => {}
                        _ => enter = Some((j, rc)),
                    }
                }
            }
            let Some((jin, _)) = enter else {
                // Optimal.
                return Ok(y.iter().copied().collect());
            };

            // Ratio test on w = B^{-1} a_j.
            let mut a = vec![0.0; rows];
            self.column(jin, &mut a);
            let w = lu
                .solve(&DVector::from_column_slice(&a))
                .ok_or_else(|| Error::Convergence("singular basis in ratio test".into()))?;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..rows {
                if w[i] > PIVOT_TOL {
                    let ratio = (xb[i].max(0.0)) / w[i];
                    match leave {
                        Some((li, best)) => {
                            if ratio < best - 1e-15
                                || (ratio < best + 1e-15 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                        None => leave = Some((i, ratio)),
                    }
                }
            }
            let Some((li, theta)) = leave else {
                return Err(Error::Convergence("linear program is unbounded".into()));
            };
            if theta < 1e-13 {
                degenerate_run += 1;
                if degenerate_run > 5 * (rows + 50) {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.basis[li] = jin;
        }
        Err(Error::Convergence("simplex iteration limit reached".into()))
    }

    fn basic_values(&mut self) -> Result<Vec<f64>> {
        let lu = self.basis_matrix().lu();
        let xb = lu
            .solve(&DVector::from_column_slice(&self.b))
            .ok_or_else(|| Error::Convergence("singular final basis".into()))?;
        Ok(xb.iter().copied().collect())
    }
}

fn cost_art(_j: usize) -> f64 {
    -1.0
}

/// Solve the LP. `max_iters` caps simplex pivots per phase.
pub fn maximize(prob: &LpProblem, max_iters: usize) -> Result<LpSolution> {
    if prob.rows == 0 || prob.b.len() != prob.rows {
        return Err(Error::invalid("LP needs rows >= 1 and matching rhs length"));
    }
    let mut tab = Tableau::new(prob);

    // Phase 1: drive the artificials to zero by maximizing -sum(artificials),
    // i.e. structural columns cost 0, artificials cost -1.
    tab.run(&|_| 0.0, true, max_iters)?;
    let xb = tab.basic_values()?;
    let infeas: f64 = tab
        .basis
        .iter()
        .zip(&xb)
        .filter(|(&j, _)| j >= prob.cols)
        .map(|(_, &v)| v.max(0.0))
        .sum();
    if infeas > FEAS_TOL.max(1e-9 * tab.b.iter().sum::<f64>().abs()) {
        return Err(Error::Convergence(format!(
            "linear program infeasible (artificial residual {infeas:.3e})"
        )));
    }
    // Pivot any artificial still in the basis out onto a structural column
    // with a nonzero entry in its row.
    for r in 0..prob.rows {
        if tab.basis[r] < prob.cols {
            continue;
        }
        let lu = tab.basis_matrix().lu();
        let mut replaced = false;
        let mut buf = vec![0.0; prob.rows];
        for j in 0..prob.cols {
            if tab.basis.contains(&j) {
                continue;
            }
            tab.column(j, &mut buf);
            let w = lu
                .solve(&DVector::from_column_slice(&buf))
                .ok_or_else(|| Error::Convergence("singular basis while cleaning".into()))?;
            if w[r].abs() > 1e-7 {
                tab.basis[r] = j;
                replaced = true;
                break;
            }
        }
        if !replaced {
            return Err(Error::Convergence(
                "redundant constraint row: artificial variable cannot leave the basis".into(),
            ));
        }
    }

    // Phase 2 with the real objective, artificials barred.
    let duals_signed = tab.run(&|j| (prob.cost)(j), false, max_iters)?;
    let x_basic = tab.basic_values()?;
    for &v in &x_basic {
        if v < -1e-8 {
            return Err(Error::Convergence(format!("basic variable negative ({v:.3e})")));
        }
    }
    let value = tab
        .basis
        .iter()
        .zip(&x_basic)
        .map(|(&j, &v)| (prob.cost)(j) * v)
        .sum();
    // Undo the row sign flips so duals refer to the original constraints.
    let duals = duals_signed
        .iter()
        .zip(&tab.row_sign)
        .map(|(&y, &s)| y * s)
        .collect();
    Ok(LpSolution {
        value,
        basis: tab.basis.clone(),
        x_basic: x_basic.iter().map(|&v| v.max(0.0)).collect(),
        duals,
    })
}
