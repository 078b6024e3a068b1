//! Dense linear programming for polytope queries.
//!
//! Two-phase primal simplex over free variables (split x = u − v) with
//! Bland's anti-cycling rule. The problems here are tiny — a polytope has a
//! handful of facets in two or three dimensions — so a dense tableau that
//! recomputes reduced costs every pivot is the simplest deterministic choice.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bodies::Polytope;

/// Minimize `cost · x` subject to `ineq_matrix * x <= ineq_rhs`; x is free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

/// Optimal point together with its dual certificate.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub point: DVector<f64>,
    pub value: f64,
    /// Row multipliers: `cost + ineq_matrix^T * duals = 0`, `duals >= 0`,
    /// positive only on active rows, so `cost·point + ineq_rhs·duals = 0`.
    pub duals: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex iteration cap exceeded after {0} pivots")]
    IterationCap(usize),
    #[error("polytope query LP was infeasible")]
    Infeasible,
    #[error("polytope query LP was unbounded")]
    Unbounded,
    #[error("polytope has empty interior (Chebyshev radius {0:.3e})")]
    EmptyInterior(f64),
}

/// Entering threshold for reduced costs and smallest usable pivot element.
const TOL_COST: f64 = 1e-10;
const TOL_PIVOT: f64 = 1e-10;
const MAX_PIVOTS: usize = 50_000;

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    let n = lp.cost.nrows();
    let m = lp.ineq_rhs.nrows();
    assert_eq!(lp.ineq_matrix.nrows(), m, "constraint row count mismatch");
    assert_eq!(lp.ineq_matrix.ncols(), n, "variable count mismatch");
    let finite = lp
        .cost
        .iter()
        .chain(lp.ineq_matrix.iter())
        .chain(lp.ineq_rhs.iter())
        .all(|v| v.is_finite());
    assert!(finite, "linear program contains non-finite entries");

    // Standard form: x = u − v with u, v >= 0, one slack per row. Rows whose
    // right-hand side starts negative are sign-flipped, which flips their
    // slack out of the starting basis; those rows get an artificial instead.
    let flip: Vec<f64> = (0..m)
        .map(|i| if lp.ineq_rhs[i] < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let art_rows: Vec<usize> = (0..m).filter(|&i| flip[i] < 0.0).collect();
    let n_real = 2 * n + m;
    let n_cols = n_real + art_rows.len();

    let mut rows = DMatrix::zeros(m, n_cols);
    let mut rhs = DVector::zeros(m);
    let mut basis = vec![0usize; m];
    for i in 0..m {
        for j in 0..n {
            let a = flip[i] * lp.ineq_matrix[(i, j)];
            rows[(i, j)] = a;
            rows[(i, n + j)] = -a;
        }
        rows[(i, 2 * n + i)] = flip[i];
        rhs[i] = flip[i] * lp.ineq_rhs[i];
        basis[i] = 2 * n + i;
    }
    for (k, &i) in art_rows.iter().enumerate() {
        rows[(i, n_real + k)] = 1.0;
        basis[i] = n_real + k;
    }

    let mut t = Tableau {
        rows,
        rhs,
        basis,
        n_real,
    };
    let mut pivots = 0usize;

    if !art_rows.is_empty() {
        let mut phase1_cost = DVector::zeros(n_cols);
        for k in 0..art_rows.len() {
            phase1_cost[n_real + k] = 1.0;
        }
        match t.run(&phase1_cost, &mut pivots)? {
            RunEnd::Optimal => {}
            RunEnd::Unbounded => unreachable!("phase-1 objective is bounded below by zero"),
        }
        let residual: f64 = t
            .basis
            .iter()
            .zip(t.rhs.iter())
            .filter(|(b, _)| **b >= t.n_real)
            .map(|(_, v)| v.max(0.0))
            .sum();
        if residual > 1e-8 * (1.0 + lp.ineq_rhs.amax()) {
            return Ok(LpOutcome::Infeasible);
        }
        t.expel_artificials();
    }

    let mut phase2_cost = DVector::zeros(n_cols);
    for j in 0..n {
        phase2_cost[j] = lp.cost[j];
        phase2_cost[n + j] = -lp.cost[j];
    }
    match t.run(&phase2_cost, &mut pivots)? {
        RunEnd::Unbounded => return Ok(LpOutcome::Unbounded),
        RunEnd::Optimal => {}
    }

    let mut point = DVector::zeros(n);
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            point[b] += t.rhs[r];
        } else if b < 2 * n {
            point[b - n] -= t.rhs[r];
        }
    }
    // The multiplier of row i is the reduced cost of its slack column; tiny
    // negative values are pivot-tolerance noise.
    let reduced = t.reduced_costs(&phase2_cost);
    let mut duals = DVector::zeros(m);
    for i in 0..m {
        duals[i] = reduced[2 * n + i].max(0.0);
    }
    let value = lp.cost.dot(&point);
    Ok(LpOutcome::Optimal(LpSolution {
        point,
        value,
        duals,
    }))
}

enum RunEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
    basis: Vec<usize>,
    /// Columns at or beyond this index are artificials; they never enter.
    n_real: usize,
}

impl Tableau {
    fn reduced_costs(&self, cost: &DVector<f64>) -> DVector<f64> {
        let mut red = cost.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for j in 0..self.rows.ncols() {
                    red[j] -= cb * self.rows[(r, j)];
                }
            }
        }
        red
    }

    fn run(&mut self, cost: &DVector<f64>, pivots: &mut usize) -> Result<RunEnd, LpError> {
        loop {
            if *pivots > MAX_PIVOTS {
                return Err(LpError::IterationCap(*pivots));
            }
            let red = self.reduced_costs(cost);
            // Bland: the lowest-index improving column enters. Artificials
            // never re-enter once driven out.
            let entering = (0..self.n_real).find(|&j| red[j] < -TOL_COST);
            let Some(e) = entering else {
                return Ok(RunEnd::Optimal);
            };

            // A basic artificial sitting at zero must leave before anything
            // else moves, otherwise a pivot with a negative entry in its row
            // would push it positive again. The swap is a zero-length step.
            let guard = (0..self.basis.len())
                .filter(|&r| {
                    self.basis[r] >= self.n_real
                        && self.rhs[r].abs() <= 1e-7
                        && self.rows[(r, e)].abs() > TOL_PIVOT
                })
                .min_by_key(|&r| self.basis[r]);
            let leave = if let Some(r) = guard {
                r
            } else {
                let mut best: Option<(f64, usize)> = None;
                for r in 0..self.basis.len() {
                    let a = self.rows[(r, e)];
                    if a > TOL_PIVOT {
                        let ratio = self.rhs[r] / a;
                        let better = match best {
                            None => true,
                            Some((b_ratio, b_row)) => {
                                ratio < b_ratio - 1e-12
                                    || (ratio <= b_ratio + 1e-12
                                        && self.basis[r] < self.basis[b_row])
                            }
                        };
                        if better {
                            best = Some((ratio, r));
                        }
                    }
                }
                match best {
                    Some((_, r)) => r,
                    None => return Ok(RunEnd::Unbounded),
                }
            };
            self.pivot(leave, e);
            *pivots += 1;
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let ncols = self.rows.ncols();
        let p = self.rows[(r, c)];
        for j in 0..ncols {
            self.rows[(r, j)] /= p;
        }
        self.rhs[r] /= p;
        self.rows[(r, c)] = 1.0;
        for i in 0..self.basis.len() {
            if i == r {
                continue;
            }
            let f = self.rows[(i, c)];
            if f != 0.0 {
                for j in 0..ncols {
                    self.rows[(i, j)] -= f * self.rows[(r, j)];
                }
                self.rhs[i] -= f * self.rhs[r];
                self.rows[(i, c)] = 0.0;
                if self.rhs[i] < 0.0 && self.rhs[i] > -1e-12 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        self.basis[r] = c;
    }

    /// After phase 1, swap every basic artificial for a real column where the
    /// row allows it. A row with no usable real entry is redundant; its
    /// artificial stays basic at zero and the guard in `run` keeps it there.
    fn expel_artificials(&mut self) {
        for r in 0..self.basis.len() {
            if self.basis[r] >= self.n_real {
                let col = (0..self.n_real).find(|&j| self.rows[(r, j)].abs() > 1e-8);
                if let Some(c) = col {
                    self.pivot(r, c);
                }
            }
        }
    }
}

/// Per-facet range of the facet function over the polytope:
/// `ybar_k = offsets_k − min { facets_k · x | x in p }`.
///
/// One LP per facet. For a bounded polytope with interior every entry is
/// strictly positive.
pub fn facet_bounds(p: &Polytope) -> Result<DVector<f64>, LpError> {
    let m = p.offsets.nrows();
    let mut ybar = DVector::zeros(m);
    for k in 0..m {
        let lp = LinearProgram {
            cost: p.facets.row(k).transpose(),
            ineq_matrix: p.facets.clone(),
            ineq_rhs: p.offsets.clone(),
        };
        match solve_lp(&lp)? {
            LpOutcome::Optimal(sol) => ybar[k] = p.offsets[k] - sol.value,
            LpOutcome::Infeasible => return Err(LpError::Infeasible),
            LpOutcome::Unbounded => return Err(LpError::Unbounded),
        }
    }
    Ok(ybar)
}

/// Center and radius of the largest ball inscribed in the polytope.
pub fn chebyshev_center(p: &Polytope) -> Result<(DVector<f64>, f64), LpError> {
    chebyshev_center_raw(&p.facets, &p.offsets)
}

pub(crate) fn chebyshev_center_raw(
    facets: &DMatrix<f64>,
    offsets: &DVector<f64>,
) -> Result<(DVector<f64>, f64), LpError> {
    let (m, n) = facets.shape();
    // Lifted variables (x, r): every facet moved inward by r times its norm,
    // maximize r.
    let mut a = DMatrix::zeros(m, n + 1);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = facets[(i, j)];
        }
        a[(i, n)] = facets.row(i).norm();
    }
    let mut cost = DVector::zeros(n + 1);
    cost[n] = -1.0;
    let lp = LinearProgram {
        cost,
        ineq_matrix: a,
        ineq_rhs: offsets.clone(),
    };
    match solve_lp(&lp)? {
        LpOutcome::Optimal(sol) => {
            let radius = sol.point[n];
            if radius <= 0.0 {
                return Err(LpError::EmptyInterior(radius));
            }
            Ok((sol.point.rows(0, n).into_owned(), radius))
        }
        LpOutcome::Infeasible => Err(LpError::Infeasible),
        LpOutcome::Unbounded => Err(LpError::Unbounded),
    }
}

/// Coordinate-aligned bounding box `[min, max]` per coordinate, or an
/// `Unbounded` error. 2·N_x LPs; doubles as the boundedness check.
pub(crate) fn coordinate_bounds_raw(
    facets: &DMatrix<f64>,
    offsets: &DVector<f64>,
) -> Result<Vec<(f64, f64)>, LpError> {
    let n = facets.ncols();
    let mut out = Vec::with_capacity(n);
    for d in 0..n {
        let mut lo_cost = DVector::zeros(n);
        lo_cost[d] = 1.0;
        let lo = extreme_value(facets, offsets, lo_cost)?;
        let mut hi_cost = DVector::zeros(n);
        hi_cost[d] = -1.0;
        let hi = -extreme_value(facets, offsets, hi_cost)?;
        out.push((lo, hi));
    }
    Ok(out)
}

fn extreme_value(
    facets: &DMatrix<f64>,
    offsets: &DVector<f64>,
    cost: DVector<f64>,
) -> Result<f64, LpError> {
    let lp = LinearProgram {
        cost,
        ineq_matrix: facets.clone(),
        ineq_rhs: offsets.clone(),
    };
    match solve_lp(&lp)? {
        LpOutcome::Optimal(sol) => Ok(sol.value),
        LpOutcome::Infeasible => Err(LpError::Infeasible),
        LpOutcome::Unbounded => Err(LpError::Unbounded),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(cost: &[f64], rows: &[&[f64]], rhs: &[f64]) -> LinearProgram {
        let n = cost.len();
        let m = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        LinearProgram {
            cost: DVector::from_column_slice(cost),
            ineq_matrix: DMatrix::from_row_slice(m, n, &flat),
            ineq_rhs: DVector::from_column_slice(rhs),
        }
    }

    fn expect_optimal(out: LpOutcome) -> LpSolution {
        match out {
            LpOutcome::Optimal(s) => s,
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn optimum_sits_on_the_active_bound() {
        let sol = expect_optimal(solve_lp(&lp(&[-1.0], &[&[1.0], &[-1.0]], &[1.0, 0.0])).unwrap());
        assert_abs_diff_eq!(sol.point[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.value, -1.0, epsilon = 1e-9);
        // Stationarity: -1 + duals[0] - duals[1] = 0 with the slack row inactive.
        assert_abs_diff_eq!(sol.duals[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.duals[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn conflicting_rows_are_infeasible() {
        let out = solve_lp(&lp(&[1.0], &[&[-1.0], &[1.0]], &[-1.0, 0.0])).unwrap();
        assert!(matches!(out, LpOutcome::Infeasible));
    }

    #[test]
    fn missing_upper_bound_is_unbounded() {
        let out = solve_lp(&lp(&[-1.0], &[&[-1.0]], &[0.0])).unwrap();
        assert!(matches!(out, LpOutcome::Unbounded));
    }

    #[test]
    fn box_objective_reaches_the_corner() {
        let sol = expect_optimal(
            solve_lp(&lp(
                &[-1.0, -1.0],
                &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]],
                &[1.0, 1.0, 0.0, 0.0],
            ))
            .unwrap(),
        );
        assert_abs_diff_eq!(sol.point[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.point[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.value, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_equality_like_rows_solve() {
        // x <= 1 and -x <= -1 pin x = 1 through an artificial.
        let sol =
            expect_optimal(solve_lp(&lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, -1.0])).unwrap());
        assert_abs_diff_eq!(sol.point[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn dual_certificates_close_the_gap_on_random_lps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..60 {
            let n = if case % 2 == 0 { 2 } else { 3 };
            let m = rng.random_range(5..12);
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for _ in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let av = DVector::from_column_slice(&a);
                rhs.push(av.dot(&x0) + rng.random_range(0.1..2.0));
                rows.push(a);
            }
            // Box rows keep every instance bounded regardless of the draw.
            for d in 0..n {
                let mut up = vec![0.0; n];
                up[d] = 1.0;
                let mut dn = vec![0.0; n];
                dn[d] = -1.0;
                rows.push(up);
                rhs.push(20.0);
                rows.push(dn);
                rhs.push(20.0);
            }
            let cost = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let total = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let problem = LinearProgram {
                cost,
                ineq_matrix: DMatrix::from_row_slice(total, n, &flat),
                ineq_rhs: DVector::from_column_slice(&rhs),
            };
            let sol = expect_optimal(solve_lp(&problem).unwrap());

            let slack = &problem.ineq_matrix * &sol.point - &problem.ineq_rhs;
            assert!(slack.max() <= 1e-9, "case {case}: infeasible point");
            let stat = &problem.cost + problem.ineq_matrix.transpose() * &sol.duals;
            assert!(stat.amax() <= 1e-8, "case {case}: stationarity violated");
            assert!(sol.duals.min() >= 0.0, "case {case}: negative dual");
            for i in 0..total {
                assert!(
                    (sol.duals[i] * slack[i]).abs() <= 1e-7,
                    "case {case}: complementarity violated on row {i}"
                );
            }
            let gap = (sol.value + problem.ineq_rhs.dot(&sol.duals)).abs();
            assert!(gap <= 1e-8 * (1.0 + sol.value.abs()), "case {case}: gap {gap}");
        }
    }

    #[test]
    fn facet_bounds_of_unit_box() {
        let p = Polytope::unit_box(2).unwrap();
        let ybar = facet_bounds(&p).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(ybar[k], 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn facet_bounds_of_simplex() {
        let p = Polytope::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            DVector::from_column_slice(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let ybar = facet_bounds(&p).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(ybar[k], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn chebyshev_center_of_unit_box() {
        let p = Polytope::unit_box(2).unwrap();
        let (center, radius) = chebyshev_center(&p).unwrap();
        assert_abs_diff_eq!(center[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(center[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(radius, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn chebyshev_center_is_equidistant_from_simplex_facets() {
        let p = Polytope::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            DVector::from_column_slice(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let (center, radius) = chebyshev_center(&p).unwrap();
        assert!(radius > 0.0);
        for k in 0..3 {
            let row = p.facets.row(k).transpose();
            let dist = (p.offsets[k] - row.dot(&center)) / row.norm();
            assert_abs_diff_eq!(dist, radius, epsilon = 1e-8);
        }
    }

    #[test]
    fn chebyshev_center_translates_with_the_polytope() {
        let base = Polytope::unit_box(3).unwrap();
        let t = DVector::from_column_slice(&[0.4, -1.2, 2.5]);
        let shifted_offsets = &base.offsets + &base.facets * &t;
        let shifted = Polytope::new(base.facets.clone(), shifted_offsets).unwrap();
        let (c0, r0) = chebyshev_center(&base).unwrap();
        let (c1, r1) = chebyshev_center(&shifted).unwrap();
        assert_abs_diff_eq!(r0, r1, epsilon = 1e-9);
        for d in 0..3 {
            assert_abs_diff_eq!(c1[d], c0[d] + t[d], epsilon = 1e-8);
        }
    }

    #[test]
    fn coordinate_bounds_detect_unbounded_sets() {
        // Half-plane x <= 1 plus |y| <= 1: unbounded below in x.
        let facets = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let offsets = DVector::from_column_slice(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            coordinate_bounds_raw(&facets, &offsets),
            Err(LpError::Unbounded)
        ));
    }
}
