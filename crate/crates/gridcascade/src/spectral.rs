//! Moore-Penrose pseudo-inverse of the admittance matrix and the queries it
//! answers: cut-line detection in O(1), two-sided component splits in O(|V|),
//! resistance distances, the Kirchhoff index, and the O(|V|^2) rank-1 update
//! that removes a single line without refactorizing.
//!
//! A [`PseudoInverse`] is tied to a graph version: every logical line removal
//! bumps the version. Removing a non-cut line updates the matrix in place;
//! removing a cut line leaves the matrix stale on purpose (flows solved
//! against per-component balanced injections come out right anyway, with
//! zero flow across the stale cut).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, Grid, Line};

/// Cut-line tolerance, relative to the line's reactance scale.
pub fn cut_tolerance(line: &Line) -> f64 {
    1e-7 * line.reactance.abs().max(1.0)
}

/// Pseudo-inverse of an admittance matrix with spectral-cutoff metadata.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    matrix: DMatrix<f64>,
    rank_cutoff: f64,
    graph_version: u64,
    removed: BTreeSet<usize>,
    component_of: Vec<usize>,
}

impl PseudoInverse {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Eigenvalue threshold below which the spectrum was treated as zero.
    pub fn rank_cutoff(&self) -> f64 {
        self.rank_cutoff
    }

    /// Monotone counter: one tick per logically removed line.
    pub fn graph_version(&self) -> u64 {
        self.graph_version
    }

    /// Lines logically removed since construction.
    pub fn removed(&self) -> &BTreeSet<usize> {
        &self.removed
    }

    pub fn is_removed(&self, line_id: usize) -> bool {
        self.removed.contains(&line_id)
    }

    /// Component index of each bus as known to this pseudo-inverse.
    pub fn component_of(&self, bus: usize) -> usize {
        self.component_of[bus]
    }

    /// Pseudo-inverse of the full grid.
    pub fn of_grid(grid: &Grid) -> Result<PseudoInverse> {
        pseudo_inverse(&grid.admittance_matrix())
    }

    /// Pseudo-inverse of the grid with `removed` lines deleted; the removal
    /// set is remembered so flow solves skip those lines.
    pub fn of_subgraph(grid: &Grid, removed: &BTreeSet<usize>) -> Result<PseudoInverse> {
        let mut p = pseudo_inverse(&grid.admittance_of_subgraph(removed))?;
        p.removed = removed.clone();
        p.graph_version = removed.len() as u64;
        Ok(p)
    }

    fn ensure_present(&self, line: &Line) -> Result<()> {
        if self.removed.contains(&line.id) {
            return Err(Error::StaleVersion {
                line: line.id,
                version: self.graph_version,
            });
        }
        Ok(())
    }

    /// Remove a non-cut line by a rank-1 update of the matrix, in place.
    ///
    /// `A'^+ = A^+ - (1 / (-x_e + r(i,j))) (A^+ X)(A^+ X)^t` with
    /// `X = e_i - e_j`. The denominator vanishes exactly when the line is a
    /// cut line; a denominator within the cut tolerance is rejected so the
    /// caller can take the component-split path instead. O(|V|^2).
    pub fn rank1_remove_in_place(&mut self, line: &Line) -> Result<()> {
        self.ensure_present(line)?;
        let denom = cut_expression(self, line);
        if denom.abs() <= cut_tolerance(line) {
            return Err(Error::CutEdge {
                line: line.id,
                message: "rank-1 removal needs a non-cut line".into(),
            });
        }
        let v = self.matrix.column(line.u) - self.matrix.column(line.v);
        self.matrix.ger(-1.0 / denom, &v, &v, 1.0);
        self.removed.insert(line.id);
        self.graph_version += 1;
        Ok(())
    }

    /// Record a cut-line removal without touching the matrix. The version
    /// advances and the component map is refined with the given split so
    /// resistance queries keep answering against the logical graph.
    pub fn mark_removed_cut(&mut self, line: &Line, far_side: &[usize]) -> Result<()> {
        self.ensure_present(line)?;
        let fresh = self.component_of.iter().max().copied().unwrap_or(0) + 1;
        for &bus in far_side {
            self.component_of[bus] = fresh;
        }
        self.removed.insert(line.id);
        self.graph_version += 1;
        Ok(())
    }
}

/// Pseudo-inverse by symmetric eigendecomposition with a spectral cutoff of
/// `|V| * eps * lambda_max`: eigenvalues below the cutoff invert to zero.
pub fn pseudo_inverse(a: &AdmittanceMatrix) -> Result<PseudoInverse> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::Numerical("empty matrix".into()));
    }
    let eig = a
        .matrix()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 4096)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = n as f64 * f64::EPSILON * lambda_max;
    let inv = DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&l| if l > cutoff { 1.0 / l } else { 0.0 }),
    );
    let mut m = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    // The reconstruction is symmetric up to rounding; make it exact.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    Ok(PseudoInverse {
        matrix: m,
        rank_cutoff: cutoff,
        graph_version: 0,
        removed: BTreeSet::new(),
        component_of: components_of_pattern(a.matrix()),
    })
}

/// Component labels from the sparsity pattern of a weighted Laplacian.
fn components_of_pattern(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for w in 0..n {
                if w != u && a[(u, w)] != 0.0 && label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

/// The cut-line expression `a_e^{-1} - 2 a+_ij + a+_ii + a+_jj`, which equals
/// `r(i,j) - x_e` for a line of reactance `x_e`. Zero exactly when the line
/// is a cut line.
pub fn cut_expression(p: &PseudoInverse, line: &Line) -> f64 {
    let a_inv = -line.reactance; // 1 / a_e with a_e = -1/x
    a_inv - 2.0 * p.entry(line.u, line.v) + p.entry(line.u, line.u) + p.entry(line.v, line.v)
}

/// O(1) cut-line test from the pseudo-inverse.
pub fn is_cut_edge(p: &PseudoInverse, line: &Line) -> bool {
    cut_expression(p, line).abs() <= cut_tolerance(line)
}

/// Non-destructive rank-1 removal returning a fresh pseudo-inverse.
pub fn rank1_remove(p: &PseudoInverse, line: &Line) -> Result<PseudoInverse> {
    let mut out = p.clone();
    out.rank1_remove_in_place(line)?;
    Ok(out)
}

/// Split the buses into the two sides of a cut line from the row difference
/// `A+_i - A+_j`, whose entries take exactly two values (one per side).
/// The side containing `line.u` comes first.
pub fn components_from_pinv(p: &PseudoInverse, line: &Line) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..p.dim()).collect();
    split_subset(p, line, &all)
}

/// Two-sided split restricted to `candidates` (callers that track components
/// pass the cut line's component here, so buses of unrelated components do
/// not disturb the grouping).
pub(crate) fn split_subset(
    p: &PseudoInverse,
    line: &Line,
    candidates: &[usize],
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (i, j) = (line.u, line.v);
    let rep_i = p.entry(i, i) - p.entry(j, i);
    let rep_j = p.entry(i, j) - p.entry(j, j);
    let spread = (rep_i - rep_j).abs();
    if spread == 0.0 {
        return Err(Error::Grouping {
            line: line.id,
            message: "side values coincide".into(),
        });
    }
    let tol = 1e-7 * spread;
    let mut side_i = Vec::new();
    let mut side_j = Vec::new();
    for &r in candidates {
        let value = p.entry(i, r) - p.entry(j, r);
        let d_i = (value - rep_i).abs();
        let d_j = (value - rep_j).abs();
        if d_i <= d_j {
            if d_i > tol {
                return Err(Error::Grouping {
                    line: line.id,
                    message: format!("bus {r} is {d_i:.3e} away from its nearest side"),
                });
            }
            side_i.push(r);
        } else {
            if d_j > tol {
                return Err(Error::Grouping {
                    line: line.id,
                    message: format!("bus {r} is {d_j:.3e} away from its nearest side"),
                });
            }
            side_j.push(r);
        }
    }
    Ok((side_i, side_j))
}

/// Resistance distance `r(i,j) = a+_ii + a+_jj - 2 a+_ij`; infinite across
/// components.
pub fn resistance_distance(p: &PseudoInverse, i: usize, j: usize) -> f64 {
    if p.component_of[i] != p.component_of[j] {
        return f64::INFINITY;
    }
    p.entry(i, i) + p.entry(j, j) - 2.0 * p.entry(i, j)
}

/// Resistance distance between two lines: the minimum over their four
/// endpoint pairs.
pub fn edge_resistance_distance(p: &PseudoInverse, e: &Line, f: &Line) -> f64 {
    resistance_distance(p, e.u, f.u)
        .min(resistance_distance(p, e.u, f.v))
        .min(resistance_distance(p, e.v, f.u))
        .min(resistance_distance(p, e.v, f.v))
}

/// Resistance distance across a single line's endpoints.
pub fn line_resistance(p: &PseudoInverse, line: &Line) -> f64 {
    resistance_distance(p, line.u, line.v)
}

/// Kirchhoff index: half the sum of resistance distances over all same-
/// component bus pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirchhoffIndex {
    pub value: f64,
    /// False when the sum ranges over more than one component.
    pub connected: bool,
}

/// Kirchhoff index computed two ways, the pairwise resistance sum and the
/// per-component `|C| * trace` identity, cross-checked to 1e-6 relative.
pub fn kirchhoff_index(p: &PseudoInverse) -> Result<KirchhoffIndex> {
    let n = p.dim();
    let mut pairwise = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if p.component_of[i] == p.component_of[j] {
                pairwise += resistance_distance(p, i, j);
            }
        }
    }
    let num_components = p.component_of.iter().max().map_or(0, |&m| m + 1);
    let mut by_trace = 0.0;
    for c in 0..num_components {
        let members: Vec<usize> = (0..n).filter(|&i| p.component_of[i] == c).collect();
        let trace: f64 = members.iter().map(|&i| p.entry(i, i)).sum();
        by_trace += members.len() as f64 * trace;
    }
    let scale = pairwise.abs().max(by_trace.abs()).max(1.0);
    if (pairwise - by_trace).abs() > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "Kirchhoff index routes disagree: {pairwise} vs {by_trace}"
        )));
    }
    Ok(KirchhoffIndex {
        value: pairwise,
        connected: num_components <= 1,
    })
}

/// Largest residual of the four Penrose conditions of `p` against `a`,
/// normalized by the operator scale of `a`. Used by tests and diagnostics.
pub fn penrose_max_residual(a: &AdmittanceMatrix, p: &PseudoInverse) -> f64 {
    let a = a.matrix();
    let m = p.matrix();
    let am = a * m;
    let ma = m * a;
    let r1 = (&am * a - a).amax();
    let r2 = (&ma * m - m).amax();
    let r3 = (&am - am.transpose()).amax();
    let r4 = (&ma - ma.transpose()).amax();
    let scale = a.amax().max(1e-300);
    r1.max(r2).max(r3).max(r4) / scale
}
