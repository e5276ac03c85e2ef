//! Compressed weighted adjacency and the preconditioned conjugate gradient
//! solve for Dirichlet problems on it.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Symmetric weighted adjacency in CSR form.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    /// Each undirected edge is given once; parallel edges are kept as-is.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().collect();
        let mut degree = vec![0usize; n];
        for &(u, v, _) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        let mut weights = vec![0f64; offsets[n]];
        for (u, v, w) in edges {
            targets[fill[u]] = v;
            weights[fill[u]] = w;
            fill[u] += 1;
            targets[fill[v]] = u;
            weights[fill[v]] = w;
            fill[v] += 1;
        }
        Adjacency {
            offsets,
            targets,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Total conductance at `v`.
    pub fn strength(&self, v: usize) -> f64 {
        self.weights[self.offsets[v]..self.offsets[v + 1]].iter().sum()
    }

    /// `sum_y c_xy (u(x) - u(y))`.
    pub fn kirchhoff(&self, v: usize, values: &[f64]) -> f64 {
        self.neighbors(v).map(|(y, c)| c * (values[v] - values[y])).sum()
    }

    /// Hop distances from `sources`, not expanding past `max_hops`.
    pub fn bfs(&self, sources: &[usize], max_hops: Option<usize>) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("queued vertices have a distance");
            if max_hops.is_some_and(|cap| d >= cap) {
                continue;
            }
            for (y, _) in self.neighbors(v) {
                if dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.bfs(&[0], None).iter().all(Option::is_some)
    }
}

/// Preconditioner for the interior conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    /// Diagonal scaling.
    Jacobi,
    /// Zero-fill incomplete Cholesky in maximum-cardinality-search order.
    /// On chordal graphs (every cell a clique, cells glued in a tree) this
    /// order is a perfect elimination order and the factor is exact.
    IncompleteCholesky,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tolerance: f64,
    /// Iteration cap per vertex.
    pub iterations_per_unknown: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-12,
            iterations_per_unknown: 50,
            preconditioner: Preconditioner::IncompleteCholesky,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||` on the interior system (0 when `b = 0`).
    pub relative_residual: f64,
}

/// Interior block of the graph Laplacian, rows in CSR form with sorted columns.
struct InteriorMatrix {
    diag: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl InteriorMatrix {
    fn len(&self) -> usize {
        self.diag.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            out[i] = self.diag[i] * x[i] + self.row(i).map(|(j, a)| a * x[j]).sum::<f64>();
        }
    }

    /// Same matrix with rows and columns renumbered `i -> new_of[i]`.
    fn permuted(&self, new_of: &[usize]) -> InteriorMatrix {
        let n = self.len();
        let mut old_of = vec![0; n];
        for (old, &new) in new_of.iter().enumerate() {
            old_of[new] = old;
        }
        let mut diag = vec![0.0; n];
        let mut offsets = vec![0; n + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for new in 0..n {
            let old = old_of[new];
            diag[new] = self.diag[old];
            let mut row: Vec<(usize, f64)> = self.row(old).map(|(j, a)| (new_of[j], a)).collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            for (j, a) in row {
                cols.push(j);
                vals.push(a);
            }
            offsets[new + 1] = cols.len();
        }
        InteriorMatrix {
            diag,
            offsets,
            cols,
            vals,
        }
    }
}

/// Elimination order from maximum cardinality search: vertices are picked
/// by most already-picked neighbours and eliminated in reverse pick order.
fn mcs_elimination_order(a: &InteriorMatrix) -> Vec<usize> {
    let n = a.len();
    let mut weight = vec![0usize; n];
    let mut picked = vec![false; n];
    let mut buckets: Vec<Vec<usize>> = vec![(0..n).rev().collect()];
    let mut top = 0usize;
    let mut pick_order = Vec::with_capacity(n);
    while pick_order.len() < n {
        let v = loop {
            match buckets[top].pop() {
                Some(v) if !picked[v] && weight[v] == top => break v,
                Some(_) => continue,
                None => top -= 1,
            }
        };
        picked[v] = true;
        pick_order.push(v);
        for (y, _) in a.row(v) {
            if !picked[y] {
                weight[y] += 1;
                let w = weight[y];
                if buckets.len() <= w {
                    buckets.resize_with(w + 1, Vec::new);
                }
                buckets[w].push(y);
                top = top.max(w);
            }
        }
    }
    // new_of[old] = position in elimination order.
    let mut new_of = vec![0; n];
    for (pos, &v) in pick_order.iter().rev().enumerate() {
        new_of[v] = pos;
    }
    new_of
}

/// Lower factor `L` of IC(0): strictly-lower entries per row, plus the diagonal.
struct IncompleteCholesky {
    new_of: Vec<usize>,
    diag: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl IncompleteCholesky {
    fn factor(a: &InteriorMatrix) -> Result<Self> {
        let new_of = mcs_elimination_order(a);
        let p = a.permuted(&new_of);
        let n = p.len();
        let mut diag = vec![0.0; n];
        let mut offsets = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for i in 0..n {
            let row_start = cols.len();
            for (k, a_ik) in p.row(i).filter(|&(k, _)| k < i) {
                // L_ik = (A_ik - sum_{j<k} L_ij L_kj) / L_kk over the shared pattern.
                let mut dot = 0.0;
                let (mut x, xe) = (row_start, cols.len());
                let (mut y, ye) = (offsets[k], offsets[k + 1]);
                while x < xe && y < ye {
                    match cols[x].cmp(&cols[y]) {
                        std::cmp::Ordering::Less => x += 1,
                        std::cmp::Ordering::Greater => y += 1,
                        std::cmp::Ordering::Equal => {
                            dot += vals[x] * vals[y];
                            x += 1;
                            y += 1;
                        }
                    }
                }
                cols.push(k);
                vals.push((a_ik - dot) / diag[k]);
            }
            let sq: f64 = vals[row_start..].iter().map(|l| l * l).sum();
            let pivot = p.diag[i] - sq;
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem);
            }
            diag[i] = pivot.sqrt();
            offsets[i + 1] = cols.len();
        }
        Ok(IncompleteCholesky {
            new_of,
            diag,
            offsets,
            cols,
            vals,
        })
    }

    /// `z = (L L^T)^{-1} r`, in the original numbering.
    fn solve(&self, r: &[f64], z: &mut [f64], work: &mut [f64]) {
        let n = self.diag.len();
        for (old, &new) in self.new_of.iter().enumerate() {
            work[new] = r[old];
        }
        for i in 0..n {
            let mut acc = work[i];
            for idx in self.offsets[i]..self.offsets[i + 1] {
                acc -= self.vals[idx] * work[self.cols[idx]];
            }
            work[i] = acc / self.diag[i];
        }
        for i in (0..n).rev() {
            work[i] /= self.diag[i];
            let wi = work[i];
            for idx in self.offsets[i]..self.offsets[i + 1] {
                work[self.cols[idx]] -= self.vals[idx] * wi;
            }
        }
        for (old, &new) in self.new_of.iter().enumerate() {
            z[old] = work[new];
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Cholesky(IncompleteCholesky),
}

impl Precond {
    fn apply(&self, r: &[f64], z: &mut [f64], work: &mut [f64]) {
        match self {
            Precond::Jacobi(diag) => {
                for i in 0..r.len() {
                    z[i] = r[i] / diag[i];
                }
            }
            Precond::Cholesky(factor) => factor.solve(r, z, work),
        }
    }
}

/// A Dirichlet problem with a fixed set of boundary vertices, assembled and
/// preconditioned once and solved for any number of boundary data.
pub struct DirichletProblem {
    n: usize,
    opts: SolveOptions,
    fixed: Vec<bool>,
    free: Vec<usize>,
    /// Per free vertex, its conductances to fixed neighbours.
    coupling: Vec<Vec<(usize, f64)>>,
    matrix: InteriorMatrix,
    precond: Option<Precond>,
}

impl DirichletProblem {
    /// Free vertices that cannot reach a fixed vertex make the system singular.
    pub fn new(adj: &Adjacency, fixed: &[bool], opts: SolveOptions) -> Result<Self> {
        let n = adj.len();
        if fixed.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: fixed.len(),
            });
        }
        let mut slot = vec![usize::MAX; n];
        let mut free = Vec::new();
        for v in 0..n {
            if !fixed[v] {
                slot[v] = free.len();
                free.push(v);
            }
        }
        let anchors: Vec<usize> = (0..n).filter(|&v| fixed[v]).collect();
        if !free.is_empty() {
            let reach = adj.bfs(&anchors, None);
            if anchors.is_empty() || free.iter().any(|&v| reach[v].is_none()) {
                return Err(Error::SingularSystem);
            }
        }
        let k = free.len();
        let mut coupling = vec![Vec::new(); k];
        let mut matrix = InteriorMatrix {
            diag: vec![0.0; k],
            offsets: vec![0; k + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        };
        for (i, &v) in free.iter().enumerate() {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(adj.degree(v));
            for (y, c) in adj.neighbors(v) {
                matrix.diag[i] += c;
                if fixed[y] {
                    coupling[i].push((y, c));
                } else {
                    row.push((slot[y], -c));
                }
            }
            row.sort_unstable_by_key(|&(j, _)| j);
            // Merge parallel edges.
            for (j, a) in row {
                if matrix.cols.len() > matrix.offsets[i] && *matrix.cols.last().unwrap() == j {
                    *matrix.vals.last_mut().unwrap() += a;
                } else {
                    matrix.cols.push(j);
                    matrix.vals.push(a);
                }
            }
            matrix.offsets[i + 1] = matrix.cols.len();
        }
        let precond = if k == 0 {
            None
        } else {
            Some(match opts.preconditioner {
                Preconditioner::Jacobi => Precond::Jacobi(matrix.diag.clone()),
                Preconditioner::IncompleteCholesky => {
                    Precond::Cholesky(IncompleteCholesky::factor(&matrix)?)
                }
            })
        };
        Ok(DirichletProblem {
            n,
            opts,
            fixed: fixed.to_vec(),
            free,
            coupling,
            matrix,
            precond,
        })
    }

    pub fn is_fixed(&self, v: usize) -> bool {
        self.fixed[v]
    }

    /// `values` gives the data at fixed vertices; other entries are ignored.
    pub fn solve(&self, values: &[f64]) -> Result<DirichletSolution> {
        if values.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: values.len(),
            });
        }
        let mut values: Vec<f64> = values
            .iter()
            .zip(&self.fixed)
            .map(|(&v, &f)| if f { v } else { 0.0 })
            .collect();
        let Some(precond) = &self.precond else {
            return Ok(DirichletSolution {
                values,
                iterations: 0,
                relative_residual: 0.0,
            });
        };
        let opts = self.opts;
        let matrix = &self.matrix;
        let k = self.free.len();
        let rhs: Vec<f64> = self
            .coupling
            .iter()
            .map(|row| row.iter().map(|&(y, c)| c * values[y]).sum())
            .collect();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rhs_norm = norm(&rhs);
        if rhs_norm == 0.0 {
            return Ok(DirichletSolution {
                values,
                iterations: 0,
                relative_residual: 0.0,
            });
        }

        // Start from the mean of the boundary data.
        let anchors = self.fixed.iter().filter(|&&f| f).count();
        let mean = (0..self.n)
            .filter(|&v| self.fixed[v])
            .map(|v| values[v])
            .sum::<f64>()
            / anchors as f64;
        let mut x = vec![mean; k];
        let cap = opts.iterations_per_unknown.saturating_mul(self.n).max(1);
        let mut ax = vec![0.0; k];
        let mut r = vec![0.0; k];
        let mut z = vec![0.0; k];
        let mut p = vec![0.0; k];
        let mut q = vec![0.0; k];
        let mut work = vec![0.0; k];
        let mut iterations = 0;
        let mut true_residual;
        // Restart from the current iterate whenever the recurrence residual
        // has converged but the true residual has not.
        loop {
            matrix.apply(&x, &mut ax);
            for i in 0..k {
                r[i] = rhs[i] - ax[i];
            }
            true_residual = norm(&r) / rhs_norm;
            if true_residual <= opts.tolerance {
                break;
            }
            if iterations >= cap {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: true_residual,
                });
            }
            precond.apply(&r, &mut z, &mut work);
            p.copy_from_slice(&z);
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let start = iterations;
            while iterations < cap {
                matrix.apply(&p, &mut q);
                let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
                if pq <= 0.0 || rz == 0.0 {
                    break;
                }
                let step = rz / pq;
                for i in 0..k {
                    x[i] += step * p[i];
                    r[i] -= step * q[i];
                }
                iterations += 1;
                if norm(&r) / rhs_norm <= 0.1 * opts.tolerance {
                    break;
                }
                precond.apply(&r, &mut z, &mut work);
                let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_next / rz;
                rz = rz_next;
                for i in 0..k {
                    p[i] = z[i] + beta * p[i];
                }
            }
            if iterations == start {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: true_residual,
                });
            }
        }
        for (i, &v) in self.free.iter().enumerate() {
            values[v] = x[i];
        }
        Ok(DirichletSolution {
            values,
            iterations,
            relative_residual: true_residual,
        })
    }
}

/// Solves `sum_y c_xy (u(x) - u(y)) = 0` at every free vertex, with
/// `fixed[v] = Some(value)` prescribing `u` at the Dirichlet vertices.
pub fn dirichlet_solve(
    adj: &Adjacency,
    fixed: &[Option<f64>],
    opts: SolveOptions,
) -> Result<DirichletSolution> {
    let mask: Vec<bool> = fixed.iter().map(Option::is_some).collect();
    let values: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    DirichletProblem::new(adj, &mask, opts)?.solve(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Adjacency {
        Adjacency::from_edges(n, (0..n - 1).map(|i| (i, i + 1, 1.0)))
    }

    #[test]
    fn path_graph_is_linear() {
        let adj = path(11);
        let mut fixed = vec![None; 11];
        fixed[0] = Some(0.0);
        fixed[10] = Some(1.0);
        let sol = dirichlet_solve(&adj, &fixed, SolveOptions::default()).unwrap();
        for (i, v) in sol.values.iter().enumerate() {
            assert!((v - i as f64 / 10.0).abs() < 1e-12);
        }
        assert!(sol.relative_residual <= 1e-12);
    }

    #[test]
    fn constant_data_gives_constant() {
        let adj = path(5);
        let mut fixed = vec![None; 5];
        fixed[0] = Some(2.5);
        fixed[4] = Some(2.5);
        let sol = dirichlet_solve(&adj, &fixed, SolveOptions::default()).unwrap();
        assert!(sol.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn unreachable_unknowns_are_singular() {
        let adj = Adjacency::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]);
        let fixed = vec![Some(0.0), None, None, None];
        assert!(matches!(
            dirichlet_solve(&adj, &fixed, SolveOptions::default()),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn preconditioners_agree() {
        // 4x4 grid with mixed weights: not chordal, so IC(0) is inexact.
        let idx = |r: usize, c: usize| r * 4 + c;
        let mut edges = Vec::new();
        for r in 0..4 {
            for c in 0..4 {
                if c + 1 < 4 {
                    edges.push((idx(r, c), idx(r, c + 1), 1.0 + (r + c) as f64));
                }
                if r + 1 < 4 {
                    edges.push((idx(r, c), idx(r + 1, c), 0.5));
                }
            }
        }
        let adj = Adjacency::from_edges(16, edges);
        let mut fixed = vec![None; 16];
        fixed[0] = Some(1.0);
        fixed[15] = Some(-2.0);
        fixed[3] = Some(0.5);
        let a = dirichlet_solve(&adj, &fixed, SolveOptions::default()).unwrap();
        let b = dirichlet_solve(
            &adj,
            &fixed,
            SolveOptions {
                preconditioner: Preconditioner::Jacobi,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn chordal_graph_converges_in_one_step() {
        // Two triangles sharing a vertex, hanging off a path.
        let adj = Adjacency::from_edges(
            6,
            [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 1.0), (2, 3, 1.0), (3, 4, 3.0), (2, 4, 1.0), (4, 5, 1.0)],
        );
        let mut fixed = vec![None; 6];
        fixed[0] = Some(1.0);
        fixed[5] = Some(0.0);
        let sol = dirichlet_solve(&adj, &fixed, SolveOptions::default()).unwrap();
        assert!(sol.iterations <= 2);
        assert!(sol.relative_residual <= 1e-12);
    }

    #[test]
    fn bfs_respects_cap() {
        let adj = path(6);
        let d = adj.bfs(&[0], Some(2));
        assert_eq!(d, vec![Some(0), Some(1), Some(2), None, None, None]);
    }
}
