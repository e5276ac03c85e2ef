//! Graded energies, harmonic extension matrices and harmonic functions.
//!
//! Two independent routes produce a harmonic function on `V_m`:
//! [`harmonic_solve`] runs a sparse Dirichlet solve on the level-m graph, and
//! [`harmonic_by_words`] composes the one-level extension matrices cell by
//! cell. They share nothing beyond the graph itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{build_vertex_graph, VertexGraph};
use crate::sparse::{dirichlet_solve, Adjacency, SolveOptions};
use crate::structure::{PcfStructure, Word};

/// Largest admissible defect `|min E_1 - E_0|` of the one-level problem.
pub const REGULARITY_TOLERANCE: f64 = 1e-10;
/// Cross-cell agreement required of [`harmonic_by_words`].
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// `E_m(f) = sum over edges of conductance * (f(u) - f(v))^2`.
pub fn energy(g: &VertexGraph, f: &[f64]) -> Result<f64> {
    check_len(g.vertex_count(), f.len())?;
    Ok(g.edges
        .iter()
        .map(|e| {
            let d = f[e.u] - f[e.v];
            e.weight * d * d
        })
        .sum())
}

/// Per-cell contributions `1/2 sum_{x,y in V_w} H^w_xy (f(x) - f(y))^2`.
pub fn cell_energies(g: &VertexGraph, f: &[f64]) -> Result<Vec<f64>> {
    check_len(g.vertex_count(), f.len())?;
    let n = g.boundary_size();
    Ok((0..g.cell_count())
        .map(|c| {
            let cell = g.cell(c);
            let mut acc = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    let d = f[cell[p]] - f[cell[q]];
                    acc += g.cell_conductance_f64(c, p, q) * d * d;
                }
            }
            acc
        })
        .collect())
}

/// `E_0(f) = -<f, H f>` for data on `V0`.
pub fn boundary_energy(s: &PcfStructure, data: &[f64]) -> Result<f64> {
    check_len(s.boundary_len(), data.len())?;
    Ok(-laplace_form(s, data, data))
}

/// `<f, H g> = sum_p f(p) sum_q H_pq g(q)`.
pub fn laplace_form(s: &PcfStructure, f: &[f64], g: &[f64]) -> f64 {
    let h = s.laplace_f64();
    f.iter()
        .enumerate()
        .map(|(p, fp)| fp * h[p].iter().zip(g).map(|(hpq, gq)| hpq * gq).sum::<f64>())
        .sum()
}

/// One-level harmonic extension matrices.
///
/// Row `s` of `A_i` expresses `u(F_i p_s)` in terms of `u|V0`, so
/// `u o F_i |V0 = A_i u|V0`.
#[derive(Debug, Clone)]
pub struct ExtensionMatrices {
    pub matrices: Vec<DMatrix<f64>>,
    /// Worst `|min E_1 - E_0|` over the probed boundary data.
    pub residual: f64,
}

impl ExtensionMatrices {
    pub fn boundary_len(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn maps(&self) -> usize {
        self.matrices.len()
    }

    pub fn apply(&self, map: usize, data: &[f64]) -> Vec<f64> {
        let a = &self.matrices[map];
        (0..a.nrows())
            .map(|s| (0..a.ncols()).map(|t| a[(s, t)] * data[t]).sum())
            .collect()
    }

    /// `A_i^k`.
    pub fn power(&self, map: usize, k: usize) -> DMatrix<f64> {
        let a = &self.matrices[map];
        let mut out = DMatrix::identity(a.nrows(), a.ncols());
        for _ in 0..k {
            out = &out * a;
        }
        out
    }
}

/// Derives `A_1, .., A_M` by minimizing `E_1` over the interior of `V_1` for
/// each boundary basis vector, and records how far `min E_1` is from `E_0`.
pub fn derive_extension_matrices(s: &PcfStructure) -> Result<ExtensionMatrices> {
    let g = build_vertex_graph(s, 1)?;
    let n = s.boundary_len();
    let nv = g.vertex_count();
    let is_boundary = g.is_boundary();
    let interior: Vec<usize> = (0..nv).filter(|&v| !is_boundary[v]).collect();
    let mut slot = vec![usize::MAX; nv];
    for (k, &v) in interior.iter().enumerate() {
        slot[v] = k;
    }
    let adj = g.adjacency();

    // Interior block of the graph Laplacian and its coupling to V0.
    let ni = interior.len();
    let mut lii = DMatrix::<f64>::zeros(ni, ni);
    let mut lib = DMatrix::<f64>::zeros(ni, n);
    for (k, &v) in interior.iter().enumerate() {
        for (y, c) in adj.neighbors(v) {
            lii[(k, k)] += c;
            if slot[y] != usize::MAX {
                lii[(k, slot[y])] -= c;
            } else {
                let b = g
                    .boundary_ids
                    .iter()
                    .position(|&id| id == y)
                    .expect("non-interior vertex is on V0");
                lib[(k, b)] += c;
            }
        }
    }
    let minimizers: Vec<Vec<f64>> = if ni == 0 {
        (0..n).map(|j| basis_on_graph(&g, j)).collect()
    } else {
        let lu = lii.lu();
        (0..n)
            .map(|j| {
                let x = lu
                    .solve(&DVector::from_iterator(ni, lib.column(j).iter().copied()))
                    .ok_or(Error::SingularSystem)?;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularSystem);
                }
                let mut values = basis_on_graph(&g, j);
                for (k, &v) in interior.iter().enumerate() {
                    values[v] = x[k];
                }
                Ok(values)
            })
            .collect::<Result<_>>()?
    };

    let mut matrices = vec![DMatrix::<f64>::zeros(n, n); s.maps()];
    for (i, a) in matrices.iter_mut().enumerate() {
        let cell = g.cell(i);
        for srow in 0..n {
            for j in 0..n {
                a[(srow, j)] = minimizers[j][cell[srow]];
            }
        }
    }

    // Probe e_j and e_j + e_k; agreement on these pins down the whole trace form.
    let mut residual: f64 = 0.0;
    let mut probe = |coeffs: &[(usize, f64)]| -> Result<()> {
        let mut data = vec![0.0; n];
        let mut ext = vec![0.0; nv];
        for &(j, c) in coeffs {
            data[j] += c;
            for v in 0..nv {
                ext[v] += c * minimizers[j][v];
            }
        }
        let e0 = boundary_energy(s, &data)?;
        let e1 = energy(&g, &ext)?;
        residual = residual.max((e1 - e0).abs() / e0.abs().max(1.0));
        Ok(())
    };
    for j in 0..n {
        probe(&[(j, 1.0)])?;
        for k in j + 1..n {
            probe(&[(j, 1.0), (k, 1.0)])?;
        }
    }
    if residual > REGULARITY_TOLERANCE {
        return Err(Error::IrregularStructure { defect: residual });
    }
    Ok(ExtensionMatrices { matrices, residual })
}

fn basis_on_graph(g: &VertexGraph, j: usize) -> Vec<f64> {
    let mut values = vec![0.0; g.vertex_count()];
    values[g.boundary_ids[j]] = 1.0;
    values
}

/// `u o F_w |V0 = A_{w_m} ... A_{w_1} u|V0`.
pub fn extend_along_word(e: &ExtensionMatrices, data: &[f64], word: &Word) -> Result<Vec<f64>> {
    check_len(e.boundary_len(), data.len())?;
    let mut values = data.to_vec();
    for &s in word.symbols() {
        if s >= e.maps() {
            return Err(Error::InvalidSymbol {
                symbol: s + 1,
                alphabet: e.maps(),
            });
        }
        values = e.apply(s, &values);
    }
    Ok(values)
}

/// Boundary values of every level-m cell, in lexicographic word order,
/// obtained by repeated application of the extension matrices.
pub fn cell_boundary_values(e: &ExtensionMatrices, data: &[f64], level: usize) -> Vec<Vec<f64>> {
    let mut current = vec![data.to_vec()];
    for _ in 0..level {
        let mut next = Vec::with_capacity(current.len() * e.maps());
        for parent in &current {
            for i in 0..e.maps() {
                next.push(e.apply(i, parent));
            }
        }
        current = next;
    }
    current
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MatrixProduct,
    InteriorSolve,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MatrixProduct => "matrix-product",
            Method::InteriorSolve => "interior-solve",
        }
    }
}

/// Vertex values of a harmonic function on a level-m graph.
#[derive(Debug, Clone)]
pub struct HarmonicFunction<'g> {
    pub graph: &'g VertexGraph,
    pub values: Vec<f64>,
    pub boundary_data: Vec<f64>,
    pub method: Method,
    /// Solver relative residual, or worst cross-cell disagreement.
    pub residual_norm: f64,
}

impl HarmonicFunction<'_> {
    pub fn energy(&self) -> f64 {
        energy(self.graph, &self.values).expect("values match the graph")
    }

    /// Largest violation of `min(data) <= u <= max(data)`.
    pub fn maximum_principle_violation(&self) -> f64 {
        let lo = self.boundary_data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .boundary_data
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.values
            .iter()
            .map(|&v| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest Kirchhoff sum over interior vertices.
    pub fn kirchhoff_defect(&self) -> f64 {
        let adj = self.graph.adjacency();
        let boundary = self.graph.is_boundary();
        (0..self.graph.vertex_count())
            .filter(|&v| !boundary[v])
            .map(|v| adj.kirchhoff(v, &self.values).abs())
            .fold(0.0, f64::max)
    }
}

/// Sparse interior solve with the default tolerance `1e-12`.
pub fn harmonic_solve<'g>(g: &'g VertexGraph, data: &[f64]) -> Result<HarmonicFunction<'g>> {
    harmonic_solve_with(g, data, SolveOptions::default())
}

pub fn harmonic_solve_with<'g>(
    g: &'g VertexGraph,
    data: &[f64],
    opts: SolveOptions,
) -> Result<HarmonicFunction<'g>> {
    check_len(g.boundary_size(), data.len())?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("boundary data must be finite".into()));
    }
    let mut fixed = vec![None; g.vertex_count()];
    for (&id, &value) in g.boundary_ids.iter().zip(data) {
        fixed[id] = Some(value);
    }
    let sol = dirichlet_solve(&g.adjacency(), &fixed, opts)?;
    Ok(HarmonicFunction {
        graph: g,
        values: sol.values,
        boundary_data: data.to_vec(),
        method: Method::InteriorSolve,
        residual_norm: sol.relative_residual,
    })
}

/// Fills every vertex from the extension matrices, cell by cell, and checks
/// that cells sharing a vertex agree.
pub fn harmonic_by_words<'g>(
    g: &'g VertexGraph,
    e: &ExtensionMatrices,
    data: &[f64],
) -> Result<HarmonicFunction<'g>> {
    check_len(g.boundary_size(), data.len())?;
    check_len(e.boundary_len(), data.len())?;
    let per_cell = cell_boundary_values(e, data, g.level);
    let mut values = vec![f64::NAN; g.vertex_count()];
    let mut worst: f64 = 0.0;
    for (c, cell_values) in per_cell.iter().enumerate() {
        for (&v, &x) in g.cell(c).iter().zip(cell_values) {
            if values[v].is_nan() {
                values[v] = x;
            } else {
                let gap = (values[v] - x).abs();
                if gap > CONSISTENCY_TOLERANCE {
                    return Err(Error::Inconsistent {
                        vertex: v,
                        a: values[v],
                        b: x,
                    });
                }
                worst = worst.max(gap);
            }
        }
    }
    for (&id, &value) in g.boundary_ids.iter().zip(data) {
        values[id] = value;
    }
    Ok(HarmonicFunction {
        graph: g,
        values,
        boundary_data: data.to_vec(),
        method: Method::MatrixProduct,
        residual_norm: worst,
    })
}

/// Largest `|Kirchhoff sum|` over `vertices`, relative to the local scale
/// `sum_y c_xy (|u(x)| + |u(y)|)`; fails above `tolerance`.
pub fn check_harmonicity(
    adj: &Adjacency,
    values: &[f64],
    vertices: impl IntoIterator<Item = usize>,
    tolerance: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for v in vertices {
        let scale: f64 = adj
            .neighbors(v)
            .map(|(y, c)| c * (values[v].abs() + values[y].abs()))
            .sum();
        if scale == 0.0 {
            continue;
        }
        let defect = adj.kirchhoff(v, values).abs() / scale;
        if defect > tolerance {
            return Err(Error::NotHarmonic { vertex: v, defect });
        }
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// Energies of the restrictions of one function to every coarser level.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    /// `E_0, .., E_m`.
    pub energies: Vec<f64>,
    /// Per-cell contributions at the top level.
    pub cell_energies: Vec<f64>,
}

/// Restricts `f` on `V_m` to each `V_k` (`k <= m`) and records `E_k`.
pub fn energy_ledger(s: &PcfStructure, g: &VertexGraph, f: &[f64]) -> Result<EnergyLedger> {
    check_len(g.vertex_count(), f.len())?;
    let mut energies = Vec::with_capacity(g.level + 1);
    for k in 0..g.level {
        let coarse = build_vertex_graph(s, k)?;
        let restricted = restrict(&coarse, g, f)?;
        energies.push(energy(&coarse, &restricted)?);
    }
    energies.push(energy(g, f)?);
    Ok(EnergyLedger {
        energies,
        cell_energies: cell_energies(g, f)?,
    })
}

/// Values of `f` (on `fine`) at the vertices of `coarse`.
pub fn restrict(coarse: &VertexGraph, fine: &VertexGraph, f: &[f64]) -> Result<Vec<f64>> {
    coarse
        .vertices()
        .iter()
        .map(|p| {
            fine.locate(p)
                .map(|id| f[id])
                .ok_or_else(|| Error::Invalid("coarse vertex missing from fine graph".into()))
        })
        .collect()
}

/// `f o F_i` on `coarse = V_m`, for `f` given on `fine = V_{m+1}`.
pub fn pull_back(
    s: &PcfStructure,
    coarse: &VertexGraph,
    fine: &VertexGraph,
    f: &[f64],
    map: usize,
) -> Result<Vec<f64>> {
    let sim = &s.similitudes[map];
    coarse
        .vertices()
        .iter()
        .map(|p| {
            fine.locate(&sim.apply(p))
                .map(|id| f[id])
                .ok_or_else(|| Error::Invalid("image vertex missing from fine graph".into()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{sierpinski_gasket, vicsek};

    #[test]
    fn boundary_energy_examples() {
        let g = sierpinski_gasket();
        let v = vicsek();
        let g0 = build_vertex_graph(&g, 0).unwrap();
        let v0 = build_vertex_graph(&v, 0).unwrap();
        assert!((energy(&g0, &[1.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((energy(&v0, &[1.0, 0.0, 0.0, 0.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!((boundary_energy(&g, &[1.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let g3 = build_vertex_graph(&g, 3).unwrap();
        assert_eq!(energy(&g3, &vec![4.2; g3.vertex_count()]).unwrap(), 0.0);
        assert!(matches!(energy(&g3, &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn gasket_extension_rule() {
        let e = derive_extension_matrices(&sierpinski_gasket()).unwrap();
        let expect = [[1.0, 0.0, 0.0], [0.4, 0.4, 0.2], [0.4, 0.2, 0.4]];
        for s in 0..3 {
            for t in 0..3 {
                assert!((e.matrices[0][(s, t)] - expect[s][t]).abs() < 1e-12);
            }
        }
        assert!(e.residual < 1e-12);
    }

    #[test]
    fn matrices_are_stochastic_with_fixed_corner() {
        for s in [sierpinski_gasket(), vicsek()] {
            let e = derive_extension_matrices(&s).unwrap();
            for (i, a) in e.matrices.iter().enumerate() {
                for row in a.row_iter() {
                    assert!((row.sum() - 1.0).abs() < 1e-12);
                    assert!(row.iter().all(|&x| x >= -1e-15));
                }
                if let Some(b) = s.boundary_fixed_by_map(i) {
                    assert!((a[(b, b)] - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn word_extension_examples() {
        let e = derive_extension_matrices(&sierpinski_gasket()).unwrap();
        let one = extend_along_word(&e, &[1.0, 0.0, 0.0], &Word::parse("1").unwrap()).unwrap();
        let eleven = extend_along_word(&e, &[1.0, 0.0, 0.0], &Word::parse("11").unwrap()).unwrap();
        for (a, b) in one.iter().zip([1.0, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-12);
        }
        // (2/5, 2/5, 1/5) . (1, 2/5, 2/5) = 16/25.
        for (a, b) in eleven.iter().zip([1.0, 16.0 / 25.0, 16.0 / 25.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let data = [0.3, -1.0, 2.0];
        assert_eq!(extend_along_word(&e, &data, &Word::empty()).unwrap(), data.to_vec());
        assert!(matches!(
            extend_along_word(&e, &data, &Word(vec![3])),
            Err(Error::InvalidSymbol { symbol: 4, .. })
        ));
    }

    #[test]
    fn word_order_is_last_symbol_outermost() {
        // u o F_{12}|V0 must equal u o F_1 evaluated at F_2(V0).
        let s = sierpinski_gasket();
        let e = derive_extension_matrices(&s).unwrap();
        let g = build_vertex_graph(&s, 2).unwrap();
        let data = [0.7, -0.2, 1.3];
        let u = harmonic_solve(&g, &data).unwrap();
        for word in ["12", "21", "33", "13"] {
            let w = Word::parse(word).unwrap();
            let via_matrices = extend_along_word(&e, &data, &w).unwrap();
            for (j, p) in s.boundary.iter().enumerate() {
                let id = g.locate(&s.apply_word(&w, p).unwrap()).unwrap();
                assert!((u.values[id] - via_matrices[j]).abs() < 1e-10, "{word}");
            }
        }
    }

    #[test]
    fn interior_solve_small_gasket() {
        let s = sierpinski_gasket();
        let g = build_vertex_graph(&s, 1).unwrap();
        let u = harmonic_solve(&g, &[1.0, 0.0, 0.0]).unwrap();
        let mut interior: Vec<f64> = (0..g.vertex_count())
            .filter(|v| !g.boundary_ids.contains(v))
            .map(|v| u.values[v])
            .collect();
        interior.sort_by(f64::total_cmp);
        for (a, b) in interior.iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-12);
        }
        let g4 = build_vertex_graph(&s, 4).unwrap();
        let u4 = harmonic_solve(&g4, &[1.0, 0.0, 0.0]).unwrap();
        assert!((u4.energy() - 2.0).abs() / 2.0 < 1e-10);
        let c = harmonic_solve(&g4, &[0.5, 0.5, 0.5]).unwrap();
        assert!(c.values.iter().all(|v| (v - 0.5).abs() < 1e-14));
    }

    #[test]
    fn irregular_data_is_rejected() {
        let mut cfg = crate::structure::sierpinski_gasket_config();
        cfg.weight = Some(crate::rational::Numeral::Text("1/2".into()));
        let s = crate::structure::load_structure(&cfg).unwrap();
        assert!(matches!(
            derive_extension_matrices(&s),
            Err(Error::IrregularStructure { .. })
        ));
    }

    #[test]
    fn harmonic_energy_is_level_independent() {
        let s = vicsek();
        let g = build_vertex_graph(&s, 3).unwrap();
        let u = harmonic_solve(&g, &[1.0, -0.5, 0.25, 0.0]).unwrap();
        let ledger = energy_ledger(&s, &g, &u.values).unwrap();
        let e0 = ledger.energies[0];
        for e in &ledger.energies {
            assert!((e - e0).abs() / e0 < 1e-9);
        }
        let total: f64 = ledger.cell_energies.iter().sum();
        assert!((total - ledger.energies[3]).abs() < 1e-9 * e0);
    }
}
