//! Level-m vertex graphs `V_m` with exact vertex deduplication.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{to_f64, Point, Rational};
use crate::sparse::Adjacency;
use crate::structure::{PcfStructure, Word};

pub const DEFAULT_VERTEX_CAP: usize = 5_000_000;

/// Images `F_w(seed)` for every `w` in `W_m`, deduplicated by exact coordinates.
///
/// Cells are stored in lexicographic word order and position `j` of a cell
/// holds `F_w(seed_j)`.
#[derive(Debug, Clone)]
pub struct CellComplex {
    pub level: usize,
    pub vertices: Vec<Point>,
    index: HashMap<Point, usize>,
    cell_size: usize,
    cells: Vec<usize>,
    /// `r_w` per cell.
    resistances: Vec<Rational>,
}

impl CellComplex {
    pub fn build(s: &PcfStructure, seed: &[Point], level: usize, cap: usize) -> Result<Self> {
        let mut vertices: Vec<Point> = Vec::new();
        let mut index: HashMap<Point, usize> = HashMap::new();
        let mut cells = Vec::with_capacity(seed.len());
        for p in seed {
            let id = *index.entry(p.clone()).or_insert_with(|| {
                vertices.push(p.clone());
                vertices.len() - 1
            });
            cells.push(id);
        }
        let mut complex = CellComplex {
            level: 0,
            vertices,
            index,
            cell_size: seed.len(),
            cells,
            resistances: vec![Rational::one()],
        };
        for k in 1..=level {
            complex = complex.refine(s, cap, k)?;
        }
        Ok(complex)
    }

    // V_k = U_i F_i(V_{k-1}); cell i.w' = F_i(cell w').
    fn refine(&self, s: &PcfStructure, cap: usize, level: usize) -> Result<Self> {
        let m = s.maps();
        let mut vertices: Vec<Point> = Vec::with_capacity(self.vertices.len() * m);
        let mut index: HashMap<Point, usize> = HashMap::with_capacity(self.vertices.len() * m);
        let mut cells = Vec::with_capacity(self.cells.len() * m);
        let mut resistances = Vec::with_capacity(self.resistances.len() * m);
        for (i, map) in s.similitudes.iter().enumerate() {
            let relabel: Vec<usize> = self
                .vertices
                .iter()
                .map(|v| {
                    let image = map.apply(v);
                    match index.get(&image) {
                        Some(&id) => id,
                        None => {
                            vertices.push(image.clone());
                            index.insert(image, vertices.len() - 1);
                            vertices.len() - 1
                        }
                    }
                })
                .collect();
            if vertices.len() > cap {
                return Err(Error::SizeCap {
                    level,
                    count: vertices.len(),
                    cap,
                });
            }
            cells.extend(self.cells.iter().map(|&v| relabel[v]));
            resistances.extend(self.resistances.iter().map(|r| &s.weights[i] * r));
        }
        Ok(CellComplex {
            level,
            vertices,
            index,
            cell_size: self.cell_size,
            cells,
            resistances,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.resistances.len()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c * self.cell_size..(c + 1) * self.cell_size]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.cell_size)
    }

    pub fn cell_resistance(&self, c: usize) -> &Rational {
        &self.resistances[c]
    }

    pub fn locate(&self, p: &[Rational]) -> Option<usize> {
        self.index.get(p).copied()
    }
}

/// An undirected weighted edge `u < v`.
#[derive(Debug, Clone)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    /// Exact summed conductance over every cell containing both endpoints.
    pub conductance: Rational,
    pub weight: f64,
}

/// The level-m graph on which harmonic solves run.
#[derive(Debug, Clone)]
pub struct VertexGraph {
    pub level: usize,
    complex: CellComplex,
    pub boundary_ids: Vec<usize>,
    pub edges: Vec<Edge>,
    laplace: Vec<Vec<Rational>>,
    laplace_f64: Vec<Vec<f64>>,
    cell_resistance_f64: Vec<f64>,
    alphabet: usize,
}

impl VertexGraph {
    pub fn vertex_count(&self) -> usize {
        self.complex.vertices.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.complex.vertices
    }

    pub fn cell_count(&self) -> usize {
        self.complex.cell_count()
    }

    /// Vertex ids of `F_w(V0)` in boundary order.
    pub fn cell(&self, c: usize) -> &[usize] {
        self.complex.cell(c)
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.complex.cells()
    }

    pub fn cell_word(&self, c: usize) -> Word {
        Word::from_lex_index(c, self.alphabet, self.level)
    }

    pub fn cell_resistance(&self, c: usize) -> &Rational {
        self.complex.cell_resistance(c)
    }

    pub fn cell_resistance_f64(&self, c: usize) -> f64 {
        self.cell_resistance_f64[c]
    }

    /// `H^w_{xy} = r_w^{-1} H_{pq}` for `x = F_w p`, `y = F_w q`.
    pub fn cell_conductance(&self, c: usize, p: usize, q: usize) -> Rational {
        &self.laplace[p][q] / self.complex.cell_resistance(c)
    }

    pub fn cell_conductance_f64(&self, c: usize, p: usize, q: usize) -> f64 {
        self.laplace_f64[p][q] / self.cell_resistance_f64[c]
    }

    pub fn boundary_size(&self) -> usize {
        self.boundary_ids.len()
    }

    pub fn locate(&self, p: &[Rational]) -> Option<usize> {
        self.complex.locate(p)
    }

    pub fn is_boundary(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertex_count()];
        for &b in &self.boundary_ids {
            flags[b] = true;
        }
        flags
    }

    /// Weighted adjacency with the summed conductances.
    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_edges(
            self.vertex_count(),
            self.edges.iter().map(|e| (e.u, e.v, e.weight)),
        )
    }

    /// For every vertex, the cells that contain it.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertex_count()];
        for (c, cell) in self.cells().enumerate() {
            for &v in cell {
                out[v].push(c);
            }
        }
        out
    }

    /// Whether the graph is connected through positive conductances.
    pub fn is_connected(&self) -> bool {
        self.adjacency().is_connected()
    }
}

/// Builds `V_m` with the default vertex cap.
pub fn build_vertex_graph(s: &PcfStructure, level: usize) -> Result<VertexGraph> {
    build_vertex_graph_capped(s, level, DEFAULT_VERTEX_CAP)
}

pub fn build_vertex_graph_capped(
    s: &PcfStructure,
    level: usize,
    cap: usize,
) -> Result<VertexGraph> {
    let complex = CellComplex::build(s, &s.boundary, level, cap)?;
    let n = s.boundary_len();
    let boundary_ids = s
        .boundary
        .iter()
        .map(|p| complex.locate(p).expect("V0 is contained in V_m"))
        .collect();

    let mut sums: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for c in 0..complex.cell_count() {
        let cell = complex.cell(c);
        let r = complex.cell_resistance(c);
        for p in 0..n {
            for q in p + 1..n {
                let h = &s.laplace[p][q];
                if !h.is_positive() {
                    continue;
                }
                let (a, b) = (cell[p].min(cell[q]), cell[p].max(cell[q]));
                let add = h / r;
                sums.entry((a, b))
                    .and_modify(|acc| *acc += &add)
                    .or_insert(add);
            }
        }
    }
    let edges = sums
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((u, v), conductance)| Edge {
            u,
            v,
            weight: to_f64(&conductance),
            conductance,
        })
        .collect();
    let cell_resistance_f64 = (0..complex.cell_count())
        .map(|c| to_f64(complex.cell_resistance(c)))
        .collect();
    Ok(VertexGraph {
        level,
        complex,
        boundary_ids,
        edges,
        laplace: s.laplace.clone(),
        laplace_f64: s.laplace_f64(),
        cell_resistance_f64,
        alphabet: s.maps(),
    })
}

/// Cells that share at least one vertex, keyed by `(c1, c2)` with `c1 < c2`.
pub fn cell_adjacency(g: &VertexGraph) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut out: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (v, cells) in g.vertex_cells().into_iter().enumerate() {
        for (k, &a) in cells.iter().enumerate() {
            for &b in &cells[k + 1..] {
                let key = (a.min(b), a.max(b));
                out.entry(key).or_default().push(v);
            }
        }
    }
    for shared in out.values_mut() {
        shared.sort_unstable();
        shared.dedup();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::frac;
    use crate::structure::{sierpinski_gasket, vicsek};
    use std::collections::HashSet;

    #[test]
    fn gasket_small_levels() {
        let s = sierpinski_gasket();
        let g0 = build_vertex_graph(&s, 0).unwrap();
        assert_eq!((g0.vertex_count(), g0.edges.len(), g0.cell_count()), (3, 3, 1));
        let g1 = build_vertex_graph(&s, 1).unwrap();
        assert_eq!((g1.vertex_count(), g1.edges.len(), g1.cell_count()), (6, 9, 3));
        assert_eq!(build_vertex_graph(&s, 5).unwrap().vertex_count(), 366);
    }

    #[test]
    fn gasket_vertex_count_closed_form() {
        let s = sierpinski_gasket();
        for m in 0..=8u32 {
            let g = build_vertex_graph(&s, m as usize).unwrap();
            assert_eq!(g.vertex_count(), 3 * (3usize.pow(m) + 1) / 2, "level {m}");
        }
    }

    #[test]
    fn dedup_strictly_below_naive_count() {
        for s in [sierpinski_gasket(), vicsek()] {
            for m in 1..=4u32 {
                let g = build_vertex_graph(&s, m as usize).unwrap();
                assert!(g.vertex_count() < s.boundary_len() * s.maps().pow(m));
                let distinct: HashSet<&Point> = g.vertices().iter().collect();
                assert_eq!(distinct.len(), g.vertex_count());
            }
        }
    }

    #[test]
    fn cells_follow_lexicographic_words_and_orientation() {
        let s = vicsek();
        let g = build_vertex_graph(&s, 2).unwrap();
        for c in [0, 7, 13, 24] {
            let w = g.cell_word(c);
            for (j, &v) in g.cell(c).iter().enumerate() {
                let p = s.apply_word(&w, &s.boundary[j]).unwrap();
                assert_eq!(g.vertices()[v], p);
            }
            assert_eq!(g.cell_resistance(c), &s.word_resistance(&w).unwrap());
        }
    }

    #[test]
    fn conductances_are_exact() {
        let s = sierpinski_gasket();
        let g = build_vertex_graph(&s, 3).unwrap();
        // Gasket edges belong to a single cell, so each edge equals r_w^{-1} H_pq.
        let lookup: HashMap<(usize, usize), &Rational> =
            g.edges.iter().map(|e| ((e.u, e.v), &e.conductance)).collect();
        for c in 0..g.cell_count() {
            let cell = g.cell(c);
            for p in 0..3 {
                for q in p + 1..3 {
                    let key = (cell[p].min(cell[q]), cell[p].max(cell[q]));
                    let expect = &s.laplace[p][q] / s.word_resistance(&g.cell_word(c)).unwrap();
                    assert_eq!(lookup[&key], &expect);
                    assert_eq!(g.cell_conductance(c, p, q), expect);
                }
            }
        }
        assert!(g.edges.iter().all(|e| e.conductance == frac(125, 27)));
    }

    #[test]
    fn levels_are_nested() {
        for s in [sierpinski_gasket(), vicsek()] {
            let coarse = build_vertex_graph(&s, 2).unwrap();
            let fine = build_vertex_graph(&s, 3).unwrap();
            assert!(coarse.vertices().iter().all(|p| fine.locate(p).is_some()));
        }
    }

    #[test]
    fn graphs_are_connected() {
        for s in [sierpinski_gasket(), vicsek()] {
            for m in 0..=4 {
                assert!(build_vertex_graph(&s, m).unwrap().is_connected());
            }
        }
    }

    #[test]
    fn adjacency_examples() {
        let s = sierpinski_gasket();
        let g = build_vertex_graph(&s, 1).unwrap();
        let adj = cell_adjacency(&g);
        let shared = &adj[&(0, 1)];
        assert_eq!(shared.len(), 1);
        assert_eq!(g.vertices()[shared[0]], vec![frac(1, 2), frac(0, 1)]);
        assert!(cell_adjacency(&build_vertex_graph(&s, 0).unwrap()).is_empty());

        let v = vicsek();
        let g = build_vertex_graph(&v, 1).unwrap();
        let adj = cell_adjacency(&g);
        for corner in 0..4 {
            assert_eq!(adj[&(corner, 4)].len(), 1);
        }
        // Corner cells only touch through the centre cell.
        assert!(!adj.contains_key(&(0, 1)));
    }

    #[test]
    fn size_cap_enforced() {
        let s = sierpinski_gasket();
        assert!(matches!(
            build_vertex_graph_capped(&s, 6, 100),
            Err(Error::SizeCap { .. })
        ));
    }
}
