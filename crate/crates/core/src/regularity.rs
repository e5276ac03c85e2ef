//! Cable systems, bounded fractal graphs, metric balls, and the reverse
//! Hölder and Hölder-regularity ratios measured on them.
//!
//! Distances are graph geodesics: hop count times a uniform edge length
//! (1 on cables, `rho^{m-n} diam(K)` on the level-m graph of `K_n`). Harmonic
//! functions on a ball `B(x, r)` are produced by solving a Dirichlet problem
//! with random data on a larger region `B(x, l r)` and restricting.

use std::collections::{BTreeSet, HashMap};

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{check_harmonicity, derive_extension_matrices, ExtensionMatrices};
use crate::graph::{build_vertex_graph, CellComplex, VertexGraph, DEFAULT_VERTEX_CAP};
use crate::rational::{to_f64, Point, Rational};
use crate::sampling::{normal_vector, seeded, DEFAULT_SEED};
use crate::sparse::{Adjacency, DirichletProblem, SolveOptions};
use crate::structure::{rational_pow, PcfStructure};
use crate::verify::{linear_fit, max_cell_oscillation};

/// Relative Kirchhoff defect tolerated inside `2B`.
pub const HARMONIC_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_SAFETY_FACTOR: f64 = 4.0;
const HOP_EPS: f64 = 1e-9;

/// `Phi(r) = r` below 1 and `r^alpha` above; `Psi(r) = r^2` below 1 and
/// `r^beta` above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFunctions {
    pub alpha: f64,
    pub beta: f64,
}

impl ScalingFunctions {
    pub fn of(s: &PcfStructure) -> Self {
        ScalingFunctions {
            alpha: s.alpha,
            beta: s.beta,
        }
    }

    pub fn phi(&self, r: f64) -> f64 {
        if r < 1.0 {
            r
        } else {
            r.powf(self.alpha)
        }
    }

    pub fn psi(&self, r: f64) -> f64 {
        if r < 1.0 {
            r * r
        } else {
            r.powf(self.beta)
        }
    }

    /// `Phi(r) / Psi(r)`: `1/r` below 1, `r^(alpha - beta)` above.
    pub fn ratio(&self, r: f64) -> f64 {
        if r < 1.0 {
            1.0 / r
        } else {
            r.powf(self.alpha - self.beta)
        }
    }

    pub fn holder_exponent(&self) -> f64 {
        self.beta - self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Truncated cable system.
    Cable,
    /// The compact copy `K_n`; its outer corners are ordinary vertices.
    Bounded,
    /// `K_n` as a window of the unbounded `K_inf`; corners glued to the rest of
    /// `K_inf` form the truncation ring.
    UnboundedTrunc,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Cable => "cable",
            Regime::Bounded => "bounded",
            Regime::UnboundedTrunc => "unbounded-trunc",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Measure {
    /// One-dimensional Lebesgue measure along edges.
    Cable,
    /// Point masses per vertex.
    Vertex(Vec<f64>),
}

/// A graph with a uniform edge length, a truncation ring and a measure.
#[derive(Debug, Clone)]
pub struct ProbeGraph {
    pub regime: Regime,
    pub adjacency: Adjacency,
    pub edge_length: f64,
    pub ring: Vec<bool>,
    pub measure: Measure,
}

impl ProbeGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Smallest hop count whose length reaches `r`.
    fn hops_reaching(&self, r: f64) -> usize {
        (r / self.edge_length - HOP_EPS).ceil().max(0.0) as usize
    }

    fn within(&self, hops: usize, r: f64) -> bool {
        (hops as f64) < r / self.edge_length - HOP_EPS
    }

    pub fn metric_ball(&self, center: usize, r: f64) -> Result<Ball> {
        metric_ball(self, center, r)
    }
}

/// Points of `rho^{-k} V0` where the window `rho^{-k} K` is glued to the
/// next larger copy: `F_o(p)` lies in some other first-level cell, `F_o` being
/// the map that fixes the origin.
fn junction_corners(s: &PcfStructure) -> Result<Vec<usize>> {
    let o = s
        .origin_map()
        .ok_or_else(|| Error::Invalid("unbounded windows need a map fixing the origin".into()))?;
    let mut others: BTreeSet<Point> = BTreeSet::new();
    for (j, map) in s.similitudes.iter().enumerate() {
        if j != o {
            others.extend(s.boundary.iter().map(|p| map.apply(p)));
        }
    }
    Ok((0..s.boundary_len())
        .filter(|&j| others.contains(&s.similitudes[o].apply(&s.boundary[j])))
        .collect())
}

fn require_homogeneous(s: &PcfStructure, what: &'static str) -> Result<()> {
    if s.is_homogeneous() {
        Ok(())
    } else {
        Err(Error::Inhomogeneous(what))
    }
}

/// Cable graph `G^(k) = rho^{-k} G_k` with `G_0 = V0` plus any configured
/// cable points.
#[derive(Debug, Clone)]
pub struct CableGraph {
    pub scale: usize,
    /// Rescaled coordinates.
    pub vertices: Vec<Point>,
    pub edges: Vec<(usize, usize)>,
    /// Vertices glued to the part of the cable system outside the window.
    pub ring: Vec<usize>,
    pub probe: ProbeGraph,
}

impl CableGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn locate(&self, p: &[Rational]) -> Option<usize> {
        self.vertices.iter().position(|v| v.as_slice() == p)
    }
}

/// Edges join points of one cell at unit distance; the ring is the set of
/// junction corners of the window (empty when no map fixes the origin).
pub fn build_cable_graph(s: &PcfStructure, k: usize) -> Result<CableGraph> {
    require_homogeneous(s, "cable graph")?;
    let mut seed = s.boundary.clone();
    for p in &s.cable_points {
        if !seed.contains(p) {
            seed.push(p.clone());
        }
    }
    let one = Rational::one();
    let template: Vec<(usize, usize)> = (0..seed.len())
        .flat_map(|a| (a + 1..seed.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| s.squared_distance(&seed[a], &seed[b]) == one)
        .collect();
    if template.is_empty() {
        return Err(Error::Invalid("no unit-distance pairs among the cable points".into()));
    }
    let complex = CellComplex::build(s, &seed, k, DEFAULT_VERTEX_CAP)?;
    let mut edges = BTreeSet::new();
    for cell in complex.cells() {
        for &(a, b) in &template {
            let (u, v) = (cell[a].min(cell[b]), cell[a].max(cell[b]));
            edges.insert((u, v));
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    let scale = rational_pow(&(Rational::one() / &s.rho), k);
    let vertices: Vec<Point> = complex
        .vertices
        .iter()
        .map(|p| p.iter().map(|x| x * &scale).collect())
        .collect();
    let adjacency = Adjacency::from_edges(vertices.len(), edges.iter().map(|&(u, v)| (u, v, 1.0)));
    if !adjacency.is_connected() {
        return Err(Error::Invalid("cable graph is not connected".into()));
    }
    let ring: Vec<usize> = match s.origin_map() {
        Some(_) => junction_corners(s)?
            .into_iter()
            .map(|j| complex.locate(&s.boundary[j]).expect("V0 lies in every refinement"))
            .collect(),
        None => Vec::new(),
    };
    let mut flags = vec![false; vertices.len()];
    for &v in &ring {
        flags[v] = true;
    }
    Ok(CableGraph {
        scale: k,
        vertices,
        edges,
        ring,
        probe: ProbeGraph {
            regime: Regime::Cable,
            adjacency,
            edge_length: 1.0,
            ring: flags,
            measure: Measure::Cable,
        },
    })
}

/// The level-m graph of `K_n = rho^{-n} K` with conductance weights and the
/// normalized cell measure.
#[derive(Debug, Clone)]
pub struct FractalGraph {
    pub n: usize,
    pub graph: VertexGraph,
    pub probe: ProbeGraph,
}

/// Largest Euclidean distance between boundary points.
pub fn boundary_diameter(s: &PcfStructure) -> f64 {
    let mut best = Rational::zero();
    for a in &s.boundary {
        for b in &s.boundary {
            let d = s.squared_distance(a, b);
            if d > best {
                best = d;
            }
        }
    }
    to_f64(&best).sqrt()
}

/// Vertex masses `#cells(v) * M^{-m} / N`; they sum to 1.
pub fn cell_measure(g: &VertexGraph) -> Vec<f64> {
    let n = g.boundary_size() as f64;
    let cell = 1.0 / g.cell_count() as f64;
    let mut w = vec![0.0; g.vertex_count()];
    for c in g.cells() {
        for &v in c {
            w[v] += cell / n;
        }
    }
    w
}

pub fn build_fractal_graph(s: &PcfStructure, n: usize, m: usize, regime: Regime) -> Result<FractalGraph> {
    require_homogeneous(s, "fractal graph")?;
    let graph = build_vertex_graph(s, m)?;
    let mut ring = vec![false; graph.vertex_count()];
    match regime {
        Regime::Bounded => {}
        Regime::UnboundedTrunc => {
            for j in junction_corners(s)? {
                ring[graph.boundary_ids[j]] = true;
            }
        }
        Regime::Cable => {
            return Err(Error::Invalid("fractal graphs use the bounded or unbounded-trunc regime".into()))
        }
    }
    let edge_length = s.rho_f64().powi(m as i32 - n as i32) * boundary_diameter(s);
    let probe = ProbeGraph {
        regime,
        adjacency: graph.adjacency(),
        edge_length,
        ring,
        measure: Measure::Vertex(cell_measure(&graph)),
    };
    Ok(FractalGraph { n, graph, probe })
}

/// `B(x, r)` and `B(x, 2r)` in the geodesic metric.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub edge_length: f64,
    /// Members of `2B` in order of hop distance; the first `inner` form `B`.
    pub members: Vec<usize>,
    pub hops: Vec<usize>,
    pub inner: usize,
    index: HashMap<usize, usize>,
}

impl Ball {
    pub fn ball(&self) -> &[usize] {
        &self.members[..self.inner]
    }

    pub fn double(&self) -> &[usize] {
        &self.members
    }

    /// Geodesic distance from the center, if the vertex lies in `2B`.
    pub fn distance(&self, v: usize) -> Option<f64> {
        self.index
            .get(&v)
            .map(|&k| self.hops[k] as f64 * self.edge_length)
    }

    pub fn in_ball(&self, v: usize) -> bool {
        self.index.get(&v).is_some_and(|&k| k < self.inner)
    }

    /// Members of `2B` whose neighbors all lie in `2B`.
    pub fn interior(&self, adj: &Adjacency) -> Vec<usize> {
        self.members
            .iter()
            .copied()
            .filter(|&v| adj.neighbors(v).all(|(y, _)| self.index.contains_key(&y)))
            .collect()
    }
}

pub fn metric_ball(g: &ProbeGraph, center: usize, r: f64) -> Result<Ball> {
    if center >= g.len() {
        return Err(Error::Invalid(format!("center {center} is not a vertex")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Invalid(format!("radius must be positive, got {r}")));
    }
    let dist = g.adjacency.bfs(&[center], Some(g.hops_reaching(2.0 * r)));
    let mut members: Vec<(usize, usize)> = dist
        .iter()
        .enumerate()
        .filter_map(|(v, d)| d.filter(|&h| g.within(h, 2.0 * r)).map(|h| (h, v)))
        .collect();
    members.sort_unstable();
    if let Some(&(_, v)) = members.iter().find(|&&(_, v)| g.ring[v]) {
        return Err(Error::BallRejected(format!(
            "2B around vertex {center} with radius {r} reaches truncation vertex {v}"
        )));
    }
    let inner = members.iter().take_while(|&&(h, _)| g.within(h, r)).count();
    let index = members.iter().enumerate().map(|(k, &(_, v))| (v, k)).collect();
    Ok(Ball {
        center,
        radius: r,
        edge_length: g.edge_length,
        hops: members.iter().map(|&(h, _)| h).collect(),
        members: members.into_iter().map(|(_, v)| v).collect(),
        inner,
        index,
    })
}

/// `sup |u(p) - u(q)| / length` over edges meeting `B`, after checking that
/// `u` is harmonic at the interior vertices of `2B`.
pub fn gradient_sup(g: &ProbeGraph, u: &[f64], ball: &Ball) -> Result<f64> {
    check_harmonicity(&g.adjacency, u, ball.interior(&g.adjacency), HARMONIC_TOLERANCE)?;
    let mut best: f64 = 0.0;
    for &p in ball.ball() {
        for (q, _) in g.adjacency.neighbors(p) {
            best = best.max((u[p] - u[q]).abs());
        }
    }
    Ok(best / g.edge_length)
}

/// `int_{t0}^{t1} |a + (b - a) t| dt`.
fn abs_affine_integral(a: f64, b: f64, t0: f64, t1: f64) -> f64 {
    if t1 <= t0 {
        return 0.0;
    }
    let at = |t: f64| a + (b - a) * t;
    let (x0, x1) = (at(t0), at(t1));
    if x0 * x1 >= 0.0 {
        0.5 * (x0.abs() + x1.abs()) * (t1 - t0)
    } else {
        let root = a / (a - b);
        0.5 * x0.abs() * (root - t0) + 0.5 * x1.abs() * (t1 - root)
    }
}

/// `(int_{2B} |u| dm, m(2B))`.
pub fn double_ball_integral(g: &ProbeGraph, u: &[f64], ball: &Ball) -> (f64, f64) {
    let big = 2.0 * ball.radius;
    match &g.measure {
        Measure::Vertex(w) => ball
            .double()
            .iter()
            .fold((0.0, 0.0), |(i, m), &v| (i + w[v] * u[v].abs(), m + w[v])),
        Measure::Cable => {
            let h = g.edge_length;
            let mut integral = 0.0;
            let mut mass = 0.0;
            for &p in ball.double() {
                let dp = ball.distance(p).expect("member of 2B");
                for (q, _) in g.adjacency.neighbors(p) {
                    let dq = ball.distance(q);
                    // Each edge inside 2B is visited from both ends.
                    if dq.is_some() && q < p {
                        continue;
                    }
                    let dq = dq.unwrap_or(f64::INFINITY);
                    // Points at fraction t from p lie at distance
                    // min(dp + t h, dq + (1 - t) h).
                    let a = ((big - dp) / h).clamp(0.0, 1.0);
                    let b = (1.0 - (big - dq) / h).clamp(0.0, 1.0);
                    let pieces: &[(f64, f64)] = if a >= b { &[(0.0, 1.0)] } else { &[(0.0, a), (b, 1.0)] };
                    for &(t0, t1) in pieces {
                        integral += h * abs_affine_integral(u[p], u[q], t0, t1);
                        mass += h * (t1 - t0);
                    }
                }
            }
            (integral, mass)
        }
    }
}

pub fn mean_abs(g: &ProbeGraph, u: &[f64], ball: &Ball) -> f64 {
    let (integral, mass) = double_ball_integral(g, u, ball);
    integral / mass
}

/// `sup |u(x) - u(y)|` over distinct members of `B`.
pub fn oscillation_in_ball(u: &[f64], ball: &Ball) -> f64 {
    let (lo, hi) = ball
        .ball()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(u[v]), hi.max(u[v])));
    hi - lo
}

/// Pairs `(x, y, d(x, y)^gamma)` of distinct members of `B`.
#[derive(Debug, Clone)]
pub struct BallPairs {
    pub pairs: Vec<(usize, usize, f64)>,
}

pub fn ball_pairs(g: &ProbeGraph, ball: &Ball, gamma: f64) -> BallPairs {
    // Geodesics between points of B are shorter than 2r and stay in B(x, 3r).
    let cap = g.hops_reaching(2.0 * ball.radius);
    let mut pairs = Vec::new();
    for &x in ball.ball() {
        let dist = g.adjacency.bfs(&[x], Some(cap));
        for &y in ball.ball() {
            if y > x {
                if let Some(h) = dist[y] {
                    pairs.push((x, y, (h as f64 * g.edge_length).powf(gamma)));
                }
            }
        }
    }
    BallPairs { pairs }
}

/// `sup |u(x) - u(y)| / d(x, y)^gamma` over the precomputed pairs.
pub fn holder_seminorm(u: &[f64], pairs: &BallPairs) -> f64 {
    pairs
        .pairs
        .iter()
        .map(|&(x, y, d)| (u[x] - u[y]).abs() / d)
        .fold(0.0, f64::max)
}

pub fn grh_ratio(g: &ProbeGraph, scaling: &ScalingFunctions, u: &[f64], ball: &Ball) -> Result<f64> {
    let mean = mean_abs(g, u, ball);
    if mean == 0.0 {
        return Err(Error::ConstantData);
    }
    Ok(gradient_sup(g, u, ball)? / (scaling.ratio(ball.radius) * mean))
}

pub fn hr_ratio(
    g: &ProbeGraph,
    scaling: &ScalingFunctions,
    u: &[f64],
    ball: &Ball,
    pairs: &BallPairs,
) -> Result<f64> {
    let mean = mean_abs(g, u, ball);
    if mean == 0.0 {
        return Err(Error::ConstantData);
    }
    check_harmonicity(&g.adjacency, u, ball.interior(&g.adjacency), HARMONIC_TOLERANCE)?;
    let gamma = scaling.holder_exponent();
    Ok(holder_seminorm(u, pairs) / (ball.radius.powf(-gamma) * mean))
}

/// The region `B(x, L)` cut out of a probe graph, with its outer layer (the
/// first vertices at distance `>= L`) as Dirichlet boundary.
#[derive(Debug, Clone)]
pub struct Region {
    /// Global vertex id of each local vertex.
    pub global: Vec<usize>,
    pub center: usize,
    pub fixed: Vec<bool>,
    pub probe: ProbeGraph,
}

pub fn cut_region(g: &ProbeGraph, center: usize, reach: f64) -> Result<Region> {
    let cap = g.hops_reaching(reach);
    let dist = g.adjacency.bfs(&[center], Some(cap));
    let mut global = Vec::new();
    let mut local = HashMap::new();
    for (v, d) in dist.iter().enumerate() {
        if d.is_some() {
            if g.ring[v] {
                return Err(Error::BallRejected(format!(
                    "region of radius {reach} around vertex {center} reaches truncation vertex {v}"
                )));
            }
            local.insert(v, global.len());
            global.push(v);
        }
    }
    let fixed: Vec<bool> = global.iter().map(|&v| dist[v] == Some(cap)).collect();
    if !fixed.iter().any(|&f| f) {
        return Err(Error::BallRejected(format!(
            "region of radius {reach} around vertex {center} covers the graph"
        )));
    }
    let mut edges = Vec::new();
    for (a, &v) in global.iter().enumerate() {
        for (y, c) in g.adjacency.neighbors(v) {
            if let Some(&b) = local.get(&y) {
                if a < b && !(fixed[a] && fixed[b]) {
                    edges.push((a, b, c));
                }
            }
        }
    }
    let measure = match &g.measure {
        Measure::Cable => Measure::Cable,
        Measure::Vertex(w) => Measure::Vertex(global.iter().map(|&v| w[v]).collect()),
    };
    Ok(Region {
        center: local[&center],
        probe: ProbeGraph {
            regime: g.regime,
            adjacency: Adjacency::from_edges(global.len(), edges),
            edge_length: g.edge_length,
            ring: vec![false; global.len()],
            measure,
        },
        global,
        fixed,
    })
}

impl Region {
    pub fn boundary_count(&self) -> usize {
        self.fixed.iter().filter(|&&f| f).count()
    }

    pub fn problem(&self) -> Result<DirichletProblem> {
        DirichletProblem::new(&self.probe.adjacency, &self.fixed, SolveOptions::default())
    }

    /// Harmonic extension of `data` (one value per fixed vertex, in local order).
    pub fn solve(&self, problem: &DirichletProblem, data: &[f64]) -> Result<Vec<f64>> {
        if data.len() != self.boundary_count() {
            return Err(Error::LengthMismatch {
                expected: self.boundary_count(),
                got: data.len(),
            });
        }
        let mut values = vec![0.0; self.fixed.len()];
        let mut next = data.iter();
        for (v, &f) in values.iter_mut().zip(&self.fixed) {
            if f {
                *v = *next.next().expect("length checked");
            }
        }
        Ok(problem.solve(&values)?.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    Grh,
    Hr,
}

impl RatioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RatioKind::Grh => "grh",
            RatioKind::Hr => "hr",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Radii in the graph's length units; `None` selects the defaults.
    pub radii: Option<Vec<f64>>,
    pub trials: usize,
    pub centers: usize,
    pub seed: u64,
    /// Dirichlet data live at distance `safety_factor * r` from the center.
    pub safety_factor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            radii: None,
            trials: 20,
            centers: 32,
            seed: DEFAULT_SEED,
            safety_factor: DEFAULT_SAFETY_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityRow {
    pub r: f64,
    pub center_id: usize,
    pub datum_id: usize,
    pub grh_ratio: Option<f64>,
    pub hr_ratio: Option<f64>,
}

impl RegularityRow {
    pub fn ratio(&self, kind: RatioKind) -> Option<f64> {
        match kind {
            RatioKind::Grh => self.grh_ratio,
            RatioKind::Hr => self.hr_ratio,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub structure: String,
    pub regime: Regime,
    pub kind: RatioKind,
    pub radii: Vec<f64>,
    pub rows: Vec<RegularityRow>,
    /// Largest ratio at each radius.
    pub max_by_radius: Vec<f64>,
    /// Least-squares slope of `log max ratio` against `log r`.
    pub slope: f64,
    /// Largest ratio over the median ratio of the whole sweep.
    pub max_over_median: f64,
}

impl RegularityReport {
    fn assemble(
        structure: &str,
        regime: Regime,
        kind: RatioKind,
        radii: Vec<f64>,
        rows: Vec<RegularityRow>,
    ) -> Self {
        let max_by_radius: Vec<f64> = radii
            .iter()
            .map(|&r| {
                rows.iter()
                    .filter(|row| row.r == r)
                    .filter_map(|row| row.ratio(kind))
                    .fold(0.0, f64::max)
            })
            .collect();
        let slope = if radii.len() >= 2 {
            let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
            let y: Vec<f64> = max_by_radius.iter().map(|v| v.ln()).collect();
            linear_fit(&x, &y).0
        } else {
            0.0
        };
        let mut all: Vec<f64> = rows.iter().filter_map(|row| row.ratio(kind)).collect();
        all.sort_by(f64::total_cmp);
        let max_over_median = match all.len() {
            0 => f64::NAN,
            len => {
                let median = if len % 2 == 1 {
                    all[len / 2]
                } else {
                    0.5 * (all[len / 2 - 1] + all[len / 2])
                };
                all[len - 1] / median
            }
        };
        RegularityReport {
            structure: structure.to_string(),
            regime,
            kind,
            radii,
            rows,
            max_by_radius,
            slope,
            max_over_median,
        }
    }

    pub fn max_ratio(&self) -> f64 {
        self.max_by_radius.iter().copied().fold(0.0, f64::max)
    }
}

fn stream_seed(seed: u64, radius: usize, center: usize) -> u64 {
    seed ^ (((radius as u64) << 32) | center as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Ratios of `kind` on random balls of each radius.
pub fn ratio_sweep(
    structure: &str,
    g: &ProbeGraph,
    scaling: &ScalingFunctions,
    kind: RatioKind,
    radii: &[f64],
    opts: &SweepOptions,
) -> Result<RegularityReport> {
    if opts.trials == 0 || opts.centers == 0 {
        return Err(Error::Invalid("sweeps need at least one center and one trial".into()));
    }
    if opts.safety_factor < 2.0 {
        return Err(Error::Invalid("the safety factor must be at least 2".into()));
    }
    let ring: Vec<usize> = (0..g.len()).filter(|&v| g.ring[v]).collect();
    let ring_dist = (!ring.is_empty()).then(|| g.adjacency.bfs(&ring, None));
    let mut rng = seeded(opts.seed);
    let mut rows = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        let reach = opts.safety_factor * r;
        let clearance = g.hops_reaching(reach);
        let mut candidates: Vec<usize> = (0..g.len())
            .filter(|&v| {
                ring_dist
                    .as_ref()
                    .is_none_or(|d| d[v].is_none_or(|h| h > clearance))
            })
            .collect();
        candidates.shuffle(&mut rng);
        let mut regions = Vec::new();
        for &c in &candidates {
            if regions.len() == opts.centers {
                break;
            }
            match cut_region(g, c, reach) {
                Ok(region) => regions.push(region),
                Err(Error::BallRejected(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        if regions.is_empty() {
            return Err(Error::NoAdmissibleBall(r));
        }
        let per_center: Vec<Vec<RegularityRow>> = regions
            .par_iter()
            .enumerate()
            .map(|(ci, region)| -> Result<Vec<RegularityRow>> {
                let local = &region.probe;
                let ball = metric_ball(local, region.center, r)?;
                let pairs = (kind == RatioKind::Hr).then(|| ball_pairs(local, &ball, scaling.holder_exponent()));
                let problem = region.problem()?;
                let mut trng = seeded(stream_seed(opts.seed, ri, ci));
                let mut out = Vec::with_capacity(opts.trials);
                for datum in 0..opts.trials {
                    let data = normal_vector(&mut trng, region.boundary_count());
                    let u = region.solve(&problem, &data)?;
                    let ratio = match kind {
                        RatioKind::Grh => grh_ratio(local, scaling, &u, &ball),
                        RatioKind::Hr => hr_ratio(local, scaling, &u, &ball, pairs.as_ref().expect("pairs computed")),
                    };
                    let ratio = match ratio {
                        Ok(v) => v,
                        Err(Error::ConstantData) => continue,
                        Err(e) => return Err(e),
                    };
                    out.push(RegularityRow {
                        r,
                        center_id: region.global[region.center],
                        datum_id: datum,
                        grh_ratio: (kind == RatioKind::Grh).then_some(ratio),
                        hr_ratio: (kind == RatioKind::Hr).then_some(ratio),
                    });
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        rows.extend(per_center.into_iter().flatten());
    }
    Ok(RegularityReport::assemble(structure, g.regime, kind, radii.to_vec(), rows))
}

/// Default cable radii `rho^{-1}, .., rho^{-(k_max - 2)}`.
pub fn default_cable_radii(s: &PcfStructure, k_max: usize) -> Vec<f64> {
    let inv = 1.0 / s.rho_f64();
    (1..=k_max.saturating_sub(2)).map(|j| inv.powi(j as i32)).collect()
}

/// GRH ratios on the cable window `G^(k_max + 1)`, radii in the `r >= 1` regime.
pub fn grh_sweep(s: &PcfStructure, k_max: usize, opts: &SweepOptions) -> Result<RegularityReport> {
    require_homogeneous(s, "reverse Hölder sweep")?;
    if s.origin_map().is_none() {
        return Err(Error::Invalid("cable windows need a map fixing the origin".into()));
    }
    let radii = opts.radii.clone().unwrap_or_else(|| default_cable_radii(s, k_max));
    if radii.is_empty() {
        return Err(Error::Invalid("no radii to sweep; raise the cable scale".into()));
    }
    let cable = build_cable_graph(s, k_max + 1)?;
    ratio_sweep(&s.name, &cable.probe, &ScalingFunctions::of(s), RatioKind::Grh, &radii, opts)
}

/// Default radii `h rho^{-j}` for `j >= 1` while `r <= diam(K_n) / (2 l)`.
pub fn default_fractal_radii(s: &PcfStructure, n: usize, g: &ProbeGraph, safety_factor: f64) -> Vec<f64> {
    let inv = 1.0 / s.rho_f64();
    let limit = inv.powi(n as i32) * boundary_diameter(s) / (2.0 * safety_factor) * (1.0 + 1e-9);
    (1..)
        .map(|j| g.edge_length * inv.powi(j))
        .take_while(|&r| r <= limit)
        .collect()
}

/// HR ratios on the level-m graph of `K_n`.
pub fn hr_sweep(
    s: &PcfStructure,
    n: usize,
    m: usize,
    regime: Regime,
    opts: &SweepOptions,
) -> Result<RegularityReport> {
    require_homogeneous(s, "Hölder regularity sweep")?;
    if m < n {
        return Err(Error::Invalid(format!("level {m} must be at least n = {n}")));
    }
    let fractal = build_fractal_graph(s, n, m, regime)?;
    let radii = opts
        .radii
        .clone()
        .unwrap_or_else(|| default_fractal_radii(s, n, &fractal.probe, opts.safety_factor));
    if radii.is_empty() {
        return Err(Error::Invalid("no radii to sweep; raise the level".into()));
    }
    ratio_sweep(&s.name, &fractal.probe, &ScalingFunctions::of(s), RatioKind::Hr, &radii, opts)
}

#[derive(Debug, Clone)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    /// `beta - alpha`.
    pub expected: f64,
    pub levels: Vec<usize>,
    /// `log max_w osc(u, V_w)` per level, worst over the data.
    pub log_oscillation: Vec<f64>,
}

impl ExponentFit {
    pub fn relative_error(&self) -> f64 {
        ((self.exponent - self.expected) / self.expected).abs()
    }
}

/// Fits the decay of the largest cell oscillation over levels `2..=m_max`
/// for the basis boundary data.
pub fn holder_exponent_fit(s: &PcfStructure, m_max: usize) -> Result<ExponentFit> {
    require_homogeneous(s, "exponent fit")?;
    let e = derive_extension_matrices(s)?;
    let n = s.boundary_len();
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|t| if t == j { 1.0 } else { 0.0 }).collect())
        .collect();
    holder_exponent_fit_with(s, &e, &basis, m_max)
}

pub fn holder_exponent_fit_with(
    s: &PcfStructure,
    e: &ExtensionMatrices,
    data: &[Vec<f64>],
    m_max: usize,
) -> Result<ExponentFit> {
    require_homogeneous(s, "exponent fit")?;
    if m_max < 3 {
        return Err(Error::Invalid("exponent fit needs m_max >= 3".into()));
    }
    let nonconstant: Vec<&Vec<f64>> = data
        .iter()
        .filter(|d| d.iter().any(|&v| v != d[0]))
        .collect();
    if nonconstant.is_empty() {
        return Err(Error::ConstantData);
    }
    let levels: Vec<usize> = (2..=m_max).collect();
    let log_oscillation: Vec<f64> = levels
        .par_iter()
        .map(|&m| {
            nonconstant
                .iter()
                .map(|d| max_cell_oscillation(e, d, m))
                .fold(0.0, f64::max)
                .ln()
        })
        .collect();
    let x: Vec<f64> = levels.iter().map(|&m| m as f64).collect();
    let (slope, _, stderr) = linear_fit(&x, &log_oscillation);
    let log_rho = s.rho_f64().ln();
    Ok(ExponentFit {
        exponent: slope / log_rho,
        stderr: stderr / log_rho.abs(),
        expected: s.holder_exponent(),
        levels,
        log_oscillation,
    })
}
