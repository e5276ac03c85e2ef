//! Numerical checks of the one-cell estimates: the current inequality, the
//! total-current identity, energy contraction under the extension maps, the
//! oscillation inequality, and convergence of extension-matrix powers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{boundary_energy, cell_boundary_values, harmonic_solve, ExtensionMatrices};
use crate::graph::{build_vertex_graph, VertexGraph};
use crate::sampling::{binary_patterns, seeded, normal_vector, DataSweep, DEFAULT_SEED};
use crate::structure::{PcfStructure, Word};

/// Relative slack allowed in the current inequality.
pub const CURRENT_TOLERANCE: f64 = 1e-9;
/// Relative defect allowed in the total-current identity.
pub const TOTAL_CURRENT_TOLERANCE: f64 = 1e-8;
/// Row-sum defect allowed in powers of the extension matrices.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;
pub const POWER_CAP: usize = 10_000;
/// Relative change in the tracked entry below which powering is deemed stalled.
const STALL_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentWitness {
    pub pattern: Vec<f64>,
    pub cell: Word,
    pub pair: (usize, usize),
    pub ratio: f64,
}

/// Worst `H^w_xy |u(x) - u(y)| / E_m(u)` over all non-constant 0/1 data.
#[derive(Debug, Clone)]
pub struct CurrentReport {
    pub level: usize,
    pub patterns: usize,
    pub worst: CurrentWitness,
}

pub fn check_current_inequality(s: &PcfStructure, m: usize) -> Result<CurrentReport> {
    if m == 0 {
        return Err(Error::Invalid("current inequality needs level >= 1".into()));
    }
    let g = build_vertex_graph(s, m)?;
    check_current_inequality_on(&g)
}

pub fn check_current_inequality_on(g: &VertexGraph) -> Result<CurrentReport> {
    let n = g.boundary_size();
    let patterns = binary_patterns(n);
    let mut worst: Option<CurrentWitness> = None;
    for pattern in &patterns {
        let u = harmonic_solve(g, pattern)?;
        let e = u.energy();
        for c in 0..g.cell_count() {
            let cell = g.cell(c);
            for p in 0..n {
                for q in p + 1..n {
                    let ratio = g.cell_conductance_f64(c, p, q)
                        * (u.values[cell[p]] - u.values[cell[q]]).abs()
                        / e;
                    if worst.as_ref().is_none_or(|w| ratio > w.ratio) {
                        worst = Some(CurrentWitness {
                            pattern: pattern.clone(),
                            cell: g.cell_word(c),
                            pair: (p, q),
                            ratio,
                        });
                    }
                }
            }
        }
    }
    let worst = worst.ok_or_else(|| Error::Invalid("no cells to scan".into()))?;
    if worst.ratio > 1.0 + CURRENT_TOLERANCE {
        return Err(Error::Verification(format!(
            "current inequality violated: cell {} pair ({}, {}) pattern {:?} ratio {:.12}",
            worst.cell,
            worst.pair.0 + 1,
            worst.pair.1 + 1,
            worst.pattern,
            worst.ratio
        )));
    }
    Ok(CurrentReport {
        level: g.level,
        patterns: patterns.len(),
        worst,
    })
}

/// The two current sums for a harmonic `u` with 0/1 boundary data:
/// currents leaving the zero set towards `u`, and towards `1 - u` from the
/// one set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalCurrent {
    pub energy: f64,
    pub into_zeros: f64,
    pub from_ones: f64,
}

impl TotalCurrent {
    pub fn defect(&self) -> f64 {
        ((self.into_zeros - self.energy).abs()).max((self.from_ones - self.energy).abs())
            / self.energy
    }
}

pub fn total_current(g: &VertexGraph, pattern: &[f64]) -> Result<TotalCurrent> {
    if pattern.len() != g.boundary_size() {
        return Err(Error::LengthMismatch {
            expected: g.boundary_size(),
            got: pattern.len(),
        });
    }
    if pattern.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid("total current needs 0/1 boundary data".into()));
    }
    if pattern.iter().all(|&v| v == pattern[0]) {
        return Err(Error::ConstantData);
    }
    let u = harmonic_solve(g, pattern)?;
    let n = g.boundary_size();
    let mut into_zeros = 0.0;
    let mut from_ones = 0.0;
    let vertex_cells = g.vertex_cells();
    for (j, &x) in g.boundary_ids.iter().enumerate() {
        for &c in &vertex_cells[x] {
            let cell = g.cell(c);
            let p = cell.iter().position(|&v| v == x).expect("vertex lies in its cell");
            for q in (0..n).filter(|&q| q != p) {
                let h = g.cell_conductance_f64(c, p, q);
                let y = u.values[cell[q]];
                if pattern[j] == 0.0 {
                    into_zeros += h * y;
                } else {
                    from_ones += h * (1.0 - y);
                }
            }
        }
    }
    Ok(TotalCurrent {
        energy: u.energy(),
        into_zeros,
        from_ones,
    })
}

#[derive(Debug, Clone)]
pub struct TotalCurrentReport {
    pub level: usize,
    pub worst_defect: f64,
    pub worst_pattern: Vec<f64>,
}

pub fn check_total_current(s: &PcfStructure, m: usize) -> Result<TotalCurrentReport> {
    if m == 0 {
        return Err(Error::Invalid("total current needs level >= 1".into()));
    }
    let g = build_vertex_graph(s, m)?;
    check_total_current_on(&g)
}

pub fn check_total_current_on(g: &VertexGraph) -> Result<TotalCurrentReport> {
    let mut report = TotalCurrentReport {
        level: g.level,
        worst_defect: 0.0,
        worst_pattern: Vec::new(),
    };
    for pattern in binary_patterns(g.boundary_size()) {
        let d = total_current(g, &pattern)?.defect();
        if d >= report.worst_defect {
            report.worst_defect = d;
            report.worst_pattern = pattern;
        }
    }
    if report.worst_defect > TOTAL_CURRENT_TOLERANCE {
        return Err(Error::Verification(format!(
            "total current defect {:.3e} for pattern {:?}",
            report.worst_defect, report.worst_pattern
        )));
    }
    Ok(report)
}

/// Supremum of `E_0(A_w u) / (r_w^2 E_0(u))` by word length.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    /// Entry `m - 1` is the supremum over words of length `m`.
    pub sup_by_length: Vec<f64>,
    pub sup: f64,
    pub argmax: Word,
}

/// Basis data plus 50 random vectors normalized to unit energy.
fn contraction_data(s: &PcfStructure, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = s.boundary_len();
    let mut data = DataSweep::new(n, 0, seed).data;
    let mut rng = seeded(seed);
    while data.len() < n + 50 {
        let v = normal_vector(&mut rng, n);
        let e = boundary_energy(s, &v)?;
        if e > 0.0 {
            data.push(v.iter().map(|x| x / e.sqrt()).collect());
        }
    }
    Ok(data)
}

pub fn check_energy_contraction(
    s: &PcfStructure,
    e: &ExtensionMatrices,
    m_max: usize,
) -> Result<ContractionReport> {
    let data = contraction_data(s, DEFAULT_SEED)?;
    let weights = s.weights_f64();
    let maps = s.maps();
    let mut sup_by_length = vec![0.0f64; m_max];
    let mut argmax = Word::empty();
    let mut sup = 0.0f64;
    for d in &data {
        let e0 = boundary_energy(s, d)?;
        if e0 <= 0.0 {
            continue;
        }
        // Breadth-first over words, carrying (values, r_w).
        let mut level = vec![(d.clone(), 1.0f64)];
        for m in 1..=m_max {
            let mut next = Vec::with_capacity(level.len() * maps);
            for (values, r) in &level {
                for i in 0..maps {
                    next.push((e.apply(i, values), r * weights[i]));
                }
            }
            for (idx, (values, r)) in next.iter().enumerate() {
                let ratio = boundary_energy(s, values)? / (r * r * e0);
                if ratio > sup_by_length[m - 1] {
                    sup_by_length[m - 1] = ratio;
                }
                // Ties within rounding go to the shorter word.
                if ratio > sup * (1.0 + 1e-12) {
                    sup = ratio;
                    argmax = Word::from_lex_index(idx, maps, m);
                }
            }
            level = next;
        }
    }
    let mut streak = 0;
    for m in 1..sup_by_length.len() {
        if sup_by_length[m] > 1.05 * sup_by_length[m - 1] {
            streak += 1;
            if streak >= 3 {
                return Err(Error::Verification(format!(
                    "energy contraction constant grows with word length: {:?}",
                    sup_by_length
                )));
            }
        } else {
            streak = 0;
        }
    }
    Ok(ContractionReport {
        sup_by_length,
        sup,
        argmax,
    })
}

/// Published upper bounds for the oscillation constant of the built-in
/// structures: `6 sqrt 2` for the gasket and `12 sqrt 3` for the Vicsek set.
pub fn certified_osc_bound(s: &PcfStructure) -> Option<f64> {
    let reference = crate::structure::builtin(&s.name)?;
    if reference.to_config().to_toml() != s.to_config().to_toml() {
        return None;
    }
    match s.name.as_str() {
        "sierpinski-gasket" => Some(6.0 * 2f64.sqrt()),
        "vicsek" => Some(12.0 * 3f64.sqrt()),
        _ => None,
    }
}

/// One `(level, datum)` row of an oscillation scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscRow {
    pub level: usize,
    pub datum_id: usize,
    /// `max_w osc(u, V_w) / (r_w * osc(u, V0))`.
    pub worst_cell_ratio: f64,
    /// `max_w osc(u, V_w)`.
    pub max_cell_osc: f64,
}

#[derive(Debug, Clone)]
pub struct OscReport {
    pub structure: String,
    pub levels: Vec<usize>,
    /// Worst normalized ratio at each tested level, over all data.
    pub worst_ratio: Vec<f64>,
    /// Largest worst ratio: an empirical lower bound for the optimal constant.
    pub c_emp: f64,
    /// Least-squares slope of `log max_d(max_cell_osc / osc(d))` against level.
    pub slope: f64,
    /// `log r`.
    pub expected_slope: f64,
    pub rows: Vec<OscRow>,
}

impl OscReport {
    pub fn slope_relative_error(&self) -> f64 {
        ((self.slope - self.expected_slope) / self.expected_slope).abs()
    }

    /// True when the worst ratio increases at every level by more than 1% in
    /// total, i.e. the constant shows a growing trend.
    pub fn is_growing(&self) -> bool {
        let w = &self.worst_ratio;
        w.len() >= 2
            && w.windows(2).all(|p| p[1] > p[0])
            && w[w.len() - 1] > 1.01 * w[0]
    }
}

fn oscillation(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Ordinary least squares; returns `(slope, intercept, slope standard error)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if x.len() > 2 {
        let sse: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, stderr)
}

/// Oscillation of harmonic functions over every cell of levels `1..=m_max`.
pub fn osc_scan(
    s: &PcfStructure,
    e: &ExtensionMatrices,
    m_max: usize,
    sweep: &DataSweep,
) -> Result<OscReport> {
    let r = s
        .homogeneous_weight()
        .map(crate::rational::to_f64)
        .ok_or(Error::Inhomogeneous("oscillation scan"))?;
    if m_max == 0 {
        return Err(Error::Invalid("oscillation scan needs m_max >= 1".into()));
    }
    let per_datum: Vec<Vec<OscRow>> = sweep
        .data
        .par_iter()
        .enumerate()
        .filter(|(_, d)| oscillation(d) > 0.0)
        .map(|(id, d)| {
            let base = oscillation(d);
            let mut rows = Vec::with_capacity(m_max);
            let mut cells = vec![d.clone()];
            for m in 1..=m_max {
                cells = cells
                    .iter()
                    .flat_map(|c| (0..e.maps()).map(move |i| e.apply(i, c)))
                    .collect();
                let max_cell_osc = cells.iter().map(|c| oscillation(c)).fold(0.0, f64::max);
                rows.push(OscRow {
                    level: m,
                    datum_id: id,
                    worst_cell_ratio: max_cell_osc / (r.powi(m as i32) * base),
                    max_cell_osc,
                });
            }
            rows
        })
        .collect();
    if per_datum.is_empty() {
        return Err(Error::ConstantData);
    }
    let mut worst_ratio = vec![0.0f64; m_max];
    let mut normalized = vec![0.0f64; m_max];
    for rows in &per_datum {
        let base = oscillation(&sweep.data[rows[0].datum_id]);
        for row in rows {
            worst_ratio[row.level - 1] = worst_ratio[row.level - 1].max(row.worst_cell_ratio);
            normalized[row.level - 1] = normalized[row.level - 1].max(row.max_cell_osc / base);
        }
    }
    let levels: Vec<usize> = (1..=m_max).collect();
    let (slope, _, _) = if m_max >= 2 {
        let x: Vec<f64> = levels.iter().map(|&m| m as f64).collect();
        let y: Vec<f64> = normalized.iter().map(|v| v.ln()).collect();
        linear_fit(&x, &y)
    } else {
        (normalized[0].ln(), 0.0, 0.0)
    };
    Ok(OscReport {
        structure: s.name.clone(),
        levels,
        c_emp: worst_ratio.iter().copied().fold(0.0, f64::max),
        worst_ratio,
        slope,
        expected_slope: r.ln(),
        rows: per_datum.into_iter().flatten().collect(),
    })
}

/// Oscillation of harmonic functions over every cell of level `m`, for one datum.
pub fn max_cell_oscillation(e: &ExtensionMatrices, data: &[f64], level: usize) -> f64 {
    cell_boundary_values(e, data, level)
        .iter()
        .map(|c| oscillation(c))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct MapPowers {
    pub map: usize,
    /// Boundary point fixed by the map.
    pub fixed: usize,
    /// Smallest `k` with `min_j (A_i^k)_{j,fixed} >= 1/2 + epsilon`.
    pub threshold_power: usize,
    /// `(k, min_j (A_i^k)_{j,fixed})` for `k = 1..=threshold_power`.
    pub trace: Vec<(usize, f64)>,
    /// `max_j |1 - (A_i^k)_{j,fixed}|` over the last (up to) five powers.
    pub tail: Vec<f64>,
}

impl MapPowers {
    pub fn tail_decreasing(&self) -> bool {
        self.tail.windows(2).all(|p| p[1] <= p[0])
    }
}

#[derive(Debug, Clone)]
pub struct MatrixPowerReport {
    pub epsilon: f64,
    pub maps: Vec<MapPowers>,
    /// `max_i T_i`.
    pub t0: usize,
    /// `min_i min_j (A_i^{T0})_{j,fixed(i)}`.
    pub min_at_t0: f64,
    pub max_row_sum_defect: f64,
}

fn row_sum_defect(a: &nalgebra::DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| (row.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Powers each `A_i` whose map fixes a boundary point until the column of that
/// point has every entry at least `1/2 + epsilon`.
pub fn matrix_power_scan(
    s: &PcfStructure,
    e: &ExtensionMatrices,
    epsilon: f64,
) -> Result<MatrixPowerReport> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Invalid(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let threshold = 0.5 + epsilon;
    let mut maps = Vec::new();
    let mut worst_defect = 0.0f64;
    for i in 0..e.maps() {
        let Some(fixed) = s.boundary_fixed_by_map(i) else {
            continue;
        };
        let a = &e.matrices[i];
        let mut power = a.clone();
        let mut trace = Vec::new();
        let mut gaps = Vec::new();
        let mut previous = f64::NAN;
        let mut k = 1;
        loop {
            worst_defect = worst_defect.max(row_sum_defect(&power));
            let column = power.column(fixed);
            let min_entry = column.min();
            trace.push((k, min_entry));
            gaps.push(column.iter().map(|v| (1.0 - v).abs()).fold(0.0, f64::max));
            if min_entry >= threshold {
                break;
            }
            if k >= POWER_CAP {
                return Err(Error::PowerCap { map: i + 1, cap: POWER_CAP });
            }
            if previous.is_finite()
                && ((min_entry - previous).abs() <= STALL_TOLERANCE * previous.abs().max(1e-300))
            {
                return Err(Error::PowerStall { map: i + 1, k });
            }
            previous = min_entry;
            power = &power * a;
            k += 1;
        }
        let tail = gaps[gaps.len().saturating_sub(5)..].to_vec();
        maps.push(MapPowers {
            map: i,
            fixed,
            threshold_power: k,
            trace,
            tail,
        });
    }
    if maps.is_empty() {
        return Err(Error::Invalid("no map fixes a boundary point".into()));
    }
    let t0 = maps.iter().map(|m| m.threshold_power).max().unwrap_or(0);
    let mut min_at_t0 = f64::INFINITY;
    for m in &maps {
        let p = e.power(m.map, t0);
        worst_defect = worst_defect.max(row_sum_defect(&p));
        min_at_t0 = min_at_t0.min(p.column(m.fixed).min());
    }
    if worst_defect > STOCHASTIC_TOLERANCE {
        return Err(Error::Verification(format!(
            "extension-matrix powers lost stochasticity: row-sum defect {worst_defect:.3e}"
        )));
    }
    Ok(MatrixPowerReport {
        epsilon,
        maps,
        t0,
        min_at_t0,
        max_row_sum_defect: worst_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::derive_extension_matrices;
    use crate::structure::{sierpinski_gasket, vicsek};

    #[test]
    fn current_inequality_gasket() {
        let report = check_current_inequality(&sierpinski_gasket(), 3).unwrap();
        assert_eq!(report.patterns, 6);
        assert!(report.worst.ratio <= 1.0 + CURRENT_TOLERANCE);
        assert!(report.worst.ratio > 0.0);
    }

    #[test]
    fn total_current_examples() {
        let s = sierpinski_gasket();
        let g = build_vertex_graph(&s, 2).unwrap();
        let t = total_current(&g, &[1.0, 0.0, 0.0]).unwrap();
        assert!((t.energy - 2.0).abs() < 1e-9);
        assert!((t.into_zeros - 2.0).abs() < 1e-9);
        assert!((t.from_ones - 2.0).abs() < 1e-9);
        assert!(matches!(total_current(&g, &[1.0, 1.0, 1.0]), Err(Error::ConstantData)));

        let v = vicsek();
        let g = build_vertex_graph(&v, 2).unwrap();
        let t = total_current(&g, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((t.into_zeros - 3.0).abs() < 1e-9 && (t.from_ones - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contraction_bounded() {
        let s = sierpinski_gasket();
        let e = derive_extension_matrices(&s).unwrap();
        let report = check_energy_contraction(&s, &e, 4).unwrap();
        assert!(report.sup.is_finite());
        assert_eq!(report.sup_by_length.len(), 4);
    }

    #[test]
    fn oscillation_scan_gasket() {
        let s = sierpinski_gasket();
        let e = derive_extension_matrices(&s).unwrap();
        let report = osc_scan(&s, &e, 5, &DataSweep::standard(3)).unwrap();
        assert!(report.c_emp <= 6.0 * 2f64.sqrt());
        assert!(report.worst_ratio.iter().all(|&r| r > 0.0 && r.is_finite()));
        assert_eq!(report.rows.len(), 53 * 5);
        let direct = max_cell_oscillation(&e, &[1.0, 0.0, 0.0], 3);
        let row = report.rows.iter().find(|r| r.datum_id == 0 && r.level == 3).unwrap();
        assert_eq!(direct, row.max_cell_osc);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (slope, intercept, se) = linear_fit(&x, &y);
        assert!((slope + 0.5).abs() < 1e-14 && (intercept - 2.0).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn power_scan_fixed_column() {
        let s = sierpinski_gasket();
        let e = derive_extension_matrices(&s).unwrap();
        let report = matrix_power_scan(&s, &e, 1.0 / 3.0).unwrap();
        assert_eq!(report.maps.len(), 3);
        assert!(report.min_at_t0 >= 5.0 / 6.0);
        for m in &report.maps {
            let p = e.power(m.map, 7);
            assert!((p[(m.fixed, m.fixed)] - 1.0).abs() < 1e-15);
        }
        assert!(matrix_power_scan(&s, &e, 0.5).is_err());
    }
}
