//! Report writers: function dumps, CSV tables, plot series and JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::forms::EnergyLedger;
use crate::graph::VertexGraph;
use crate::rational::format_rational;
use crate::regularity::RegularityReport;
use crate::structure::StructureConfig;
use crate::verify::{MatrixPowerReport, OscReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// One line per vertex: index, exact coordinates, value to 17 significant digits.
pub fn write_function_dump<W: Write>(mut w: W, g: &VertexGraph, values: &[f64]) -> Result<()> {
    writeln!(w, "# index coordinates... value")?;
    for (i, (p, v)) in g.vertices().iter().zip(values).enumerate() {
        write!(w, "{i}")?;
        for x in p {
            write!(w, " {}", format_rational(x))?;
        }
        writeln!(w, " {v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_energy_ledger<W: Write>(w: W, ledger: &EnergyLedger) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "energy"])?;
    for (level, e) in ledger.energies.iter().enumerate() {
        out.write_record([level.to_string(), format!("{e:.16e}")])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_osc_csv<W: Write>(w: W, report: &OscReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "datum_id", "worst_cell_ratio", "max_cell_osc"])?;
    for row in &report.rows {
        out.write_record([
            row.level.to_string(),
            row.datum_id.to_string(),
            row.worst_cell_ratio.to_string(),
            row.max_cell_osc.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Maps are numbered from 1.
pub fn write_power_csv<W: Write>(w: W, report: &MatrixPowerReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "k", "min_entry"])?;
    for map in &report.maps {
        for &(k, min_entry) in &map.trace {
            out.write_record([(map.map + 1).to_string(), k.to_string(), min_entry.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_regularity_csv<W: Write>(w: W, report: &RegularityReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["structure", "regime", "r", "center_id", "datum_id", "grh_ratio", "hr_ratio"])?;
    for row in &report.rows {
        out.write_record([
            report.structure.clone(),
            report.regime.as_str().to_string(),
            row.r.to_string(),
            row.center_id.to_string(),
            row.datum_id.to_string(),
            optional(row.grh_ratio),
            optional(row.hr_ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Two-column `x,y` series for external plotting.
pub fn write_series<W: Write>(w: W, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([x_label, y_label])?;
    for (x, y) in points {
        out.write_record([x.to_string(), y.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a, P: Serialize> {
    pub version: &'static str,
    pub command: &'a str,
    pub structure: StructureConfig,
    pub parameters: &'a P,
}

pub fn write_sidecar<W: Write, P: Serialize>(
    mut w: W,
    command: &str,
    structure: StructureConfig,
    parameters: &P,
) -> Result<()> {
    let sidecar = Sidecar {
        version: VERSION,
        command,
        structure,
        parameters,
    };
    serde_json::to_writer_pretty(&mut w, &sidecar)
        .map_err(|e| crate::Error::Invalid(format!("sidecar serialization failed: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{derive_extension_matrices, energy_ledger, harmonic_solve};
    use crate::graph::build_vertex_graph;
    use crate::structure::sierpinski_gasket;

    #[test]
    fn dump_and_ledger() {
        let s = sierpinski_gasket();
        let g = build_vertex_graph(&s, 1).unwrap();
        let u = harmonic_solve(&g, &[1.0, 0.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_function_dump(&mut buf, &g, &u.values).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().starts_with("0 0 0 1.0000000000000000e0"));
        assert!(text.contains("1/2"));

        let ledger = energy_ledger(&s, &g, &u.values).unwrap();
        let mut buf = Vec::new();
        write_energy_ledger(&mut buf, &ledger).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("level,energy\n0,2.0000000000000000e0\n1,"));
    }

    #[test]
    fn power_csv_header() {
        let s = sierpinski_gasket();
        let e = derive_extension_matrices(&s).unwrap();
        let report = crate::verify::matrix_power_scan(&s, &e, 1.0 / 3.0).unwrap();
        let mut buf = Vec::new();
        write_power_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,k,min_entry\n1,1,"));
    }
}
