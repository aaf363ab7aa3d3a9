//! CSV time-series output.

use chve_core::diagnostics::StepReport;
use std::io::Write;

pub const CSV_HEADER: &str =
    "step,t,L,E_CH,E_EL,mass,phi_min,phi_max,maxF,med_abs_detF_minus_1,beta,fp_iters,newton_iters_total";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_row(r: &StepReport) -> String {
    let beta = r.beta.map(fmt).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.step,
        fmt(r.t),
        fmt(r.lyapunov),
        fmt(r.e_ch),
        fmt(r.e_el),
        fmt(r.mass),
        fmt(r.phi_min),
        fmt(r.phi_max),
        fmt(r.max_f),
        fmt(r.med_abs_det_minus_1),
        beta,
        r.fp_iters,
        r.newton_iters_total
    )
}

pub fn write_csv<W: Write>(mut out: W, reports: &[StepReport]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", csv_row(r))?;
    }
    Ok(())
}

/// Parse a CSV written by [`write_csv`]; empty cells become `None`.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>, crate::CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(crate::CliError::Format(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            if cell.is_empty() {
                row.push(None);
            } else {
                row.push(Some(cell.parse().map_err(|_| {
                    crate::CliError::Format(format!("bad CSV cell '{cell}'"))
                })?));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(beta: Option<f64>) -> StepReport {
        StepReport {
            step: 3,
            t: 6e-7,
            lyapunov: 0.123456789012345678,
            e_ch: 0.1,
            e_el: 0.02,
            mass: 0.3,
            phi_min: -0.1,
            phi_max: 0.9,
            max_f: 1.5,
            med_abs_det_minus_1: 0.01,
            beta,
            fp_iters: 4,
            newton_iters_total: 9,
        }
    }

    #[test]
    fn beta_cell_is_empty_for_cs() {
        let row = csv_row(&sample(None));
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 13);
        assert_eq!(cells[10], "");
    }

    #[test]
    fn roundtrip_preserves_values_bitwise() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[sample(Some(0.7)), sample(None)]).unwrap();
        let rows = parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][2], Some(0.123456789012345678));
        assert_eq!(rows[0][10], Some(0.7));
        assert_eq!(rows[1][10], None);
    }
}
