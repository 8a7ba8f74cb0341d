//! Serialization of fields and reports: CSV tables, a compact little-endian
//! binary field dump, JSON summaries, and JSON-lines records for resumable
//! branch and minimax runs.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::FunctionalReport;
use crate::geometry::{DiscreteGeometry, GeometryKind};
use crate::scalar::Scalar;
use crate::solvers::{Branch, MinimaxResult};

const FIELD_MAGIC: &[u8; 4] = b"MFL1";

/// CSV table of a field: node index, x, y, value.
pub fn write_field_csv<S: Scalar>(
    path: &Path,
    geo: &DiscreteGeometry<S>,
    field: &Field<S>,
) -> Result<()> {
    geo.check_len(field)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "node,x,y,value")?;
    for i in 0..geo.n_nodes() {
        writeln!(
            w,
            "{},{},{},{}",
            i,
            geo.nodes[i][0].to64(),
            geo.nodes[i][1].to64(),
            field.values[i].to64()
        )?;
    }
    Ok(())
}

/// Binary dump: magic, kind code, resolution (u32 LE), node count (u64 LE),
/// then the values as little-endian f64.
pub fn write_field_binary<S: Scalar>(
    path: &Path,
    geo: &DiscreteGeometry<S>,
    field: &Field<S>,
) -> Result<()> {
    geo.check_len(field)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&[geo.kind.code()])?;
    w.write_all(&(geo.resolution as u32).to_le_bytes())?;
    w.write_all(&(field.len() as u64).to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to64().to_le_bytes())?;
    }
    Ok(())
}

/// Read a binary field dump back: (kind code, resolution, values).
pub fn read_field_binary(path: &Path) -> Result<(u8, u32, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Config(format!(
            "{} is not a field dump (bad magic)",
            path.display()
        )));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let mut res = [0u8; 4];
    r.read_exact(&mut res)?;
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let n = u64::from_le_bytes(count) as usize;
    let mut values = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((kind[0], u32::from_le_bytes(res), values))
}

pub fn kind_from_code(code: u8) -> Option<GeometryKind> {
    match code {
        0 => Some(GeometryKind::Rectangle),
        1 => Some(GeometryKind::Disc),
        2 => Some(GeometryKind::Annulus),
        3 => Some(GeometryKind::FlatTorus),
        _ => None,
    }
}

/// JSON summary of a functional evaluation.
pub fn functional_report_json<S: Scalar>(report: &FunctionalReport<S>) -> serde_json::Value {
    json!({
        "lambda": report.lambda.to64(),
        "value": report.value.to64(),
        "log_denominator": report.log_denominator.to64(),
        "grad_norm": report.grad_norm.to64(),
    })
}

/// CSV sweep of a test family: parameter, energy, log_denominator, J.
pub fn write_family_csv<S: Scalar>(
    path: &Path,
    sweep: &[crate::families::TestFamilyPoint<S>],
    lambda: S,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "parameter,energy,log_denominator,j_lambda")?;
    for p in sweep {
        writeln!(
            w,
            "{},{},{},{}",
            p.parameter.to64(),
            p.energy.to64(),
            p.log_denominator.to64(),
            p.j_value(lambda).to64()
        )?;
    }
    Ok(())
}

/// Append one JSON record per accepted branch point; the final solution
/// field goes to a sibling binary dump so a run can resume from it.
pub fn write_branch_jsonl<S: Scalar>(
    path: &Path,
    geo: &DiscreteGeometry<S>,
    branch: &Branch<S>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, p) in branch.points.iter().enumerate() {
        let rec = json!({
            "index": i,
            "lambda": p.lambda.to64(),
            "energy": p.energy.to64(),
            "j_value": p.j_value.to64(),
            "max_u": p.max_u.to64(),
            "residual": p.residual.to64(),
            "turning_point": branch.turning_points.contains(&i),
        });
        writeln!(w, "{rec}")?;
    }
    let rec = json!({"termination": branch.termination});
    writeln!(w, "{rec}")?;
    drop(w);
    if let Some(last) = branch.points.last() {
        let state_path = path.with_extension("state.bin");
        write_field_binary(&state_path, geo, &last.solution)?;
    }
    Ok(())
}

/// Append one JSON record per deformation iteration of a minimax run.
pub fn write_minimax_jsonl<S: Scalar>(path: &Path, result: &MinimaxResult<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, h) in result.history.iter().enumerate() {
        let rec = json!({
            "iteration": i,
            "eps": h.eps.to64(),
            "sup_j": h.sup_j.to64(),
            "deformation_magnitude": h.deformation_magnitude.to64(),
        });
        writeln!(w, "{rec}")?;
    }
    let rec = json!({
        "lambda": result.lambda.to64(),
        "c_lambda": result.c_lambda.to64(),
        "residual": result.residual.to64(),
        "j_at_critical": result.j_at_critical.to64(),
        "converged": result.converged,
        "failure": result.failure,
        "inside_window": result.inside_window,
    });
    writeln!(w, "{rec}")?;
    Ok(())
}

/// Read the last JSON record of a JSON-lines file (resume support).
pub fn read_last_jsonl(path: &Path) -> Result<Option<serde_json::Value>> {
    let file = File::open(path)?;
    let mut last = None;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            last = Some(serde_json::from_str(&line)?);
        }
    }
    Ok(last)
}

/// Summary CSV of blow-up diagnostics along a branch:
/// lambda, max_u, n_peaks, masses, verdicts.
pub fn write_blowup_summary_csv<S: Scalar>(
    path: &Path,
    rows: &[crate::diagnostics::BlowupReport<S>],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lambda,max_u,n_peaks,masses,verdicts")?;
    for r in rows {
        let masses: Vec<String> = r
            .peaks
            .iter()
            .map(|p| format!("{:.6}", p.local_mass.to64()))
            .collect();
        let verdicts: Vec<String> = r
            .peaks
            .iter()
            .map(|p| format!("{:?}", p.verdict).to_lowercase())
            .collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.lambda.to64(),
            r.max_u.to64(),
            r.peaks.len(),
            masses.join(";"),
            verdicts.join(";")
        )?;
    }
    Ok(())
}

/// Write pretty JSON to a file.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Append a single JSON line to a log.
pub fn append_jsonl(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(w, "{value}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, DomainSpec as DS};

    #[test]
    fn binary_round_trip() {
        let dir = std::env::temp_dir().join("mflab_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.bin");
        let geo = build_geometry::<f64>(&DS::unit_torus(), 16).unwrap();
        let f = geo.field_from_fn(|p| p[0] * 2.0 - p[1]);
        write_field_binary(&path, &geo, &f).unwrap();
        let (kind, res, values) = read_field_binary(&path).unwrap();
        assert_eq!(kind_from_code(kind), Some(GeometryKind::FlatTorus));
        assert_eq!(res, 16);
        assert_eq!(values.len(), geo.n_nodes());
        for (a, b) in values.iter().zip(&f.values) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let dir = std::env::temp_dir().join("mflab_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.csv");
        let geo = build_geometry::<f64>(&DS::unit_disc(), 8).unwrap();
        write_field_csv(&path, &geo, &geo.field_zeros()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), geo.n_nodes() + 1);
        assert!(text.starts_with("node,x,y,value"));
    }

    #[test]
    fn jsonl_last_record() {
        let dir = std::env::temp_dir().join("mflab_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("log.jsonl");
        let _ = std::fs::remove_file(&path);
        append_jsonl(&path, &serde_json::json!({"a": 1})).unwrap();
        append_jsonl(&path, &serde_json::json!({"a": 2})).unwrap();
        let last = read_last_jsonl(&path).unwrap().unwrap();
        assert_eq!(last["a"], 2);
    }
}
