//! Serialization of solutions, report streams and experiment tables.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::InequalityReport;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::{read_cells_csv, write_cells_csv};
use crate::schrodinger::SchrodingerSolution;

/// Files written by [`write_solution`].
#[derive(Clone, Debug)]
pub struct SolutionFiles {
    pub metadata: PathBuf,
    pub phi: PathBuf,
    pub psi: PathBuf,
}

/// `<stem>.json` with the metadata, `<stem>_phi.csv` and `<stem>_psi.csv` with the potentials.
pub fn write_solution(sol: &SchrodingerSolution, dir: &Path, stem: &str) -> Result<SolutionFiles> {
    fs::create_dir_all(dir)?;
    let files = SolutionFiles {
        metadata: dir.join(format!("{stem}.json")),
        phi: dir.join(format!("{stem}_phi.csv")),
        psi: dir.join(format!("{stem}_psi.csv")),
    };
    let mut meta = serde_json::to_string_pretty(&sol.metadata())?;
    meta.push('\n');
    fs::write(&files.metadata, meta)?;
    write_cells_csv(fs::File::create(&files.phi)?, sol.grid(), "phi", sol.phi())?;
    write_cells_csv(fs::File::create(&files.psi)?, sol.grid(), "psi", sol.psi())?;
    Ok(files)
}

/// A potential written by [`write_solution`]; `-inf` marks cells off the support.
pub fn read_potential<R: Read>(r: R) -> Result<(Grid, Vec<f64>)> {
    read_cells_csv(r)
}

/// One JSON document per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reports from a JSON-lines stream; lines that are not reports are skipped.
pub fn read_reports<R: Read>(r: R) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if v.get("lhs").is_some() && v.get("rhs").is_some() {
            out.push(serde_json::from_value(v)?);
        }
    }
    Ok(out)
}

/// CSV with `# key: value` metadata lines ahead of the header.
pub fn write_table<W: Write>(
    mut w: W,
    metadata: &[(String, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    for (k, v) in metadata {
        if k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidParameter { name: "metadata", reason: "newline in metadata".into() });
        }
        writeln!(w, "# {k}: {v}")?;
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidParameter { name: "rows", reason: "row width differs from header".into() });
        }
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Parsed [`write_table`] output.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut metadata = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        let (k, v) = body.split_once(':').ok_or_else(|| Error::Parse(format!("bad metadata line `{line}`")))?;
        metadata.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rd.headers()?.iter().map(str::to_string).collect();
    let rows = rd.records().map(|r| Ok(r?.iter().map(str::to_string).collect())).collect::<Result<_>>()?;
    Ok(Table { metadata, header, rows })
}

/// Shortest round-tripping decimal form (`inf`, `-inf`, `NaN` for non-finite).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::diagnostics::Tolerance;
    use crate::kernels::GibbsKernel;
    use crate::measures::{DiscreteMeasure, ReferenceMeasure};
    use crate::schrodinger::{solve, SolveOptions};

    #[test]
    fn solution_files_roundtrip() {
        let g = Grid::uniform(&[(-4.0, 4.0, 24)]).unwrap();
        let mut w = vec![0.0; 24];
        w[5..15].iter_mut().for_each(|x| *x = 0.1);
        let mu = DiscreteMeasure::new(&g, w).unwrap();
        let nu = DiscreteMeasure::from_density(&g, |x| (-x[0] * x[0]).exp()).unwrap();
        let k = Arc::new(GibbsKernel::ornstein_uhlenbeck(&g, 0.5, 1.0).unwrap());
        let r = Arc::new(ReferenceMeasure::gaussian(&g, 1.0).unwrap());
        let s = solve(&mu, &nu, &k, &r, &SolveOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = write_solution(&s, dir.path(), "sol").unwrap();
        let (g2, phi) = read_potential(fs::File::open(&f.phi).unwrap()).unwrap();
        assert!(g2.compatible(&g));
        assert_eq!(phi, s.phi());
        assert_eq!(phi[0], f64::NEG_INFINITY);
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(&f.metadata).unwrap()).unwrap();
        assert_eq!(meta["converged"], true);
    }

    #[test]
    fn reports_and_tables_roundtrip() {
        let r = InequalityReport::evaluate("x", 1.0, 2.0, Tolerance::default());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[r.clone(), r.clone()]).unwrap();
        assert_eq!(read_reports(&buf[..]).unwrap(), vec![r.clone(), r]);
        let mut t = Vec::new();
        let meta = vec![("grid".to_string(), "[-8, 8] x 256".to_string()), ("seed".to_string(), "7".to_string())];
        write_table(&mut t, &meta, &["T", "gap"], &[vec!["0.1".into(), fmt_f64(0.25)]]).unwrap();
        let back = read_table(&t[..]).unwrap();
        assert_eq!(back.metadata, meta);
        assert_eq!(back.header, ["T", "gap"]);
        assert_eq!(back.rows, vec![vec!["0.1".to_string(), "0.25".to_string()]]);
    }
}
