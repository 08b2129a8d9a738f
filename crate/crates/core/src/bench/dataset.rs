use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng;

use super::BenchError;
use crate::evolve::{random_walk, EaConfig};
use crate::molgraph::{AtomType, MolecularGraph, Molecule};

/// Labelled molecules, one `<smiles>,<value>` line each on disk.
pub type Dataset = Vec<(Molecule, f64)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadLine {
    pub line: usize,
    pub message: String,
}

/// Reads a dataset, skipping blank and `#` lines. Unreadable lines are
/// returned for reporting; more than 1% of them is an error.
pub fn read_dataset<R: BufRead>(reader: R, max_atoms: usize) -> Result<(Dataset, Vec<BadLine>), BenchError> {
    let mut data = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parsed = text
            .split_once(',')
            .ok_or_else(|| "expected <smiles>,<value>".to_string())
            .and_then(|(s, v)| {
                let m = Molecule::parse(s.trim(), max_atoms).map_err(|e| e.to_string())?;
                let v: f64 = v.trim().parse().map_err(|_| format!("bad value {:?}", v.trim()))?;
                if v.is_finite() {
                    Ok((m, v))
                } else {
                    Err(format!("non-finite value {v}"))
                }
            });
        match parsed {
            Ok(entry) => data.push(entry),
            Err(message) => bad.push(BadLine { line: i + 1, message }),
        }
    }
    let total = data.len() + bad.len();
    if bad.len() * 100 > total {
        return Err(BenchError::TooManyBadLines {
            bad: bad.len(),
            total,
            first: bad[0].line,
        });
    }
    Ok((data, bad))
}

pub fn write_dataset<W: Write>(mut out: W, data: &[(Molecule, f64)]) -> std::io::Result<()> {
    for (m, v) in data {
        writeln!(out, "{},{v}", m.smiles())?;
    }
    out.flush()
}

/// `count` distinct molecules, each the end of a random mutation walk from
/// methane whose length is uniform in `1..=max_walk`.
pub fn generate_molecules<R: Rng + ?Sized>(
    count: usize,
    max_walk: usize,
    cfg: &EaConfig,
    rng: &mut R,
) -> Result<Vec<Molecule>, BenchError> {
    let start = MolecularGraph::single_atom(AtomType::C);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let max_tries = count.saturating_mul(100).max(1000);
    for _ in 0..max_tries {
        if out.len() == count {
            break;
        }
        let len = rng.random_range(1..=max_walk.max(1));
        let m = Molecule::new(random_walk(&start, len, cfg, rng));
        if seen.insert(m.key.clone()) {
            out.push(m);
        }
    }
    if out.len() < count {
        return Err(BenchError::InsufficientData(format!(
            "only {} distinct molecules found, {count} requested",
            out.len()
        )));
    }
    Ok(out)
}
