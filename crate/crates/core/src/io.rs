//! Run artifacts: the per-step CSV and legacy ASCII VTK snapshots.

use std::io::{Read, Write};

use crate::amr::{StepSnapshot, StepStats};
use crate::fespace::NodeRef;
use crate::{Error, Result};

/// Column order of the run CSV.
pub const CSV_HEADER: [&str; 7] = ["step", "cells", "dofs", "l1_error", "wall_s", "nl_iters", "converged"];

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Streams [`StepStats`] rows; the header is written with the first row.
pub struct CsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(w: W) -> Self {
        Self { inner: csv::Writer::from_writer(w) }
    }

    pub fn write(&mut self, row: &StepStats) -> Result<()> {
        self.inner.serialize(row).map_err(io_err)?;
        self.inner.flush().map_err(io_err)
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(io_err)
    }
}

pub fn write_csv<W: Write>(w: W, rows: &[StepStats]) -> Result<()> {
    let mut out = CsvWriter::new(w);
    for r in rows {
        out.write(r)?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<StepStats>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(io_err)?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Io(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().map(|row| row.map_err(io_err)).collect()
}

/// Writes a snapshot as a legacy ASCII VTK unstructured grid.
///
/// Hanging nodes are emitted as extra points after the conforming ones and
/// carry their constrained values; their detector value is the maximum over
/// the constraining nodes.
pub fn write_vtk<W: Write>(mut w: W, snap: &StepSnapshot<'_>, names: &[&str]) -> Result<()> {
    let space = snap.space;
    let (n, nh, nc) = (space.num_nodes(), space.num_hanging(), space.num_cells());
    let m = space.components();
    let idx = |r: &NodeRef| match *r {
        NodeRef::Conforming(i) => i,
        NodeRef::Hanging(k) => n + k,
    };
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&format!("monoamr step {}\nASCII\nDATASET UNSTRUCTURED_GRID\n", snap.stats.step));
    s.push_str(&format!("POINTS {} double\n", n + nh));
    for p in space.coords() {
        s.push_str(&format!("{} {} 0\n", p[0], p[1]));
    }
    for k in 0..nh {
        let p = space.hanging_coord(k);
        s.push_str(&format!("{} {} 0\n", p[0], p[1]));
    }
    s.push_str(&format!("CELLS {} {}\n", nc, 5 * nc));
    for c in 0..nc {
        let v = space.cell_nodes(c);
        // tensor corner order to counter-clockwise
        s.push_str(&format!("4 {} {} {} {}\n", idx(&v[0]), idx(&v[1]), idx(&v[3]), idx(&v[2])));
    }
    s.push_str(&format!("CELL_TYPES {nc}\n"));
    for _ in 0..nc {
        s.push_str("9\n");
    }
    if snap.indicator.len() == nc {
        s.push_str(&format!("CELL_DATA {nc}\nSCALARS indicator double 1\nLOOKUP_TABLE default\n"));
        for v in snap.indicator {
            s.push_str(&format!("{v}\n"));
        }
    }
    s.push_str(&format!("POINT_DATA {}\n", n + nh));
    for c in 0..m {
        let name = names.get(c).map_or_else(|| format!("u{c}"), |s| s.to_string());
        s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for i in 0..n {
            s.push_str(&format!("{}\n", snap.u.node(i)[c]));
        }
        for k in 0..nh {
            s.push_str(&format!("{}\n", space.hanging_value(snap.u, k, c)));
        }
    }
    if snap.detector.len() == n {
        s.push_str("SCALARS alpha double 1\nLOOKUP_TABLE default\n");
        for a in snap.detector {
            s.push_str(&format!("{a}\n"));
        }
        let masters = &space.constraints().masters;
        for k in 0..nh {
            let a = masters[k].iter().map(|&(j, _)| snap.detector[j]).fold(0.0, f64::max);
            s.push_str(&format!("{a}\n"));
        }
    }
    w.write_all(s.as_bytes()).map_err(io_err)
}
