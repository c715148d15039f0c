//! CSV tables and legacy ASCII VTK field dumps.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use tpmhd_core::fespace::FeSpace;
use tpmhd_core::mesh::Mesh;

/// Locale-independent float formatting: shortest round-trip scientific form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// CSV writer that flushes after every row, so partial tables survive a failure.
pub struct CsvSink {
    inner: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> io::Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(header)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        self.inner.flush()
    }
}

/// A finite element field to be sampled at the mesh vertices.
pub struct VtkField<'a> {
    pub name: &'a str,
    pub space: &'a FeSpace,
    pub coeffs: &'a [f64],
}

/// Legacy ASCII VTK unstructured grid: mesh vertices as points, triangles as
/// cells (type 5), one POINT_DATA record per field.
pub fn write_vtk(mesh: &Mesh, fields: &[VtkField<'_>], title: &str, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1]))?;
    }
    writeln!(w, "CELLS {} {}", mesh.n_cells(), 4 * mesh.n_cells())?;
    for c in mesh.cells() {
        writeln!(w, "3 {} {} {}", c[0], c[1], c[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.n_cells())?;
    for _ in mesh.cells() {
        writeln!(w, "5")?;
    }
    if !fields.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
    }
    for f in fields {
        let vals = f.space.vertex_values(f.coeffs);
        match f.space.components() {
            1 => {
                writeln!(w, "SCALARS {} double 1", f.name)?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in &vals {
                    writeln!(w, "{}", fmt_f64(v[0]))?;
                }
            }
            _ => {
                writeln!(w, "VECTORS {} double", f.name)?;
                for v in &vals {
                    writeln!(w, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1]))?;
                }
            }
        }
    }
    w.flush()
}
