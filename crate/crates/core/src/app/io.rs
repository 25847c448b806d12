//! Field files.
//!
//! `csv-grid`: `ny` lines of `nx` comma-separated values, first line is the
//! bottom row `j = 0`. Values use the shortest representation that parses
//! back to the same `f64`, which never needs more than 17 significant digits.
//!
//! `vtk-legacy-ascii`: `STRUCTURED_POINTS` with one `CELL_DATA` scalar block
//! per field.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::discretization::{GridSpec, ScalarField};
use crate::error::{ChbError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FieldFormat {
    #[default]
    CsvGrid,
    VtkLegacyAscii,
}

impl FieldFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::CsvGrid => "csv",
            Self::VtkLegacyAscii => "vtk",
        }
    }
}

impl fmt::Display for FieldFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CsvGrid => "csv-grid",
            Self::VtkLegacyAscii => "vtk-legacy-ascii",
        })
    }
}

impl FromStr for FieldFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv-grid" => Ok(Self::CsvGrid),
            "vtk-legacy-ascii" => Ok(Self::VtkLegacyAscii),
            _ => Err(format!("unknown output format '{s}' (csv-grid | vtk-legacy-ascii)")),
        }
    }
}

pub fn csv_grid_string(field: &ScalarField) -> String {
    let g = field.grid();
    let mut s = String::new();
    for row in field.values().chunks(g.nx()) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_csv_grid(text: &str, grid: GridSpec) -> std::result::Result<ScalarField, String> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != grid.ny() {
        return Err(format!("expected {} rows, found {}", grid.ny(), rows.len()));
    }
    let mut values = Vec::with_capacity(grid.num_cells());
    for (j, row) in rows.iter().enumerate() {
        let before = values.len();
        for item in row.split(',') {
            let v: f64 = item
                .trim()
                .parse()
                .map_err(|_| format!("row {j}: malformed value '{}'", item.trim()))?;
            values.push(v);
        }
        if values.len() - before != grid.nx() {
            return Err(format!("row {j}: expected {} values, found {}", grid.nx(), values.len() - before));
        }
    }
    ScalarField::new(grid, values).map_err(|e| e.to_string())
}

pub fn read_csv_grid(path: &Path, grid: GridSpec) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path).map_err(|source| ChbError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_grid(&text, grid).map_err(|message| ChbError::Config {
        path: path.display().to_string(),
        message,
    })
}

pub fn vtk_string(title: &str, fields: &[(&str, &ScalarField)]) -> String {
    let g = fields.first().map(|f| *f.1.grid()).expect("at least one field");
    let mut s = String::new();
    let _ = write!(
        s,
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS\n\
         DIMENSIONS {} {} 1\nORIGIN 0 0 0\nSPACING {:?} {:?} 1\nCELL_DATA {}\n",
        g.nx() + 1,
        g.ny() + 1,
        g.hx(),
        g.hy(),
        g.num_cells()
    );
    for (name, f) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in f.values() {
            let _ = writeln!(s, "{v}");
        }
    }
    s
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| ChbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `fields` as one VTK file, or one csv-grid file per field named
/// `<stem>_<field>.csv`.
pub fn write_fields(
    dir: &Path,
    stem: &str,
    fields: &[(&str, &ScalarField)],
    format: FieldFormat,
) -> Result<()> {
    match format {
        FieldFormat::CsvGrid => {
            for (name, f) in fields {
                write_text(&dir.join(format!("{stem}_{name}.csv")), &csv_grid_string(f))?;
            }
            Ok(())
        }
        FieldFormat::VtkLegacyAscii => write_text(&dir.join(format!("{stem}.vtk")), &vtk_string(stem, fields)),
    }
}
