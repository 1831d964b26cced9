use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::Grid;
use crate::error::Result;

/// |field| and |spin| sampled over the whole cascade (z) and the whole run (t).
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub nz: usize,
    pub n_cells: usize,
    /// Time between recorded columns (µs).
    pub dt: f64,
    pub windows: usize,
    /// Time-major: one row of n_cells·nz values per recorded instant.
    pub field: Vec<Vec<f64>>,
    pub spin: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn new(grid: &Grid, n_cells: usize, stride: usize) -> Self {
        Self { nz: grid.nz, n_cells, dt: grid.dt * stride as f64, windows: 0, field: Vec::new(), spin: Vec::new() }
    }

    pub(crate) fn push_window(&mut self, field: Vec<Vec<f64>>, spin: Vec<Vec<f64>>) {
        self.windows += 1;
        self.field.extend(field);
        self.spin.extend(spin);
    }

    pub fn n_times(&self) -> usize {
        self.field.len()
    }

    /// CSV with rows = z index, columns = t index, and a `#` metadata line.
    pub fn to_csv(&self, observable: &str) -> Option<String> {
        let data = match observable {
            "field" => &self.field,
            "spin" => &self.spin,
            _ => return None,
        };
        let mut s = format!(
            "# observable={observable} n_cells={} nz={} dz={} dt_us={} windows={} n_t={}\n",
            self.n_cells,
            self.nz,
            1.0 / (self.nz - 1) as f64,
            self.dt,
            self.windows,
            data.len()
        );
        for z in 0..self.n_cells * self.nz {
            for (t, row) in data.iter().enumerate() {
                if t > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{:e}", row[z]);
            }
            s.push('\n');
        }
        Some(s)
    }

    /// Write `heatmap_field.csv` and `heatmap_spin.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        ["field", "spin"]
            .iter()
            .map(|obs| {
                let p = dir.join(format!("heatmap_{obs}.csv"));
                std::fs::write(&p, self.to_csv(obs).expect("known observable"))?;
                Ok(p)
            })
            .collect()
    }
}
