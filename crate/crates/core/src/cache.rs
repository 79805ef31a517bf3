//! Robin Green fields per coefficient pair, memoised in memory and optionally on disk.
//!
//! Disk entries are keyed by a SHA-256 of the extended pair, the grid and the source
//! cell, so a cached field is only reused for the exact same discrete problem.

use crate::coefficients::CoefficientPair;
use crate::geometry::AugmentedDomain;
use crate::solver::io::{read_field, write_field};
use crate::solver::{assemble, clearance, green_source_derivatives_with, solve_green, BoundarySpec, DiscreteOperator, Grid, GridField, SourceDerivative};
use crate::{Complex64, Error, Point, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "LIPSTAB_CACHE_DIR";

/// The cache directory: the environment override if set, else `default`.
pub fn cache_dir(default: Option<PathBuf>) -> Option<PathBuf> {
    match std::env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => default,
    }
}

pub struct GreenProvider {
    pub pair: CoefficientPair,
    pub op: DiscreteOperator,
    key: String,
    disk: Option<PathBuf>,
    memory: Mutex<HashMap<usize, Arc<GridField>>>,
    solves: AtomicUsize,
    disk_hits: AtomicUsize,
}

impl std::fmt::Debug for GreenProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenProvider").field("key", &self.key).field("op", &self.op).finish()
    }
}

impl GreenProvider {
    /// Extend `pair` to `D₀`, build the Robin operator on an `n`-cell grid.
    pub fn new(pair: &CoefficientPair, aug: &AugmentedDomain, n: usize, disk: Option<PathBuf>) -> Result<Self> {
        let ext = pair.extend_to_d0(aug);
        let grid = Arc::new(Grid::for_augmented(aug, n)?);
        let op = assemble(&ext, grid.clone(), BoundarySpec::GreenRobin, None)?;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&ext)?);
        hasher.update(serde_json::to_vec(&(grid.origin, grid.dims, grid.h))?);
        hasher.update(b"green-robin-v1");
        let key = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        if let Some(d) = &disk {
            std::fs::create_dir_all(d)?;
        }
        Ok(GreenProvider {
            pair: ext,
            op,
            key,
            disk,
            memory: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
            disk_hits: AtomicUsize::new(0),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.op.grid
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    /// Number of linear solves performed so far.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn disk_hits(&self) -> usize {
        self.disk_hits.load(Ordering::Relaxed)
    }

    fn path(&self, cell: usize) -> Option<PathBuf> {
        self.disk.as_ref().map(|d| d.join(format!("{}-{cell}.bin", &self.key[..32])))
    }

    fn load(&self, cell: usize) -> Option<GridField> {
        let path = self.path(cell)?;
        let dump = read_field(&path).ok()?;
        let g = self.grid();
        if dump.dims != g.dims || dump.h != g.h {
            return None;
        }
        let values: Option<Vec<Complex64>> = g.cells.iter().map(|&c| dump.values.get(c).copied().flatten()).collect();
        values.map(|values| GridField { grid: g.clone(), values })
    }

    /// `G(·, y)` for a source at a cell centre.
    pub fn green(&self, y: &Point) -> Result<Arc<GridField>> {
        let g = self.grid();
        if !g.is_center(y) {
            return Err(Error::Grid(format!("source {:?} is not a cell centre", y.0)));
        }
        let cell = g.cell_of(y).unwrap();
        if let Some(f) = self.memory.lock().unwrap().get(&cell) {
            return Ok(f.clone());
        }
        let field = match self.load(cell) {
            Some(f) => {
                self.disk_hits.fetch_add(1, Ordering::Relaxed);
                f
            }
            None => {
                let f = solve_green(&self.op, y)?.field;
                self.solves.fetch_add(1, Ordering::Relaxed);
                if let Some(p) = self.path(cell) {
                    // Write to a temporary name first so readers never see partial files.
                    let tmp = p.with_extension(format!("tmp{}", std::process::id()));
                    write_field(&tmp, &f)?;
                    std::fs::rename(&tmp, &p)?;
                }
                f
            }
        };
        let field = Arc::new(field);
        self.memory.lock().unwrap().entry(cell).or_insert_with(|| field.clone());
        Ok(field)
    }

    /// Solve for several sources in parallel.
    pub fn prefetch(&self, ys: &[Point]) -> Result<()> {
        ys.par_iter().map(|y| self.green(y).map(|_| ())).collect()
    }

    /// Finite-difference source derivative with step `h`, reusing cached fields.
    pub fn derivative(&self, y: &Point, d: SourceDerivative) -> Result<GridField> {
        let h = self.grid().h;
        let need = (d.order() as f64 + 1.0) * h;
        let cl = clearance(&self.pair, y);
        if cl < need * (1.0 - 1e-9) {
            return Err(Error::Grid(format!("source needs {} cells of clearance, has {:.2}", d.order() + 1, cl / h)));
        }
        let mut v = green_source_derivatives_with(y, h, &[d], |s| self.green(s).map(|f| (*f).clone()))?;
        Ok(v.remove(0))
    }

    /// Drop the in-memory fields.
    pub fn clear_memory(&self) {
        self.memory.lock().unwrap().clear();
    }
}
