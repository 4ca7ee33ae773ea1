use crate::model::compute_epsilon;
use crate::{Error, NetworkParams, Result};

/// Cell grid of the simulator: a torus of `m x m` cells split into
/// `epsilon^2` lattice groups that take turns being active.
#[derive(Debug, Clone)]
pub struct Layout {
    pub m: usize,
    pub epsilon: usize,
    groups: Vec<GroupMap>,
}

#[derive(Debug, Clone)]
struct GroupMap {
    cells: Vec<usize>,
    /// For each grid cell, the index of the active cell it is (if any).
    active_index: Vec<Option<u32>>,
    /// For each grid cell, the active cells whose coverage contains it.
    covered_by: Vec<Vec<u32>>,
    /// Every cell covered by some active cell.
    region: Vec<usize>,
}

impl Layout {
    pub fn new(params: &NetworkParams) -> Result<Self> {
        let geometry = compute_epsilon(params)?;
        let (m, eps) = (params.m, geometry.epsilon);
        let per_axis = m / eps;
        if per_axis * per_axis != geometry.cells_per_group {
            return Err(Error::InvalidParams(format!(
                "simulator needs floor(m/eps)^2 == floor(m^2/eps^2); m = {m}, eps = {eps} \
                 gives {} lattice cells per group against K = {}",
                per_axis * per_axis,
                geometry.cells_per_group
            )));
        }
        let reach = params.nu as isize - 1;
        let mut groups = Vec::with_capacity(eps * eps);
        for gx in 0..eps {
            for gy in 0..eps {
                let mut cells = Vec::with_capacity(per_axis * per_axis);
                for i in 0..per_axis {
                    for j in 0..per_axis {
                        cells.push((gx + i * eps) * m + gy + j * eps);
                    }
                }
                let mut active_index = vec![None; m * m];
                let mut covered_by = vec![Vec::new(); m * m];
                for (idx, &cell) in cells.iter().enumerate() {
                    active_index[cell] = Some(idx as u32);
                    let (x, y) = ((cell / m) as isize, (cell % m) as isize);
                    for dx in -reach..=reach {
                        for dy in -reach..=reach {
                            let cx = (x + dx).rem_euclid(m as isize) as usize;
                            let cy = (y + dy).rem_euclid(m as isize) as usize;
                            covered_by[cx * m + cy].push(idx as u32);
                        }
                    }
                }
                let region = (0..m * m).filter(|&c| !covered_by[c].is_empty()).collect();
                groups.push(GroupMap {
                    cells,
                    active_index,
                    covered_by,
                    region,
                });
            }
        }
        Ok(Self {
            m,
            epsilon: eps,
            groups,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.m * self.m
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Group active in `slot` (fixed round-robin).
    pub fn active_group(&self, slot: u64) -> usize {
        (slot % self.groups.len() as u64) as usize
    }

    pub fn group_cells(&self, group: usize) -> &[usize] {
        &self.groups[group].cells
    }

    pub fn active_index(&self, group: usize, cell: usize) -> Option<usize> {
        self.groups[group].active_index[cell].map(|i| i as usize)
    }

    pub fn covered_by(&self, group: usize, cell: usize) -> &[u32] {
        &self.groups[group].covered_by[cell]
    }

    /// Cells where a node takes part in the active group's scheduling. The
    /// same size for every group.
    pub fn region(&self, group: usize) -> &[usize] {
        &self.groups[group].region
    }

    /// Probability that a uniformly placed node lands in the active region.
    pub fn region_fraction(&self) -> f64 {
        self.groups[0].region.len() as f64 / self.cell_count() as f64
    }

    /// Toroidal Chebyshev distance between two cells.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let axis = |u: usize, v: usize| {
            let d = u.abs_diff(v);
            d.min(self.m - d)
        };
        axis(a / self.m, b / self.m).max(axis(a % self.m, b % self.m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(m: usize, nu: usize) -> Layout {
        Layout::new(&NetworkParams::new(10, m, nu, 1.0, 1, 0.0)).unwrap()
    }

    #[test]
    fn groups_partition_lattice() {
        let l = layout(8, 1);
        assert_eq!(l.group_count(), 16);
        let mut seen = vec![0; 64];
        for g in 0..l.group_count() {
            assert_eq!(l.group_cells(g).len(), 4);
            for &c in l.group_cells(g) {
                seen[c] += 1;
            }
            for &a in l.group_cells(g) {
                for &b in l.group_cells(g) {
                    if a != b {
                        assert!(l.distance(a, b) >= l.epsilon);
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn coverage_has_l_cells() {
        let l = layout(16, 2);
        assert_eq!(l.epsilon, 8);
        for g in 0..l.group_count() {
            let mut count = vec![0; l.group_cells(g).len()];
            for cell in 0..l.cell_count() {
                for &a in l.covered_by(g, cell) {
                    count[a as usize] += 1;
                    assert!(l.distance(cell, l.group_cells(g)[a as usize]) <= 1);
                }
            }
            assert!(count.iter().all(|&c| c == 9));
            assert_eq!(l.region(g).len(), 4 * 9);
        }
        assert!((l.region_fraction() - 36.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn clamped_epsilon_single_cell_groups() {
        let l = layout(2, 1);
        assert_eq!(l.group_count(), 4);
        assert!((0..4).all(|g| l.group_cells(g).len() == 1));
        assert_eq!(l.active_group(5), 1);
    }

    #[test]
    fn uneven_grid_still_lattice() {
        // m = 5, eps = 4: one active cell per slot, cells outside the
        // 4x4 lattice block are never scheduled.
        let l = layout(5, 1);
        assert_eq!(l.group_count(), 16);
        assert!((0..16).all(|g| l.group_cells(g).len() == 1));
    }

    #[test]
    fn rejects_mismatched_group_size() {
        // eps = 4, K = floor(36/16) = 2 but only one lattice cell fits.
        assert!(Layout::new(&NetworkParams::new(10, 6, 1, 1.0, 1, 0.0)).is_err());
    }
}
