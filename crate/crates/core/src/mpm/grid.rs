use nalgebra::Vector3;

use super::config::SimConfig;

/// Background Eulerian grid; node `(i, j, k)` sits at `origin + dx * (i, j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub dx: f64,
    pub origin: Vector3<f64>,
    pub node_mass: Vec<f64>,
    pub node_momentum: Vec<Vector3<f64>>,
    pub node_velocity: Vec<Vector3<f64>>,
    /// Block outside of which all node values are known to be zero; `None` when unknown.
    pub active: Option<Region>,
}

/// Axis-aligned block of grid nodes `lo .. lo + dims`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub lo: [usize; 3],
    pub dims: [usize; 3],
}

impl Region {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major (x fastest) index of global node `ijk` within the block.
    #[inline]
    pub fn local(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] - self.lo[0]) + self.dims[0] * ((ijk[1] - self.lo[1]) + self.dims[1] * (ijk[2] - self.lo[2]))
    }

    #[inline]
    pub fn global(&self, local: usize) -> [usize; 3] {
        let i = local % self.dims[0];
        let j = (local / self.dims[0]) % self.dims[1];
        let k = local / (self.dims[0] * self.dims[1]);
        [self.lo[0] + i, self.lo[1] + j, self.lo[2] + k]
    }
}

impl Grid {
    pub fn new(dims: [usize; 3], dx: f64, origin: Vector3<f64>) -> Self {
        let n = dims.iter().product();
        Grid {
            dims,
            dx,
            origin,
            node_mass: vec![0.0; n],
            node_momentum: vec![Vector3::zeros(); n],
            node_velocity: vec![Vector3::zeros(); n],
            active: Some(Region { lo: [0; 3], dims: [0; 3] }),
        }
    }

    pub fn for_config(config: &SimConfig) -> Self {
        Grid::new(config.grid_dims, config.dx, config.origin())
    }

    pub fn node_count(&self) -> usize {
        self.node_mass.len()
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn node_position(&self, ijk: [usize; 3]) -> Vector3<f64> {
        self.origin + Vector3::new(ijk[0] as f64, ijk[1] as f64, ijk[2] as f64) * self.dx
    }

    pub fn clear(&mut self) {
        self.node_mass.iter_mut().for_each(|m| *m = 0.0);
        self.node_momentum.iter_mut().for_each(|p| *p = Vector3::zeros());
        self.node_velocity.iter_mut().for_each(|v| *v = Vector3::zeros());
        self.active = Some(Region { lo: [0; 3], dims: [0; 3] });
    }

    /// Zeroes the nodes that may hold data.
    pub fn clear_active(&mut self) {
        match self.active {
            None => self.clear(),
            Some(r) => {
                for local in 0..r.len() {
                    let idx = self.index(r.global(local));
                    self.node_mass[idx] = 0.0;
                    self.node_momentum[idx] = Vector3::zeros();
                    self.node_velocity[idx] = Vector3::zeros();
                }
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.node_mass.iter().sum()
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        self.node_momentum.iter().sum()
    }
}
