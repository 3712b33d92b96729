//! Quadratic B-spline interpolation kernel over a 3×3×3 node stencil.

use nalgebra::Vector3;

/// 1-D quadratic B-spline `N(x)` with support `|x| < 1.5` (x in cell units).
pub fn bspline_1d(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.5 {
        0.75 - a * a
    } else if a < 1.5 {
        0.5 * (1.5 - a) * (1.5 - a)
    } else {
        0.0
    }
}

/// Weights and weight gradients of one particle over its 27 stencil nodes.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    /// Index of the lowest stencil node along each axis.
    pub base: [usize; 3],
    /// Per-axis weights, `w[axis][k]` for node `base[axis] + k`.
    pub w: [[f64; 3]; 3],
    /// Per-axis weight derivatives in 1/m.
    pub dw: [[f64; 3]; 3],
}

impl Stencil {
    /// Computes the stencil of `pos` for a grid with `origin`, spacing `dx` and `dims` nodes.
    ///
    /// Returns `None` when the particle is closer than 1.5 cells to the grid boundary.
    pub fn new(pos: &Vector3<f64>, origin: &Vector3<f64>, dx: f64, dims: [usize; 3]) -> Option<Self> {
        let inv_dx = 1.0 / dx;
        let mut base = [0usize; 3];
        let mut w = [[0.0; 3]; 3];
        let mut dw = [[0.0; 3]; 3];
        for axis in 0..3 {
            let xi = (pos[axis] - origin[axis]) * inv_dx;
            let upper = (dims[axis] as f64 - 1.0) - 1.5;
            if !(xi >= 1.5 && xi <= upper) {
                return None;
            }
            let b = (xi - 0.5).floor();
            let fx = xi - b;
            base[axis] = b as usize;
            w[axis] = [
                0.5 * (1.5 - fx) * (1.5 - fx),
                0.75 - (fx - 1.0) * (fx - 1.0),
                0.5 * (fx - 0.5) * (fx - 0.5),
            ];
            dw[axis] = [
                (fx - 1.5) * inv_dx,
                -2.0 * (fx - 1.0) * inv_dx,
                (fx - 0.5) * inv_dx,
            ];
        }
        Some(Stencil { base, w, dw })
    }

    /// Weight of stencil node `(a, b, c)`.
    #[inline]
    pub fn weight(&self, a: usize, b: usize, c: usize) -> f64 {
        self.w[0][a] * (self.w[1][b] * self.w[2][c])
    }

    /// Spatial gradient of the weight of stencil node `(a, b, c)`.
    #[inline]
    pub fn gradient(&self, a: usize, b: usize, c: usize) -> Vector3<f64> {
        Vector3::new(
            self.dw[0][a] * (self.w[1][b] * self.w[2][c]),
            self.w[0][a] * (self.dw[1][b] * self.w[2][c]),
            self.w[0][a] * (self.w[1][b] * self.dw[2][c]),
        )
    }

    /// Calls `f(node_ijk, weight, gradient)` for the 27 stencil nodes in the same order
    /// as [`Stencil::nodes`].
    #[inline]
    pub fn for_each_node(&self, mut f: impl FnMut([usize; 3], f64, Vector3<f64>)) {
        for c in 0..3 {
            for b in 0..3 {
                let wbc = self.w[1][b] * self.w[2][c];
                let dbc = self.dw[1][b] * self.w[2][c];
                let bdc = self.w[1][b] * self.dw[2][c];
                for a in 0..3 {
                    let wa = self.w[0][a];
                    f(
                        [self.base[0] + a, self.base[1] + b, self.base[2] + c],
                        wa * wbc,
                        Vector3::new(self.dw[0][a] * wbc, wa * dbc, wa * bdc),
                    );
                }
            }
        }
    }

    /// Iterates `(node_ijk, weight, gradient)` over the 27 stencil nodes, x fastest.
    pub fn nodes(&self) -> impl Iterator<Item = ([usize; 3], f64, Vector3<f64>)> + '_ {
        (0..3).flat_map(move |c| {
            (0..3).flat_map(move |b| {
                (0..3).map(move |a| {
                    (
                        [self.base[0] + a, self.base[1] + b, self.base[2] + c],
                        self.weight(a, b, c),
                        self.gradient(a, b, c),
                    )
                })
            })
        })
    }
}
