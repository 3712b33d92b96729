//! Uniform-grid point index for exact nearest-neighbor queries.

use std::collections::BinaryHeap;

use nalgebra::Vector3;

pub struct PointIndex<'a> {
    points: &'a [Vector3<f64>],
    min: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    /// Cell start offsets into `order`, one extra entry at the end.
    starts: Vec<usize>,
    order: Vec<usize>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> PointIndex<'a> {
    /// Builds the index. `points` must be nonempty and finite.
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        assert!(!points.is_empty(), "point index over an empty set");
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let extent = max - min;
        let largest = extent.max().max(1e-12);
        // About two points per cell, measured on the box with degenerate axes
        // thickened so flat sets still get a sensible cell size.
        let floor = largest * 1e-3;
        let volume: f64 = extent.iter().map(|e| e.max(floor)).product();
        let cell = (2.0 * volume / points.len() as f64).cbrt().max(largest * 1e-4);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).min(1 << 10));
        let mut index = PointIndex {
            points,
            min,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let ncells = dims.iter().product::<usize>();
        let keys: Vec<usize> = points.iter().map(|p| index.flat(index.cell_of(p))).collect();
        let mut counts = vec![0usize; ncells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for c in 0..ncells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        index.starts = counts;
        index.order = order;
        index
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.min[a]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Index and squared distance of the point nearest to `q`. Ties resolve to the
    /// lowest index.
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, |i, d2| {
            if d2 < best.1 || (d2 == best.1 && i < best.0) {
                best = (i, d2);
            }
            best.1
        });
        best
    }

    /// The `k` nearest points as `(index, squared distance)`, closest first.
    pub fn knn(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(q, |i, d2| {
            if heap.len() < k {
                heap.push(Candidate(d2, i));
            } else if let Some(top) = heap.peek() {
                if Candidate(d2, i) < *top {
                    heap.pop();
                    heap.push(Candidate(d2, i));
                }
            }
            if heap.len() < k {
                f64::INFINITY
            } else {
                heap.peek().map_or(f64::INFINITY, |c| c.0)
            }
        });
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.1, c.0)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Visits cells in shells of growing Chebyshev radius around the query cell.
    /// `visit` returns the current pruning radius squared; the search stops once
    /// every unvisited cell is provably farther.
    fn search(&self, q: &Vector3<f64>, mut visit: impl FnMut(usize, f64) -> f64) {
        let c = self.cell_of(q);
        let reach = *self.dims.iter().max().unwrap_or(&1);
        let mut bound = f64::INFINITY;
        for r in 0..=reach {
            let lo = c.map(|x| x as isize - r as isize);
            let hi = c.map(|x| x as isize + r as isize);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    let on_shell_yz = z == lo[2] || z == hi[2] || y == lo[1] || y == hi[1];
                    let xs: Vec<isize> = if on_shell_yz {
                        (lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1)).collect()
                    } else {
                        [lo[0], hi[0]]
                            .into_iter()
                            .filter(|&x| x >= 0 && x < self.dims[0] as isize)
                            .collect()
                    };
                    for x in xs {
                        let cell = self.flat([x as usize, y as usize, z as usize]);
                        for &i in &self.order[self.starts[cell]..self.starts[cell + 1]] {
                            bound = visit(i, (self.points[i] - q).norm_squared());
                        }
                    }
                }
            }
            let reached = r as f64 * self.cell;
            if bound <= reached * reached {
                break;
            }
        }
    }
}
