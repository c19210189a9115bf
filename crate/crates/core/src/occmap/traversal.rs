/// One voxel crossed by a ray, with the ray parameters (meters) at which the
/// ray enters and leaves it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Visit {
    pub cell: [usize; 3],
    pub index: usize,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Incremental voxel traversal (Amanatides & Woo) over a dense grid.
///
/// Plane-crossing parameters are evaluated as `(k - g0) * inv` for grid plane
/// `k`, never accumulated, so every crossing is reproducible from the ray
/// origin alone.
pub struct GridRay {
    g0: [f64; 3],
    inv: [f64; 3],
    cell: [i64; 3],
    step: [i64; 3],
    t_max: [f64; 3],
    /// Crossing after `t_max` on each axis, computed ahead of use.
    t_after: [f64; 3],
    /// Grid plane index of `t_max` on each axis.
    plane: [i64; 3],
    dims: [i64; 3],
    index: i64,
    stride: [i64; 3],
    t: f64,
    done: bool,
}

impl GridRay {
    /// `origin` is in grid units (voxel edge = 1); `dir` is a world-frame
    /// unit vector and `resolution` the voxel edge in meters, so that yielded
    /// parameters are distances in meters. Returns `None` when the ray never
    /// enters the grid.
    pub fn new(origin: [f64; 3], dir: [f64; 3], resolution: f64, dims: [usize; 3]) -> Option<Self> {
        let dims = dims.map(|d| d as i64);
        let mut inv = [0.0; 3];
        let mut step = [0i64; 3];
        for i in 0..3 {
            let dg = dir[i] / resolution;
            if dg > 0.0 {
                step[i] = 1;
                inv[i] = 1.0 / dg;
            } else if dg < 0.0 {
                step[i] = -1;
                inv[i] = 1.0 / dg;
            } else {
                inv[i] = f64::INFINITY;
            }
        }

        // Clip to the grid box when starting outside.
        let mut t_start = 0.0f64;
        let mut t_end = f64::INFINITY;
        for i in 0..3 {
            if step[i] == 0 {
                if origin[i] < 0.0 || origin[i] >= dims[i] as f64 {
                    return None;
                }
                continue;
            }
            let a = (0.0 - origin[i]) * inv[i];
            let b = (dims[i] as f64 - origin[i]) * inv[i];
            t_start = t_start.max(a.min(b));
            t_end = t_end.min(a.max(b));
        }
        if t_start >= t_end {
            return None;
        }

        let mut cell = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_after = [f64::INFINITY; 3];
        let mut plane = [0i64; 3];
        for i in 0..3 {
            let p = if t_start > 0.0 && step[i] != 0 {
                origin[i] + t_start * dir[i] / resolution
            } else {
                origin[i]
            };
            cell[i] = (p.floor() as i64).clamp(0, dims[i] - 1);
            if step[i] != 0 {
                plane[i] = if step[i] > 0 { cell[i] + 1 } else { cell[i] };
                t_max[i] = (plane[i] as f64 - origin[i]) * inv[i];
                t_after[i] = ((plane[i] + step[i]) as f64 - origin[i]) * inv[i];
            }
        }
        let stride = [step[0], step[1] * dims[0], step[2] * dims[0] * dims[1]];
        let index = cell[0] + dims[0] * (cell[1] + dims[1] * cell[2]);
        Some(Self { g0: origin, inv, cell, step, t_max, t_after, plane, dims, index, stride, t: t_start, done: false })
    }
}

impl GridRay {
    #[inline(always)]
    fn advance<const A: usize>(&mut self, t_exit: f64) {
        let c = self.cell[A] + self.step[A];
        if c < 0 || c >= self.dims[A] || !t_exit.is_finite() {
            self.done = true;
        } else {
            self.cell[A] = c;
            self.index += self.stride[A];
            self.t_max[A] = self.t_after[A];
            let p = self.plane[A] + self.step[A];
            self.plane[A] = p;
            self.t_after[A] = ((p + self.step[A]) as f64 - self.g0[A]) * self.inv[A];
        }
    }
}

impl Iterator for GridRay {
    type Item = Visit;

    #[inline]
    fn next(&mut self) -> Option<Visit> {
        if self.done {
            return None;
        }
        // Branch-free argmin; ties go to the lower axis.
        let a01 = (self.t_max[1] < self.t_max[0]) as usize;
        let axis = if self.t_max[2] < self.t_max[a01] { 2 } else { a01 };
        let t_exit = self.t_max[axis];
        let visit = Visit {
            cell: self.cell.map(|c| c as usize),
            index: self.index as usize,
            t_enter: self.t,
            t_exit,
        };

        self.t = t_exit;
        match axis {
            0 => self.advance::<0>(t_exit),
            1 => self.advance::<1>(t_exit),
            _ => self.advance::<2>(t_exit),
        }
        Some(visit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_walk() {
        let cells: Vec<_> = GridRay::new([0.5, 0.5, 0.5], [1.0, 0.0, 0.0], 1.0, [4, 1, 1])
            .unwrap()
            .map(|v| (v.cell[0], v.t_enter, v.t_exit))
            .collect();
        assert_eq!(cells, vec![(0, 0.0, 0.5), (1, 0.5, 1.5), (2, 1.5, 2.5), (3, 2.5, 3.5)]);
    }

    #[test]
    fn negative_direction_and_resolution() {
        let cells: Vec<_> = GridRay::new([2.5, 0.5, 0.5], [-1.0, 0.0, 0.0], 0.1, [4, 1, 1])
            .unwrap()
            .map(|v| v.cell[0])
            .collect();
        assert_eq!(cells, vec![2, 1, 0]);
        let last = GridRay::new([2.5, 0.5, 0.5], [-1.0, 0.0, 0.0], 0.1, [4, 1, 1]).unwrap().last().unwrap();
        assert!((last.t_exit - 0.25).abs() < 1e-12);
    }

    #[test]
    fn enters_from_outside() {
        let first = GridRay::new([-2.0, 0.5, 0.5], [1.0, 0.0, 0.0], 1.0, [3, 1, 1]).unwrap().next().unwrap();
        assert_eq!(first.cell, [0, 0, 0]);
        assert!((first.t_enter - 2.0).abs() < 1e-12);
        assert!(GridRay::new([-2.0, 0.5, 0.5], [-1.0, 0.0, 0.0], 1.0, [3, 1, 1]).is_none());
    }

    #[test]
    fn diagonal_visits_are_face_connected() {
        let visits: Vec<_> = GridRay::new([0.2, 0.7, 0.1], [0.6, 0.48, 0.64], 1.0, [8, 8, 8]).unwrap().collect();
        for w in visits.windows(2) {
            let diff: i64 = (0..3).map(|i| (w[0].cell[i] as i64 - w[1].cell[i] as i64).abs()).sum();
            assert_eq!(diff, 1);
            assert_eq!(w[0].t_exit, w[1].t_enter);
        }
    }
}
