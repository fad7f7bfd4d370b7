//! Planar occupancy grids and their Euclidean signed distance fields.
//!
//! Cell `(i, j)` covers `[origin + i*res, origin + (i+1)*res)` along x (and
//! likewise along y); distances are stored at cell centers. Free cells hold the
//! distance to the nearest occupied cell center, occupied cells the negated
//! distance to the nearest free cell center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Free-space distances are capped at this value (meters).
pub const DISTANCE_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        Self::from_cells(width, height, resolution, origin, vec![false; width * height])
    }

    /// `occupied` is row-major with x varying fastest.
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: [f64; 2],
        occupied: Vec<bool>,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 2x2 cells, got {width}x{height}"
            )));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidGrid(format!("resolution must be positive, got {resolution}")));
        }
        if occupied.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "expected {} cells, got {}",
                width * height,
                occupied.len()
            )));
        }
        Ok(Self { width, height, resolution, origin, occupied })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occupied[self.index(i, j)]
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, value: bool) {
        let idx = self.index(i, j);
        self.occupied[idx] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    /// World-frame extent `[xmin, ymin, xmax, ymax]`.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.width as f64 * self.resolution,
            self.origin[1] + self.height as f64 * self.resolution,
        ]
    }

    /// Plain-text dump: a header line followed by one row per y (top row first),
    /// `#` for occupied and `.` for free.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "SCTGRID {} {} {} {} {}\n",
            self.width, self.height, self.resolution, self.origin[0], self.origin[1]
        );
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                out.push(if self.is_occupied(i, j) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::InvalidGrid("empty dump".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "SCTGRID" {
            return Err(Error::InvalidGrid(format!("bad header: {header:?}")));
        }
        let parse_err = |what: &str| Error::InvalidGrid(format!("bad {what} in header"));
        let width: usize = fields[1].parse().map_err(|_| parse_err("width"))?;
        let height: usize = fields[2].parse().map_err(|_| parse_err("height"))?;
        let resolution: f64 = fields[3].parse().map_err(|_| parse_err("resolution"))?;
        let ox: f64 = fields[4].parse().map_err(|_| parse_err("origin"))?;
        let oy: f64 = fields[5].parse().map_err(|_| parse_err("origin"))?;
        let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
        if rows.len() != height {
            return Err(Error::InvalidGrid(format!("expected {height} rows, got {}", rows.len())));
        }
        let mut occupied = vec![false; width * height];
        for (r, row) in rows.iter().enumerate() {
            let j = height - 1 - r;
            if row.chars().count() != width {
                return Err(Error::InvalidGrid(format!("row {r} has wrong width")));
            }
            for (i, c) in row.chars().enumerate() {
                occupied[j * width + i] = match c {
                    '#' => true,
                    '.' => false,
                    other => return Err(Error::InvalidGrid(format!("unexpected cell {other:?}"))),
                };
            }
        }
        Self::from_cells(width, height, resolution, [ox, oy], occupied)
    }
}

/// Axis-aligned obstacle rectangle in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    #[serde(default)]
    pub name: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(name: &str, min: [f64; 2], max: [f64; 2]) -> Self {
        Self { name: name.to_string(), min, max }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] < self.max[0] && p[1] >= self.min[1] && p[1] < self.max[1]
    }
}

/// Environment description, stored as JSON next to experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(default)]
    pub name: String,
    pub width_m: f64,
    pub height_m: f64,
    pub resolution: f64,
    pub origin: [f64; 2],
    #[serde(default)]
    pub obstacles: Vec<Rect>,
}

impl EnvironmentSpec {
    /// 8 m x 6 m room: a wall along the left side, a wall along the bottom and
    /// a 2.0 m x 0.6 m patient table in the middle. The robot rail runs along
    /// y = -2 m.
    pub fn operating_room() -> Self {
        Self {
            name: "operating-room".into(),
            width_m: 8.0,
            height_m: 6.0,
            resolution: 0.05,
            origin: [-4.0, -4.0],
            obstacles: vec![
                Rect::new("left-wall", [-4.0, -4.0], [-3.8, 2.0]),
                Rect::new("bottom-wall", [-4.0, -4.0], [4.0, -3.8]),
                Rect::new("table", [-1.0, -1.3], [1.0, -0.7]),
            ],
        }
    }

    /// Same room without obstacles.
    pub fn empty_room() -> Self {
        Self { name: "empty".into(), obstacles: Vec::new(), ..Self::operating_room() }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "default" | "operating-room" => Ok(Self::operating_room()),
            "empty" => Ok(Self::empty_room()),
            other => Err(Error::InvalidEnvironment(format!("unknown built-in layout {other:?}"))),
        }
    }

    /// Rasterize: a cell is occupied iff its center lies inside a rectangle
    /// (half-open on the max side).
    pub fn rasterize(&self) -> Result<OccupancyGrid> {
        let res = self.resolution;
        if !(res > 0.0) {
            return Err(Error::InvalidEnvironment("resolution must be positive".into()));
        }
        let width = (self.width_m / res).round() as usize;
        let height = (self.height_m / res).round() as usize;
        let mut grid = OccupancyGrid::new(width, height, res, self.origin)?;
        let [xmin, ymin, xmax, ymax] = grid.bounds();
        let eps = 1e-9;
        for rect in &self.obstacles {
            if !(rect.max[0] > rect.min[0] && rect.max[1] > rect.min[1]) {
                return Err(Error::InvalidEnvironment(format!(
                    "rectangle {:?} has zero or negative area",
                    rect.name
                )));
            }
            if rect.min[0] < xmin - eps
                || rect.min[1] < ymin - eps
                || rect.max[0] > xmax + eps
                || rect.max[1] > ymax + eps
            {
                return Err(Error::InvalidEnvironment(format!(
                    "rectangle {:?} extends outside the room",
                    rect.name
                )));
            }
            for j in 0..height {
                for i in 0..width {
                    if rect.contains(grid.cell_center(i, j)) {
                        grid.set_occupied(i, j, true);
                    }
                }
            }
        }
        Ok(grid)
    }
}

/// Result of a point query against the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceQuery {
    pub distance: f64,
    /// Gradient of the bilinear interpolant at the (clamped) query point.
    pub gradient: [f64; 2],
    /// The query point was outside the map and got clamped to its boundary.
    pub out_of_map: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceGradient {
    pub vector: [f64; 2],
    /// At least one axis fell back to a one-sided difference near the map edge.
    pub one_sided: bool,
}

/// Euclidean signed distance field over the cell centers of an [`OccupancyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Esdf {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    distance: Vec<f64>,
}

/// 1-D squared Euclidean distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    // Skip leading sites at infinity; parabolas rooted at +inf never win.
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(p) => p,
        None => {
            d.iter_mut().for_each(|x| *x = f64::INFINITY);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in (first + 1)..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Squared distance (in cells) from every cell to the nearest site.
fn squared_edt(sites: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    // Columns first, then rows.
    for i in 0..width {
        for j in 0..height {
            f[j] = grid[j * width + i];
        }
        edt_1d(&f[..height], &mut d[..height], &mut v[..height], &mut z[..height + 1]);
        for j in 0..height {
            grid[j * width + i] = d[j];
        }
    }
    for j in 0..height {
        f[..width].copy_from_slice(&grid[j * width..(j + 1) * width]);
        edt_1d(&f[..width], &mut d[..width], &mut v[..width], &mut z[..width + 1]);
        grid[j * width..(j + 1) * width].copy_from_slice(&d[..width]);
    }
    grid
}

impl Esdf {
    pub fn build(grid: &OccupancyGrid) -> Result<Self> {
        let (w, h, res) = (grid.width(), grid.height(), grid.resolution());
        let cells = grid.cells();
        if cells.iter().all(|&o| o) {
            return Err(Error::NoFreeSpace);
        }
        let to_occupied = squared_edt(cells, w, h);
        let free: Vec<bool> = cells.iter().map(|&o| !o).collect();
        let to_free = squared_edt(&free, w, h);
        let distance = cells
            .iter()
            .zip(to_occupied.iter().zip(to_free.iter()))
            .map(|(&occ, (&d_occ, &d_free))| {
                if occ {
                    -(d_free.sqrt() * res)
                } else if d_occ.is_finite() {
                    (d_occ.sqrt() * res).min(DISTANCE_CAP)
                } else {
                    DISTANCE_CAP
                }
            })
            .collect();
        Ok(Self { width: w, height: h, resolution: res, origin: grid.origin(), distance })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_distance(&self, i: usize, j: usize) -> f64 {
        self.distance[j * self.width + i]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    /// Bilinear interpolation between the four surrounding cell centers, with
    /// the interpolant's gradient. Points outside the map are clamped to it.
    pub fn query(&self, p: [f64; 2]) -> DistanceQuery {
        let res = self.resolution;
        let xmax = self.origin[0] + self.width as f64 * res;
        let ymax = self.origin[1] + self.height as f64 * res;
        let px = p[0].clamp(self.origin[0], xmax);
        let py = p[1].clamp(self.origin[1], ymax);
        let out_of_map = px != p[0] || py != p[1] || !p[0].is_finite() || !p[1].is_finite();

        let (i0, fx, gx_active) = Self::axis(px, self.origin[0], res, self.width);
        let (j0, fy, gy_active) = Self::axis(py, self.origin[1], res, self.height);
        let w = self.width;
        let d00 = self.distance[j0 * w + i0];
        let d10 = self.distance[j0 * w + i0 + 1];
        let d01 = self.distance[(j0 + 1) * w + i0];
        let d11 = self.distance[(j0 + 1) * w + i0 + 1];
        let bottom = d00 + fx * (d10 - d00);
        let top = d01 + fx * (d11 - d01);
        let distance = bottom + fy * (top - bottom);
        let gx = if gx_active {
            ((1.0 - fy) * (d10 - d00) + fy * (d11 - d01)) / res
        } else {
            0.0
        };
        let gy = if gy_active { (top - bottom) / res } else { 0.0 };
        DistanceQuery { distance, gradient: [gx, gy], out_of_map }
    }

    /// Cell index of the lower interpolation corner and the fractional offset.
    /// The flag is false when the coordinate sits in the half-cell border where
    /// the interpolant is constant.
    #[inline]
    fn axis(coord: f64, origin: f64, res: f64, n: usize) -> (usize, f64, bool) {
        let u = (coord - origin) / res - 0.5;
        let max_lower = (n - 2) as f64;
        if u <= 0.0 {
            (0, 0.0, false)
        } else if u >= max_lower + 1.0 {
            (n - 2, 1.0, false)
        } else {
            let lower = u.floor().min(max_lower);
            (lower as usize, u - lower, true)
        }
    }

    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        self.query(p).distance
    }

    /// Central finite difference of [`Esdf::signed_distance`] with a step of one
    /// cell; falls back to one-sided differences within one cell of the edge.
    pub fn distance_gradient(&self, p: [f64; 2]) -> DistanceGradient {
        let h = self.resolution;
        let lo = [self.origin[0], self.origin[1]];
        let hi = [
            self.origin[0] + self.width as f64 * h,
            self.origin[1] + self.height as f64 * h,
        ];
        let mut vector = [0.0; 2];
        let mut one_sided = false;
        for axis in 0..2 {
            let mut plus = p;
            let mut minus = p;
            plus[axis] += h;
            minus[axis] -= h;
            let has_plus = plus[axis] <= hi[axis];
            let has_minus = minus[axis] >= lo[axis];
            vector[axis] = match (has_minus, has_plus) {
                (true, true) => (self.signed_distance(plus) - self.signed_distance(minus)) / (2.0 * h),
                (false, true) => {
                    one_sided = true;
                    (self.signed_distance(plus) - self.signed_distance(p)) / h
                }
                (true, false) => {
                    one_sided = true;
                    (self.signed_distance(p) - self.signed_distance(minus)) / h
                }
                (false, false) => {
                    one_sided = true;
                    0.0
                }
            };
        }
        DistanceGradient { vector, one_sided }
    }
}
