//! Response-field geometry on latent planes: grids, divergence, and mean
//! curvature.
//!
//! All maps live on a square grid over a 2-D slice of the latent space. The
//! two in-plane components of the response field are treated as a planar
//! vector field; derivatives use central differences on interior nodes and
//! one-sided differences on the edges (both exact for linear fields).

use std::io::{BufRead, Write};

use crate::nn::Matrix;
use crate::response::response_field;
use crate::vae::VaeModel;
use crate::{Error, Result};

/// The response field evaluated on a square grid over a latent plane.
///
/// The plane varies latent coordinates `dims.0` (the x axis) and `dims.1`
/// (the y axis); all other coordinates are pinned to `anchor`. Node `(ix,
/// iy)` sits at `(coord(ix), coord(iy))` with `coord(i) = lo + i * step`.
#[derive(Debug, Clone)]
pub struct ResponseGrid {
    dims: (usize, usize),
    anchor: Vec<f64>,
    lo: f64,
    hi: f64,
    resolution: usize,
    /// In-plane field components, stored as `(iy, ix)`.
    ux: Matrix,
    uy: Matrix,
    /// Full latent-space field norm `|u(z)|` (all coordinates, not just the
    /// in-plane pair), stored as `(iy, ix)`.
    unorm: Matrix,
}

impl ResponseGrid {
    /// Evaluates the response field of `model` on the grid.
    pub fn evaluate(
        model: &VaeModel,
        dims: (usize, usize),
        anchor: &[f64],
        lo: f64,
        hi: f64,
        resolution: usize,
    ) -> Result<Self> {
        let d = model.latent_dim();
        if anchor.len() != d {
            return Err(Error::shape(format!(
                "anchor has {} coordinates, model latent dim is {d}",
                anchor.len()
            )));
        }
        if anchor.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("anchor coordinates must be finite"));
        }
        if dims.0 >= d || dims.1 >= d {
            return Err(Error::invalid(format!(
                "slice dims ({}, {}) out of range for latent dim {d}",
                dims.0, dims.1
            )));
        }
        if dims.0 == dims.1 {
            return Err(Error::invalid("slice dims must differ"));
        }
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::invalid(format!("bad grid range [{lo}, {hi}]")));
        }
        if resolution < 3 {
            return Err(Error::invalid("grid needs at least 3 nodes per axis"));
        }

        let mut grid = ResponseGrid {
            dims,
            anchor: anchor.to_vec(),
            lo,
            hi,
            resolution,
            ux: Matrix::zeros(resolution, resolution),
            uy: Matrix::zeros(resolution, resolution),
            unorm: Matrix::zeros(resolution, resolution),
        };
        for iy in 0..resolution {
            for ix in 0..resolution {
                let z = grid.point(ix, iy);
                let u = response_field(model, &z);
                grid.ux[(iy, ix)] = u[dims.0];
                grid.uy[(iy, ix)] = u[dims.1];
                grid.unorm[(iy, ix)] = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
        }
        if !grid.ux.is_finite() || !grid.uy.is_finite() || !grid.unorm.is_finite() {
            return Err(Error::non_finite("response field is non-finite on the grid"));
        }
        Ok(grid)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.resolution - 1) as f64
    }

    /// Grid coordinate along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        assert!(i < self.resolution, "node index out of range");
        self.lo + i as f64 * self.step()
    }

    /// Full latent-space position of node `(ix, iy)`.
    pub fn point(&self, ix: usize, iy: usize) -> Vec<f64> {
        let mut z = self.anchor.clone();
        z[self.dims.0] = self.coord(ix);
        z[self.dims.1] = self.coord(iy);
        z
    }

    /// In-plane field components at node `(ix, iy)`.
    pub fn field_at(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.ux[(iy, ix)], self.uy[(iy, ix)])
    }

    /// Full latent-space field norm at node `(ix, iy)`.
    pub fn norm_at(&self, ix: usize, iy: usize) -> f64 {
        self.unorm[(iy, ix)]
    }

    /// The grid node closest to the in-plane position `(x, y)`, clamped to
    /// the grid.
    pub fn nearest_node(&self, x: f64, y: f64) -> (usize, usize) {
        let max = (self.resolution - 1) as f64;
        let ix = ((x - self.lo) / self.step()).round().clamp(0.0, max) as usize;
        let iy = ((y - self.lo) / self.step()).round().clamp(0.0, max) as usize;
        (ix, iy)
    }

    /// CSV of the in-plane field: metadata comments, then one `x,y,ux,uy`
    /// row per node.
    pub fn write_field_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let anchor: Vec<String> = self.anchor.iter().map(|v| v.to_string()).collect();
        writeln!(w, "# field: response")?;
        writeln!(w, "# dims: {} {}", self.dims.0, self.dims.1)?;
        writeln!(w, "# anchor: {}", anchor.join(" "))?;
        writeln!(w, "# range: {} {}", self.lo, self.hi)?;
        writeln!(w, "# resolution: {}", self.resolution)?;
        writeln!(w, "x,y,ux,uy")?;
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                writeln!(
                    w,
                    "{},{},{},{}",
                    self.coord(ix),
                    self.coord(iy),
                    self.ux[(iy, ix)],
                    self.uy[(iy, ix)]
                )?;
            }
        }
        Ok(())
    }
}

/// First derivative along x (columns) at `(iy, ix)`: central differences
/// inside, one-sided on the edges.
fn ddx(m: &Matrix, iy: usize, ix: usize, inv_step: f64) -> f64 {
    let last = m.cols() - 1;
    if ix == 0 {
        (m[(iy, 1)] - m[(iy, 0)]) * inv_step
    } else if ix == last {
        (m[(iy, last)] - m[(iy, last - 1)]) * inv_step
    } else {
        (m[(iy, ix + 1)] - m[(iy, ix - 1)]) * inv_step * 0.5
    }
}

/// First derivative along y (rows) at `(iy, ix)`.
fn ddy(m: &Matrix, iy: usize, ix: usize, inv_step: f64) -> f64 {
    let last = m.rows() - 1;
    if iy == 0 {
        (m[(1, ix)] - m[(0, ix)]) * inv_step
    } else if iy == last {
        (m[(last, ix)] - m[(last - 1, ix)]) * inv_step
    } else {
        (m[(iy + 1, ix)] - m[(iy - 1, ix)]) * inv_step * 0.5
    }
}

/// A scalar quantity on the nodes of a [`ResponseGrid`]. Cells can be
/// singular (the quantity is undefined there); singular cells hold no value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    name: String,
    dims: (usize, usize),
    lo: f64,
    hi: f64,
    resolution: usize,
    values: Matrix,
    singular: Vec<bool>,
}

impl ScalarMap {
    fn from_grid(grid: &ResponseGrid, name: &str) -> Self {
        let r = grid.resolution;
        ScalarMap {
            name: name.to_string(),
            dims: grid.dims,
            lo: grid.lo,
            hi: grid.hi,
            resolution: r,
            values: Matrix::zeros(r, r),
            singular: vec![false; r * r],
        }
    }

    /// Test-only constructor for synthetic maps with explicit cells.
    #[cfg(test)]
    pub(crate) fn synthetic(
        name: &str,
        grid: &ResponseGrid,
        values: Matrix,
        singular: Vec<bool>,
    ) -> Self {
        let r = grid.resolution;
        assert_eq!(values.rows(), r);
        assert_eq!(values.cols(), r);
        assert_eq!(singular.len(), r * r);
        ScalarMap {
            name: name.to_string(),
            dims: grid.dims,
            lo: grid.lo,
            hi: grid.hi,
            resolution: r,
            values,
            singular,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn coord(&self, i: usize) -> f64 {
        assert!(i < self.resolution, "node index out of range");
        self.lo + i as f64 * (self.hi - self.lo) / (self.resolution - 1) as f64
    }

    /// `Some(value)` at a regular node, `None` at a singular one.
    pub fn value(&self, ix: usize, iy: usize) -> Option<f64> {
        if self.singular[iy * self.resolution + ix] {
            None
        } else {
            Some(self.values[(iy, ix)])
        }
    }

    pub fn is_singular(&self, ix: usize, iy: usize) -> bool {
        self.singular[iy * self.resolution + ix]
    }

    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|&&s| s).count()
    }

    /// Values of all regular nodes.
    pub fn regular_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                if let Some(v) = self.value(ix, iy) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Extrema over the regular nodes, `None` when every node is singular.
    pub fn extrema(&self) -> Option<(f64, f64)> {
        let regular = self.regular_values();
        if regular.is_empty() {
            return None;
        }
        let min = regular.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = regular.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((min, max))
    }

    /// CSV: metadata comments (including `# min:`/`# max:` over the regular
    /// nodes, omitted when every node is singular), then one `x,y,value` row
    /// per node. Singular nodes leave the value field empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# map: {}", self.name)?;
        writeln!(w, "# dims: {} {}", self.dims.0, self.dims.1)?;
        writeln!(w, "# range: {} {}", self.lo, self.hi)?;
        writeln!(w, "# resolution: {}", self.resolution)?;
        if let Some((min, max)) = self.extrema() {
            writeln!(w, "# min: {min}")?;
            writeln!(w, "# max: {max}")?;
        }
        writeln!(w, "x,y,value")?;
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                match self.value(ix, iy) {
                    Some(v) => writeln!(w, "{},{},{v}", self.coord(ix), self.coord(iy))?,
                    None => writeln!(w, "{},{},", self.coord(ix), self.coord(iy))?,
                }
            }
        }
        Ok(())
    }

    /// Binary 8-bit PGM: regular values scale affinely from `[min, max]` to
    /// `[0, 255]` (a constant map renders mid-gray), singular cells render
    /// black. Row 0 of the image is the highest y coordinate.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let (min, max) = self
            .extrema()
            .ok_or_else(|| Error::invalid("map has no regular cells to render"))?;
        let r = self.resolution;
        writeln!(w, "P5\n{r} {r}\n255")?;
        let mut bytes = Vec::with_capacity(r * r);
        for iy in (0..r).rev() {
            for ix in 0..r {
                let byte = match self.value(ix, iy) {
                    None => 0u8,
                    Some(_) if max == min => 128,
                    Some(v) => ((v - min) / (max - min) * 255.0).round() as u8,
                };
                bytes.push(byte);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Divergence of the in-plane response field. Defined on every node.
pub fn divergence(grid: &ResponseGrid) -> ScalarMap {
    let mut map = ScalarMap::from_grid(grid, "divergence");
    let inv = 1.0 / grid.step();
    for iy in 0..grid.resolution {
        for ix in 0..grid.resolution {
            map.values[(iy, ix)] = ddx(&grid.ux, iy, ix, inv) + ddy(&grid.uy, iy, ix, inv);
        }
    }
    map
}

/// Norm of the full latent-space response field, `|u(z)|` over all
/// coordinates. Defined on every node.
pub fn field_norm(grid: &ResponseGrid) -> ScalarMap {
    let mut map = ScalarMap::from_grid(grid, "norm");
    map.values = grid.unorm.clone();
    map
}

/// Mean curvature of the response field's level geometry,
/// `H = -1/2 div(u / |u|)`.
///
/// The normalization uses the full latent-space norm floored at `eps`:
/// `n = u_plane / max(|u|, eps)`. The divergence is evaluated at every node,
/// but nodes where `|u| < eps` carry no reliable direction and are marked
/// singular.
pub fn mean_curvature(grid: &ResponseGrid, eps: f64) -> Result<ScalarMap> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::invalid(format!("eps must be finite and positive, got {eps}")));
    }
    let r = grid.resolution;
    let mut nx = Matrix::zeros(r, r);
    let mut ny = Matrix::zeros(r, r);
    let mut map = ScalarMap::from_grid(grid, "mean-curvature");
    for iy in 0..r {
        for ix in 0..r {
            let norm = grid.unorm[(iy, ix)].max(eps);
            nx[(iy, ix)] = grid.ux[(iy, ix)] / norm;
            ny[(iy, ix)] = grid.uy[(iy, ix)] / norm;
            map.singular[iy * r + ix] = grid.unorm[(iy, ix)] < eps;
        }
    }

    let inv = 1.0 / grid.step();
    for iy in 0..r {
        for ix in 0..r {
            // The floored direction field is defined everywhere, so the
            // stencil never needs special-casing; singular nodes simply
            // report no value.
            if !map.singular[iy * r + ix] {
                map.values[(iy, ix)] = -0.5 * (ddx(&nx, iy, ix, inv) + ddy(&ny, iy, ix, inv));
            }
        }
    }
    Ok(map)
}

/// Reads a [`ScalarMap`] written by [`ScalarMap::write_csv`], verifying the
/// `# min:`/`# max:` annotations against the cells when present.
pub fn read_scalar_map_csv<R: BufRead>(r: R) -> Result<ScalarMap> {
    let mut name = None;
    let mut dims = None;
    let mut range = None;
    let mut resolution = None;
    let mut announced_min: Option<f64> = None;
    let mut announced_max: Option<f64> = None;
    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut saw_header = false;

    let parse_err = |line: u64, msg: String| Error::Parse { line, msg };
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(meta) = text.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(v) = meta.strip_prefix("map:") {
                name = Some(v.trim().to_string());
            } else if let Some(v) = meta.strip_prefix("dims:") {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(parse_err(lineno, "dims needs two indices".into()));
                }
                let a = parts[0].parse().map_err(|e| parse_err(lineno, format!("bad dim: {e}")))?;
                let b = parts[1].parse().map_err(|e| parse_err(lineno, format!("bad dim: {e}")))?;
                dims = Some((a, b));
            } else if let Some(v) = meta.strip_prefix("range:") {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(parse_err(lineno, "range needs two bounds".into()));
                }
                let lo: f64 =
                    parts[0].parse().map_err(|e| parse_err(lineno, format!("bad bound: {e}")))?;
                let hi: f64 =
                    parts[1].parse().map_err(|e| parse_err(lineno, format!("bad bound: {e}")))?;
                range = Some((lo, hi));
            } else if let Some(v) = meta.strip_prefix("resolution:") {
                let res = v
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("bad resolution: {e}")))?;
                resolution = Some(res);
            } else if let Some(v) = meta.strip_prefix("min:") {
                let m =
                    v.trim().parse().map_err(|e| parse_err(lineno, format!("bad min: {e}")))?;
                announced_min = Some(m);
            } else if let Some(v) = meta.strip_prefix("max:") {
                let m =
                    v.trim().parse().map_err(|e| parse_err(lineno, format!("bad max: {e}")))?;
                announced_max = Some(m);
            }
            continue;
        }
        if !saw_header {
            if text != "x,y,value" {
                return Err(parse_err(lineno, format!("expected header 'x,y,value', got '{text}'")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, got {}", fields.len())));
        }
        let cell = if fields[2].is_empty() {
            None
        } else {
            let v: f64 =
                fields[2].parse().map_err(|e| parse_err(lineno, format!("bad value: {e}")))?;
            if !v.is_finite() {
                return Err(Error::non_finite(format!("non-finite map value on line {lineno}")));
            }
            Some(v)
        };
        cells.push(cell);
    }

    let name = name.ok_or_else(|| Error::invalid("missing '# map:' metadata"))?;
    let dims = dims.ok_or_else(|| Error::invalid("missing '# dims:' metadata"))?;
    let (lo, hi) = range.ok_or_else(|| Error::invalid("missing '# range:' metadata"))?;
    let resolution: usize =
        resolution.ok_or_else(|| Error::invalid("missing '# resolution:' metadata"))?;
    if resolution < 3 || lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("inconsistent map metadata"));
    }
    if cells.len() != resolution * resolution {
        return Err(Error::shape(format!(
            "expected {} cells for resolution {resolution}, got {}",
            resolution * resolution,
            cells.len()
        )));
    }
    let mut values = Matrix::zeros(resolution, resolution);
    let mut singular = vec![false; resolution * resolution];
    for (i, cell) in cells.iter().enumerate() {
        let (iy, ix) = (i / resolution, i % resolution);
        match cell {
            Some(v) => values[(iy, ix)] = *v,
            None => singular[iy * resolution + ix] = true,
        }
    }
    let map = ScalarMap { name, dims, lo, hi, resolution, values, singular };
    // Values round-trip exactly through their text form, so announced
    // extrema must match the cells bit for bit.
    let extrema = map.extrema();
    if let Some(min) = announced_min {
        if extrema.map(|e| e.0) != Some(min) {
            return Err(Error::invalid(format!("announced min {min} does not match the cells")));
        }
    }
    if let Some(max) = announced_max {
        if extrema.map(|e| e.1) != Some(max) {
            return Err(Error::invalid(format!("announced max {max} does not match the cells")));
        }
    }
    Ok(map)
}
