//! Lattice functions on the truncated domain `[0,T] x T_x x [0,Y]`.
//!
//! A [`Field`] stores one real sample per node `(t_i, x_j, y_k)` in row-major
//! order with `t` slowest and `y` fastest, so every normal line `y -> f(t,x,y)`
//! is a contiguous slice. Finite differences are second order everywhere:
//! centered in the interior, one-sided at `t = 0, T` and `y = 0, Y`, and
//! periodic in `x`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    T,
    X,
    Y,
}

/// Uniform lattice over `[0,T] x [0,L_x) x [0,Y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_final: f64,
    pub y_max: f64,
    pub l_x: f64,
    pub n_t: usize,
    pub n_x: usize,
    pub n_y: usize,
}

impl GridSpec {
    pub fn new(t_final: f64, y_max: f64, l_x: f64, n_t: usize, n_x: usize, n_y: usize) -> Result<Self> {
        let spec = GridSpec { t_final, y_max, l_x, n_t, n_x, n_y };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.y_max > 0.0 && self.l_x > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive (T = {}, Y = {}, L_x = {})",
                self.t_final, self.y_max, self.l_x
            )));
        }
        if !(self.t_final.is_finite() && self.y_max.is_finite() && self.l_x.is_finite()) {
            return Err(Error::InvalidGrid("extents must be finite".into()));
        }
        if self.n_t < 4 || self.n_x < 4 || self.n_y < 8 {
            return Err(Error::InvalidGrid(format!(
                "need n_t >= 4, n_x >= 4, n_y >= 8 (got {}, {}, {})",
                self.n_t, self.n_x, self.n_y
            )));
        }
        if self.dy() >= 1.0 {
            return Err(Error::InvalidGrid(format!(
                "dy = {} must be < 1 to resolve the boundary layer",
                self.dy()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / (self.n_t - 1) as f64
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.l_x / self.n_x as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.y_max / (self.n_y - 1) as f64
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    #[inline]
    pub fn y(&self, k: usize) -> f64 {
        k as f64 * self.dy()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_t * self.n_x * self.n_y
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.n_x * self.n_y
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_x + j) * self.n_y + k
    }

    pub fn n_axis(&self, axis: Axis) -> usize {
        match axis {
            Axis::T => self.n_t,
            Axis::X => self.n_x,
            Axis::Y => self.n_y,
        }
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::T => self.dt(),
            Axis::X => self.dx(),
            Axis::Y => self.dy(),
        }
    }

    /// Trapezoid weight in `t`.
    #[inline]
    pub fn weight_t(&self, i: usize) -> f64 {
        trapezoid_weight(i, self.n_t, self.dt())
    }

    /// Trapezoid weight in `y`.
    #[inline]
    pub fn weight_y(&self, k: usize) -> f64 {
        trapezoid_weight(k, self.n_y, self.dy())
    }

    /// Same grid with the sample counts replaced.
    pub fn with_counts(&self, n_t: usize, n_x: usize, n_y: usize) -> Result<Self> {
        GridSpec::new(self.t_final, self.y_max, self.l_x, n_t, n_x, n_y)
    }
}

#[inline]
fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * h
    } else {
        h
    }
}

/// Boundary behaviour a field claims to satisfy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMeta {
    pub vanishes_at_wall: bool,
    pub far_field: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Txy,
    XyAtTime(usize),
}

/// Finite-difference coefficients (offset, weight) for one node, before the
/// `h^order` scaling.
fn stencil(pos: usize, n: usize, order: usize, periodic: bool) -> &'static [(isize, f64)] {
    const C1: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
    const C1_LO: [(isize, f64); 3] = [(0, -1.5), (1, 2.0), (2, -0.5)];
    const C1_HI: [(isize, f64); 3] = [(0, 1.5), (-1, -2.0), (-2, 0.5)];
    const C2: [(isize, f64); 3] = [(-1, 1.0), (0, -2.0), (1, 1.0)];
    const C2_LO: [(isize, f64); 4] = [(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)];
    const C2_HI: [(isize, f64); 4] = [(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)];
    match (order, periodic) {
        (1, true) => &C1,
        (2, true) => &C2,
        (1, false) if pos == 0 => &C1_LO,
        (1, false) if pos + 1 == n => &C1_HI,
        (1, false) => &C1,
        (_, false) if pos == 0 => &C2_LO,
        (_, false) if pos + 1 == n => &C2_HI,
        _ => &C2,
    }
}

fn check_stencil(axis: Axis, n: usize, order: usize) -> Result<()> {
    if order == 0 || order > 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    let need = match (axis, order) {
        (Axis::X, _) => 3,
        (_, 1) => 3,
        _ => 4,
    };
    if n < need {
        return Err(Error::StencilTooWide { axis, n, need });
    }
    Ok(())
}

/// Apply a non-periodic stencil to a contiguous line.
fn diff_line(src: &[f64], dst: &mut [f64], order: usize, scale: f64) {
    let n = src.len();
    for k in 0..n {
        let mut acc = 0.0;
        for &(off, c) in stencil(k, n, order, false) {
            acc += c * src[(k as isize + off) as usize];
        }
        dst[k] = acc * scale;
    }
}

/// Trapezoid cumulative integral of a contiguous line starting from zero.
fn cumint_line(src: &[f64], dst: &mut [f64], h: f64) {
    dst[0] = 0.0;
    for k in 1..src.len() {
        dst[k] = dst[k - 1] + 0.5 * h * (src[k - 1] + src[k]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: GridSpec,
    data: Vec<f64>,
    meta: BoundaryMeta,
}

impl Field {
    pub fn zeros(spec: &GridSpec) -> Self {
        Field { spec: *spec, data: vec![0.0; spec.len()], meta: BoundaryMeta::default() }
    }

    pub fn constant(spec: &GridSpec, value: f64) -> Self {
        Field { spec: *spec, data: vec![value; spec.len()], meta: BoundaryMeta::default() }
    }

    pub fn from_vec(spec: &GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                spec.len(),
                data.len()
            )));
        }
        Ok(Field { spec: *spec, data, meta: BoundaryMeta::default() })
    }

    /// Sample `f(t, x, y)` at every node.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(f64, f64, f64) -> f64 + Sync) -> Self {
        let s = *spec;
        let mut data = vec![0.0; s.len()];
        data.par_chunks_mut(s.n_y).enumerate().for_each(|(line, out)| {
            let i = line / s.n_x;
            let j = line % s.n_x;
            let (t, x) = (s.t(i), s.x(j));
            for (k, v) in out.iter_mut().enumerate() {
                *v = f(t, x, s.y(k));
            }
        });
        Field { spec: s, data, meta: BoundaryMeta::default() }
    }

    /// Sample an `x`-independent function `f(t, y)`.
    pub fn from_ty_fn(spec: &GridSpec, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let s = *spec;
        let mut rows = vec![0.0; s.n_t * s.n_y];
        rows.par_chunks_mut(s.n_y).enumerate().for_each(|(i, out)| {
            for (k, v) in out.iter_mut().enumerate() {
                *v = f(s.t(i), s.y(k));
            }
        });
        Self::broadcast_ty(spec, &rows)
    }

    /// Broadcast a `(t, y)` table (`n_t * n_y`, `y` fastest) along `x`.
    pub fn broadcast_ty(spec: &GridSpec, table: &[f64]) -> Self {
        let s = *spec;
        assert_eq!(table.len(), s.n_t * s.n_y);
        let mut data = vec![0.0; s.len()];
        data.par_chunks_mut(s.n_y).enumerate().for_each(|(line, out)| {
            let i = line / s.n_x;
            out.copy_from_slice(&table[i * s.n_y..(i + 1) * s.n_y]);
        });
        Field { spec: s, data, meta: BoundaryMeta::default() }
    }

    /// Stack `(x, y)` planes, one per time level.
    pub fn from_planes(spec: &GridSpec, planes: &[Plane]) -> Result<Self> {
        if planes.len() != spec.n_t {
            return Err(Error::InvalidArgument(format!(
                "expected {} planes, got {}",
                spec.n_t,
                planes.len()
            )));
        }
        let mut data = Vec::with_capacity(spec.len());
        for p in planes {
            if p.n_x != spec.n_x || p.n_y != spec.n_y {
                return Err(Error::GridMismatch);
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Field { spec: *spec, data, meta: BoundaryMeta::default() })
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn meta(&self) -> BoundaryMeta {
        self.meta
    }

    pub fn with_meta(mut self, meta: BoundaryMeta) -> Self {
        if meta.vanishes_at_wall {
            self.zero_wall();
        }
        self.meta = meta;
        self
    }

    /// Flag the field as vanishing at `y = 0` and make the wall row exactly zero.
    pub fn enforce_wall_zero(mut self) -> Self {
        self.zero_wall();
        self.meta.vanishes_at_wall = true;
        self
    }

    fn zero_wall(&mut self) {
        let ny = self.spec.n_y;
        for line in self.data.chunks_mut(ny) {
            line[0] = 0.0;
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.spec.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.spec.idx(i, j, k);
        self.data[idx] = v;
    }

    /// Contiguous normal line at `(t_i, x_j)`.
    #[inline]
    pub fn line(&self, i: usize, j: usize) -> &[f64] {
        let start = self.spec.idx(i, j, 0);
        &self.data[start..start + self.spec.n_y]
    }

    #[inline]
    pub fn line_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = self.spec.idx(i, j, 0);
        let n_y = self.spec.n_y;
        &mut self.data[start..start + n_y]
    }

    /// Contiguous `(x, y)` samples at time level `i`.
    #[inline]
    pub fn plane_data(&self, i: usize) -> &[f64] {
        let p = self.spec.plane_len();
        &self.data[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn plane_data_mut(&mut self, i: usize) -> &mut [f64] {
        let p = self.spec.plane_len();
        &mut self.data[i * p..(i + 1) * p]
    }

    pub fn time_slice(&self, i: usize) -> Plane {
        Plane {
            n_x: self.spec.n_x,
            n_y: self.spec.n_y,
            l_x: self.spec.l_x,
            y_max: self.spec.y_max,
            data: self.plane_data(i).to_vec(),
        }
    }

    pub fn set_time_slice(&mut self, i: usize, plane: &Plane) {
        self.plane_data_mut(i).copy_from_slice(&plane.data);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(self, what: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(what))
        }
    }

    fn same_grid(&self, other: &Field) {
        assert!(self.spec == other.spec, "grid specs differ between operands");
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Field {
        let data = self.data.par_iter().map(|&v| f(v)).collect();
        Field { spec: self.spec, data, meta: BoundaryMeta::default() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Field {
        self.same_grid(other);
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(&a, &b)| f(a, b)).collect();
        Field { spec: self.spec, data, meta: BoundaryMeta::default() }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn div(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a / b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Field) {
        self.same_grid(other);
        self.data.par_iter_mut().zip(other.data.par_iter()).for_each(|(a, &b)| *a += c * b);
    }

    pub fn linear_combination(a: f64, f: &Field, b: f64, g: &Field) -> Field {
        f.zip_map(g, |u, v| a * u + b * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Node of the smallest sample as `(i, j, k, value)`.
    pub fn argmin(&self) -> (usize, usize, usize, f64) {
        let (idx, v) = self
            .data
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
        let s = &self.spec;
        let k = idx % s.n_y;
        let j = (idx / s.n_y) % s.n_x;
        let i = idx / (s.n_x * s.n_y);
        (i, j, k, v)
    }

    /// Finite-difference derivative along `axis` of order 1 or 2.
    pub fn derivative(&self, axis: Axis, order: usize) -> Result<Field> {
        let s = self.spec;
        check_stencil(axis, s.n_axis(axis), order)?;
        let h = s.spacing(axis);
        let scale = if order == 1 { 1.0 / h } else { 1.0 / (h * h) };
        let mut out = vec![0.0; s.len()];
        match axis {
            Axis::Y => {
                out.par_chunks_mut(s.n_y)
                    .zip(self.data.par_chunks(s.n_y))
                    .for_each(|(dst, src)| diff_line(src, dst, order, scale));
            }
            Axis::X => {
                let (nx, ny) = (s.n_x, s.n_y);
                out.par_chunks_mut(s.plane_len())
                    .zip(self.data.par_chunks(s.plane_len()))
                    .for_each(|(dst, src)| {
                        for j in 0..nx {
                            let row = &mut dst[j * ny..(j + 1) * ny];
                            for &(off, c) in stencil(j, nx, order, true) {
                                let jj = (j as isize + off).rem_euclid(nx as isize) as usize;
                                let srow = &src[jj * ny..(jj + 1) * ny];
                                for (d, &v) in row.iter_mut().zip(srow) {
                                    *d += c * scale * v;
                                }
                            }
                        }
                    });
            }
            Axis::T => {
                let p = s.plane_len();
                let nt = s.n_t;
                out.par_chunks_mut(p).enumerate().for_each(|(i, dst)| {
                    for &(off, c) in stencil(i, nt, order, false) {
                        let ii = (i as isize + off) as usize;
                        let src = &self.data[ii * p..(ii + 1) * p];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += c * scale * v;
                        }
                    }
                });
            }
        }
        Field { spec: s, data: out, meta: BoundaryMeta::default() }.ensure_finite("derivative")
    }

    /// Repeated derivative along `axis`, composing order-2 stencils and at
    /// most one order-1 stencil.
    pub fn derivative_n(&self, axis: Axis, n: usize) -> Result<Field> {
        match n {
            0 => Ok(self.clone()),
            1 => self.derivative(axis, 1),
            _ => {
                let mut f = if n % 2 == 1 { self.derivative(axis, 1)? } else { self.clone() };
                for _ in 0..n / 2 {
                    f = f.derivative(axis, 2)?;
                }
                Ok(f)
            }
        }
    }

    /// First-order backward difference along `t` (row 0 is zero) or along
    /// `x` (periodic). These are the operators matching backward-Euler time
    /// stepping and upwind transport with non-negative velocity.
    pub fn backward_difference(&self, axis: Axis) -> Result<Field> {
        let s = self.spec;
        let mut out = vec![0.0; s.len()];
        match axis {
            Axis::T => {
                let p = s.plane_len();
                let h = s.dt();
                out[p..].par_chunks_mut(p).enumerate().for_each(|(m, dst)| {
                    let i = m + 1;
                    let (a, b) = (&self.data[i * p..(i + 1) * p], &self.data[(i - 1) * p..i * p]);
                    for ((d, x), y) in dst.iter_mut().zip(a).zip(b) {
                        *d = (x - y) / h;
                    }
                });
            }
            Axis::X => {
                let (nx, ny) = (s.n_x, s.n_y);
                let h = s.dx();
                out.par_chunks_mut(s.plane_len()).zip(self.data.par_chunks(s.plane_len())).for_each(|(dst, src)| {
                    for j in 0..nx {
                        let jm = (j + nx - 1) % nx;
                        for k in 0..ny {
                            dst[j * ny + k] = (src[j * ny + k] - src[jm * ny + k]) / h;
                        }
                    }
                });
            }
            Axis::Y => return Err(Error::InvalidArgument("backward differences are provided in t and x".into())),
        }
        Ok(Field { spec: s, data: out, meta: BoundaryMeta::default() })
    }

    /// Trapezoid cumulative integral in `y` from the wall; vanishes at `y = 0`.
    pub fn cumulative_integral_y(&self) -> Field {
        let s = self.spec;
        let h = s.dy();
        let mut out = vec![0.0; s.len()];
        out.par_chunks_mut(s.n_y)
            .zip(self.data.par_chunks(s.n_y))
            .for_each(|(dst, src)| cumint_line(src, dst, h));
        Field { spec: s, data: out, meta: BoundaryMeta { vanishes_at_wall: true, far_field: None } }
    }

    /// Quadrature: trapezoid in `t` and `y`, periodic rectangle rule in `x`.
    pub fn integral(&self, measure: Measure) -> f64 {
        let s = &self.spec;
        match measure {
            Measure::Txy => (0..s.n_t).map(|i| s.weight_t(i) * self.plane_integral(i)).sum(),
            Measure::XyAtTime(i) => self.plane_integral(i),
        }
    }

    pub fn integral_txy(&self) -> f64 {
        self.integral(Measure::Txy)
    }

    fn plane_integral(&self, i: usize) -> f64 {
        let s = &self.spec;
        let mut acc = 0.0;
        for j in 0..s.n_x {
            let line = self.line(i, j);
            for (k, &v) in line.iter().enumerate() {
                acc += s.weight_y(k) * v;
            }
        }
        acc * s.dx()
    }

    /// Write `t,x,y,value` rows (t slowest) with 17 significant digits, plus a
    /// JSON sidecar `<path>.json` recording the grid.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "t,x,y,value")?;
        let s = &self.spec;
        for i in 0..s.n_t {
            for j in 0..s.n_x {
                for k in 0..s.n_y {
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        s.t(i),
                        s.x(j),
                        s.y(k),
                        self.get(i, j, k)
                    )?;
                }
            }
        }
        w.flush()?;
        let sidecar = sidecar_path(path);
        std::fs::write(sidecar, serde_json::to_string_pretty(&FieldSidecar { grid: *s, meta: self.meta })?)?;
        Ok(())
    }

    /// Read a field written by [`Field::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Field> {
        let sidecar: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        sidecar.grid.validate()?;
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut data = Vec::with_capacity(sidecar.grid.len());
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "t,x,y,value" {
                    return Err(Error::Parse(format!("{}: unexpected header {line:?}", path.display())));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let value = line
                .rsplit(',')
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("{}:{}: bad row {line:?}", path.display(), n + 1)))?;
            data.push(value);
        }
        let mut f = Field::from_vec(&sidecar.grid, data)?;
        f.meta = sidecar.meta;
        Ok(f)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldSidecar {
    grid: GridSpec,
    meta: BoundaryMeta,
}

/// Discrete divergence `d_x u + d_y v` evaluated at half nodes in `y`, the
/// form for which `v = -cumulative_integral_y(d_x u)` is an exact discrete
/// antiderivative. Returns the `(t, x, y_{k-1/2})` samples with the wall row
/// set to zero.
pub fn staggered_divergence(u: &Field, v: &Field) -> Result<Field> {
    let du = u.derivative(Axis::X, 1)?;
    let s = *u.spec();
    let h = s.dy();
    let mut out = Field::zeros(&s);
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            let a = du.line(i, j);
            let b = v.line(i, j);
            let o = out.line_mut(i, j);
            for k in 1..s.n_y {
                o[k] = 0.5 * (a[k - 1] + a[k]) + (b[k] - b[k - 1]) / h;
            }
        }
    }
    Ok(out)
}

/// `(x, y)` samples at one time level; used for initial data and for the
/// compatibility recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub n_x: usize,
    pub n_y: usize,
    pub l_x: f64,
    pub y_max: f64,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros_like(spec: &GridSpec) -> Plane {
        Plane { n_x: spec.n_x, n_y: spec.n_y, l_x: spec.l_x, y_max: spec.y_max, data: vec![0.0; spec.plane_len()] }
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Plane {
        let mut p = Plane::zeros_like(spec);
        for j in 0..p.n_x {
            for k in 0..p.n_y {
                p.data[j * p.n_y + k] = f(spec.x(j), spec.y(k));
            }
        }
        p
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.l_x / self.n_x as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.y_max / (self.n_y - 1) as f64
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.n_y + k]
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        assert_eq!(self.data.len(), other.data.len());
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Plane { data, ..*self }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane { n_x: self.n_x, n_y: self.n_y, l_x: self.l_x, y_max: self.y_max, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, o: &Plane) -> Plane {
        self.zip_map(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Plane) -> Plane {
        self.zip_map(o, |a, b| a - b)
    }

    pub fn mul(&self, o: &Plane) -> Plane {
        self.zip_map(o, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Plane {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn derivative(&self, axis: Axis, order: usize) -> Result<Plane> {
        let n = match axis {
            Axis::X => self.n_x,
            Axis::Y => self.n_y,
            Axis::T => return Err(Error::InvalidArgument("a plane has no time axis".into())),
        };
        check_stencil(axis, n, order)?;
        let mut out = vec![0.0; self.data.len()];
        let ny = self.n_y;
        match axis {
            Axis::Y => {
                let h = self.dy();
                let scale = if order == 1 { 1.0 / h } else { 1.0 / (h * h) };
                for (dst, src) in out.chunks_mut(ny).zip(self.data.chunks(ny)) {
                    diff_line(src, dst, order, scale);
                }
            }
            _ => {
                let h = self.dx();
                let scale = if order == 1 { 1.0 / h } else { 1.0 / (h * h) };
                let nx = self.n_x;
                for j in 0..nx {
                    for &(off, c) in stencil(j, nx, order, true) {
                        let jj = (j as isize + off).rem_euclid(nx as isize) as usize;
                        for k in 0..ny {
                            out[j * ny + k] += c * scale * self.data[jj * ny + k];
                        }
                    }
                }
            }
        }
        Ok(Plane { data: out, ..*self })
    }

    pub fn derivative_n(&self, axis: Axis, n: usize) -> Result<Plane> {
        match n {
            0 => Ok(self.clone()),
            1 => self.derivative(axis, 1),
            _ => {
                let mut f = if n % 2 == 1 { self.derivative(axis, 1)? } else { self.clone() };
                for _ in 0..n / 2 {
                    f = f.derivative(axis, 2)?;
                }
                Ok(f)
            }
        }
    }

    pub fn cumulative_integral_y(&self) -> Plane {
        let mut out = vec![0.0; self.data.len()];
        let h = self.dy();
        for (dst, src) in out.chunks_mut(self.n_y).zip(self.data.chunks(self.n_y)) {
            cumint_line(src, dst, h);
        }
        Plane { data: out, ..*self }
    }

    /// Rectangle rule in `x`, trapezoid in `y`.
    pub fn integral(&self) -> f64 {
        let (dx, dy) = (self.dx(), self.dy());
        let mut acc = 0.0;
        for line in self.data.chunks(self.n_y) {
            for (k, &v) in line.iter().enumerate() {
                acc += trapezoid_weight(k, self.n_y, dy) * v;
            }
        }
        acc * dx
    }
}
