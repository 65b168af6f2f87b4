//! Per-joint 2D confidence grids.
//!
//! A heatmap cell `(row, col)` corresponds to image pixel
//! `(col * stride, row * stride)`; stride is the pixels-per-cell scale
//! factor (the default synthetic rig uses 320x320 images with stride 4,
//! giving 80x80 maps). Values are stored as f32; sampling and accumulation
//! happen in f64.

mod dump;

pub use dump::{read_dump, write_dump, DumpError};

use crate::Vec2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("heatmap set is missing map for view {view}, joint {joint}")]
    MissingMap { view: usize, joint: usize },
    #[error("heatmap dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

/// One joint's confidence grid in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    values: Vec<f32>,
    height: usize,
    width: usize,
    /// Joint channel index within the owning set.
    pub joint: usize,
    /// View index within the owning set.
    pub view: usize,
    /// Pixels per heatmap cell.
    pub stride: f64,
}

/// Result of peak extraction, flagged when the map carries no information.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    /// Peak location in image pixels.
    pub pixel: Vec2,
    /// Confidence stored at the peak cell.
    pub confidence: f64,
    /// True when every cell holds the same value; the location is then the
    /// tie-break cell (0, 0) and should not be trusted.
    pub degenerate: bool,
}

impl Heatmap {
    /// All-zero map.
    pub fn zeros(dims: (usize, usize), stride: f64) -> Self {
        assert!(dims.0 > 0 && dims.1 > 0, "heatmap dims must be positive");
        Self {
            values: vec![0.0; dims.0 * dims.1],
            height: dims.0,
            width: dims.1,
            joint: 0,
            view: 0,
            stride,
        }
    }

    pub fn from_values(
        values: Vec<f32>,
        dims: (usize, usize),
        stride: f64,
    ) -> Result<Self, HeatmapError> {
        if values.len() != dims.0 * dims.1 {
            return Err(HeatmapError::DimensionMismatch {
                expected: dims,
                actual: (values.len(), 1),
            });
        }
        Ok(Self {
            values,
            height: dims.0,
            width: dims.1,
            joint: 0,
            view: 0,
            stride,
        })
    }

    /// (height, width) in cells.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.values[row * self.width + col] = value;
    }

    /// Image-pixel position of a cell center.
    pub fn cell_to_pixel(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(col as f64 * self.stride, row as f64 * self.stride)
    }

    /// Renders a truncated Gaussian bump centered at `center` (image px):
    /// each cell within `3 * sigma` of the center gets `exp(-d²/(2σ²))` for
    /// its cell-center distance `d`; cells beyond the cutoff stay zero. A
    /// center more than `3σ` outside the grid leaves the map all zero.
    pub fn render_gaussian(
        center: Vec2,
        sigma_px: f64,
        dims: (usize, usize),
        stride: f64,
    ) -> Self {
        assert!(sigma_px > 0.0, "sigma must be positive");
        let mut map = Self::zeros(dims, stride);
        map.add_gaussian(center, sigma_px, 1.0);
        map
    }

    /// Adds an `amplitude`-scaled truncated Gaussian onto the map.
    pub fn add_gaussian(&mut self, center: Vec2, sigma_px: f64, amplitude: f64) {
        let cutoff = 3.0 * sigma_px;
        let (cx, cy) = (center.x / self.stride, center.y / self.stride);
        let r_cells = cutoff / self.stride;
        let row_lo_f = (cy - r_cells).floor();
        let row_hi_f = (cy + r_cells).ceil();
        let col_lo_f = (cx - r_cells).floor();
        let col_hi_f = (cx + r_cells).ceil();
        if row_hi_f < 0.0
            || col_hi_f < 0.0
            || row_lo_f > (self.height - 1) as f64
            || col_lo_f > (self.width - 1) as f64
        {
            return;
        }
        let row_lo = row_lo_f.max(0.0) as usize;
        let row_hi = row_hi_f.min((self.height - 1) as f64) as usize;
        let col_lo = col_lo_f.max(0.0) as usize;
        let col_hi = col_hi_f.min((self.width - 1) as f64) as usize;
        let inv_two_sigma_sq = 1.0 / (2.0 * sigma_px * sigma_px);
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let p = self.cell_to_pixel(row, col);
                let d2 = (p - center).norm_squared();
                if d2 <= cutoff * cutoff {
                    let v = amplitude * (-d2 * inv_two_sigma_sq).exp();
                    let cell = self.get(row, col);
                    self.set(row, col, cell + v as f32);
                }
            }
        }
    }

    /// Bilinear interpolation at a continuous image-pixel position, with
    /// zero padding outside the cell grid.
    pub fn sample_bilinear(&self, pixel: &Vec2) -> f64 {
        let cx = pixel.x / self.stride;
        let cy = pixel.y / self.stride;
        let c0 = cx.floor();
        let r0 = cy.floor();
        let fx = cx - c0;
        let fy = cy - r0;
        let fetch = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r > (self.height - 1) as f64 || c > (self.width - 1) as f64 {
                0.0
            } else {
                self.get(r as usize, c as usize) as f64
            }
        };
        let v00 = fetch(r0, c0);
        let v01 = fetch(r0, c0 + 1.0);
        let v10 = fetch(r0 + 1.0, c0);
        let v11 = fetch(r0 + 1.0, c0 + 1.0);
        v00 * (1.0 - fy) * (1.0 - fx)
            + v01 * (1.0 - fy) * fx
            + v10 * fy * (1.0 - fx)
            + v11 * fy * fx
    }

    /// Location and value of the maximal cell. Ties break to the smallest
    /// row-major index; a constant map is flagged [`Peak::degenerate`].
    pub fn argmax_location(&self) -> Peak {
        let mut best = self.values[0];
        let mut best_idx = 0usize;
        let mut all_equal = true;
        for (i, &v) in self.values.iter().enumerate() {
            if v != best {
                all_equal = false;
            }
            if v > best {
                best = v;
                best_idx = i;
            }
        }
        let row = best_idx / self.width;
        let col = best_idx % self.width;
        Peak {
            pixel: self.cell_to_pixel(row, col),
            confidence: best as f64,
            degenerate: all_equal,
        }
    }
}

/// Renders one truncated-Gaussian map per joint center.
pub fn render_gaussian(
    centers: &[Vec2],
    sigma_px: f64,
    dims: (usize, usize),
    stride: f64,
) -> Vec<Heatmap> {
    centers
        .iter()
        .enumerate()
        .map(|(joint, center)| {
            let mut map = Heatmap::render_gaussian(*center, sigma_px, dims, stride);
            map.joint = joint;
            map
        })
        .collect()
}

/// All heatmaps of one frame: `num_views * num_joints` maps, view-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    view_ids: Vec<String>,
    num_joints: usize,
    maps: Vec<Heatmap>,
}

impl HeatmapSet {
    /// Assembles a set from per-view stacks of per-joint maps. Every view
    /// must provide the same number of joints, and maps within a view must
    /// share dimensions.
    pub fn new(
        view_ids: Vec<String>,
        per_view_maps: Vec<Vec<Heatmap>>,
    ) -> Result<Self, HeatmapError> {
        assert_eq!(view_ids.len(), per_view_maps.len());
        let num_joints = per_view_maps.first().map_or(0, Vec::len);
        let mut maps = Vec::with_capacity(view_ids.len() * num_joints);
        for (view, stack) in per_view_maps.into_iter().enumerate() {
            if stack.len() != num_joints {
                return Err(HeatmapError::MissingMap {
                    view,
                    joint: stack.len(),
                });
            }
            let dims = stack[0].dims();
            for (joint, mut map) in stack.into_iter().enumerate() {
                if map.dims() != dims {
                    return Err(HeatmapError::DimensionMismatch {
                        expected: dims,
                        actual: map.dims(),
                    });
                }
                map.view = view;
                map.joint = joint;
                maps.push(map);
            }
        }
        Ok(Self {
            view_ids,
            num_joints,
            maps,
        })
    }

    pub fn num_views(&self) -> usize {
        self.view_ids.len()
    }

    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn view_ids(&self) -> &[String] {
        &self.view_ids
    }

    pub fn get(&self, view: usize, joint: usize) -> &Heatmap {
        &self.maps[view * self.num_joints + joint]
    }

    pub fn get_mut(&mut self, view: usize, joint: usize) -> &mut Heatmap {
        &mut self.maps[view * self.num_joints + joint]
    }

    /// Replaces all maps of one view.
    pub fn set_view_maps(&mut self, view: usize, stack: Vec<Heatmap>) {
        assert_eq!(stack.len(), self.num_joints);
        for (joint, mut map) in stack.into_iter().enumerate() {
            map.view = view;
            map.joint = joint;
            self.maps[view * self.num_joints + joint] = map;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Heatmap> {
        self.maps.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn center_on_cell_center_renders_one() {
        let map = Heatmap::render_gaussian(Vec2::new(160.0, 80.0), 8.0, (80, 80), 4.0);
        assert_eq!(map.get(20, 40), 1.0);
    }

    #[test]
    fn gaussian_closed_form_value() {
        // 80x80 map, stride 1, sigma 2, center (40, 40): three cells away the
        // value is exp(-9/8).
        let map = Heatmap::render_gaussian(Vec2::new(40.0, 40.0), 2.0, (80, 80), 1.0);
        let expected = (-9.0f64 / 8.0).exp();
        assert_relative_eq!(map.get(40, 43) as f64, expected, epsilon = 1e-6);
        assert_relative_eq!(map.get(43, 40) as f64, expected, epsilon = 1e-6);
    }

    #[test]
    fn far_outside_center_renders_all_zero() {
        let map = Heatmap::render_gaussian(Vec2::new(-100.0, -100.0), 8.0, (80, 80), 4.0);
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilinear_at_cell_center_is_exact() {
        let mut map = Heatmap::zeros((8, 8), 4.0);
        map.set(3, 5, 0.625);
        assert_eq!(map.sample_bilinear(&Vec2::new(20.0, 12.0)), 0.625);
    }

    #[test]
    fn bilinear_midway_between_zero_and_one() {
        let mut map = Heatmap::zeros((4, 4), 1.0);
        map.set(1, 1, 0.0);
        map.set(1, 2, 1.0);
        assert_relative_eq!(map.sample_bilinear(&Vec2::new(1.5, 1.0)), 0.5);
    }

    #[test]
    fn bilinear_out_of_bounds_is_zero() {
        let mut map = Heatmap::zeros((4, 4), 2.0);
        map.values_mut().fill(1.0);
        assert_eq!(map.sample_bilinear(&Vec2::new(-10.0, 3.0)), 0.0);
        assert_eq!(map.sample_bilinear(&Vec2::new(3.0, 100.0)), 0.0);
    }

    #[test]
    fn argmax_returns_peak_cell() {
        let map = Heatmap::render_gaussian(Vec2::new(100.0, 52.0), 8.0, (80, 80), 4.0);
        let peak = map.argmax_location();
        assert!(!peak.degenerate);
        assert_eq!(peak.pixel, Vec2::new(100.0, 52.0));
        assert_eq!(peak.confidence, 1.0);
    }

    #[test]
    fn argmax_tie_breaks_to_smallest_index() {
        let mut map = Heatmap::zeros((4, 4), 1.0);
        map.values_mut()[5] = 0.5;
        map.values_mut()[9] = 0.5;
        let peak = map.argmax_location();
        assert_eq!(peak.pixel, Vec2::new(1.0, 1.0)); // index 5 = (row 1, col 1)
    }

    #[test]
    fn argmax_uniform_map_is_degenerate() {
        let map = Heatmap::zeros((4, 4), 1.0);
        let peak = map.argmax_location();
        assert!(peak.degenerate);
        assert_eq!(peak.pixel, Vec2::new(0.0, 0.0));
    }

    #[test]
    fn set_indexing_round_trip() {
        let stacks: Vec<Vec<Heatmap>> = (0..3)
            .map(|v| {
                (0..4)
                    .map(|j| {
                        let mut m = Heatmap::zeros((8, 8), 4.0);
                        m.set(0, 0, (v * 10 + j) as f32);
                        m
                    })
                    .collect()
            })
            .collect();
        let set = HeatmapSet::new(vec!["a".into(), "b".into(), "c".into()], stacks).unwrap();
        assert_eq!(set.get(2, 3).get(0, 0), 23.0);
        assert_eq!(set.get(2, 3).view, 2);
        assert_eq!(set.get(2, 3).joint, 3);
    }

    proptest! {
        // Render -> argmax round trip: for in-bounds centers the peak cell is
        // within stride/2 px of the true center on each axis.
        #[test]
        fn render_argmax_round_trip(
            cx in 0.0f64..316.0,
            cy in 0.0f64..316.0,
            sigma in 2.0f64..16.0,
        ) {
            let map = Heatmap::render_gaussian(Vec2::new(cx, cy), sigma, (80, 80), 4.0);
            let peak = map.argmax_location();
            prop_assert!(!peak.degenerate);
            prop_assert!((peak.pixel.x - cx).abs() <= 2.0 + 1e-9);
            prop_assert!((peak.pixel.y - cy).abs() <= 2.0 + 1e-9);
        }

        // Bilinear sampling is continuous: queries 1e-6 px apart differ by
        // less than 1e-4 on rendered maps.
        #[test]
        fn bilinear_is_continuous(
            cx in 10.0f64..310.0,
            cy in 10.0f64..310.0,
            qx in -8.0f64..328.0,
            qy in -8.0f64..328.0,
        ) {
            let map = Heatmap::render_gaussian(Vec2::new(cx, cy), 8.0, (80, 80), 4.0);
            let v0 = map.sample_bilinear(&Vec2::new(qx, qy));
            for (dx, dy) in [(1e-6, 0.0), (0.0, 1e-6), (-1e-6, 0.0), (0.0, -1e-6)] {
                let v1 = map.sample_bilinear(&Vec2::new(qx + dx, qy + dy));
                prop_assert!((v1 - v0).abs() < 1e-4);
            }
        }

        // Rendering is a pure function of (center, sigma, dims): joint
        // relabeling cannot change the values.
        #[test]
        fn render_is_pure(cx in 0.0f64..316.0, cy in 0.0f64..316.0) {
            let a = Heatmap::render_gaussian(Vec2::new(cx, cy), 8.0, (80, 80), 4.0);
            let mut b = Heatmap::render_gaussian(Vec2::new(cx, cy), 8.0, (80, 80), 4.0);
            b.joint = 12;
            prop_assert_eq!(a.values(), b.values());
        }
    }
}
