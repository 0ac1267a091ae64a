//! Global height map and the 3x3 local patch used by the ground-effect
//! residual features.
//!
//! CSV layout:
//!
//! ```text
//! # origin_x,origin_y,resolution,rows,cols
//! 0.0,0.0,0.1,40,60
//! h(0,0),h(0,1),...,h(0,cols-1)
//! ...
//! h(rows-1,0),...
//! ```
//!
//! Row index `i` runs along world x, column index `j` along world y; cell
//! `(i, j)` covers `[ox + i r, ox + (i+1) r) x [oy + j r, oy + (j+1) r)`.
//! Heights are in meters. Queries outside the map clamp to the nearest edge cell.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major heights.
    pub data: Vec<f64>,
}

impl HeightMap {
    pub fn new(origin: [f64; 2], resolution: f64, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("height map is empty".into()));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::Config(format!("height map resolution {resolution} invalid")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape("HeightMap data", rows * cols, data.len()));
        }
        if !origin.iter().chain(&data).all(|v| v.is_finite()) {
            return Err(Error::Config("height map contains non-finite values".into()));
        }
        Ok(Self {
            origin,
            resolution,
            rows,
            cols,
            data,
        })
    }

    pub fn flat(origin: [f64; 2], rows: usize, cols: usize, height: f64) -> Result<Self> {
        Self::new(origin, DEFAULT_RESOLUTION, rows, cols, vec![height; rows * cols])
    }

    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn cell_index(&self, coord: f64, origin: f64, n: usize) -> isize {
        let idx = ((coord - origin) / self.resolution).floor();
        // Far outside the map the saturating cast still clamps correctly.
        (idx as isize).clamp(0, n as isize - 1)
    }

    /// The 3x3 cells centered on the cell containing `p`, clamped at the edges.
    pub fn local_patch(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        let ci = self.cell_index(p.x, self.origin[0], self.rows);
        let cj = self.cell_index(p.y, self.origin[1], self.cols);
        Matrix3::from_fn(|di, dj| {
            let i = (ci + di as isize - 1).clamp(0, self.rows as isize - 1) as usize;
            let j = (cj + dj as isize - 1).clamp(0, self.cols as isize - 1) as usize;
            self.height(i, j)
        })
    }

    /// Relative-height features `z * 1 - patch`, row-major.
    pub fn ground_features(&self, p: &Vector3<f64>) -> [f64; 9] {
        let patch = self.local_patch(p);
        let mut out = [0.0; 9];
        for di in 0..3 {
            for dj in 0..3 {
                out[di * 3 + dj] = p.z - patch[(di, dj)];
            }
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file)
            .lines()
            .map_while(|l| l.ok())
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("height map: missing header".into()))?;
        let h: Vec<f64> = parse_row(&header)?;
        if h.len() != 5 {
            return Err(Error::Format("height map header needs 5 fields".into()));
        }
        let (rows, cols) = (h[3] as usize, h[4] as usize);
        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let row = parse_row(&line)?;
            if row.len() != cols {
                return Err(Error::shape("height map row", cols, row.len()));
            }
            data.extend(row);
        }
        Self::new([h[0], h[1]], h[2], rows, cols, data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# origin_x,origin_y,resolution,rows,cols")?;
        writeln!(
            w,
            "{},{},{},{},{}",
            self.origin[0], self.origin[1], self.resolution, self.rows, self.cols
        )?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.height(i, j).to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("height map value {s:?}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plateau() -> HeightMap {
        // 2 m x 2 m, 0.7 m table on cells 8..12 in both directions.
        let mut data = vec![0.0; 400];
        for i in 8..12 {
            for j in 8..12 {
                data[i * 20 + j] = 0.7;
            }
        }
        HeightMap::new([0.0, 0.0], 0.1, 20, 20, data).unwrap()
    }

    #[test]
    fn flat_map_features_equal_altitude() {
        let map = HeightMap::flat([-1.0, -1.0], 20, 20, 0.0).unwrap();
        let f = map.ground_features(&Vector3::new(0.03, 0.47, 0.8));
        assert!(f.iter().all(|v| *v == 0.8));
    }

    #[test]
    fn plateau_center_feature() {
        let map = plateau();
        let f = map.ground_features(&Vector3::new(1.0, 1.0, 0.8));
        assert!((f[4] - (0.8 - 0.7)).abs() < 1e-15);
    }

    #[test]
    fn corner_clamps_to_edge() {
        let mut data = vec![0.0; 12];
        data[0] = 5.0;
        let map = HeightMap::new([0.0, 0.0], 0.1, 3, 4, data).unwrap();
        let patch = map.local_patch(&Vector3::new(-3.0, -7.0, 0.0));
        assert_eq!(patch[(0, 0)], 5.0);
        assert_eq!(patch[(1, 1)], 5.0);
        assert_eq!(patch[(2, 2)], 0.0);
        let far = map.local_patch(&Vector3::new(1e9, 1e9, 0.0));
        assert_eq!(far[(1, 1)], map.height(2, 3));
    }

    #[test]
    fn empty_map_rejected() {
        assert!(matches!(
            HeightMap::new([0.0, 0.0], 0.1, 0, 3, vec![]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let map = plateau();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        map.write_csv(&path).unwrap();
        assert_eq!(HeightMap::read_csv(&path).unwrap(), map);
    }

    proptest::proptest! {
        #[test]
        fn translation_consistent(
            x in 0.0f64..2.0, y in 0.0f64..2.0, si in -3i32..3, sj in -3i32..3
        ) {
            let map = plateau();
            // Stay away from cell boundaries so rounding cannot flip the cell.
            let fx = (x / 0.1).fract();
            let fy = (y / 0.1).fract();
            proptest::prop_assume!(fx > 0.01 && fx < 0.99 && fy > 0.01 && fy < 0.99);
            let shift = Vector3::new(si as f64 * 0.1, sj as f64 * 0.1, 0.0);
            let mut moved = map.clone();
            moved.origin = [map.origin[0] + shift.x, map.origin[1] + shift.y];
            let p = Vector3::new(x, y, 1.0);
            proptest::prop_assert_eq!(map.local_patch(&p), moved.local_patch(&(p + shift)));
        }
    }
}
