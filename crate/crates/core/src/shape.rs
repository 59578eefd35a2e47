//! Target shapes: binary grids, the gray relaxation around them, and the
//! geometric queries the formation controller runs against them.
//!
//! Grid text formats:
//!
//! * ASCII: one row per line, `0` = black (inside the shape), `1` = white.
//!   Lines starting with `#` and blank lines are skipped; trailing whitespace
//!   is ignored; all rows must have the same width.
//! * PGM P2: the plain-text graymap. A pixel is black when its value, scaled
//!   to 0..=255, is below 128.
//!
//! Row 0 is the top of the picture. In metric coordinates `x` grows with the
//! column and `y` grows upward; cell centers are anchored so that the center
//! of `origin_cell` sits at the seed robot's initial position `(0, 0)`.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Black/white occupancy picture, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGrid {
    pub width: usize,
    pub height: usize,
    pub black: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: usize, height: usize, black: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(0, "empty image"));
        }
        if black.len() != width * height {
            return Err(Error::shape(0, "pixel count does not match dimensions"));
        }
        if !black.iter().any(|&b| b) {
            return Err(Error::shape(0, "no black cells"));
        }
        Ok(BinaryGrid { width, height, black })
    }

    pub fn is_black(&self, col: usize, row: usize) -> bool {
        self.black[row * self.width + col]
    }

    pub fn n_black(&self) -> usize {
        self.black.iter().filter(|&&b| b).count()
    }

    /// ASCII rendering, the inverse of [`parse_ascii`].
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for row in self.black.chunks(self.width) {
            s.extend(row.iter().map(|&b| if b { '0' } else { '1' }));
            s.push('\n');
        }
        s
    }
}

pub fn parse_ascii(text: &str) -> Result<BinaryGrid> {
    let mut width = None;
    let mut height = 0;
    let mut black = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = k + 1;
        let mut count = 0;
        for c in line.chars() {
            match c {
                '0' => black.push(true),
                '1' => black.push(false),
                other => return Err(Error::shape(lineno, format!("unexpected character {other:?}"))),
            }
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::shape(lineno, format!("row has {count} cells, expected {w}")));
            }
            _ => {}
        }
        height += 1;
    }
    let Some(width) = width else {
        return Err(Error::shape(0, "empty image"));
    };
    BinaryGrid::new(width, height, black)
}

pub fn parse_pgm(text: &str) -> Result<BinaryGrid> {
    // whitespace-separated tokens with their line numbers, comments stripped
    let mut tokens = text.lines().enumerate().flat_map(|(k, line)| {
        let body = line.split('#').next().unwrap_or("");
        body.split_whitespace().map(move |t| (k + 1, t))
    });
    match tokens.next() {
        Some((_, "P2")) => {}
        Some((line, _)) => return Err(Error::shape(line, "expected P2 magic")),
        None => return Err(Error::shape(0, "empty image")),
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let (line, tok) = tokens
            .next()
            .ok_or_else(|| Error::shape(0, format!("missing {name}")))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::shape(line, format!("invalid {name} {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::shape(0, "maxval must be in 1..=65535"));
    }
    let count = width
        .checked_mul(height)
        .filter(|&c| c <= 1 << 26)
        .ok_or_else(|| Error::shape(0, "image too large"))?;
    let mut black = Vec::with_capacity(count);
    for (line, tok) in tokens.by_ref().take(count) {
        let v: usize = tok
            .parse()
            .map_err(|_| Error::shape(line, format!("invalid pixel {tok:?}")))?;
        if v > maxval {
            return Err(Error::shape(line, format!("pixel {v} exceeds maxval {maxval}")));
        }
        black.push(v * 255 < 128 * maxval);
    }
    if black.len() < count {
        return Err(Error::shape(0, format!("expected {count} pixels, found {}", black.len())));
    }
    if let Some((line, _)) = tokens.next() {
        return Err(Error::shape(line, "trailing data after pixels"));
    }
    BinaryGrid::new(width, height, black)
}

/// Parses either format, choosing PGM when the text starts with `P2`.
pub fn parse_shape(text: &str) -> Result<BinaryGrid> {
    if text.trim_start().starts_with("P2") {
        parse_pgm(text)
    } else {
        parse_ascii(text)
    }
}

pub fn load_shape(path: &Path) -> Result<BinaryGrid> {
    parse_shape(&std::fs::read_to_string(path)?)
}

/// Side length of a cell so that `n_robots` disks of radius `r_avoid / 2`
/// roughly tile `n_cell` cells.
pub fn cell_size(n_robots: usize, n_cell: usize, r_avoid: f64) -> f64 {
    (std::f64::consts::FRAC_PI_4 * n_robots as f64 / n_cell as f64).sqrt() * r_avoid
}

/// Gray-level relaxation of a binary shape with metric cell geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeField {
    pub width: usize,
    pub height: usize,
    /// Row-major gray values, 0 on the shape, 1 far away.
    pub gray: Vec<f64>,
    pub levels: u32,
    pub l_cell: f64,
    /// `(col, row)` whose center coincides with the seed's initial position.
    pub origin_cell: (usize, usize),
    pub n_cell: usize,
}

/// White cells added on the left, top, right and bottom by [`gray_transform`].
pub fn padding(grid: &BinaryGrid, levels: u32) -> [usize; 4] {
    let l = levels.max(1) as usize;
    let (mut min_c, mut max_c, mut min_r, mut max_r) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..grid.height {
        for c in 0..grid.width {
            if grid.is_black(c, r) {
                min_c = min_c.min(c);
                max_c = max_c.max(c);
                min_r = min_r.min(r);
                max_r = max_r.max(r);
            }
        }
    }
    [
        l.saturating_sub(min_c),
        l.saturating_sub(min_r),
        l.saturating_sub(grid.width - 1 - max_c),
        l.saturating_sub(grid.height - 1 - max_r),
    ]
}

/// Builds the gray field `ξ = min(1, D / l)` where `D` is the Chebyshev
/// distance in cells to the nearest black cell.
///
/// The grid is padded with white so that at least `l` cells surround the
/// shape on every side. Cell size defaults to 1 m and the origin to the
/// rounded centroid of the black cells.
pub fn gray_transform(grid: &BinaryGrid, levels: u32) -> ShapeField {
    let levels = levels.max(1);
    let l = levels as usize;
    let [pad_left, pad_top, pad_right, pad_bottom] = padding(grid, levels);
    let width = grid.width + pad_left + pad_right;
    let height = grid.height + pad_top + pad_bottom;

    let mut dist = vec![usize::MAX; width * height];
    let mut queue = VecDeque::new();
    let (mut sum_c, mut sum_r, mut n_cell) = (0usize, 0usize, 0usize);
    for r in 0..grid.height {
        for c in 0..grid.width {
            if grid.is_black(c, r) {
                let (cc, rr) = (c + pad_left, r + pad_top);
                dist[rr * width + cc] = 0;
                queue.push_back((cc, rr));
                sum_c += cc;
                sum_r += rr;
                n_cell += 1;
            }
        }
    }
    // multi-source BFS over the 8-neighborhood yields Chebyshev distance
    while let Some((c, r)) = queue.pop_front() {
        let d = dist[r * width + c];
        if d >= l {
            continue;
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if nc < 0 || nr < 0 || nc >= width as i64 || nr >= height as i64 {
                    continue;
                }
                let idx = nr as usize * width + nc as usize;
                if dist[idx] == usize::MAX {
                    dist[idx] = d + 1;
                    queue.push_back((nc as usize, nr as usize));
                }
            }
        }
    }
    let gray = dist
        .iter()
        .map(|&d| if d >= l { 1.0 } else { d as f64 / levels as f64 })
        .collect();
    let origin_cell = (
        (sum_c as f64 / n_cell as f64).round() as usize,
        (sum_r as f64 / n_cell as f64).round() as usize,
    );
    ShapeField {
        width,
        height,
        gray,
        levels,
        l_cell: 1.0,
        origin_cell,
        n_cell,
    }
}

/// A cell reference with its metric center relative to the seed origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellHit {
    pub col: usize,
    pub row: usize,
    pub center: Vec2,
    pub gray: f64,
}

impl ShapeField {
    pub fn with_cell_size(mut self, l_cell: f64) -> Self {
        self.l_cell = l_cell;
        self
    }

    pub fn with_origin(mut self, col: usize, row: usize) -> Self {
        self.origin_cell = (col, row);
        self
    }

    pub fn gray_of(&self, col: usize, row: usize) -> f64 {
        self.gray[row * self.width + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        let (oc, or) = self.origin_cell;
        Vec2::new(
            (col as f64 - oc as f64) * self.l_cell,
            (or as f64 - row as f64) * self.l_cell,
        )
    }

    /// Cell whose square contains `pos`, if inside the grid.
    pub fn cell_at(&self, pos: Vec2) -> Option<(usize, usize)> {
        let (oc, or) = self.origin_cell;
        let c = (pos.x / self.l_cell).round() + oc as f64;
        let r = or as f64 - (pos.y / self.l_cell).round();
        if c >= 0.0 && r >= 0.0 && c < self.width as f64 && r < self.height as f64 {
            Some((c as usize, r as usize))
        } else {
            None
        }
    }

    /// Gray value at a position; 1 outside the grid.
    pub fn gray_at(&self, pos: Vec2) -> f64 {
        self.cell_at(pos).map_or(1.0, |(c, r)| self.gray_of(c, r))
    }

    pub fn is_black_at(&self, pos: Vec2) -> bool {
        self.gray_at(pos) == 0.0
    }

    pub fn cells(&self) -> impl Iterator<Item = CellHit> + '_ {
        (0..self.height).flat_map(move |row| {
            (0..self.width).map(move |col| CellHit {
                col,
                row,
                center: self.cell_center(col, row),
                gray: self.gray_of(col, row),
            })
        })
    }

    pub fn black_cells(&self) -> impl Iterator<Item = CellHit> + '_ {
        self.cells().filter(|c| c.gray == 0.0)
    }

    fn nearest_where(&self, q: Vec2, keep: impl Fn(f64) -> bool) -> Option<CellHit> {
        let mut best: Option<(f64, CellHit)> = None;
        for cell in self.cells().filter(|c| keep(c.gray)) {
            let d = (cell.center - q).norm_sq();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, cell));
            }
        }
        best.map(|(_, c)| c)
    }

    /// Closest cell with `ξ < 1`, ties broken by `(row, col)` order.
    pub fn nearest_gray_cell(&self, q_hat: Vec2) -> (Vec2, f64) {
        let hit = self
            .nearest_where(q_hat, |g| g < 1.0)
            .expect("a shape field always has black cells");
        (hit.center, hit.gray)
    }

    /// Closest cell strictly darker than the cell containing `q_hat`, or
    /// `None` when `q_hat` already sits on the shape.
    pub fn nearest_darker_cell(&self, q_hat: Vec2) -> Option<(Vec2, f64)> {
        let here = self.gray_at(q_hat);
        if here == 0.0 {
            return None;
        }
        self.nearest_where(q_hat, |g| g < here).map(|h| (h.center, h.gray))
    }

    /// Black cells within `r_sense` of `q_hat` that contain neither the robot
    /// itself nor any neighbor's estimated position `q_hat − p̂_ij`.
    pub fn unoccupied_black_in_range(&self, q_hat: Vec2, neighbor_rel: &[Vec2], r_sense: f64) -> Vec<Vec2> {
        let mut occupied: Vec<(usize, usize)> = neighbor_rel
            .iter()
            .filter_map(|&p| self.cell_at(q_hat - p))
            .collect();
        occupied.extend(self.cell_at(q_hat));
        self.black_cells()
            .filter(|c| (c.center - q_hat).norm() <= r_sense && !occupied.contains(&(c.col, c.row)))
            .map(|c| c.center)
            .collect()
    }
}

/// Built-in arrowhead pointing right.
pub const DART: &str = "\
# dart
000011111
100000111
110000001
111000000
110000001
100000111
000011111
";

/// Built-in capital R.
pub const LETTER_R: &str = "\
# letter R
0000001
0011100
0011100
0000001
0001111
0010011
0011001
0011100
";

pub fn builtin(name: &str) -> Option<BinaryGrid> {
    let text = match name {
        "dart" => DART,
        "letter-r" | "r" => LETTER_R,
        _ => return None,
    };
    Some(parse_ascii(text).expect("built-in shapes parse"))
}
