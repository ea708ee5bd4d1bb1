use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::io::{read_records, write_records};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub id: String,
    pub vertices: Vec<(f64, f64)>,
    /// Bed altitude (m) at each vertex.
    pub bed: Vec<f64>,
}

/// One row of `watercourses.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRow {
    pub watercourse_id: String,
    pub vertex_index: u32,
    pub x: f64,
    pub y: f64,
    pub bed_altitude: f64,
}

pub const WATERCOURSE_HEADER: [&str; 5] = ["watercourse_id", "vertex_index", "x", "y", "bed_altitude"];

/// Nearest point on a segment: `(distance, bed altitude there)`.
#[inline]
pub fn segment_nearest(p: (f64, f64), a: (f64, f64), b: (f64, f64), za: f64, zb: f64) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (fx, fy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - fx).hypot(p.1 - fy), za + t * (zb - za))
}

/// Closest watercourse point to a location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestBed {
    pub distance: f64,
    pub bed_altitude: f64,
    pub line: usize,
    pub segment: usize,
}

impl NearestBed {
    /// Orders by distance, then polyline and segment index, so ties resolve deterministically.
    fn better_than(&self, other: &NearestBed) -> bool {
        (self.distance, self.line, self.segment) < (other.distance, other.line, other.segment)
    }
}

/// Watercourse polylines with a uniform-grid segment index.
#[derive(Debug, Clone)]
pub struct WatercourseLayer {
    lines: Vec<Polyline>,
    segs: Vec<(usize, usize)>,
    origin: (f64, f64),
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl WatercourseLayer {
    pub fn new(lines: Vec<Polyline>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::InsufficientData("watercourse layer is empty".into()));
        }
        for l in &lines {
            if l.vertices.len() < 2 || l.bed.len() != l.vertices.len() {
                return Err(Error::validation(
                    format!("watercourse {}", l.id),
                    "polyline needs >= 2 vertices with one bed altitude each",
                ));
            }
        }
        let segs: Vec<(usize, usize)> = lines
            .iter()
            .enumerate()
            .flat_map(|(li, l)| (0..l.vertices.len() - 1).map(move |s| (li, s)))
            .collect();
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for l in &lines {
            for &(x, y) in &l.vertices {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
        let extent = (x1 - x0).max(y1 - y0).max(1.0);
        // Roughly a few segments per occupied cell.
        let cell = (extent / (segs.len() as f64).sqrt().max(1.0)).max(1.0);
        let nx = ((x1 - x0) / cell) as usize + 1;
        let ny = ((y1 - y0) / cell) as usize + 1;
        let mut layer = WatercourseLayer {
            lines,
            segs,
            origin: (x0, y0),
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (k, &(li, s)) in layer.segs.iter().enumerate() {
            let a = layer.lines[li].vertices[s];
            let b = layer.lines[li].vertices[s + 1];
            let (cx0, cy0) = layer.cell_of(a.0.min(b.0), a.1.min(b.1));
            let (cx1, cy1) = layer.cell_of(a.0.max(b.0), a.1.max(b.1));
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    layer.buckets[cy as usize * nx + cx as usize].push(k as u32);
                }
            }
        }
        Ok(layer)
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin.0) / self.cell).floor() as i64,
            ((y - self.origin.1) / self.cell).floor() as i64,
        )
    }

    pub fn lines(&self) -> &[Polyline] {
        &self.lines
    }

    fn eval(&self, k: usize, p: (f64, f64)) -> NearestBed {
        let (li, s) = self.segs[k];
        let l = &self.lines[li];
        let (distance, bed_altitude) = segment_nearest(p, l.vertices[s], l.vertices[s + 1], l.bed[s], l.bed[s + 1]);
        NearestBed {
            distance,
            bed_altitude,
            line: li,
            segment: s,
        }
    }

    /// Exact nearest segment, searched in growing rings of index cells.
    pub fn nearest(&self, x: f64, y: f64) -> NearestBed {
        let (qx, qy) = self.cell_of(x, y);
        let mut best: Option<NearestBed> = None;
        // Chebyshev distance from the query cell to the farthest index cell.
        let reach = [qx, self.nx as i64 - 1 - qx, qy, self.ny as i64 - 1 - qy]
            .into_iter()
            .map(i64::abs)
            .max()
            .unwrap();
        let mut r: i64 = 0;
        loop {
            for cy in (qy - r)..=(qy + r) {
                if cy < 0 || cy >= self.ny as i64 {
                    continue;
                }
                let on_edge_row = cy == qy - r || cy == qy + r;
                let step = if on_edge_row || r == 0 { 1 } else { (2 * r) as usize };
                for cx in ((qx - r)..=(qx + r)).step_by(step) {
                    if cx < 0 || cx >= self.nx as i64 {
                        continue;
                    }
                    for &k in &self.buckets[cy as usize * self.nx + cx as usize] {
                        let cand = self.eval(k as usize, (x, y));
                        if best.is_none_or(|b| cand.better_than(&b)) {
                            best = Some(cand);
                        }
                    }
                }
            }
            // Unvisited cells are at least r cells away from the query's cell.
            if let Some(b) = best {
                if b.distance < r as f64 * self.cell {
                    break;
                }
            }
            if r >= reach {
                break;
            }
            r += 1;
        }
        best.expect("layer has at least one segment")
    }

    /// Exhaustive scan over every segment.
    pub fn nearest_brute_force(&self, x: f64, y: f64) -> NearestBed {
        (0..self.segs.len())
            .map(|k| self.eval(k, (x, y)))
            .reduce(|a, b| if b.better_than(&a) { b } else { a })
            .expect("layer has at least one segment")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let rows: Vec<VertexRow> = read_records(path, &WATERCOURSE_HEADER, &[])?;
        let mut lines: Vec<Polyline> = Vec::new();
        let mut last_index: Option<u32> = None;
        for r in rows {
            match lines.last_mut() {
                Some(l) if l.id == r.watercourse_id => {
                    if last_index.is_some_and(|i| r.vertex_index <= i) {
                        return Err(Error::validation(
                            format!("watercourse {}", r.watercourse_id),
                            "vertex_index must be strictly increasing",
                        ));
                    }
                    l.vertices.push((r.x, r.y));
                    l.bed.push(r.bed_altitude);
                }
                _ => {
                    if lines.iter().any(|l| l.id == r.watercourse_id) {
                        return Err(Error::validation(
                            format!("watercourse {}", r.watercourse_id),
                            "vertices must be contiguous in the file",
                        ));
                    }
                    lines.push(Polyline {
                        id: r.watercourse_id,
                        vertices: vec![(r.x, r.y)],
                        bed: vec![r.bed_altitude],
                    });
                }
            }
            last_index = Some(r.vertex_index);
        }
        Self::new(lines)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let rows: Vec<VertexRow> = self
            .lines
            .iter()
            .flat_map(|l| {
                l.vertices.iter().zip(&l.bed).enumerate().map(|(i, (&(x, y), &z))| VertexRow {
                    watercourse_id: l.id.clone(),
                    vertex_index: i as u32,
                    x,
                    y,
                    bed_altitude: z,
                })
            })
            .collect();
        write_records(path, &rows)
    }
}
