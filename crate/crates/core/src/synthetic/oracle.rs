//! Straight-line reference computations used to produce the truth tables.
//!
//! Nothing here calls the rainfall or geo modules: nearest points come from
//! chord lengths on the unit sphere, window sums from prefix sums, ranks from
//! binary search on sorted samples, and geometry from exhaustive scans.

use crate::geo::AsciiGrid;

fn unit_vector(lat: f64, lon: f64) -> [f64; 3] {
    let (la, lo) = (lat.to_radians(), lon.to_radians());
    [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
}

/// Four closest grid points by chord length (monotone in great-circle distance).
pub(super) fn nearest_four_by_chord(points: &[(f64, f64)], lat: f64, lon: f64) -> [usize; 4] {
    let p = unit_vector(lat, lon);
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &(la, lo))| {
            let q = unit_vector(la, lo);
            let c = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            (c, i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    [d[0].1, d[1].1, d[2].1, d[3].1]
}

/// Trailing `w`-day sums from prefix sums; `None` before the first full window.
pub(super) fn window_sums(series: &[f64], w: usize) -> Vec<Option<f64>> {
    let mut prefix = Vec::with_capacity(series.len() + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..series.len())
        .map(|d| (d + 1 >= w).then(|| prefix[d + 1] - prefix[d + 1 - w]))
        .collect()
}

/// Elementwise maximum of the neighbors' window sums.
pub(super) fn local_max_series(neighbors: &[&[f64]], w: usize) -> Vec<Option<f64>> {
    let sums: Vec<Vec<Option<f64>>> = neighbors.iter().map(|s| window_sums(s, w)).collect();
    (0..sums[0].len())
        .map(|d| {
            sums.iter()
                .map(|s| s[d])
                .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| if v > m { v } else { m }))
        })
        .collect()
}

/// Share of a sorted sample at or below `x`.
pub(super) fn rank_share(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

pub(super) fn sorted_present(values: &[Option<f64>]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Exhaustive nearest watercourse point: `(distance, interpolated bed altitude)`.
pub(super) fn nearest_bed(lines: &[(Vec<(f64, f64)>, Vec<f64>)], x: f64, y: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for (verts, bed) in lines {
        for s in 0..verts.len() - 1 {
            let (ax, ay) = verts[s];
            let (bx, by) = verts[s + 1];
            let (ux, uy) = (bx - ax, by - ay);
            let l2 = ux * ux + uy * uy;
            let mut t = if l2 == 0.0 { 0.0 } else { ((x - ax) * ux + (y - ay) * uy) / l2 };
            t = t.clamp(0.0, 1.0);
            let (qx, qy) = (ax + t * ux, ay + t * uy);
            let d = ((x - qx) * (x - qx) + (y - qy) * (y - qy)).sqrt();
            if d < best.0 {
                best = (d, bed[s] + t * (bed[s + 1] - bed[s]));
            }
        }
    }
    best
}

/// Number of other points within `r` of each point, by all-pairs comparison.
pub(super) fn neighbor_counts(points: &[(f64, f64)], r: f64) -> Vec<u32> {
    let r2 = r * r;
    let mut counts = vec![0u32; points.len()];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            if dx * dx + dy * dy <= r2 {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Values of every cell of `tile` whose center is within `r` of `(x, y)`.
pub(super) fn cells_within(tile: &AsciiGrid, x: f64, y: f64, r: f64) -> Vec<f64> {
    let top = tile.yll + tile.nrows as f64 * tile.cellsize;
    let mut out = Vec::new();
    for row in 0..tile.nrows {
        for col in 0..tile.ncols {
            let cx = tile.xll + (col as f64 + 0.5) * tile.cellsize;
            let cy = top - (row as f64 + 0.5) * tile.cellsize;
            if (cx - x) * (cx - x) + (cy - y) * (cy - y) <= r * r {
                out.push(tile.data[row * tile.ncols + col]);
            }
        }
    }
    out
}

/// Value of the cell holding `(x, y)`.
pub(super) fn cell_value(tile: &AsciiGrid, x: f64, y: f64) -> f64 {
    let top = tile.yll + tile.nrows as f64 * tile.cellsize;
    let col = ((x - tile.xll) / tile.cellsize).floor() as usize;
    let row = ((top - y) / tile.cellsize).floor() as usize;
    tile.data[row * tile.ncols + col]
}

/// Composite class from the nine-cell table (rows: TRI none / low-medium / high;
/// columns: far / intermediate / near).
pub(super) fn wctrii_table(tri_band: usize, distance: f64, altitude_diff: f64) -> u8 {
    const TABLE: [[u8; 3]; 3] = [[1, 2, 3], [4, 5, 6], [7, 8, 9]];
    let mut col = if distance < 100.0 {
        2
    } else if distance <= 500.0 {
        1
    } else {
        0
    };
    if altitude_diff > 10.0 && col > 0 {
        col -= 1;
    }
    TABLE[tri_band][col]
}
