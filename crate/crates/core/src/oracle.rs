//! Brute-force distance oracle: Dijkstra on a lattice graph with wide
//! stencils. Shares no geodesic code with the field solver; only metric
//! evaluations and the boundary description.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector2;

use crate::boundary::Curve;
use crate::error::{Error, Result};
use crate::field::{DistanceField, GridSpec, PointClass};
use crate::metric::Metric;

/// Simpson panels per edge.
const PANELS: usize = 4;

/// Length of the straight segment `a → b` by composite Simpson quadrature.
pub fn segment_length<M: Metric<2>>(metric: &M, a: &Vector2<f64>, b: &Vector2<f64>) -> Result<f64> {
    let v = b - a;
    let mut sum = 0.0;
    for k in 0..=2 * PANELS {
        let w = match k {
            0 => 1.0,
            k if k == 2 * PANELS => 1.0,
            k if k % 2 == 1 => 4.0,
            _ => 2.0,
        };
        let t = k as f64 / (2 * PANELS) as f64;
        sum += w * metric.eval(&(a + v * t), &v)?;
    }
    Ok(sum / (6 * PANELS) as f64)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive lattice offsets `(i, j) ≠ 0` with `|i|, |j| ≤ r`.
pub fn stencil(r: usize) -> Vec<(i64, i64)> {
    let r = r as i64;
    let mut out = Vec::new();
    for j in -r..=r {
        for i in -r..=r {
            if (i, j) != (0, 0) && gcd(i, j) == 1 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Oracle distances on the nodes of a lattice; `None` marks nodes outside the
/// domain or unreachable from the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrid {
    pub grid: GridSpec,
    pub r: usize,
    pub values: Vec<Option<f64>>,
    /// Interior nodes never reached.
    pub disconnected: usize,
    pub sources: usize,
}

impl OracleGrid {
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.values[j * self.grid.nx + i]
    }

    /// Bilinear interpolation; `None` unless all four surrounding nodes have
    /// values.
    pub fn sample(&self, x: &Vector2<f64>) -> Option<f64> {
        let g = &self.grid;
        let fx = (x.x - g.x0) / g.h;
        let fy = (x.y - g.y0) / g.h;
        let snap = |f: f64| {
            if (f - f.round()).abs() < 1e-9 {
                f.round()
            } else {
                f
            }
        };
        let (fx, fy) = (snap(fx), snap(fy));
        if fx < 0.0 || fy < 0.0 || fx > (g.nx - 1) as f64 || fy > (g.ny - 1) as f64 {
            return None;
        }
        let i = (fx.floor() as usize).min(g.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(g.ny.saturating_sub(2));
        let (wx, wy) = (fx - i as f64, fy - j as f64);
        let mut acc = 0.0;
        for (di, dj, w) in [
            (0, 0, (1.0 - wx) * (1.0 - wy)),
            (1, 0, wx * (1.0 - wy)),
            (0, 1, (1.0 - wx) * wy),
            (1, 1, wx * wy),
        ] {
            if w == 0.0 {
                continue;
            }
            acc += w * self.at(i + di, j + dj)?;
        }
        Some(acc)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Boundary samples at arclength spacing at most `h` over `u_range`.
fn boundary_sources(curve: &Curve, u_range: (f64, f64), h: f64) -> Vec<Vector2<f64>> {
    let fine = 16384;
    let params: Vec<f64> = (0..=fine)
        .map(|k| u_range.0 + (u_range.1 - u_range.0) * k as f64 / fine as f64)
        .collect();
    let mut cum = vec![0.0];
    for w in params.windows(2) {
        let l = (curve.point(w[1]) - curve.point(w[0])).norm();
        cum.push(cum.last().unwrap() + l);
    }
    let total = *cum.last().unwrap();
    let n = (total / h).ceil() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    let end = if curve.is_closed() { n - 1 } else { n };
    for m in 0..end {
        let target = total * m as f64 / (n - 1) as f64;
        while k + 1 < fine && cum[k + 1] < target {
            k += 1;
        }
        let w = if cum[k + 1] > cum[k] {
            (target - cum[k]) / (cum[k + 1] - cum[k])
        } else {
            0.0
        };
        out.push(curve.point(params[k] + w * (params[k + 1] - params[k])));
    }
    out
}

/// Shortest-path distances from the boundary (restricted to `u_range`) to
/// every lattice node inside the domain, with stencil radius `r`.
pub fn oracle_distance_window<M: Metric<2>>(
    metric: &M,
    curve: &Curve,
    u_range: (f64, f64),
    grid: GridSpec,
    r: usize,
) -> Result<OracleGrid> {
    if r < 2 {
        return Err(Error::Invalid(format!("stencil radius {r} < 2")));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let inside: Vec<bool> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| curve.contains(&grid.point(i, j)))
        .collect();

    let mut dist = vec![f64::INFINITY; nx * ny];
    // spacing h/r keeps the source error below the stencil error
    let sources = boundary_sources(curve, u_range, grid.h / r as f64);
    let reach = r as f64 * grid.h;
    for s in &sources {
        let i0 = ((s.x - reach - grid.x0) / grid.h).floor().max(0.0) as usize;
        let j0 = ((s.y - reach - grid.y0) / grid.h).floor().max(0.0) as usize;
        let i1 = (((s.x + reach - grid.x0) / grid.h).ceil().max(0.0) as usize).min(nx - 1);
        let j1 = (((s.y + reach - grid.y0) / grid.h).ceil().max(0.0) as usize).min(ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let id = j * nx + i;
                let p = grid.point(i, j);
                if !inside[id] || (p - s).norm() > reach {
                    continue;
                }
                let w = if p == *s {
                    0.0
                } else {
                    segment_length(metric, s, &p)?
                };
                if w < dist[id] {
                    dist[id] = w;
                }
            }
        }
    }

    let offsets = stencil(r);
    let fixed: Option<Vec<f64>> = if metric.is_position_independent() {
        let origin = Vector2::zeros();
        Some(
            offsets
                .iter()
                .map(|&(i, j)| {
                    segment_length(
                        metric,
                        &origin,
                        &(Vector2::new(i as f64, j as f64) * grid.h),
                    )
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mut heap: BinaryHeap<Entry> = dist
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(id, &d)| Entry(d, id))
        .collect();
    let mut done = vec![false; nx * ny];
    while let Some(Entry(d, id)) = heap.pop() {
        if done[id] {
            continue;
        }
        done[id] = true;
        let (i, j) = ((id % nx) as i64, (id / nx) as i64);
        let p = grid.point(i as usize, j as usize);
        for (k, &(di, dj)) in offsets.iter().enumerate() {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= nx as i64 || nj >= ny as i64 {
                continue;
            }
            let nid = nj as usize * nx + ni as usize;
            if done[nid] || !inside[nid] {
                continue;
            }
            let q = grid.point(ni as usize, nj as usize);
            // the segment must stay inside; the midpoint suffices at this scale
            if !curve.contains(&((p + q) / 2.0)) {
                continue;
            }
            let w = match &fixed {
                Some(f) => f[k],
                None => segment_length(metric, &p, &q)?,
            };
            if d + w < dist[nid] {
                dist[nid] = d + w;
                heap.push(Entry(d + w, nid));
            }
        }
    }

    let mut disconnected = 0;
    let values = (0..nx * ny)
        .map(|id| {
            if !inside[id] {
                None
            } else if dist[id].is_finite() {
                Some(dist[id])
            } else {
                disconnected += 1;
                None
            }
        })
        .collect();
    Ok(OracleGrid {
        grid,
        r,
        values,
        disconnected,
        sources: sources.len(),
    })
}

/// Oracle over the whole of a closed boundary.
pub fn oracle_distance<M: Metric<2>>(
    metric: &M,
    curve: &Curve,
    grid: GridSpec,
    r: usize,
) -> Result<OracleGrid> {
    if !curve.is_closed() {
        return Err(Error::Invalid(
            "an open boundary needs a parameter window".into(),
        ));
    }
    oracle_distance_window(metric, curve, (0.0, 1.0), grid, r)
}

/// A-priori oracle error scale `h·r + 1/r`.
pub fn error_scale(h: f64, r: usize) -> f64 {
    h * r as f64 + 1.0 / r as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub compared: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Location of the largest difference.
    pub worst_at: Option<Vector2<f64>>,
    /// Points whose difference exceeds `5·(h·r + 1/r)·scale`.
    pub flagged: usize,
    pub tolerance: f64,
}

impl Comparison {
    pub fn passes(&self) -> bool {
        self.compared > 0 && self.max_abs <= self.tolerance && self.flagged == 0
    }
}

/// Compares REGULAR field values with the oracle. A point is flagged when its
/// difference exceeds `5·(h·r + 1/r)·scale`; the comparison passes when no
/// point is flagged and the maximum is within `tolerance`.
pub fn compare(
    field: &DistanceField,
    oracle: &OracleGrid,
    scale: f64,
    tolerance: f64,
) -> Comparison {
    let flag = 5.0 * error_scale(oracle.grid.h, oracle.r) * scale;
    let mut compared = 0;
    let mut sum = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut worst_at = None;
    let mut flagged = 0;
    for p in &field.points {
        if p.class != PointClass::Regular {
            continue;
        }
        let (Some(d), Some(o)) = (p.distance(), oracle.sample(&p.x)) else {
            continue;
        };
        let diff = (d - o).abs();
        compared += 1;
        sum += diff;
        if diff > max_abs {
            max_abs = diff;
            worst_at = Some(p.x);
        }
        if diff > flag {
            flagged += 1;
        }
    }
    Comparison {
        compared,
        max_abs,
        mean_abs: if compared > 0 {
            sum / compared as f64
        } else {
            0.0
        },
        worst_at,
        flagged,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricSpec;

    #[test]
    fn stencil_sizes() {
        assert_eq!(stencil(1).len(), 8);
        assert_eq!(stencil(2).len(), 16);
        assert!(stencil(4).iter().all(|&(i, j)| gcd(i, j) == 1));
    }

    #[test]
    fn segment_length_is_exact_for_constant_metrics() {
        let r = MetricSpec::randers_constant(nalgebra::DMatrix::identity(2, 2), vec![0.5, 0.0])
            .unwrap();
        let l = segment_length(&r, &Vector2::zeros(), &Vector2::new(1.0, 0.0)).unwrap();
        assert!((l - 1.5).abs() < 1e-15);
    }
}
