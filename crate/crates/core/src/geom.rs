//! Plane geometry helpers for the network generator: polyline offsets,
//! stationing, segment intersection, and polygon measures. Everything works
//! on simple `Vec2` points in metres.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub(crate) fn v(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub fn add(self, o: Vec2) -> Vec2 {
        v(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        v(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, f: f64) -> Vec2 {
        v(self.x * f, self.y * f)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    pub fn unit(self) -> Vec2 {
        let n = self.norm();
        v(self.x / n, self.y / n)
    }

    /// 90 degrees counterclockwise: the left-hand normal of a direction.
    pub fn perp(self) -> Vec2 {
        v(-self.y, self.x)
    }
}

/// Compass azimuth from `a` to `b` in degrees: 0 = north (+y), 90 = east.
pub(crate) fn azimuth_deg(a: Vec2, b: Vec2) -> f64 {
    let d = b.sub(a);
    let mut az = d.x.atan2(d.y).to_degrees();
    if az < 0.0 {
        az += 360.0;
    }
    az
}

pub(crate) fn polyline_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Point at arc-length `s` along the polyline, clamped to its ends.
pub(crate) fn point_at_station(pts: &[Vec2], s: f64) -> Vec2 {
    if s <= 0.0 {
        return pts[0];
    }
    let mut rest = s;
    for w in pts.windows(2) {
        let seg = w[0].dist(w[1]);
        if rest <= seg {
            return w[0].add(w[1].sub(w[0]).scale(rest / seg));
        }
        rest -= seg;
    }
    *pts.last().unwrap()
}

/// Sub-polyline between stations `s0 <= s1`, keeping interior vertices.
pub(crate) fn substring(pts: &[Vec2], s0: f64, s1: f64) -> Vec<Vec2> {
    let mut out = vec![point_at_station(pts, s0)];
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let seg = w[0].dist(w[1]);
        let end = acc + seg;
        if end > s0 + 1e-9 && end < s1 - 1e-9 {
            out.push(w[1]);
        }
        acc = end;
    }
    let last = point_at_station(pts, s1);
    if out.last().map(|p| p.dist(last) > 1e-9).unwrap_or(true) {
        out.push(last);
    }
    out
}

/// Proper or touching intersection of segments [a0,a1] and [b0,b1].
/// Returns (t, u, point) with both parameters in [0, 1]. Parallel and
/// collinear pairs return None.
pub(crate) fn seg_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<(f64, f64, Vec2)> {
    let r = a1.sub(a0);
    let s = b1.sub(b0);
    let denom = r.cross(s);
    let scale = r.norm() * s.norm();
    if denom.abs() <= 1e-12 * scale.max(1e-12) {
        return None;
    }
    let qp = b0.sub(a0);
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    let eps = 1e-9;
    if (-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u) {
        let t = t.clamp(0.0, 1.0);
        let u = u.clamp(0.0, 1.0);
        Some((t, u, a0.add(r.scale(t))))
    } else {
        None
    }
}

/// All intersections between two polylines as (station on p, station on q,
/// point), ordered along p. Coincident hits from shared vertices collapse.
pub(crate) fn polyline_intersections(p: &[Vec2], q: &[Vec2]) -> Vec<(f64, f64, Vec2)> {
    let mut out: Vec<(f64, f64, Vec2)> = Vec::new();
    let mut sp = 0.0;
    for wp in p.windows(2) {
        let lp = wp[0].dist(wp[1]);
        let mut sq = 0.0;
        for wq in q.windows(2) {
            let lq = wq[0].dist(wq[1]);
            if let Some((t, u, pt)) = seg_intersect(wp[0], wp[1], wq[0], wq[1]) {
                let cand = (sp + t * lp, sq + u * lq, pt);
                let dup = out
                    .iter()
                    .any(|(s, _, existing)| (s - cand.0).abs() < 1e-9 && existing.dist(pt) < 1e-9);
                if !dup {
                    out.push(cand);
                }
            }
            sq += lq;
        }
        sp += lp;
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Offsets a polyline by `d` to its left (negative `d` for the right side)
/// using miter joins. Fails when a join folds the offset back on itself:
/// near-reversals, miters longer than 10 |d|, or offset segments pointing
/// against their source segment.
pub(crate) fn offset_polyline(pts: &[Vec2], d: f64) -> Result<Vec<Vec2>, String> {
    if pts.len() < 2 {
        return Err("polyline needs at least two points".into());
    }
    let dirs: Vec<Vec2> = pts.windows(2).map(|w| w[1].sub(w[0]).unit()).collect();
    let mut out = Vec::with_capacity(pts.len());
    out.push(pts[0].add(dirs[0].perp().scale(d)));
    for i in 1..pts.len() - 1 {
        let (d0, d1) = (dirs[i - 1], dirs[i]);
        if d0.dot(d1) < -0.99 {
            return Err(format!("near-reversal at vertex {i}"));
        }
        // Intersect the two offset lines through this vertex.
        let p0 = pts[i].add(d0.perp().scale(d));
        let p1 = pts[i].add(d1.perp().scale(d));
        let denom = d0.cross(d1);
        let join = if denom.abs() < 1e-12 {
            p0
        } else {
            let t = p1.sub(p0).cross(d1) / denom;
            p0.add(d0.scale(t))
        };
        if join.dist(pts[i]) > 10.0 * d.abs() {
            return Err(format!("miter at vertex {i} exceeds the limit"));
        }
        out.push(join);
    }
    out.push(pts[pts.len() - 1].add(dirs[dirs.len() - 1].perp().scale(d)));
    for (w, dir) in out.windows(2).zip(&dirs) {
        if w[1].sub(w[0]).dot(*dir) <= 0.0 {
            return Err("offset folds back on itself".into());
        }
    }
    Ok(out)
}

/// Shoelace area: positive for counterclockwise rings. The ring closes
/// implicitly.
pub(crate) fn polygon_signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        a += poly[i].cross(poly[j]);
    }
    a / 2.0
}

pub(crate) fn polygon_centroid(poly: &[Vec2]) -> Vec2 {
    let a = polygon_signed_area(poly);
    if a.abs() < 1e-12 {
        let n = poly.len() as f64;
        let sum = poly.iter().fold(v(0.0, 0.0), |s, p| s.add(*p));
        return sum.scale(1.0 / n);
    }
    let n = poly.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        let w = poly[i].cross(poly[j]);
        cx += (poly[i].x + poly[j].x) * w;
        cy += (poly[i].y + poly[j].y) * w;
    }
    v(cx / (6.0 * a), cy / (6.0 * a))
}

/// Even-odd ray cast; boundary points count as inside within float noise.
pub(crate) fn point_in_polygon(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Axis-aligned bounds of a point set as (min, max).
pub(crate) fn bounds(pts: impl Iterator<Item = Vec2>) -> Option<(Vec2, Vec2)> {
    let mut min = v(f64::INFINITY, f64::INFINITY);
    let mut max = v(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for p in pts {
        any = true;
        min = v(min.x.min(p.x), min.y.min(p.y));
        max = v(max.x.max(p.x), max.y.max(p.y));
    }
    any.then_some((min, max))
}

/// Distance from a point to the rectangle *perimeter* spanned by (min, max).
/// Degenerate rectangles collapse to their segment or point.
pub(crate) fn rect_perimeter_dist(p: Vec2, min: Vec2, max: Vec2) -> f64 {
    let inside_x = p.x >= min.x && p.x <= max.x;
    let inside_y = p.y >= min.y && p.y <= max.y;
    if inside_x && inside_y {
        // Inside (or on) the box: nearest edge.
        let dx = (p.x - min.x).min(max.x - p.x);
        let dy = (p.y - min.y).min(max.y - p.y);
        dx.min(dy)
    } else {
        let cx = p.x.clamp(min.x, max.x);
        let cy = p.y.clamp(min.y, max.y);
        p.dist(v(cx, cy))
    }
}

pub(crate) fn point_seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.add(ab.scale(t)))
}

pub(crate) fn point_polyline_dist(p: Vec2, pts: &[Vec2]) -> f64 {
    pts.windows(2)
        .map(|w| point_seg_dist(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}
