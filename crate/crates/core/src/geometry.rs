//! Oriented 3D boxes and their overlap metrics.
//!
//! Boxes are gravity-aligned: the only rotation is a yaw about the vertical
//! axis, so every volumetric overlap reduces to a rotated-rectangle overlap
//! in the bird's-eye view (BEV) times an interval overlap along z. The BEV
//! intersection is computed exactly by convex polygon clipping.

use thiserror::Error;

/// Tolerance for clipping decisions: points within this distance (meters) of
/// a clip edge count as inside. Keeps touching boxes from producing sliver
/// polygons with unstable signs.
const CLIP_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box field {field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("box dimension {field} must be > 0, got {value}")]
    NonPositiveDim { field: &'static str, value: f64 },
}

/// Normalize an angle to the half-open interval (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(std::f64::consts::TAU);
    if a > std::f64::consts::PI {
        a - std::f64::consts::TAU
    } else {
        a
    }
}

/// An oriented 3D bounding box: center in world frame, yaw in (-pi, pi],
/// length along the heading, width across it, height along z.
///
/// Invariants (upheld by the constructor): all fields finite, dimensions
/// strictly positive, yaw normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    x: f64,
    y: f64,
    z: f64,
    yaw: f64,
    l: f64,
    w: f64,
    h: f64,
}

impl Box3D {
    pub fn new(
        x: f64,
        y: f64,
        z: f64,
        yaw: f64,
        l: f64,
        w: f64,
        h: f64,
    ) -> Result<Self, GeometryError> {
        for (field, value) in [
            ("x", x),
            ("y", y),
            ("z", z),
            ("yaw", yaw),
            ("l", l),
            ("w", w),
            ("h", h),
        ] {
            if !value.is_finite() {
                return Err(GeometryError::NonFinite { field, value });
            }
        }
        for (field, value) in [("l", l), ("w", w), ("h", h)] {
            if value <= 0.0 {
                return Err(GeometryError::NonPositiveDim { field, value });
            }
        }
        Ok(Self {
            x,
            y,
            z,
            yaw: normalize_angle(yaw),
            l,
            w,
            h,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }
    pub fn yaw(&self) -> f64 {
        self.yaw
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    /// Vertical extent [z - h/2, z + h/2].
    pub fn z_interval(&self) -> (f64, f64) {
        (self.z - self.h / 2.0, self.z + self.h / 2.0)
    }

    /// Corners of the yaw-rotated BEV rectangle, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (sin, cos) = self.yaw.sin_cos();
        let hl = self.l / 2.0;
        let hw = self.w / 2.0;
        // Local-frame corners in CCW order, rotated into the world frame.
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| [self.x + u * cos - v * sin, self.y + u * sin + v * cos])
    }
}

/// Signed area of a polygon (positive for counter-clockwise order).
fn signed_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc / 2.0
}

/// Clip a convex CCW polygon against the half-plane left of edge a->b.
fn clip_halfplane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let ex = b[0] - a[0];
    let ey = b[1] - a[1];
    let edge_len = (ex * ex + ey * ey).sqrt();
    // Inclusion with a distance-based tolerance of CLIP_EPS meters.
    let tol = -CLIP_EPS * edge_len;
    let side = |p: [f64; 2]| ex * (p[1] - a[1]) - ey * (p[0] - a[0]);

    let mut out = Vec::with_capacity(poly.len() + 1);
    for (i, &p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        let sp = side(p);
        let sq = side(q);
        if sp >= tol {
            out.push(p);
        }
        if (sp >= tol) != (sq >= tol) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Area of the intersection of two convex CCW polygons via successive
/// half-plane clipping. Degenerate (zero-area) inputs yield 0.
pub fn polygon_intersection_area(p: &[[f64; 2]], q: &[[f64; 2]]) -> f64 {
    if signed_area(p).abs() <= f64::EPSILON || signed_area(q).abs() <= f64::EPSILON {
        return 0.0;
    }
    let mut clipped: Vec<[f64; 2]> = p.to_vec();
    for i in 0..q.len() {
        clipped = clip_halfplane(&clipped, q[i], q[(i + 1) % q.len()]);
        if clipped.len() < 3 {
            return 0.0;
        }
    }
    signed_area(&clipped).max(0.0)
}

/// Convex hull of a point set (Andrew's monotone chain), CCW order.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let chain = |iter: &mut dyn Iterator<Item = [f64; 2]>| {
        let mut out: Vec<[f64; 2]> = Vec::new();
        for p in iter {
            while out.len() >= 2 && cross(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
                out.pop();
            }
            out.push(p);
        }
        out.pop();
        out
    };
    let mut lower = chain(&mut pts.iter().copied());
    let upper = chain(&mut pts.iter().rev().copied());
    lower.extend(upper);
    lower
}

fn z_overlap(a: &Box3D, b: &Box3D) -> f64 {
    let (alo, ahi) = a.z_interval();
    let (blo, bhi) = b.z_interval();
    (ahi.min(bhi) - alo.max(blo)).max(0.0)
}

fn intersection_volume(a: &Box3D, b: &Box3D) -> f64 {
    let dz = z_overlap(a, b);
    if dz <= 0.0 {
        return 0.0;
    }
    // Clip in a canonical order so the overlap metrics are exactly
    // symmetric despite the clipping arithmetic being order-dependent.
    let key = |b: &Box3D| (b.x, b.y, b.z, b.yaw, b.l, b.w, b.h);
    let (p, q) = if key(a) <= key(b) { (a, b) } else { (b, a) };
    polygon_intersection_area(&p.bev_corners(), &q.bev_corners()) * dz
}

/// 3D intersection-over-union of two oriented boxes, in [0, 1].
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized 3D IoU in (-1, 1]: IoU minus the enclosing-volume penalty
/// (C - U) / C, where C is the BEV convex hull of both corner sets times the
/// smallest z-interval covering both boxes.
pub fn giou3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;

    let mut corners = Vec::with_capacity(8);
    corners.extend_from_slice(&a.bev_corners());
    corners.extend_from_slice(&b.bev_corners());
    let hull_area = signed_area(&convex_hull(&corners));

    let (alo, ahi) = a.z_interval();
    let (blo, bhi) = b.z_interval();
    let z_cover = ahi.max(bhi) - alo.min(blo);

    let enclosing = hull_area * z_cover;
    let iou = (inter / union).clamp(0.0, 1.0);
    (iou - (enclosing - union) / enclosing).clamp(-1.0, 1.0)
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (
            -20.0f64..20.0,
            -20.0f64..20.0,
            -5.0f64..5.0,
            -std::f64::consts::PI..std::f64::consts::PI,
            0.5f64..5.0,
            0.5f64..5.0,
            0.5f64..5.0,
        )
            .prop_map(|(x, y, z, yaw, l, w, h)| Box3D::new(x, y, z, yaw, l, w, h).unwrap())
    }

    fn rigid(b: &Box3D, angle: f64, pivot: [f64; 2], t: [f64; 2]) -> Box3D {
        let (sin, cos) = angle.sin_cos();
        let dx = b.x() - pivot[0];
        let dy = b.y() - pivot[1];
        Box3D::new(
            pivot[0] + dx * cos - dy * sin + t[0],
            pivot[1] + dx * sin + dy * cos + t[1],
            b.z(),
            b.yaw() + angle,
            b.l(),
            b.w(),
            b.h(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn overlap_metrics_are_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou3d(&a, &b), iou3d(&b, &a));
            prop_assert_eq!(giou3d(&a, &b), giou3d(&b, &a));
        }

        #[test]
        fn overlap_metrics_are_bounded(a in arb_box(), b in arb_box()) {
            let iou = iou3d(&a, &b);
            let giou = giou3d(&a, &b);
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert!(giou > -1.0 && giou <= 1.0);
            prop_assert!(giou <= iou + 1e-12);
        }

        #[test]
        fn overlap_metrics_are_rigid_invariant(
            a in arb_box(),
            b in arb_box(),
            angle in -std::f64::consts::PI..std::f64::consts::PI,
            px in -10.0f64..10.0,
            py in -10.0f64..10.0,
            tx in -50.0f64..50.0,
            ty in -50.0f64..50.0,
        ) {
            let (a2, b2) = (rigid(&a, angle, [px, py], [tx, ty]), rigid(&b, angle, [px, py], [tx, ty]));
            prop_assert!((iou3d(&a, &b) - iou3d(&a2, &b2)).abs() < 1e-9);
            prop_assert!((giou3d(&a, &b) - giou3d(&a2, &b2)).abs() < 1e-9);
        }

        #[test]
        fn yaw_full_turn_is_identity(a in arb_box(), b in arb_box()) {
            let turned = Box3D::new(
                b.x(), b.y(), b.z(),
                b.yaw() + std::f64::consts::TAU,
                b.l(), b.w(), b.h(),
            ).unwrap();
            prop_assert!((iou3d(&a, &b) - iou3d(&a, &turned)).abs() < 1e-9);
        }

        #[test]
        fn clipping_never_exceeds_smaller_area(a in arb_box(), b in arb_box()) {
            let area = polygon_intersection_area(&a.bev_corners(), &b.bev_corners());
            let min_area = (a.l() * a.w()).min(b.l() * b.w());
            prop_assert!(area >= 0.0);
            prop_assert!(area <= min_area + 1e-9);
        }
    }
}
