//! Small fixed-size vector helpers for 3D points stored as `[f64; 3]`.

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm2(a: Point3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    norm2(sub(a, b))
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    dist2(a, b).sqrt()
}

#[inline]
pub fn lerp(a: Point3, b: Point3, t: f64) -> Point3 {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Returns the unit vector along `a`, or `None` for a (near) zero vector.
#[inline]
pub fn normalized(a: Point3) -> Option<Point3> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

/// Area of the triangle `(a, b, c)`.
#[inline]
pub fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}

/// Angle at `a` in triangle `(a, b, c)`.
pub fn corner_angle(a: Point3, b: Point3, c: Point3) -> f64 {
    let u = sub(b, a);
    let v = sub(c, a);
    norm(cross(u, v)).atan2(dot(u, v))
}
