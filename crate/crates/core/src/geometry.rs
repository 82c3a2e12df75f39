//! Torus geometry shared by the simulator, the lattice hierarchy and the
//! estimators. All positions live in `[0, L)^d`; distances always use the
//! minimum-image convention.

/// Wrap a coordinate into `[0, length)`.
pub fn wrap(x: f64, length: f64) -> f64 {
    let y = x.rem_euclid(length);
    // rem_euclid of a tiny negative value can round up to `length` itself
    if y >= length {
        0.0
    } else {
        y
    }
}

/// Minimum-image representative of a signed displacement, in `[-L/2, L/2]`.
pub fn min_image(delta: f64, length: f64) -> f64 {
    delta - length * (delta / length).round()
}

/// Minimum-image distance between two points given as coordinate slices.
pub fn torus_distance(a: &[f64], b: &[f64], length: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = min_image(x - y, length);
        s += d * d;
    }
    s.sqrt()
}
