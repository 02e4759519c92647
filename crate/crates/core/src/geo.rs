//! Small-area geodesy on (lat, lon) pairs in degrees.

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection of `p` around `origin`, in meters (east, north).
pub fn to_local(origin: (f64, f64), p: (f64, f64)) -> (f64, f64) {
    let x = (p.1 - origin.1).to_radians() * EARTH_RADIUS_M * origin.0.to_radians().cos();
    let y = (p.0 - origin.0).to_radians() * EARTH_RADIUS_M;
    (x, y)
}

/// Inverse of [`to_local`].
pub fn from_local(origin: (f64, f64), east: f64, north: f64) -> (f64, f64) {
    let lat = origin.0 + (north / EARTH_RADIUS_M).to_degrees();
    let lon = origin.1 + (east / (EARTH_RADIUS_M * origin.0.to_radians().cos())).to_degrees();
    (lat, lon)
}

/// Shortest distance in meters from `p` to a polyline. A single-vertex
/// polyline degenerates to point distance.
pub fn distance_to_polyline_m(p: (f64, f64), polyline: &[(f64, f64)]) -> f64 {
    match polyline {
        [] => f64::INFINITY,
        [only] => haversine_m(p, *only),
        _ => polyline
            .windows(2)
            .map(|seg| {
                let a = (0.0, 0.0);
                let b = to_local(seg[0], seg[1]);
                let q = to_local(seg[0], p);
                point_segment_distance(q, a, b)
            })
            .fold(f64::INFINITY, f64::min),
    }
}

fn point_segment_distance(q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((q.0 - a.0) * dx + (q.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (px, py) = (a.0 + t * dx, a.1 + t * dy);
    ((q.0 - px).powi(2) + (q.1 - py).powi(2)).sqrt()
}
