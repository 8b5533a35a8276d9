//! Great-circle distances and landfall detection.

use crate::ingest::{CoastPolyline, StormTrack};

use super::FeatureError;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine distance in kilometers between two (lon, lat) points in degrees.
pub fn haversine_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

type Vec3 = [f64; 3];

fn unit(lon: f64, lat: f64) -> Vec3 {
    let (lon, lat) = (lon.to_radians(), lat.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Great-circle distance (km) from `p` to the minor arc between `a` and `b`.
pub fn point_segment_km(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let endpoints = || haversine_km(p.0, p.1, a.0, a.1).min(haversine_km(p.0, p.1, b.0, b.1));
    let (pv, av, bv) = (unit(p.0, p.1), unit(a.0, a.1), unit(b.0, b.1));
    let n = cross(av, bv);
    let n_len = norm(n);
    if n_len < 1e-12 {
        return endpoints();
    }
    let n = [n[0] / n_len, n[1] / n_len, n[2] / n_len];
    let s = dot(pv, n);
    let c = [pv[0] - s * n[0], pv[1] - s * n[1], pv[2] - s * n[2]];
    if norm(c) < 1e-15 {
        return endpoints();
    }
    // foot of the perpendicular lies on the arc iff it is between a and b
    let on_arc = dot(cross(av, c), n) >= 0.0 && dot(cross(c, bv), n) >= 0.0;
    if on_arc {
        EARTH_RADIUS_KM * s.abs().min(1.0).asin()
    } else {
        endpoints()
    }
}

/// Minimum distance (km) from a point to a set of polylines. A polyline with
/// a single vertex counts as that vertex.
pub fn polyline_distance_km(p: (f64, f64), lines: &[Vec<(f64, f64)>]) -> f64 {
    let mut best = f64::INFINITY;
    for line in lines {
        match line.len() {
            0 => {}
            1 => best = best.min(haversine_km(p.0, p.1, line[0].0, line[0].1)),
            _ => {
                for w in line.windows(2) {
                    best = best.min(point_segment_km(p, w[0], w[1]));
                }
            }
        }
    }
    best
}

pub fn coastal_distance_km(lon: f64, lat: f64, coast: &CoastPolyline) -> f64 {
    polyline_distance_km((lon, lat), coast.lines())
}

/// Distance to landfall (when known) and to the coast, kilometers.
pub fn distances(lon: f64, lat: f64, landfall: Option<&Landfall>, coast: &CoastPolyline) -> (Option<f64>, f64) {
    (
        landfall.map(|l| haversine_km(lon, lat, l.lon, l.lat)),
        coastal_distance_km(lon, lat, coast),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landfall {
    pub time: f64,
    pub lon: f64,
    pub lat: f64,
}

fn planar_sq_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - qx).powi(2) + (p.1 - qy).powi(2)
}

/// True when `p` lies on the land side of the nearest coast segment. Land
/// is to the left when walking a polyline from its first vertex to its last.
pub fn is_landward(p: (f64, f64), coast: &CoastPolyline) -> bool {
    let mut best: Option<(f64, (f64, f64), (f64, f64))> = None;
    for (a, b) in coast.segments() {
        let d = planar_sq_dist(p, a, b);
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, a, b));
        }
    }
    match best {
        Some((_, a, b)) => (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) > 0.0,
        None => false,
    }
}

/// Parameter along `p -> q` where it meets segment `a -> b`, if it does.
fn segment_crossing(p: (f64, f64), q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    let r = (q.0 - p.0, q.1 - p.1);
    let s = (b.0 - a.0, b.1 - a.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let ap = (a.0 - p.0, a.1 - p.1);
    let t = (ap.0 * s.1 - ap.1 * s.0) / denom;
    let u = (ap.0 * r.1 - ap.1 * r.0) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

/// First crossing of the eye track over the coast, interpolated linearly in
/// lon/lat and time between track samples. A track that starts on land makes
/// landfall at its first sample.
pub fn find_landfall(track: &StormTrack, coast: &CoastPolyline) -> Result<Landfall, FeatureError> {
    let samples = track.samples();
    let first = samples[0];
    if is_landward((first.lon, first.lat), coast) {
        return Ok(Landfall {
            time: first.time,
            lon: first.lon,
            lat: first.lat,
        });
    }
    for w in samples.windows(2) {
        let (p, q) = ((w[0].lon, w[0].lat), (w[1].lon, w[1].lat));
        let hit = coast
            .segments()
            .filter_map(|(a, b)| segment_crossing(p, q, a, b))
            .min_by(f64::total_cmp);
        if let Some(t) = hit {
            return Ok(Landfall {
                time: w[0].time + t * (w[1].time - w[0].time),
                lon: p.0 + t * (q.0 - p.0),
                lat: p.1 + t * (q.1 - p.1),
            });
        }
    }
    Err(FeatureError::NoLandfall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TrackSample;
    use proptest::prelude::*;

    fn track(pts: &[(f64, f64, f64)]) -> StormTrack {
        StormTrack::new(pts.iter().map(|&(time, lon, lat)| TrackSample { time, lon, lat }).collect()).unwrap()
    }

    /// Meridian coast at lon -94 running south to north: land lies west.
    fn meridian_coast() -> CoastPolyline {
        CoastPolyline::new(vec![vec![(-94.0, 27.0), (-94.0, 31.0)]]).unwrap()
    }

    #[test]
    fn one_degree_of_latitude() {
        let d = haversine_km(-94.0, 29.0, -94.0, 30.0);
        assert!((d - 111.19).abs() < 0.01, "{d}");
        assert_eq!(haversine_km(-94.0, 29.0, -94.0, 29.0), 0.0);
    }

    #[test]
    fn coincident_landfall_is_zero() {
        let lf = Landfall { time: 0.0, lon: -94.3, lat: 29.1 };
        let (d, _) = distances(-94.3, 29.1, Some(&lf), &meridian_coast());
        assert_eq!(d, Some(0.0));
    }

    #[test]
    fn degenerate_coast_is_a_vertex() {
        let p = (-94.5, 29.5);
        let v = (-94.0, 29.0);
        let lines = vec![vec![v]];
        assert_eq!(polyline_distance_km(p, &lines), haversine_km(p.0, p.1, v.0, v.1));
        let coast = CoastPolyline::new(vec![vec![v, v]]).unwrap();
        let d = coastal_distance_km(p.0, p.1, &coast);
        assert!((d - haversine_km(p.0, p.1, v.0, v.1)).abs() < 1e-9);
    }

    #[test]
    fn seaward_track_never_lands() {
        let t = track(&[(0.0, -93.0, 28.0), (3600.0, -92.0, 29.0)]);
        assert!(matches!(find_landfall(&t, &meridian_coast()), Err(FeatureError::NoLandfall)));
    }

    #[test]
    fn crossing_at_segment_midpoint() {
        let t = track(&[(0.0, -93.0, 29.0), (7200.0, -95.0, 29.0)]);
        let lf = find_landfall(&t, &meridian_coast()).unwrap();
        assert!((lf.lon + 94.0).abs() < 1e-12);
        assert!((lf.lat - 29.0).abs() < 1e-12);
        assert!((lf.time - 3600.0).abs() < 1e-9);
    }

    #[test]
    fn landward_start_lands_immediately() {
        let t = track(&[(100.0, -95.0, 29.0), (200.0, -93.0, 29.0)]);
        let lf = find_landfall(&t, &meridian_coast()).unwrap();
        assert_eq!((lf.time, lf.lon, lf.lat), (100.0, -95.0, 29.0));
    }

    #[test]
    fn first_of_several_crossings() {
        let coast = CoastPolyline::new(vec![
            vec![(-94.0, 27.0), (-94.0, 31.0)],
            vec![(-93.5, 27.0), (-93.5, 31.0)],
        ])
        .unwrap();
        let t = track(&[(0.0, -93.0, 29.0), (1000.0, -95.0, 29.0)]);
        let lf = find_landfall(&t, &coast).unwrap();
        assert!((lf.lon + 93.5).abs() < 1e-12);
    }

    /// Dense sampling of the arc as an independent upper bound.
    fn sampled_segment_km(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (av, bv) = (unit(a.0, a.1), unit(b.0, b.1));
        let mut best = f64::INFINITY;
        for k in 0..=20_000 {
            let t = k as f64 / 20_000.0;
            let v = [
                av[0] + t * (bv[0] - av[0]),
                av[1] + t * (bv[1] - av[1]),
                av[2] + t * (bv[2] - av[2]),
            ];
            let len = norm(v);
            let lat = (v[2] / len).asin().to_degrees();
            let lon = v[1].atan2(v[0]).to_degrees();
            best = best.min(haversine_km(p.0, p.1, lon, lat));
        }
        best
    }

    fn coord() -> impl Strategy<Value = (f64, f64)> {
        (-100.0f64..-80.0, 20.0f64..40.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn haversine_is_symmetric_and_triangular(a in coord(), b in coord(), c in coord()) {
            let ab = haversine_km(a.0, a.1, b.0, b.1);
            let ba = haversine_km(b.0, b.1, a.0, a.1);
            prop_assert!((ab - ba).abs() < 1e-9);
            let bc = haversine_km(b.0, b.1, c.0, c.1);
            let ac = haversine_km(a.0, a.1, c.0, c.1);
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn segment_distance_matches_dense_sampling(p in coord(), a in coord(), b in coord()) {
            let exact = point_segment_km(p, a, b);
            let sampled = sampled_segment_km(p, a, b);
            prop_assert!(exact <= sampled + 1e-9);
            // sample spacing is under 0.2 km for these segment lengths
            prop_assert!(sampled - exact < 0.2, "{} vs {}", exact, sampled);
        }
    }
}
