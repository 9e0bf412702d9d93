use crate::error::{Error, Result};

/// Segments shorter than this are merged into their neighbours when turning
/// angles are measured.
const MIN_SEGMENT: f64 = 1e-12;

pub fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean absolute turning per meter: the sum of turning angles at interior
/// vertices divided by the polyline length (rad/m).
pub fn estimate_curvature(polyline: &[[f64; 2]]) -> Result<f64> {
    if polyline.len() < 2 {
        return Err(Error::Degenerate("curvature needs at least two points".into()));
    }
    let length = polyline_length(polyline);
    if !(length > 0.0) {
        return Err(Error::Degenerate("polyline has zero length".into()));
    }
    let headings: Vec<f64> = polyline
        .windows(2)
        .filter(|w| dist(w[0], w[1]) > MIN_SEGMENT)
        .map(|w| (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]))
        .collect();
    let turning: f64 = headings
        .windows(2)
        .map(|h| {
            let d = (h[1] - h[0]).rem_euclid(std::f64::consts::TAU);
            if d > std::f64::consts::PI {
                std::f64::consts::TAU - d
            } else {
                d
            }
        })
        .sum();
    Ok(turning / length)
}
