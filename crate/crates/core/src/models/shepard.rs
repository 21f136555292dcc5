use super::KnotGrid;

/// Inverse-distance-weighted mean of every knot value, `w = 1 / d^power`.
/// A query exactly on a knot returns that knot's value.
pub(crate) fn eval(knots: &KnotGrid<'_>, power: f64, x: f64, y: f64) -> f64 {
    let half_power = power / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &ky) in knots.ky.iter().enumerate() {
        let dy = y - ky;
        let dy2 = dy * dy;
        for (i, &kx) in knots.kx.iter().enumerate() {
            let dx = x - kx;
            let d2 = dx * dx + dy2;
            let value = knots.at(i, j);
            if d2 == 0.0 {
                return value;
            }
            let w = if half_power == 1.0 {
                1.0 / d2
            } else {
                d2.powf(-half_power)
            };
            num += w * value;
            den += w;
        }
    }
    num / den
}
