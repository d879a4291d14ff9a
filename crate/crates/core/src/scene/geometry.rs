//! Planar helpers for oriented footprint rectangles.

pub type Point = (f64, f64);

/// Corners of a rectangle centred at `center` with the given half extents,
/// rotated by `angle`, in counter-clockwise order.
pub fn oriented_rect(center: Point, half_w: f64, half_d: f64, angle: f64) -> [Point; 4] {
    let (s, c) = angle.sin_cos();
    let local = [
        (-half_w, -half_d),
        (half_w, -half_d),
        (half_w, half_d),
        (-half_w, half_d),
    ];
    local.map(|(u, v)| (center.0 + c * u - s * v, center.1 + s * u + c * v))
}

/// Shoelace area (absolute).
pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice.abs()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let t = d1 / (d1 - d2);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Sutherland-Hodgman clip of `subject` against the convex, counter-clockwise
/// polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let p_in = cross(a, b, p) >= 0.0;
            let q_in = cross(a, b, q) >= 0.0;
            match (p_in, q_in) {
                (true, true) => output.push(q),
                (true, false) => output.push(line_intersection(p, q, a, b)),
                (false, true) => {
                    output.push(line_intersection(p, q, a, b));
                    output.push(q);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// Area of the intersection of two convex counter-clockwise polygons.
pub fn intersection_area(a: &[Point], b: &[Point]) -> f64 {
    polygon_area(&clip_convex(a, b))
}

/// Whether `p` lies inside (or on the boundary of) a rectangle given in
/// centre / half-extent / angle form.
pub fn point_in_oriented_rect(p: Point, center: Point, half_w: f64, half_d: f64, angle: f64) -> bool {
    let (s, c) = angle.sin_cos();
    let dx = p.0 - center.0;
    let dy = p.1 - center.1;
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= half_w && v.abs() <= half_d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_area() {
        let sq = oriented_rect((0.0, 0.0), 0.5, 0.5, 0.3);
        assert!((polygon_area(&sq) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intersection_of_offset_squares() {
        let a = oriented_rect((0.0, 0.0), 0.5, 0.5, 0.0);
        let b = oriented_rect((0.5, 0.0), 0.5, 0.5, 0.0);
        assert!((intersection_area(&a, &b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_inside_larger_square() {
        let big = oriented_rect((0.0, 0.0), 2.0, 2.0, 0.0);
        let small = oriented_rect((0.1, -0.2), 0.5, 0.5, 0.7);
        assert!((intersection_area(&small, &big) - 1.0).abs() < 1e-12);
        assert!((intersection_area(&big, &small) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diamond_over_square_corner_area() {
        // Square [-1,1]^2 rotated 45 degrees against the same square: the
        // intersection is a regular octagon with area 8(sqrt 2 - 1).
        let a = oriented_rect((0.0, 0.0), 1.0, 1.0, 0.0);
        let b = oriented_rect((0.0, 0.0), 1.0, 1.0, std::f64::consts::FRAC_PI_4);
        let expected = 8.0 * (2f64.sqrt() - 1.0);
        assert!((intersection_area(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    fn point_in_rect_respects_rotation() {
        let angle = std::f64::consts::FRAC_PI_2;
        assert!(point_in_oriented_rect((0.0, 1.5), (0.0, 0.0), 2.0, 0.5, angle));
        assert!(!point_in_oriented_rect((1.5, 0.0), (0.0, 0.0), 2.0, 0.5, angle));
    }
}
