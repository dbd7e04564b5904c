//! Deterministic SVG rendering of a Stokes graph: trajectories colored by
//! label class, cuts dashed, branch points and punctures marked.

use std::fmt::Write;

use super::{Parent, StokesGraph};

const W: f64 = 900.0;
const H: f64 = 900.0;

/// Render the graph as a standalone SVG document. Output is deterministic for
/// a fixed graph, modulo the version banner comment.
pub fn render(graph: &StokesGraph) -> String {
    let mut bounds = [f64::MAX, f64::MIN, f64::MAX, f64::MIN];
    let mut grow = |b: &mut [f64; 4], x: f64, y: f64| {
        b[0] = b[0].min(x);
        b[1] = b[1].max(x);
        b[2] = b[2].min(y);
        b[3] = b[3].max(y);
    };
    for b in &graph.branch_points {
        grow(&mut bounds, b.position[0], b.position[1]);
    }
    for t in &graph.trajectories {
        for p in &t.points {
            grow(&mut bounds, p[0], p[1]);
        }
    }
    if bounds[0] > bounds[1] {
        grow(&mut bounds, -1.0, -1.0);
        grow(&mut bounds, 1.0, 1.0);
    }
    let [mut min_x, mut max_x, mut min_y, mut max_y] = bounds;
    // clamp the viewport to a sane multiple of the branch-point scale so
    // runaway trajectories don't shrink everything
    let scale = graph
        .branch_points
        .iter()
        .map(|b| (b.position[0].powi(2) + b.position[1].powi(2)).sqrt())
        .fold(1.0f64, f64::max);
    let lim = 3.5 * scale;
    min_x = min_x.max(-lim);
    max_x = max_x.min(lim);
    min_y = min_y.max(-lim);
    max_y = max_y.min(lim);
    let span = (max_x - min_x).max(max_y - min_y).max(1e-6);
    let pad = 0.08 * span;
    let x0 = min_x - pad;
    let y0 = min_y - pad;
    let s = (W - 20.0) / (span + 2.0 * pad);
    let map = |p: &[f64; 2]| -> (f64, f64) {
        ((p[0] - x0) * s + 10.0, H - 10.0 - (p[1] - y0) * s)
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    out.push_str(&format!("<!-- qwkb stokes graph: model={} theta={} -->\n", graph.model_name, graph.theta));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    let origin = map(&[0.0, 0.0]);
    let _ = writeln!(
        out,
        "<line x1=\"0\" y1=\"{:.3}\" x2=\"{W}\" y2=\"{:.3}\" stroke=\"#dddddd\"/>",
        origin.1, origin.1
    );
    let _ = writeln!(
        out,
        "<line x1=\"{:.3}\" y1=\"0\" x2=\"{:.3}\" y2=\"{H}\" stroke=\"#dddddd\"/>",
        origin.0, origin.0
    );

    // logarithmic cuts: double dashed lines from puncture to branch point
    for cut in &graph.log_cuts {
        let bp = &graph.branch_points[cut.branch_point];
        let to = match cut.puncture.as_str() {
            "origin" => [0.0, 0.0],
            "infinity" => {
                let n = (bp.position[0].powi(2) + bp.position[1].powi(2)).sqrt().max(1e-9);
                [bp.position[0] / n * lim, bp.position[1] / n * lim]
            }
            other => {
                let mut it = other.split(',');
                [
                    it.next().and_then(|v| v.parse().ok()).unwrap_or(0.0),
                    it.next().and_then(|v| v.parse().ok()).unwrap_or(0.0),
                ]
            }
        };
        let (x1, y1) = map(&bp.position);
        let (x2, y2) = map(&to);
        // two parallel strands
        let (dx, dy) = (x2 - x1, y2 - y1);
        let norm = (dx * dx + dy * dy).sqrt().max(1e-9);
        let (ox, oy) = (-dy / norm * 2.0, dx / norm * 2.0);
        for sgn in [-1.0, 1.0] {
            let _ = writeln!(
                out,
                "<line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"#cc2222\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>",
                x1 + sgn * ox,
                y1 + sgn * oy,
                x2 + sgn * ox,
                y2 + sgn * oy
            );
        }
    }

    // square-root cuts run along the primary lines, slightly displaced
    // counterclockwise; rendered as a dashed shadow of each primary line.
    for t in graph.trajectories.iter().filter(|t| matches!(t.parent, Parent::BranchPoint { .. })) {
        let mut d = String::from("M");
        for (k, p) in t.points.iter().enumerate().step_by(4) {
            let (x, y) = map(p);
            let _ = write!(d, "{}{:.3} {:.3}", if k == 0 { " " } else { " L" }, x + 2.0, y + 2.0);
        }
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"#e8a33d\" stroke-width=\"0.8\" stroke-dasharray=\"3 5\"/>",
            d
        );
    }

    // trajectories colored by label class
    for t in &graph.trajectories {
        let color = if t.label.is_diagonal() {
            "#2ca02c"
        } else if t.label.i > 0 {
            "#1f77b4"
        } else {
            "#d62728"
        };
        let mut d = String::from("M");
        for (k, p) in t.points.iter().enumerate().step_by(2) {
            let (x, y) = map(p);
            let _ = write!(d, "{}{:.3} {:.3}", if k == 0 { " " } else { " L" }, x, y);
        }
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"><title>#{} {} gen {} l={}</title></path>",
            d, color, t.id, t.label, t.generation, t.ell_label
        );
    }

    // branch points and punctures
    for (i, b) in graph.branch_points.iter().enumerate() {
        let (x, y) = map(&b.position);
        let _ = writeln!(
            out,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"4\" fill=\"#ff7f0e\"><title>bp {} sign {} sig {}</title></circle>",
            x, y, i, b.sign_class, b.signature
        );
    }
    let (ox, oy) = map(&[0.0, 0.0]);
    let _ = writeln!(out, "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"black\"/>", ox, oy);

    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{build_graph, TraceCaps};
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn empty_graph_is_valid_svg() {
        let g = StokesGraph {
            model_name: "empty".into(),
            theta: 0.0,
            caps: TraceCaps::default(),
            branch_points: vec![],
            punctures: vec![],
            trajectories: vec![],
            intersections: vec![],
            log_cuts: vec![],
            warnings: vec![],
        };
        let svg = render(&g);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("<line"), "axes present");
    }

    #[test]
    fn trajectory_count_matches_dump() {
        let m = crate::models::builtin("qairy", &BTreeMap::new()).unwrap().model;
        let caps = TraceCaps { max_generation: 0, max_steps: 1500, ..Default::default() };
        let g = build_graph(&m, 0.9, &caps).unwrap();
        let svg = render(&g);
        let count = svg.matches("<path d=\"M").count();
        // one path per trajectory plus one dashed cut shadow per primary line
        let primaries = g.primary_lines().count();
        assert_eq!(count, g.trajectories.len() + primaries);
    }
}
