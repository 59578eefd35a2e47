//! Static SVG plots of a run: the gray shape field, each robot's path colored
//! by mode, and final positions.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::geom::Vec2;
use crate::shape::ShapeField;
use crate::swarm::Mode;

use super::trace::TraceRow;

/// Pixels per meter.
const SCALE: f64 = 20.0;
const MARGIN: f64 = 1.0;
/// Upper bound on drawn points per robot; paths are decimated beyond it.
const MAX_POINTS: usize = 2000;

fn mode_color(mode: Mode) -> &'static str {
    match mode {
        Mode::Localizing => "#d62728",
        Mode::Agreeing => "#1f77b4",
        Mode::Forming => "#2ca02c",
        Mode::Idle => "#7f7f7f",
    }
}

struct Bounds {
    min: Vec2,
    max: Vec2,
}

impl Bounds {
    fn empty() -> Self {
        Bounds {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn add(&mut self, p: Vec2) {
        self.min = Vec2::new(self.min.x.min(p.x), self.min.y.min(p.y));
        self.max = Vec2::new(self.max.x.max(p.x), self.max.y.max(p.y));
    }

    fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }
}

/// Renders trace rows (absolute positions) over an optional shape field
/// whose frame is centered on `origin`, the seed's start position.
pub fn render_svg(rows: &[TraceRow], field: Option<&ShapeField>, origin: Vec2) -> String {
    let mut paths: BTreeMap<usize, Vec<(Vec2, Mode)>> = BTreeMap::new();
    for r in rows {
        paths.entry(r.id).or_default().push((Vec2::new(r.px, r.py), r.mode));
    }

    let mut bounds = Bounds::empty();
    if let Some(f) = field {
        for c in f.cells().filter(|c| c.gray < 1.0) {
            let half = f.l_cell / 2.0;
            bounds.add(origin + c.center - Vec2::new(half, half));
            bounds.add(origin + c.center + Vec2::new(half, half));
        }
    }
    for p in paths.values().flatten() {
        bounds.add(p.0);
    }
    if bounds.is_empty() {
        bounds.add(Vec2::ZERO);
    }
    let lo = bounds.min - Vec2::new(MARGIN, MARGIN);
    let hi = bounds.max + Vec2::new(MARGIN, MARGIN);
    let width = (hi.x - lo.x) * SCALE;
    let height = (hi.y - lo.y) * SCALE;
    // y grows upward in the world and downward in SVG
    let px = |p: Vec2| ((p.x - lo.x) * SCALE, (hi.y - p.y) * SCALE);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="white"/>"#);

    if let Some(f) = field {
        let _ = writeln!(s, r#"<g id="shape">"#);
        let side = f.l_cell * SCALE;
        for c in f.cells().filter(|c| c.gray < 1.0) {
            let half = f.l_cell / 2.0;
            let (x, y) = px(origin + c.center + Vec2::new(-half, half));
            // ξ = 0 darkest, lighter toward the outside
            let level = (150.0 + 100.0 * c.gray).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{side:.2}" height="{side:.2}" fill="rgb({level},{level},{level})"/>"#
            );
        }
        let _ = writeln!(s, "</g>");
    }

    for (id, pts) in &paths {
        let _ = writeln!(s, r#"<g class="robot" id="robot-{id}">"#);
        let stride = pts.len().div_ceil(MAX_POINTS).max(1);
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut run_mode = pts[0].1;
        let flush = |s: &mut String, run: &mut Vec<(f64, f64)>, mode: Mode| {
            if run.len() >= 2 {
                let coords: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
                    coords.join(" "),
                    mode_color(mode)
                );
            }
            let last = run.last().copied();
            run.clear();
            run.extend(last);
        };
        for (k, &(p, mode)) in pts.iter().enumerate() {
            let keep = k % stride == 0 || k + 1 == pts.len() || mode != run_mode;
            if !keep {
                continue;
            }
            if mode != run_mode {
                run.push(px(p));
                flush(&mut s, &mut run, run_mode);
                run_mode = mode;
                continue;
            }
            run.push(px(p));
        }
        flush(&mut s, &mut run, run_mode);
        let (last, mode) = *pts.last().expect("robot paths are never empty");
        let (x, y) = px(last);
        let radius = if *id == 0 { 4.0 } else { 3.0 };
        let stroke = if *id == 0 { r#" stroke="black" stroke-width="1.5""# } else { "" };
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{radius}" fill="{}"{stroke}/>"#,
            mode_color(mode)
        );
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s
}

/// Start position of robot 0 in a trace, used to place the shape.
pub fn seed_origin(rows: &[TraceRow]) -> Option<Vec2> {
    rows.iter().find(|r| r.id == 0).map(|r| Vec2::new(r.px, r.py))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{builtin, gray_transform};
    use crate::sim::presets::{docking, shape};
    use crate::sim::{MemorySink, Simulation};

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed XML")
    }

    #[test]
    fn empty_trace_draws_only_the_shape() {
        let f = gray_transform(&builtin("dart").unwrap(), 2);
        let svg = render_svg(&[], Some(&f), Vec2::ZERO);
        let doc = parse(&svg);
        let cells = f.cells().filter(|c| c.gray < 1.0).count();
        let rects = doc.descendants().filter(|n| n.has_tag_name("rect")).count();
        assert_eq!(rects, cells + 1);
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 0);
        assert_eq!(doc.root_element().attribute("version"), Some("1.1"));
    }

    #[test]
    fn docking_has_two_paths_and_a_landmark() {
        let mut cfg = docking(false);
        cfg.time.max_time = 30.0;
        let mut sink = MemorySink::default();
        Simulation::new(cfg).unwrap().run(&mut sink).unwrap();
        let svg = render_svg(&sink.robots, None, Vec2::ZERO);
        let doc = parse(&svg);
        let robots: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("robot"))
            .collect();
        assert_eq!(robots.len(), 2);
        // the landmark never moves, so only the docking robot draws a path
        let moving = robots[1].descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert!(moving >= 1);
        assert!(robots[0].descendants().any(|n| n.has_tag_name("circle") && n.attribute("stroke") == Some("black")));
    }

    #[test]
    fn size_follows_the_field() {
        let mut cfg = shape("dart", 12);
        cfg.time.max_time = 0.5;
        let mut sink = MemorySink::default();
        let sim = {
            let mut sim = Simulation::new(cfg).unwrap();
            sim.run(&mut sink).unwrap();
            sim
        };
        let f = sim.field.clone().unwrap();
        let origin = seed_origin(&sink.robots).unwrap();
        let small = render_svg(&sink.robots, Some(&f), origin);
        let big_field = f.clone().with_cell_size(f.l_cell * 2.0);
        let big = render_svg(&sink.robots, Some(&big_field), origin);
        let width = |svg: &str| -> f64 { parse(svg).root_element().attribute("width").unwrap().parse().unwrap() };
        assert!(width(&big) > width(&small));
        assert_eq!(parse(&small).descendants().filter(|n| n.attribute("class") == Some("robot")).count(), 12);
    }
}
