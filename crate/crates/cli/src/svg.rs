//! Dependency-free SVG plots with fixed number formatting, so output is diffable.

use std::fmt::Write as _;

use sas_core::retrieval::TopKResult;
use sas_core::sas::ImprovementReport;
use sas_core::trace::{LandingRecord, TABLE_DEPTH, TABLE_HALF_WIDTH};

const BAR_COLORS: [&str; 3] = ["#4c72b0", "#55a868", "#c44e52"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Grouped bars of Top-1/5/10 accuracy per objective.
pub fn topk_bar_chart(results: &[TopKResult]) -> String {
    let (left, top, plot_h, group_w) = (60.0, 30.0, 240.0, 60.0);
    let width = left + group_w * results.len().max(1) as f64 + 120.0;
    let height = top + plot_h + 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            width - 120.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (g, r) in results.iter().enumerate() {
        let x0 = left + group_w * g as f64 + 8.0;
        for (j, v) in [r.top1, r.top5, r.top10].into_iter().enumerate() {
            let h = plot_h * v.clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="14.0" height="{h:.1}" fill="{}"><title>{} Top-{}: {v:.4}</title></rect>"#,
                x0 + 15.0 * j as f64,
                top + plot_h - h,
                BAR_COLORS[j],
                r.objective,
                [1, 5, 10][j]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + 22.0,
            top + plot_h + 18.0,
            r.objective
        );
    }
    let lx = width - 100.0;
    for (j, label) in ["Top-1", "Top-5", "Top-10"].iter().enumerate() {
        let y = top + 20.0 * j as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{label}</text>"#,
            BAR_COLORS[j],
            lx + 18.0,
            y + 10.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{left:.1}" y="{:.1}">Retrieval accuracy per objective</text>"#,
        top - 12.0
    );
    s.push_str("</svg>\n");
    s
}

fn color(iteration: usize, total: usize) -> String {
    let t = if total <= 1 {
        1.0
    } else {
        (iteration - 1) as f64 / (total - 1) as f64
    };
    let r = (40.0 + 200.0 * t).round() as u8;
    let b = (220.0 - 180.0 * t).round() as u8;
    format!("#{r:02x}50{b:02x}")
}

/// Landing positions over the opponent half: seed examples grey, iterations coloured
/// from blue (first) to red (last), the goal as a cross.
pub fn landing_scatter(
    title: &str,
    reports: &[ImprovementReport],
    initial: &[Vec<LandingRecord>],
) -> String {
    let scale = 300.0;
    let margin = 40.0;
    let (xmin, xmax, ymin, ymax) = (-1.2, 1.2, -0.3, 1.8);
    let px = |x: f64| margin + (x - xmin) * scale;
    let py = |y: f64| margin + (ymax - y) * scale;
    let width = 2.0 * margin + (xmax - xmin) * scale;
    let height = 2.0 * margin + (ymax - ymin) * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#e8f0e8" stroke="#336633"/>"##,
        px(-TABLE_HALF_WIDTH),
        py(TABLE_DEPTH),
        2.0 * TABLE_HALF_WIDTH * scale,
        TABLE_DEPTH * scale
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333333" stroke-width="3"/>"##,
        px(-TABLE_HALF_WIDTH - 0.05),
        py(0.0),
        px(TABLE_HALF_WIDTH + 0.05),
        py(0.0)
    );
    for landings in initial {
        for l in landings {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#999999" fill-opacity="0.5"/>"##,
                px(l.x.clamp(xmin, xmax)),
                py(l.y.clamp(ymin, ymax))
            );
        }
    }
    for r in reports {
        let total = r.iterations.len();
        for it in &r.iterations {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}" fill-opacity="0.8"><title>iteration {}</title></circle>"#,
                px(it.landing.x.clamp(xmin, xmax)),
                py(it.landing.y.clamp(ymin, ymax)),
                color(it.iteration, total),
                it.iteration
            );
        }
    }
    if let Some([gx, gy]) = reports.first().and_then(|r| r.goal.target) {
        let (cx, cy) = (px(gx), py(gy));
        let _ = writeln!(
            s,
            r##"<path d="M{:.1} {:.1} L{:.1} {:.1} M{:.1} {:.1} L{:.1} {:.1}" stroke="#000000" stroke-width="2"/>"##,
            cx - 8.0,
            cy - 8.0,
            cx + 8.0,
            cy + 8.0,
            cx - 8.0,
            cy + 8.0,
            cx + 8.0,
            cy - 8.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{margin:.1}" y="24">{}</text>"#,
        escape(title)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use sas_core::retrieval::ObjectiveId;

    #[test]
    fn bar_chart_has_three_bars_per_objective() {
        let r = TopKResult {
            objective: ObjectiveId::O1,
            trials: 4,
            top1: 0.25,
            top5: 0.5,
            top10: 1.0,
            parse_failures: 0,
        };
        let svg = topk_bar_chart(&[r.clone(), r]);
        assert_eq!(svg.matches("<rect x=").count(), 6 + 3);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn colours_run_blue_to_red() {
        assert_eq!(color(1, 30), "#2850dc");
        assert_eq!(color(30, 30), "#f05028");
    }

    #[test]
    fn titles_are_escaped() {
        assert!(landing_scatter("a<b", &[], &[]).contains("a&lt;b"));
    }
}
