use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::results::{format_sig, Row};

const WIDTH_PER_BOX: f64 = 70.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const PLOT_H: f64 = 300.0;
const BOTTOM: f64 = 110.0;
const BOX_W: f64 = 36.0;
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

struct Group {
    method: String,
    depth: usize,
    values: Vec<f64>,
    failures: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn plot_name(problem: &str, tau: f64) -> String {
    format!("boxplot_{problem}_tau{}.svg", format_sig(tau, 3).replace('.', "p"))
}

/// Rows shown in the plots: the test split, or training rows when a
/// scenario has no test split.
fn plotted(rows: &[Row]) -> Vec<&Row> {
    let test: Vec<&Row> = rows.iter().filter(|r| r.split == "test").collect();
    if test.is_empty() {
        rows.iter().collect()
    } else {
        test
    }
}

/// Writes one grouped box plot per (problem, τ) and returns the paths.
pub fn emit_plots(rows: &[Row], out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut panels: BTreeMap<(String, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        panels
            .entry((r.problem.clone(), format_sig(r.tau, 6)))
            .or_default()
            .push(r);
    }
    let mut files = Vec::new();
    for ((problem, _), panel) in panels {
        let owned: Vec<Row> = panel.into_iter().cloned().collect();
        let tau = owned[0].tau;
        let svg = render(&problem, tau, &plotted(&owned));
        let path = out_dir.join(plot_name(&problem, tau));
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    Ok(files)
}

fn groups(rows: &[&Row]) -> Vec<Group> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut out: Vec<Group> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.depth);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                out.push(Group {
                    method: r.method.clone(),
                    depth: r.depth,
                    values: Vec::new(),
                    failures: 0,
                });
                out.len() - 1
            }
        };
        match r.excess_cost {
            Some(v) => out[idx].values.push(v),
            None => out[idx].failures += 1,
        }
    }
    for g in &mut out {
        g.values.sort_by(f64::total_cmp);
    }
    out
}

fn render(problem: &str, tau: f64, rows: &[&Row]) -> String {
    let groups = groups(rows);
    let all: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if all.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.1 * lo.abs().max(1e-3);
        lo -= pad;
        hi += pad;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let y = |v: f64| TOP + PLOT_H * (hi - v) / (hi - lo);

    let width = LEFT + RIGHT + WIDTH_PER_BOX * groups.len().max(1) as f64;
    let height = TOP + PLOT_H + BOTTOM;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{problem}, tau = {}</text>"#,
        width / 2.0,
        format_sig(tau, 6)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">excess cost</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + PLOT_H,
        width - RIGHT,
        TOP + PLOT_H
    );
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#dddddd"/>"##,
            LEFT,
            width - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            format_sig(v, 4)
        );
    }

    let mut colours: Vec<&str> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let cx = LEFT + WIDTH_PER_BOX * (i as f64 + 0.5);
        let colour_idx = match colours.iter().position(|m| *m == g.method) {
            Some(c) => c,
            None => {
                colours.push(&g.method);
                colours.len() - 1
            }
        };
        let colour = PALETTE[colour_idx % PALETTE.len()];
        if !g.values.is_empty() {
            let v = &g.values;
            let (q1, med, q3) = (quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75));
            let (wlo, whi) = (v[0], v[v.len() - 1]);
            let x0 = cx - BOX_W / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                y(whi),
                y(wlo)
            );
            for w in [wlo, whi] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
                    cx - BOX_W / 4.0,
                    y(w),
                    cx + BOX_W / 4.0,
                    y(w)
                );
            }
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.1}" y="{:.1}" width="{BOX_W:.1}" height="{:.1}" fill="{colour}" fill-opacity="0.6" stroke="black"/>"#,
                y(q3),
                (y(q1) - y(q3)).max(1.0)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
                y(med),
                x0 + BOX_W,
                y(med)
            );
        }
        let label_y = TOP + PLOT_H + 14.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{label_y:.1}" text-anchor="end" transform="rotate(-45 {cx:.1} {label_y:.1})">{} d={}</text>"#,
            g.method, g.depth
        );
        if g.failures > 0 {
            let _ = writeln!(
                s,
                r##"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" fill="#c00000">{} failed</text>"##,
                TOP - 6.0,
                g.failures
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
