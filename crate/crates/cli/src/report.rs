//! Markdown/CSV score tables and SVG timing plots.

use std::fmt::Write;

use harness::{Cell, Table};
use serde::{Deserialize, Serialize};
use taskgen::Task;

/// Cumulative training seconds of one config on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCurve {
    pub task: Task,
    pub name: String,
    pub seed: u64,
    /// `(steps, cumulative seconds)`.
    pub points: Vec<(usize, f64)>,
}

pub fn task_title(task: Task) -> &'static str {
    match task {
        Task::InsertionSort => "Insertion Sort",
        Task::BubbleSort => "Bubble Sort",
        Task::Heapsort => "Heapsort",
        Task::Quicksort => "Quicksort",
        Task::Quickselect => "Quickselect",
        Task::BinarySearch => "Binary Search",
        Task::Minimum => "Minimum",
        Task::FindMaxSubarray => "Find Max. Subarray",
        Task::ActivitySelector => "Activity Selector",
        Task::TaskScheduling => "Task Scheduling",
        Task::Bfs => "BFS",
    }
}

/// Percent with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn cell_text(c: &Cell) -> String {
    format!("{}% ± {}", pct(c.mean), pct(c.std))
}

/// Rows are tasks, columns configs, cells `mean% ± std`; the best mean of
/// each row is bold and a final row holds column averages.
pub fn markdown(table: &Table) -> String {
    let mut s = String::new();
    writeln!(s, "Micro-F1 test scores at n = {}", table.size).unwrap();
    writeln!(s).unwrap();
    write!(s, "| Algorithm |").unwrap();
    for c in &table.columns {
        write!(s, " {c} |").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "|---|{}", "---|".repeat(table.columns.len())).unwrap();
    for (task, cells) in &table.rows {
        let best = cells
            .iter()
            .flatten()
            .map(|c| pct(c.mean).parse::<f64>().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        write!(s, "| {} |", task_title(*task)).unwrap();
        for c in cells {
            match c {
                Some(c) if pct(c.mean).parse::<f64>().unwrap() == best => write!(s, " **{}** |", cell_text(c)).unwrap(),
                Some(c) => write!(s, " {} |", cell_text(c)).unwrap(),
                None => write!(s, " n/a |").unwrap(),
            }
        }
        writeln!(s).unwrap();
    }
    write!(s, "| Overall average |").unwrap();
    for a in table.column_averages() {
        match a {
            Some(a) => write!(s, " {}% |", pct(a)).unwrap(),
            None => write!(s, " n/a |").unwrap(),
        }
    }
    writeln!(s).unwrap();
    s
}

/// One line per (task, config) with the same rounded numbers as [`markdown`].
pub fn csv(table: &Table) -> String {
    let mut s = String::from("task,config,size,mean_pct,std_pct,runs\n");
    for (task, cells) in &table.rows {
        for (name, c) in table.columns.iter().zip(cells) {
            if let Some(c) = c {
                writeln!(s, "{},{},{},{},{},{}", task.id(), name, table.size, pct(c.mean), pct(c.std), c.runs).unwrap();
            }
        }
    }
    for (name, a) in table.columns.iter().zip(table.column_averages()) {
        if let Some(a) = a {
            writeln!(s, "overall_average,{},{},{},,", name, table.size, pct(a)).unwrap();
        }
    }
    s
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 500.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Training steps against cumulative seconds, one polyline per curve.
pub fn timing_svg(curves: &[TimingCurve], title: &str) -> String {
    let (left, right, top, bottom) = (70.0, 30.0, 40.0, 60.0);
    let (pw, ph) = (SVG_WIDTH - left - right, SVG_HEIGHT - top - bottom);
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let x_max = pts.clone().map(|p| p.0 as f64).fold(1.0, f64::max);
    let y_max = pts.map(|p| p.1).fold(1e-9, f64::max);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y / y_max);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="500" viewBox="0 0 800 500" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="800" height="500" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="400" y="24" text-anchor="middle" font-size="15">{}</text>"#, escape(title)).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + ph, left + pw, top + ph).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph).unwrap();
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (x, y) = (sx(f * x_max), sy(f * y_max));
        writeln!(s, r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/>"#, top + ph, top + ph + 5.0).unwrap();
        writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{:.0}</text>"#, top + ph + 20.0, f * x_max).unwrap();
        writeln!(s, r#"<line x1="{}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="black"/>"#, left - 5.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.1}</text>"#, left - 8.0, y + 4.0, f * y_max).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">training steps</text>"#, left + pw / 2.0, SVG_HEIGHT - 15.0).unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">cumulative seconds</text>"#,
        top + ph / 2.0
    )
    .unwrap();
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut line = format!("{:.1},{:.1}", sx(0.0), sy(0.0));
        for &(x, y) in &c.points {
            write!(line, " {:.1},{:.1}", sx(x as f64), sy(y)).unwrap();
        }
        writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{line}"/>"#).unwrap();
        let ly = top + 10.0 + 18.0 * i as f64;
        writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, left + 15.0, left + 40.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, left + 46.0, ly + 4.0, escape(&format!("{} ({})", c.name, c.task))).unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table {
            size: 16,
            columns: vec!["RNAR".into(), "Triplet-GMPNN-max".into()],
            rows: vec![(Task::Quickselect, vec![Cell::of(&[0.8, 0.9, 1.0]), Cell::of(&[0.1, 0.2, 0.3])])],
        }
    }

    #[test]
    fn one_task_two_configs() {
        let md = markdown(&table());
        let lines: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "| Algorithm | RNAR | Triplet-GMPNN-max |");
        assert_eq!(lines[2], "| Quickselect | **90.00% ± 10.00** | 20.00% ± 10.00 |");
        assert_eq!(lines[3], "| Overall average | 90.00% | 20.00% |");
    }

    #[test]
    fn csv_matches_markdown_numbers() {
        let c = csv(&table());
        assert!(c.contains("quickselect,RNAR,16,90.00,10.00,3"));
        assert!(c.contains("quickselect,Triplet-GMPNN-max,16,20.00,10.00,3"));
    }

    #[test]
    fn svg_has_fixed_viewport_and_one_polyline_per_curve() {
        let curves = vec![
            TimingCurve {
                task: Task::Minimum,
                name: "RNAR".into(),
                seed: 0,
                points: vec![(10, 1.0), (20, 2.0)],
            },
            TimingCurve {
                task: Task::Minimum,
                name: "max".into(),
                seed: 0,
                points: vec![(10, 0.5), (20, 1.0)],
            },
        ];
        let s = timing_svg(&curves, "t");
        assert!(s.contains(r#"viewBox="0 0 800 500""#));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("training steps") && s.contains("cumulative seconds"));
    }
}
