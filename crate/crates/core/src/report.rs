//! Mean-K tables and the heatmap figure.

use std::fmt::Write as _;

use crate::experiments::{cell_means, ScenarioResult};

/// Mean `K` per cell, rows indexed by `k`, columns by `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeansTable {
    pub k_values: Vec<usize>,
    pub n_values: Vec<usize>,
    /// `means[i][j]` is the cell `(k_values[i], n_values[j])`, `None` if no rows.
    pub means: Vec<Vec<Option<f64>>>,
}

impl MeansTable {
    pub fn from_results(rows: &[ScenarioResult]) -> Self {
        let cells = cell_means(rows);
        let mut k_values: Vec<usize> = cells.keys().map(|c| c.0).collect();
        let mut n_values: Vec<usize> = cells.keys().map(|c| c.1).collect();
        k_values.sort_unstable();
        k_values.dedup();
        n_values.sort_unstable();
        n_values.dedup();
        let means = k_values
            .iter()
            .map(|k| {
                n_values
                    .iter()
                    .map(|n| cells.get(&(*k, *n)).copied())
                    .collect()
            })
            .collect();
        Self {
            k_values,
            n_values,
            means,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        let vals = self.means.iter().flatten().flatten();
        let lo = vals.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.copied().fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Header `k,<n1>,<n2>,…`, then one line per `k`; empty cells are blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k");
        for n in &self.n_values {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (k, row) in self.k_values.iter().zip(&self.means) {
            let _ = write!(out, "{k}");
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v:.16e}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Adjacent increases along each row (growing `n`) and each column
    /// (growing `k`). Missing cells break the chain.
    pub fn monotonicity_violations(&self) -> (Vec<usize>, Vec<usize>) {
        let count = |seq: Vec<Option<f64>>| {
            seq.windows(2)
                .filter(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b > a))
                .count()
        };
        let rows = self.means.iter().map(|r| count(r.clone())).collect();
        let cols = (0..self.n_values.len())
            .map(|j| count(self.means.iter().map(|r| r[j]).collect()))
            .collect();
        (rows, cols)
    }
}

/// Low end of the colour ramp (pale yellow).
pub const RAMP_LOW: [u8; 3] = [255, 255, 204];
/// High end of the colour ramp (dark blue).
pub const RAMP_HIGH: [u8; 3] = [8, 48, 107];

/// Linear interpolation in RGB between [`RAMP_LOW`] at `lo` and [`RAMP_HIGH`] at `hi`.
pub fn ramp_colour(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c: Vec<u8> = (0..3)
        .map(|i| {
            (RAMP_LOW[i] as f64 + t * (RAMP_HIGH[i] as f64 - RAMP_LOW[i] as f64)).round() as u8
        })
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const CELL_W: usize = 90;
const CELL_H: usize = 40;
const LEFT: usize = 70;
const TOP: usize = 40;

/// SVG heatmap: one `<rect class="cell">` per populated cell, `k` down the
/// side and `n` along the bottom, each cell labelled with its mean.
pub fn heatmap_svg(table: &MeansTable, title: &str) -> String {
    let cols = table.n_values.len();
    let rows = table.k_values.len();
    let width = LEFT + cols * CELL_W + 20;
    let height = TOP + rows * CELL_H + 60;
    let (lo, hi) = table.range().unwrap_or((0.0, 0.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2,
        escape(title)
    );
    for (i, (k, row)) in table.k_values.iter().zip(&table.means).enumerate() {
        let y = TOP + i * CELL_H;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{k}</text>"#,
            LEFT - 8,
            y + CELL_H / 2 + 4
        );
        for (j, (n, v)) in table.n_values.iter().zip(row).enumerate() {
            let Some(v) = v else { continue };
            let x = LEFT + j * CELL_W;
            let fill = ramp_colour(*v, lo, hi);
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            let ink = if t > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r#"<rect class="cell" data-k="{k}" data-n="{n}" x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.4}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    let base = TOP + rows * CELL_H;
    for (j, n) in table.n_values.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{n}</text>"#,
            LEFT + j * CELL_W + CELL_W / 2,
            base + 18
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle">n</text>"#,
        LEFT + cols * CELL_W / 2,
        base + 40
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="20" y="{}" text-anchor="middle">k</text>"#,
        TOP + rows * CELL_H / 2
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentId;

    fn row(k: usize, n: usize, l: usize, v: f64) -> ScenarioResult {
        ScenarioResult {
            experiment: ExperimentId::E2,
            k,
            n,
            l,
            seed: 0,
            neg_lifted_loglik: v,
            final_objective: 0.0,
            iterations: 1,
        }
    }

    fn two_by_two() -> Vec<ScenarioResult> {
        vec![
            row(2, 100, 1, -1.0),
            row(2, 100, 2, -1.2),
            row(2, 200, 1, -1.3),
            row(3, 100, 1, -1.4),
            row(3, 200, 1, -1.5),
        ]
    }

    #[test]
    fn table_means_and_csv() {
        let t = MeansTable::from_results(&two_by_two());
        assert_eq!(t.k_values, vec![2, 3]);
        assert_eq!(t.n_values, vec![100, 200]);
        assert!((t.means[0][0].unwrap() + 1.1).abs() < 1e-15);
        let csv = t.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "k,100,200");
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn svg_has_one_rect_per_cell_and_axis_labels() {
        let svg = heatmap_svg(&MeansTable::from_results(&two_by_two()), "E2");
        assert_eq!(svg.matches(r#"<rect class="cell""#).count(), 4);
        assert!(svg.contains(">k</text>") && svg.contains(">n</text>"));
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp_colour(0.0, 0.0, 1.0), "#ffffcc");
        assert_eq!(ramp_colour(1.0, 0.0, 1.0), "#08306b");
        assert_eq!(ramp_colour(5.0, 5.0, 5.0), "#ffffcc");
    }

    #[test]
    fn violation_counts() {
        let mut rows = two_by_two();
        rows.push(row(4, 100, 1, -1.3));
        rows.push(row(4, 200, 1, -1.2));
        let t = MeansTable::from_results(&rows);
        let (r, c) = t.monotonicity_violations();
        assert_eq!(r, vec![0, 0, 1]);
        assert_eq!(c, vec![1, 1]);
    }
}
