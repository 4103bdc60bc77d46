//! Classification metrics and confusion-matrix artifacts.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// All values are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: u64,
    pub accuracy: f64,
    pub weighted: Aggregate,
    #[serde(rename = "macro")]
    pub macro_avg: Aggregate,
    /// Classes with support; zero-support classes are listed in `excluded`.
    pub per_class: Vec<ClassMetrics>,
    pub excluded: Vec<String>,
}

impl Summary {
    pub fn aggregate(&self, mode: Averaging) -> Aggregate {
        match mode {
            Averaging::Weighted => self.weighted,
            Averaging::Macro => self.macro_avg,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("confusion matrix needs at least one class".into()));
        }
        let c = class_names.len();
        Ok(Self {
            counts: vec![vec![0; c]; c],
            class_names,
        })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        if c == 0 || counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(Error::Config(format!("confusion counts must be {c}x{c}")));
        }
        Ok(Self { counts, class_names })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn update(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.classes();
        for label in [truth, predicted] {
            if label >= c {
                return Err(Error::LabelOutOfRange { label, classes: c });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    /// Count-wise sum of two shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_names != self.class_names {
            return Err(Error::Config("cannot merge confusion matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn summarize(&self) -> Result<Summary> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Numeric("cannot summarize an empty confusion matrix".into()));
        }
        let c = self.classes();
        let trace: u64 = (0..c).map(|i| self.counts[i][i]).sum();
        let mut per_class = Vec::new();
        let mut excluded = Vec::new();
        let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
        for k in 0..c {
            let support: u64 = self.counts[k].iter().sum();
            if support == 0 {
                warn!("class {:?} has no samples in this split; excluded from averages", self.class_names[k]);
                excluded.push(self.class_names[k].clone());
                continue;
            }
            let tp = self.counts[k][k];
            let predicted: u64 = (0..c).map(|i| self.counts[i][k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = harmonic(precision, recall);
            let s = support as f64;
            // Multiply before dividing so the recall term is exactly tp.
            wp += if predicted == 0 { 0.0 } else { s * tp as f64 / predicted as f64 };
            wr += s * tp as f64 / s;
            wf += s * f1;
            per_class.push(ClassMetrics {
                name: self.class_names[k].clone(),
                support,
                precision,
                recall,
                f1,
            });
        }
        let n = total as f64;
        let m = per_class.len() as f64;
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / m;
        Ok(Summary {
            total,
            accuracy: trace as f64 / n,
            weighted: Aggregate {
                precision: wp / n,
                recall: wr / n,
                f1: wf / n,
            },
            macro_avg: Aggregate {
                precision: mean(|x| x.precision),
                recall: mean(|x| x.recall),
                f1: mean(|x| x.f1),
            },
            per_class,
            excluded,
        })
    }

    /// Row percentages at two decimals. Hundredths are apportioned by
    /// largest remainder, so every non-empty row sums to exactly 100.
    pub fn row_normalize(&self) -> Vec<Vec<f64>> {
        self.counts.iter().map(|row| percent_row(row)).collect()
    }

    pub fn counts_csv(&self) -> String {
        self.csv(|r, c| self.counts[r][c].to_string())
    }

    pub fn percent_csv(&self) -> String {
        let p = self.row_normalize();
        self.csv(|r, c| format!("{:.2}", p[r][c]))
    }

    fn csv(&self, cell: impl Fn(usize, usize) -> String) -> String {
        let mut s = String::from("true\\predicted");
        for name in &self.class_names {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (r, name) in self.class_names.iter().enumerate() {
            s.push_str(name);
            for c in 0..self.classes() {
                s.push(',');
                s.push_str(&cell(r, c));
            }
            s.push('\n');
        }
        s
    }

    /// Heatmap of row percentages as a standalone SVG document.
    pub fn heatmap_svg(&self) -> String {
        const CELL: usize = 80;
        const MARGIN: usize = 120;
        let c = self.classes();
        let side = MARGIN + c * CELL + 20;
        let p = self.row_normalize();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" font-family="sans-serif" font-size="13">"#
        );
        let _ = writeln!(s, r#"<rect width="{side}" height="{side}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">Predicted</text>"#, MARGIN + c * CELL / 2);
        let _ = writeln!(
            s,
            r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">True</text>"#,
            MARGIN + c * CELL / 2
        );
        for (i, name) in self.class_names.iter().enumerate() {
            let name = escape(name);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#,
                MARGIN + i * CELL + CELL / 2,
                MARGIN - 10
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{name}</text>"#,
                MARGIN - 10,
                MARGIN + i * CELL + CELL / 2 + 5
            );
        }
        for (r, row) in p.iter().enumerate() {
            for (col, &v) in row.iter().enumerate() {
                let shade = (255.0 - 2.2 * v).round().clamp(0.0, 255.0) as u8;
                let text = if v > 55.0 { "white" } else { "black" };
                let (x, y) = (MARGIN + col * CELL, MARGIN + r * CELL);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="gray"/>"#
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{text}">{v:.2}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 5
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn percent_row(row: &[u64]) -> Vec<f64> {
    let sum: u64 = row.iter().sum();
    if sum == 0 {
        return vec![0.0; row.len()];
    }
    const UNITS: u128 = 10_000;
    let scaled: Vec<u128> = row.iter().map(|&v| v as u128 * UNITS).collect();
    let mut units: Vec<u128> = scaled.iter().map(|v| v / sum as u128).collect();
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(scaled[i] % sum as u128), i));
    let short = UNITS - units.iter().sum::<u128>();
    for &i in order.iter().take(short as usize) {
        units[i] += 1;
    }
    units.into_iter().map(|u| u as f64 / 100.0).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
