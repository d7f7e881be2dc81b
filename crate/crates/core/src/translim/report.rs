use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::LimitResult;

/// Transfer limits of several studies under several load models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTable {
    pub models: Vec<String>,
    pub rows: Vec<TrendRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub study: String,
    /// Per model in table order, MW; `None` when the model was not run.
    pub p_max: Vec<Option<f64>>,
    /// Printed cells, `<base` for models infeasible at the base level.
    pub cells: Vec<String>,
    /// Models from most to least restrictive, e.g. `A < B = C`.
    pub ordering: String,
    /// Models whose limits coincide within one step.
    pub ties: Vec<String>,
    /// Models that stayed feasible up to the cap.
    pub at_cap: Vec<String>,
    /// Models already infeasible at the base level.
    pub below_base: Vec<String>,
}

/// Compare limits across load models. Models appear in first-seen order;
/// two limits closer than half a step are reported as a tie.
pub fn trend_report(results: &[(String, Vec<(String, LimitResult)>)]) -> TrendTable {
    let mut models: Vec<String> = Vec::new();
    for (_, per) in results {
        for (m, _) in per {
            if !models.contains(m) {
                models.push(m.clone());
            }
        }
    }
    let rows = results
        .iter()
        .map(|(study, per)| {
            let find = |m: &String| per.iter().find(|(n, _)| n == m).map(|(_, r)| r);
            let p_max = models.iter().map(|m| find(m).map(|r| r.p_max)).collect();
            let cells = models
                .iter()
                .map(|m| find(m).map(|r| r.display_p_max()).unwrap_or_default())
                .collect();
            let mut sorted: Vec<&(String, LimitResult)> = per.iter().collect();
            sorted.sort_by(|a, b| a.1.rank_level().total_cmp(&b.1.rank_level()).then_with(|| a.0.cmp(&b.0)));
            let mut ordering = String::new();
            let mut ties = BTreeSet::new();
            for (k, (name, r)) in sorted.iter().enumerate() {
                if k > 0 {
                    let prev = &sorted[k - 1];
                    let tol = 0.5 * r.delta_p.min(prev.1.delta_p);
                    if (r.rank_level() - prev.1.rank_level()).abs() < tol {
                        ordering.push_str(" = ");
                        ties.insert(format!("{} = {} at {} MW", prev.0, name, r.display_p_max()));
                    } else {
                        ordering.push_str(" < ");
                    }
                }
                ordering.push_str(name);
            }
            TrendRow {
                study: study.clone(),
                p_max,
                cells,
                below_base: sorted
                    .iter()
                    .filter(|(_, r)| r.base_infeasible)
                    .map(|(n, _)| n.clone())
                    .collect(),
                ordering,
                ties: ties.into_iter().collect(),
                at_cap: sorted
                    .iter()
                    .filter(|(_, r)| r.unbounded_at_cap)
                    .map(|(n, _)| n.clone())
                    .collect(),
            }
        })
        .collect();
    TrendTable { models, rows }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl TrendTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("study");
        for m in &self.models {
            let _ = write!(out, ",{}", csv_field(&format!("p_max[{m}]")));
        }
        out.push_str(",ordering,ties,at_cap\n");
        for r in &self.rows {
            out.push_str(&csv_field(&r.study));
            for c in &r.cells {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(
                out,
                ",{},{},{}",
                csv_field(&r.ordering),
                csv_field(&r.ties.join("; ")),
                csv_field(&r.at_cap.join("; "))
            );
        }
        out
    }

    /// Fixed-width text with one column per model.
    pub fn to_text(&self) -> String {
        let mut header = vec!["study".to_string()];
        header.extend(self.models.iter().cloned());
        header.push("ordering".into());
        let mut lines: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut l = vec![r.study.clone()];
            l.extend(r.cells.iter().cloned());
            l.push(r.ordering.clone());
            lines.push(l);
        }
        let n = lines[0].len();
        let widths: Vec<usize> = (0..n)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let row: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == n - 1 {
                        s.clone()
                    } else if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(row.join("  ").trim_end());
            out.push('\n');
        }
        let notes: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.ties
                    .iter()
                    .map(move |t| format!("{}: tie {t}", r.study))
                    .chain(r.at_cap.iter().map(move |m| format!("{}: {m} feasible up to the cap", r.study)))
                    .chain(r.below_base.iter().map(move |m| format!("{}: {m} infeasible at the base level", r.study)))
            })
            .collect();
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim(p: f64) -> LimitResult {
        LimitResult {
            study: String::new(),
            model: String::new(),
            p_max: p,
            delta_p: 10.0,
            binding_contingency: None,
            binding_criterion: None,
            unbounded_at_cap: false,
            non_monotone: Vec::new(),
            base_infeasible: false,
            steps: Vec::new(),
        }
    }

    #[test]
    fn ordering_and_ties() {
        let t = trend_report(&[
            (
                "s1".into(),
                vec![("ZIP".into(), lim(900.0)), ("CLM-lite".into(), lim(700.0)), ("ZIP+IM".into(), lim(800.0))],
            ),
            ("s2".into(), vec![("ZIP".into(), lim(500.0)), ("CLM-lite".into(), lim(500.0))]),
        ]);
        assert_eq!(t.models, vec!["ZIP", "CLM-lite", "ZIP+IM"]);
        assert_eq!(t.rows[0].ordering, "CLM-lite < ZIP+IM < ZIP");
        assert_eq!(t.rows[1].ordering, "CLM-lite = ZIP");
        assert_eq!(t.rows[1].ties.len(), 1);
        assert_eq!(t.rows[1].p_max[2], None);
        let csv = t.to_csv();
        assert!(csv.starts_with("study,p_max[ZIP],p_max[CLM-lite],p_max[ZIP+IM],ordering,ties,at_cap\n"));
        assert!(csv.contains("s2,500.0,500.0,,CLM-lite = ZIP,"));
        let txt = t.to_text();
        assert!(txt.contains("tie CLM-lite = ZIP at 500.0 MW"));
    }

    #[test]
    fn base_infeasible_ranks_below_its_base() {
        let mut low = lim(680.0);
        low.base_infeasible = true;
        let t = trend_report(&[("s".into(), vec![("A".into(), lim(680.0)), ("B".into(), low)])]);
        assert_eq!(t.rows[0].ordering, "B < A");
        assert_eq!(t.rows[0].cells, vec!["680.0", "<680.0"]);
        assert!(t.to_text().contains("s: B infeasible at the base level"));
    }

    #[test]
    fn single_model_gives_one_row() {
        let t = trend_report(&[("s".into(), vec![("ZIP".into(), lim(100.0))])]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].ordering, "ZIP");
        assert_eq!(t.to_csv().lines().count(), 2);
    }
}
