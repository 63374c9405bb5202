use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::metrics::{ExprError, MetricExpr};
use crate::space::DesignSpace;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame parse error: {0}")]
    Parse(String),
    #[error("row {row}: {source}")]
    Expr { row: usize, source: ExprError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Parameter,
    Frozen,
    Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
}

/// Tabular view of a design space: one row per point, columns ordered
/// parameters, frozen parameters, metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultFrame {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub degraded: Vec<bool>,
}

const DEGRADED: &str = "degraded";

impl ResultFrame {
    pub fn from_space(space: &DesignSpace) -> Self {
        let mut columns: Vec<Column> = space
            .schema()
            .params()
            .iter()
            .map(|p| Column {
                name: p.name.to_string(),
                role: ColumnRole::Parameter,
            })
            .collect();
        let mut add = |name: &str, role: ColumnRole| {
            if !columns.iter().any(|c| c.name == name) {
                columns.push(Column {
                    name: name.to_string(),
                    role,
                });
            }
        };
        for p in space.points() {
            for m in p.frozen() {
                add(m.name.as_str(), ColumnRole::Frozen);
            }
        }
        for p in space.points() {
            for m in p.metrics() {
                add(m.name.as_str(), ColumnRole::Metric);
            }
        }
        // Frozen columns go before metric columns even when discovered late.
        columns.sort_by_key(|c| match c.role {
            ColumnRole::Parameter => 0,
            ColumnRole::Frozen => 1,
            ColumnRole::Metric => 2,
        });

        let rows = space
            .points()
            .iter()
            .map(|p| {
                let r = space.point_ref(p);
                columns.iter().map(|c| r.lookup(&c.name)).collect()
            })
            .collect();
        let degraded = space.points().iter().map(|p| p.is_degraded()).collect();
        Self {
            columns,
            rows,
            degraded,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.rows[row][self.column_index(name)?]
    }

    pub fn column_values(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    fn cell(&self, k: usize, v: f64) -> String {
        match self.columns[k].role {
            ColumnRole::Metric => format!("{v:?}"),
            _ if v.fract() == 0.0 => format!("{}", v as i64),
            _ => format!("{v:?}"),
        }
    }

    /// CSV with full round-trip precision; empty cells for missing values.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        header.push(DEGRADED);
        w.write_record(&header).expect("in-memory write");
        for (row, degraded) in self.rows.iter().zip(&self.degraded) {
            let mut rec: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(k, v)| v.map(|v| self.cell(k, v)).unwrap_or_default())
                .collect();
            rec.push(degraded.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// One JSON object per row.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (row, degraded) in self.rows.iter().zip(&self.degraded) {
            let mut obj = serde_json::Map::new();
            for (k, v) in row.iter().enumerate() {
                let json = match v {
                    None => Json::Null,
                    Some(v) if self.columns[k].role != ColumnRole::Metric && v.fract() == 0.0 => {
                        Json::from(*v as i64)
                    }
                    Some(v) => Json::from(*v),
                };
                obj.insert(self.columns[k].name.clone(), json);
            }
            obj.insert(DEGRADED.into(), Json::Bool(*degraded));
            out.push_str(&Json::Object(obj).to_string());
            out.push('\n');
        }
        out
    }

    /// Reads a frame written by [`ResultFrame::to_csv`]. Column roles come
    /// from `roles` when known (e.g. from the run's provenance), otherwise
    /// every column is treated as a metric.
    pub fn from_csv(text: &str, roles: Option<&[Column]>) -> Result<Self, FrameError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| FrameError::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let has_flag = header.last().map(String::as_str) == Some(DEGRADED);
        let names = if has_flag {
            &header[..header.len() - 1]
        } else {
            &header[..]
        };
        let columns: Vec<Column> = names
            .iter()
            .map(|n| Column {
                name: n.clone(),
                role: roles
                    .and_then(|rs| rs.iter().find(|c| &c.name == n))
                    .map_or(ColumnRole::Metric, |c| c.role),
            })
            .collect();
        let mut rows = Vec::new();
        let mut degraded = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| FrameError::Parse(e.to_string()))?;
            let mut row = Vec::with_capacity(columns.len());
            for k in 0..columns.len() {
                let cell = rec.get(k).unwrap_or("").trim();
                row.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| {
                        FrameError::Parse(format!("row {}: `{cell}` is not a number", i + 1))
                    })?)
                });
            }
            degraded.push(has_flag && rec.get(columns.len()) == Some("true"));
            rows.push(row);
        }
        Ok(Self {
            columns,
            rows,
            degraded,
        })
    }

    fn lookup(&self, row: usize) -> impl Fn(&str) -> Option<f64> + '_ {
        move |name| self.value(row, name)
    }

    fn select(&self, order: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            degraded: order.iter().map(|&i| self.degraded[i]).collect(),
        }
    }

    /// Rows satisfying `keep`, order preserved.
    pub fn filtered(&self, keep: &MetricExpr) -> Result<Self, FrameError> {
        let mut order = Vec::new();
        for i in 0..self.len() {
            if keep
                .eval_bool(&self.lookup(i))
                .map_err(|source| FrameError::Expr { row: i, source })?
            {
                order.push(i);
            }
        }
        Ok(self.select(&order))
    }

    /// Stable sort by `key`.
    pub fn sorted(&self, key: &MetricExpr, ascending: bool) -> Result<Self, FrameError> {
        let keys = (0..self.len())
            .map(|i| {
                key.eval_number(&self.lookup(i))
                    .map_err(|source| FrameError::Expr { row: i, source })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        if ascending {
            order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
        } else {
            order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
        }
        Ok(self.select(&order))
    }

    pub fn head(&self, n: usize) -> Self {
        let order: Vec<usize> = (0..self.len().min(n)).collect();
        self.select(&order)
    }

    /// Ranked table of the first `top` rows. Parameter and frozen values
    /// are grouped in one bracketed column; metrics are shown with two
    /// decimals.
    pub fn render_table(&self, top: usize) -> String {
        let grouped: Vec<usize> = (0..self.columns.len())
            .filter(|&k| self.columns[k].role != ColumnRole::Metric)
            .collect();
        let metrics: Vec<usize> = (0..self.columns.len())
            .filter(|&k| self.columns[k].role == ColumnRole::Metric)
            .collect();

        let mut header = vec!["Rank".to_string()];
        if !grouped.is_empty() {
            header.push("Parameters".into());
        }
        header.extend(metrics.iter().map(|&k| self.columns[k].name.clone()));

        let mut lines = vec![header];
        for (i, row) in self.rows.iter().take(top).enumerate() {
            let mut line = vec![format!(
                "{}{}",
                i + 1,
                if self.degraded[i] { "*" } else { "" }
            )];
            if !grouped.is_empty() {
                let vals: Vec<String> = grouped
                    .iter()
                    .map(|&k| {
                        row[k]
                            .map(|v| self.cell(k, v))
                            .unwrap_or_else(|| "-".into())
                    })
                    .collect();
                line.push(format!("[{}]", vals.join(", ")));
            }
            line.extend(
                metrics
                    .iter()
                    .map(|&k| row[k].map(two_decimals).unwrap_or_else(|| "-".into())),
            );
            lines.push(line);
        }

        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| {
                lines
                    .iter()
                    .map(|l| l[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for (n, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if n == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        if self.degraded.iter().take(top).any(|d| *d) {
            out.push_str("* degraded: some metrics are worst-value substitutes\n");
        }
        out
    }
}

/// Two-decimal rendering, truncated rather than rounded (321.5065 shows as
/// 321.50).
pub fn two_decimals(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = match s.find('.') {
        Some(dot) => s[..dot + 3].to_string(),
        None => s,
    };
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}
