//! Typed command outputs and their JSON/CSV serialization.

use crate::cascades::{AveragingReport, CavityCovarianceReport};
use crate::montecarlo::{ConcentrationReport, GuerraReport};
use crate::parisi::LocalValue;
use crate::saddle::SaddleResult;
use crate::verify::CriterionResult;
use serde::{Deserialize, Serialize};

/// One optimization row (shared by the product-space and ball routes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeRow {
    pub beta: f64,
    pub r_star: f64,
    pub value: f64,
    /// `-value / beta` for `beta > 0`, absent at `beta = 0`.
    pub free_energy: Option<f64>,
    pub n: usize,
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "L")]
    pub l: Option<f64>,
    pub multistart_spread: f64,
}

impl OptimizeRow {
    pub fn from_saddle(beta: f64, res: &SaddleResult) -> Self {
        OptimizeRow {
            beta,
            r_star: res.r_star,
            value: res.value,
            free_energy: if beta > 0.0 {
                Some(-res.value / beta)
            } else {
                None
            },
            n: res.op_star.n(),
            q: res.op_star.q().to_vec(),
            x: res.op_star.x().to_vec(),
            h1: None,
            h2: None,
            l: None,
            multistart_spread: res.trace.multistart_spread,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReplica {
    pub replica: usize,
    #[serde(rename = "p_N")]
    pub p_n: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub mean: f64,
    pub stderr: f64,
    pub bound_violations: usize,
}

/// Output of one CLI command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Validate {
        ok: bool,
        d: f64,
        m_threshold: f64,
        total_mass: Option<f64>,
    },
    Evaluate {
        value: f64,
        lambda_star: f64,
        #[serde(rename = "per_M")]
        per_m: Vec<(f64, f64)>,
        plateau_dev: f64,
    },
    Optimize {
        results: Vec<OptimizeRow>,
    },
    Simulate {
        per_replica: Vec<SimulateReplica>,
        summary: SimulateSummary,
        concentration: ConcentrationReport,
    },
    Cascade {
        #[serde(skip_serializing_if = "Option::is_none")]
        identity: Option<AveragingReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        covariance: Option<CavityCovarianceReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        tail: Option<TailReport>,
    },
    Verify {
        criteria: Vec<CriterionResult>,
        all_pass: bool,
    },
}

/// Truncation-tail inspection of the top-K PPP atoms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub x: f64,
    pub k: usize,
    /// Intensity mass below the K-th atom relative to the kept sum.
    pub relative_tail_mass: f64,
    pub smallest_kept_atom: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// CSV export for the row-shaped reports; other variants fall back to a
    /// single-column JSON cell per line.
    pub fn to_csv(&self) -> String {
        match self {
            Report::Optimize { results } => {
                let n_max = results.iter().map(|r| r.n).max().unwrap_or(0);
                let mut header = String::from("beta,r_star,value,free_energy,n");
                for k in 1..=n_max {
                    header.push_str(&format!(",q_{k}"));
                }
                for k in 1..=n_max {
                    header.push_str(&format!(",x_{k}"));
                }
                let mut out = header + "\n";
                for r in results {
                    let fe = r
                        .free_energy
                        .map(|f| format!("{f}"))
                        .unwrap_or_default();
                    out.push_str(&format!(
                        "{},{},{},{},{}",
                        r.beta, r.r_star, r.value, fe, r.n
                    ));
                    for k in 0..n_max {
                        out.push(',');
                        if let Some(q) = r.q.get(k) {
                            out.push_str(&format!("{q}"));
                        }
                    }
                    for k in 0..n_max {
                        out.push(',');
                        if let Some(x) = r.x.get(k) {
                            out.push_str(&format!("{x}"));
                        }
                    }
                    out.push('\n');
                }
                out
            }
            Report::Simulate { per_replica, .. } => {
                let mut out = String::from("replica,p_N\n");
                for row in per_replica {
                    out.push_str(&format!("{},{}\n", row.replica, row.p_n));
                }
                out
            }
            Report::Verify { criteria, .. } => {
                let mut out = String::from("id,name,pass,details\n");
                for c in criteria {
                    out.push_str(&format!(
                        "{},{},{},\"{}\"\n",
                        c.id,
                        c.name,
                        c.pass,
                        c.details.replace('"', "'")
                    ));
                }
                out
            }
            other => other.to_json() + "\n",
        }
    }
}

/// Wrapper used by [`Report::Evaluate`].
impl From<LocalValue> for Report {
    fn from(v: LocalValue) -> Self {
        Report::Evaluate {
            value: v.value,
            lambda_star: v.lambda_star,
            per_m: v.per_m,
            plateau_dev: v.plateau_dev,
        }
    }
}

impl From<&GuerraReport> for SimulateSummary {
    fn from(g: &GuerraReport) -> Self {
        SimulateSummary {
            mean: g.mc_mean,
            stderr: g.stderr,
            bound_violations: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimize_csv_shape() {
        let report = Report::Optimize {
            results: vec![OptimizeRow {
                beta: 1.0,
                r_star: 1.0,
                value: 0.37,
                free_energy: Some(-0.37),
                n: 2,
                q: vec![0.2, 0.6],
                x: vec![0.3, 0.9],
                h1: None,
                h2: None,
                l: None,
                multistart_spread: 0.0,
            }],
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "beta,r_star,value,free_energy,n,q_1,q_2,x_1,x_2");
        assert_eq!(lines.next().unwrap(), "1,1,0.37,-0.37,2,0.2,0.6,0.3,0.9");
    }

    #[test]
    fn json_roundtrip_identity() {
        let report = Report::Validate {
            ok: true,
            d: 1.0,
            m_threshold: 0.0,
            total_mass: Some(1.0),
        };
        let a = report.to_json();
        let back: Report = serde_json::from_str(&a).unwrap();
        assert_eq!(a, back.to_json());
    }
}
