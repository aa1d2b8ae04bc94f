use super::experiment::{run_experiment, ExperimentConfig, HeadKind};
use crate::anchors::AnchorMethod;
use crate::error::{Error, Result};
use crate::lab::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepParam {
    Beta(Vec<f64>),
    M { method: AnchorMethod, values: Vec<usize> },
}

/// `2^s` for `s = 0..=9`.
pub fn beta_grid() -> Vec<f64> {
    (0..10).map(|s| 2f64.powi(s)).collect()
}

/// Every anchor count from 2 to 10.
pub fn m_grid() -> Vec<usize> {
    (2..=10).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub method: AnchorMethod,
    pub final_srcc: f64,
    pub final_plcc: f64,
    pub best_srcc: f64,
    pub best_plcc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: &'static str,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `<parameter>,anchor_method,final_srcc,final_plcc,best_srcc,best_plcc`
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},anchor_method,final_srcc,final_plcc,best_srcc,best_plcc\n", self.parameter);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.value, r.method, r.final_srcc, r.final_plcc, r.best_srcc, r.best_plcc
            ));
        }
        out
    }
}

/// One PQR experiment per grid value, everything else held fixed.
pub fn sweep(cfg: &ExperimentConfig, data: &Dataset, param: &SweepParam) -> Result<SweepTable> {
    if cfg.head != HeadKind::Pqr {
        return Err(Error::InvalidParameter("sweeps vary encoder settings and need the pqr head".into()));
    }
    let points: Vec<ExperimentConfig> = match param {
        SweepParam::Beta(values) => values
            .iter()
            .map(|&beta| {
                let mut c = cfg.clone();
                c.encoder.beta = beta;
                c
            })
            .collect(),
        SweepParam::M { method, values } => values
            .iter()
            .map(|&m| {
                let mut c = cfg.clone();
                c.encoder.m = m;
                c.encoder.method = *method;
                c
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(points.len());
    for c in &points {
        let s = run_experiment(c, data)?.summary;
        rows.push(SweepRow {
            value: match param {
                SweepParam::Beta(_) => c.encoder.beta,
                SweepParam::M { .. } => c.encoder.m as f64,
            },
            method: c.encoder.method,
            final_srcc: s.final_median.srcc,
            final_plcc: s.final_median.plcc,
            best_srcc: s.best_median.srcc,
            best_plcc: s.best_median.plcc,
        });
    }
    Ok(SweepTable {
        parameter: match param {
            SweepParam::Beta(_) => "beta",
            SweepParam::M { .. } => "M",
        },
        rows,
    })
}
