//! Per-(policy, t) reduction over replicates.

use serde::{Deserialize, Serialize};

use crate::harness::run::RunTrace;

pub const AGGREGATE_HEADER: [&str; 10] = [
    "policy",
    "t",
    "runs",
    "mean_cum_regret",
    "se_cum_regret",
    "lower",
    "upper",
    "oful_rate",
    "oful_fraction",
    "mean_zeta",
];

/// One aggregate CSV row. `lower`/`upper` are `mean ∓ 2·SE`; `oful_rate` is
/// the share of runs that played OFUL at `t`, `oful_fraction` the mean share
/// of OFUL rounds among the first `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub policy: String,
    pub t: usize,
    pub runs: usize,
    pub mean_cum_regret: f64,
    pub se_cum_regret: f64,
    pub lower: f64,
    pub upper: f64,
    pub oful_rate: f64,
    pub oful_fraction: f64,
    pub mean_zeta: Option<f64>,
}

/// Sample mean and standard error (sample SD / √n; 0 for n = 1).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Completed runs only; rows ordered by policy (as given) then `t`.
pub fn aggregate(traces: &[RunTrace], labels: &[String], horizon: usize) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for label in labels {
        let runs: Vec<&RunTrace> = traces
            .iter()
            .filter(|tr| &tr.summary.policy == label && tr.summary.failed.is_none() && tr.steps.len() == horizon)
            .collect();
        if runs.is_empty() {
            continue;
        }
        let n = runs.len();
        let mut oful_counts = vec![0usize; n];
        let mut regrets = vec![0.0; n];
        for t in 0..horizon {
            let mut oful_now = 0usize;
            let mut zeta_sum = 0.0;
            let mut zeta_n = 0usize;
            for (i, tr) in runs.iter().enumerate() {
                let r = &tr.steps[t];
                regrets[i] = r.cum_regret;
                if r.used_oful {
                    oful_now += 1;
                    oful_counts[i] += 1;
                }
                if let Some(z) = r.zeta {
                    zeta_sum += z;
                    zeta_n += 1;
                }
            }
            let (mean, se) = mean_se(&regrets);
            let frac = oful_counts.iter().map(|&c| c as f64 / (t + 1) as f64).sum::<f64>() / n as f64;
            rows.push(AggregateRow {
                policy: label.clone(),
                t: t + 1,
                runs: n,
                mean_cum_regret: mean,
                se_cum_regret: se,
                lower: mean - 2.0 * se,
                upper: mean + 2.0 * se,
                oful_rate: oful_now as f64 / n as f64,
                oful_fraction: frac,
                mean_zeta: (zeta_n > 0).then(|| zeta_sum / zeta_n as f64),
            });
        }
    }
    rows
}

/// Last row per policy.
pub fn terminal_rows(rows: &[AggregateRow]) -> Vec<&AggregateRow> {
    let mut out: Vec<&AggregateRow> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(last) if last.policy == r.policy => *last = r,
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se_examples() {
        assert_eq!(mean_se(&[3.0]), (3.0, 0.0));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_close!(se, 1.0, 1e-15);
        let (m, se) = mean_se(&[5.0, 5.0, 5.0]);
        assert_eq!((m, se), (5.0, 0.0));
    }
}
