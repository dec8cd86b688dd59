use serde::{Deserialize, Serialize};

use super::output::Series;
use super::RunError;

/// Summary figures of one run. Everything here is a function of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub freq_nadir: f64,
    /// Minimum of the PCC voltage as a meter would read it: the trailing
    /// mean over one 50 Hz cycle.
    pub v_pcc_min: f64,
    /// Minimum of the raw sampled PCC voltage.
    pub v_pcc_min_inst: f64,
    pub v_pcc_final: f64,
    /// First instant after which the PCC voltage stays within 0.01 pu of its
    /// final value.
    pub settling_time: f64,
    /// Over the final 0.5 s, the largest relative deviation of `Q_i * m_qi`
    /// from its mean across units in ViSC mode; absent with fewer than two.
    pub q_sharing_error: Option<f64>,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub dr_fire_times: Vec<f64>,
    pub failover_times: Vec<f64>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
}

fn increments(t: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..c.len() {
        for _ in 0..(c[k] - c[k - 1]).round().max(0.0) as u64 {
            out.push(t[k]);
        }
    }
    out
}

pub const METER_WINDOW_S: f64 = 0.02;

/// Trailing mean over `window` seconds, reported once a full window exists.
pub fn trailing_mean(t: &[f64], x: &[f64], window: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let (mut lo, mut acc) = (0, 0.0);
    for k in 0..t.len() {
        acc += x[k];
        while t[k] - t[lo] >= window - 1e-12 {
            acc -= x[lo];
            lo += 1;
        }
        if t[k] - t[0] >= window - 1e-12 {
            out.push(acc / (k + 1 - lo) as f64);
        }
    }
    out
}

pub fn turbine_ids(s: &Series) -> Vec<usize> {
    let mut ids: Vec<usize> = s
        .columns
        .iter()
        .filter_map(|c| c.strip_prefix("wt")?.split_once('.')?.0.parse().ok())
        .collect();
    ids.dedup();
    ids
}

impl RunMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

pub fn compute_metrics(s: &Series) -> Result<RunMetrics, RunError> {
    if s.rows.len() < 2 {
        return Err(RunError::SeriesTooShort(s.rows.len()));
    }
    let need = |c: &str| s.col(c).ok_or_else(|| RunError::MissingColumn(c.to_string()));
    let t = need("t_s")?;
    let v = need("pcc.v")?;
    let f = need("grid.freq")?;
    let last = |c: &str| s.col(c).and_then(|x| x.last().copied()).unwrap_or(0.0);

    let v_final = *v.last().expect("non-empty");
    let settle_idx = v
        .iter()
        .rposition(|x| (x - v_final).abs() > 0.01)
        .map_or(0, |i| (i + 1).min(v.len() - 1));

    let t_end = *t.last().expect("non-empty");
    let window: Vec<usize> = (0..t.len()).filter(|&k| t[k] >= t_end - 0.5).collect();
    let mut shares = Vec::new();
    for j in turbine_ids(s) {
        let (Some(mode), Some(q), Some(mq)) = (
            s.col(&format!("wt{j}.mode")),
            s.col(&format!("wt{j}.q")),
            s.col(&format!("wt{j}.mq")),
        ) else {
            continue;
        };
        if window.iter().all(|&k| mode[k] == 1.0) {
            let mean = window.iter().map(|&k| q[k] * mq[k]).sum::<f64>() / window.len() as f64;
            shares.push(mean);
        }
    }
    let q_sharing_error = (shares.len() >= 2).then(|| {
        let mean = shares.iter().sum::<f64>() / shares.len() as f64;
        shares
            .iter()
            .map(|x| (x - mean).abs() / mean.abs())
            .fold(0.0, f64::max)
    });

    let mut metered = trailing_mean(&t, &v, METER_WINDOW_S);
    if metered.is_empty() {
        metered = v.clone();
    }
    let counter = |c: &str| s.col(c).map(|x| increments(&t, &x)).unwrap_or_default();
    let diverged = last("sim.diverged") == 1.0;
    Ok(RunMetrics {
        freq_nadir: f.iter().copied().fold(f64::INFINITY, f64::min),
        v_pcc_min: metered.into_iter().fold(f64::INFINITY, f64::min),
        v_pcc_min_inst: v.iter().copied().fold(f64::INFINITY, f64::min),
        v_pcc_final: v_final,
        settling_time: t[settle_idx],
        q_sharing_error,
        packets_sent: last("net.sent") as u64,
        packets_delivered: last("net.delivered") as u64,
        packets_dropped: last("net.dropped") as u64,
        dr_fire_times: counter("net.dr"),
        failover_times: counter("net.failover"),
        diverged,
        diverged_at: diverged.then_some(t_end),
    })
}
