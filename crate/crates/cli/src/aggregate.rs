//! Per-round statistics across runs of one policy.

use std::io::Write;

use anyhow::Result;
use mmucb::BanditRun;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub policy: &'static str,
    pub t: usize,
    /// Runs that reached round `t`.
    pub runs: usize,
    pub mean_expected_reward: f64,
    pub std_expected_reward: f64,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub mean_cum_regret: f64,
    pub std_cum_regret: f64,
    pub smoothed_expected_reward: Option<f64>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Nadaraya–Watson smoothing with a Gaussian kernel of the given bandwidth,
/// truncated at four bandwidths.
pub fn gaussian_smooth(values: &[f64], bandwidth: f64) -> Vec<f64> {
    let reach = (4.0 * bandwidth).ceil() as usize;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach + 1).min(values.len());
            let (mut num, mut den) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate().take(hi).skip(lo) {
                let z = (j as f64 - i as f64) / bandwidth;
                let w = (-0.5 * z * z).exp();
                num += w * v;
                den += w;
            }
            num / den
        })
        .collect()
}

pub fn aggregate(runs: &[&BanditRun], bandwidth: Option<f64>) -> Vec<AggregateRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let policy = first.policy.name();
    let horizon = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    let mut rows: Vec<AggregateRow> = (0..horizon)
        .map(|i| {
            let recs: Vec<_> = runs.iter().filter_map(|r| r.records.get(i)).collect();
            let col = |f: fn(&mmucb::RoundRecord) -> f64| mean_std(&recs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (mean_expected_reward, std_expected_reward) = col(|r| r.expected_reward);
            let (mean_regret, std_regret) = col(|r| r.regret);
            let (mean_cum_regret, std_cum_regret) = col(|r| r.cum_regret);
            AggregateRow {
                policy,
                t: i + 1,
                runs: recs.len(),
                mean_expected_reward,
                std_expected_reward,
                mean_regret,
                std_regret,
                mean_cum_regret,
                std_cum_regret,
                smoothed_expected_reward: None,
            }
        })
        .collect();
    if let Some(h) = bandwidth {
        let means: Vec<f64> = rows.iter().map(|r| r.mean_expected_reward).collect();
        for (row, s) in rows.iter_mut().zip(gaussian_smooth(&means, h)) {
            row.smoothed_expected_reward = Some(s);
        }
    }
    rows
}

pub fn write_aggregate<W: Write>(out: W, rows: &[AggregateRow], smoothed: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "policy",
        "t",
        "runs",
        "mean_expected_reward",
        "std_expected_reward",
        "mean_regret",
        "std_regret",
        "mean_cum_regret",
        "std_cum_regret",
    ];
    if smoothed {
        header.push("smoothed_expected_reward");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.policy.to_string(),
            r.t.to_string(),
            r.runs.to_string(),
            r.mean_expected_reward.to_string(),
            r.std_expected_reward.to_string(),
            r.mean_regret.to_string(),
            r.std_regret.to_string(),
            r.mean_cum_regret.to_string(),
            r.std_cum_regret.to_string(),
        ];
        if smoothed {
            rec.push(r.smoothed_expected_reward.map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_known_values() {
        assert_eq!(mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).0, 5.0);
        let (_, s) = mean_std(&[1.0, 3.0]);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn smoothing_keeps_constants_and_averages_noise() {
        assert!(gaussian_smooth(&[2.0; 50], 3.0).iter().all(|v| (v - 2.0).abs() < 1e-12));
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = gaussian_smooth(&alt, 5.0);
        assert!(s[20..80].iter().all(|v| v.abs() < 1e-3));
        // A tiny bandwidth leaves the series unchanged.
        assert_eq!(gaussian_smooth(&alt, 1e-3), alt);
    }
}
