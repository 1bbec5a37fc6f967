use super::EvalError;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One run's solved-ratio curve as `(env_steps, solved_ratio)` pairs.
pub type Series = Vec<(u64, f64)>;

/// Pointwise mean over seeds with the half-width of a 0.95 normal interval,
/// `1.96 * s / sqrt(n)` where `s` is the sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub env_steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
    pub seeds: usize,
}

impl AggregateCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("env_steps,mean,ci_halfwidth\n");
        for ((x, m), h) in self.env_steps.iter().zip(&self.mean).zip(&self.half_width) {
            s.push_str(&format!("{x},{m},{h}\n"));
        }
        s
    }

    pub fn from_csv(text: &str, seeds: usize) -> Result<Self, EvalError> {
        let mut curve = AggregateCurve {
            env_steps: Vec::new(),
            mean: Vec::new(),
            half_width: Vec::new(),
            seeds,
        };
        for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || EvalError::Aggregate(format!("line {}: {line:?}", n + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            curve.env_steps.push(f[0].parse().map_err(|_| bad())?);
            curve.mean.push(f[1].parse().map_err(|_| bad())?);
            curve.half_width.push(f[2].parse().map_err(|_| bad())?);
        }
        Ok(curve)
    }
}

/// Aggregates at least two runs evaluated on the same step grid. Values are
/// summed in sorted order, so the result does not depend on run order.
pub fn aggregate(runs: &[Series]) -> Result<AggregateCurve, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::Aggregate(format!("need at least 2 runs, got {}", runs.len())));
    }
    let grid: Vec<u64> = runs[0].iter().map(|p| p.0).collect();
    for (i, r) in runs.iter().enumerate() {
        if r.len() != grid.len() || r.iter().zip(&grid).any(|(p, &x)| p.0 != x) {
            return Err(EvalError::Aggregate(format!("run {i} is not aligned with run 0")));
        }
    }
    let n = runs.len() as f64;
    let mut curve = AggregateCurve {
        env_steps: grid.clone(),
        mean: Vec::with_capacity(grid.len()),
        half_width: Vec::with_capacity(grid.len()),
        seeds: runs.len(),
    };
    for j in 0..grid.len() {
        let mut v: Vec<f64> = runs.iter().map(|r| r[j].1).collect();
        v.sort_by(f64::total_cmp);
        // identical values give exactly that value and zero spread
        let mean = if v[0] == v[v.len() - 1] { v[0] } else { v.iter().sum::<f64>() / n };
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        curve.mean.push(mean);
        curve.half_width.push(1.96 * var.sqrt() / n.sqrt());
    }
    Ok(curve)
}

/// Reads `(env_steps, solved_ratio)` from a training metrics CSV.
pub fn read_curve_csv(path: &Path) -> Result<Series, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| EvalError::Aggregate(format!("{}: no {name} column", path.display())))
    };
    let (xs, ys) = (col("env_steps")?, col("solved_ratio")?);
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || EvalError::Aggregate(format!("{}: bad row {l:?}", path.display()));
            Ok((
                f.get(xs).ok_or_else(bad)?.parse().map_err(|_| bad())?,
                f.get(ys).ok_or_else(bad)?.parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_half_width_matches_hand_value() {
        let c = aggregate(&[vec![(1000, 0.4)], vec![(1000, 0.6)]]).unwrap();
        assert!((c.mean[0] - 0.5).abs() < 1e-12);
        // s = sqrt(0.02) = 0.141421..., 1.96 * s / sqrt(2) = 0.196
        assert!((c.half_width[0] - 0.196).abs() < 1e-12);
    }

    #[test]
    fn duplicates_have_zero_width() {
        let r = vec![(0, 0.1), (1000, 0.35), (2000, 0.9)];
        let c = aggregate(&[r.clone(), r.clone(), r]).unwrap();
        assert!(c.half_width.iter().all(|&h| h == 0.0));
        assert_eq!(c.seeds, 3);
    }

    #[test]
    fn single_or_misaligned_runs_are_errors() {
        assert!(aggregate(&[vec![(0, 0.5)]]).is_err());
        assert!(aggregate(&[vec![(0, 0.5)], vec![(1000, 0.5)]]).is_err());
        assert!(aggregate(&[vec![(0, 0.5)], vec![(0, 0.5), (1000, 0.2)]]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = aggregate(&[vec![(0, 0.1), (1000, 0.25)], vec![(0, 0.3), (1000, 0.75)]]).unwrap();
        assert_eq!(AggregateCurve::from_csv(&c.to_csv(), 2).unwrap(), c);
    }
}
