use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub q5: Micros,
    pub q25: Micros,
    pub q50: Micros,
    pub q75: Micros,
    pub q95: Micros,
    pub n: usize,
}

/// Nearest-rank percentile of sorted values: the smallest value with at
/// least `p` percent of the values at or below it.
pub fn nearest_rank(sorted: &[Micros], p: usize) -> Micros {
    let n = sorted.len();
    let rank = (p * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn summarize(values: &[Micros]) -> Result<PercentileSummary, AnalyzeError> {
    if values.is_empty() {
        return Err(AnalyzeError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Ok(PercentileSummary {
        q5: nearest_rank(&v, 5),
        q25: nearest_rank(&v, 25),
        q50: nearest_rank(&v, 50),
        q75: nearest_rank(&v, 75),
        q95: nearest_rank(&v, 95),
        n: v.len(),
    })
}
