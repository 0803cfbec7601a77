use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopEntry {
    pub operation: String,
    pub multiplications: u64,
}

/// Multiplications of one single-iteration control step, by operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopLedger {
    pub horizon: usize,
    pub state_dim: usize,
    pub entries: Vec<FlopEntry>,
    pub total: u64,
}

impl FlopLedger {
    pub fn get(&self, operation: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| e.operation == operation)
            .map(|e| e.multiplications)
    }
}

/// `d̃`: `2N(n+N)`, `G1ξ`: `9N²`, `G2z`: `6N²`, `G3d̃`: `6N²`, `G4ξ`: `2N²`
/// (identity and zero blocks of `Ceq` skipped).
pub fn count_step_flops(horizon: usize, state_dim: usize) -> FlopLedger {
    let n = horizon as u64;
    let nx = state_dim as u64;
    let entries = vec![
        ("offset d~ = Dtil [x; W]", 2 * n * (nx + n)),
        ("G1 xi", 9 * n * n),
        ("G2 z", 6 * n * n),
        ("G3 d~", 6 * n * n),
        ("G4 xi", 2 * n * n),
    ];
    let entries: Vec<FlopEntry> = entries
        .into_iter()
        .map(|(op, m)| FlopEntry {
            operation: op.to_string(),
            multiplications: m,
        })
        .collect();
    let total = entries.iter().map(|e| e.multiplications).sum();
    FlopLedger {
        horizon,
        state_dim,
        entries,
        total,
    }
}

/// Smallest period at which one step (`≈25 N²` FLOPs with `N = T_p/T`) fits
/// in the period: `∛(25 T_p² / OP)`.
pub fn rt_min_period(prediction_window: f64, flop_rate: f64) -> f64 {
    (25.0 * prediction_window * prediction_window / flop_rate).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_totals() {
        let l = count_step_flops(100, 4);
        assert_eq!(l.total, 250_800);
        assert_eq!(
            l.entries.iter().map(|e| e.multiplications).sum::<u64>(),
            l.total
        );
        assert_eq!(l.get("G1 xi"), Some(90_000));
        assert_eq!(count_step_flops(1, 1).total, 27);
        let big = count_step_flops(2000, 4);
        assert_eq!(big.total, 100_000_000 + 2 * 2000 * 4);
    }

    #[test]
    fn rt_period_examples() {
        let t = rt_min_period(2.0, 1e11);
        assert!((t - 1e-3).abs() <= 1e-12 * 1e-3);
        assert!((rt_min_period(2.0, 8e11) - 0.5e-3).abs() < 1e-15);
        assert!((rt_min_period(1.0, 25.0) - 1.0).abs() < 1e-15);
    }
}
