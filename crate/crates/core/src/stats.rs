//! Contingency-table statistics shared by the miner and the score learner.

/// Counts of a 2×2 contingency table.
///
/// Rows are "condition holds / does not hold" (pattern membership, finding
/// present), columns are "target true / false".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Table2x2 {
    pub both: u64,
    pub condition_only: u64,
    pub target_only: u64,
    pub neither: u64,
}

impl Table2x2 {
    pub fn total(&self) -> u64 {
        self.both + self.condition_only + self.target_only + self.neither
    }

    fn marginals(&self) -> [f64; 4] {
        [
            (self.both + self.condition_only) as f64,
            (self.target_only + self.neither) as f64,
            (self.both + self.target_only) as f64,
            (self.condition_only + self.neither) as f64,
        ]
    }

    /// True when any row or column marginal is zero.
    pub fn is_degenerate(&self) -> bool {
        self.marginals().iter().any(|&m| m == 0.0)
    }

    /// Pearson χ² statistic `N(ad − bc)² / (row₁·row₂·col₁·col₂)`.
    ///
    /// Degenerate tables yield 0 by convention.
    pub fn chi_square(&self) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let [r1, r2, c1, c2] = self.marginals();
        let n = self.total() as f64;
        let cross = self.both as f64 * self.neither as f64
            - self.condition_only as f64 * self.target_only as f64;
        n * cross * cross / (r1 * r2 * c1 * c2)
    }

    /// Phi (Matthews) correlation coefficient; `None` for degenerate tables.
    pub fn phi(&self) -> Option<f64> {
        if self.is_degenerate() {
            return None;
        }
        let [r1, r2, c1, c2] = self.marginals();
        let cross = self.both as f64 * self.neither as f64
            - self.condition_only as f64 * self.target_only as f64;
        Some(cross / (r1 * r2 * c1 * c2).sqrt())
    }
}

/// Survival function of the χ² distribution with one degree of freedom.
///
/// Uses the identity `P(X > x) = erfc(√(x/2))`.
pub fn chi2_sf_1df(statistic: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    libm::erfc((statistic / 2.0).sqrt()).clamp(0.0, 1.0)
}
