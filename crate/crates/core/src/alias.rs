//! Walker–Vose alias tables: `O(n)` construction, `O(1)` draws.

/// One column of the table: keep the column index with probability
/// `threshold`, otherwise jump to `alias`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Column {
    threshold: f64,
    alias: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    columns: Vec<Column>,
}

impl AliasTable {
    /// Builds a table from a probability vector. Weights need not be
    /// normalized but must be non-negative with a positive sum.
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0 && n <= u32::MAX as usize, "alias table needs 1..=u32::MAX outcomes");
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0 && total.is_finite(), "weights must have a positive finite sum");

        let scale = n as f64 / total;
        let mut scaled: Vec<f64> = weights.iter().map(|&w| w * scale).collect();
        let mut columns = vec![Column { threshold: 1.0, alias: 0 }; n];
        for (i, c) in columns.iter_mut().enumerate() {
            c.alias = i as u32;
        }

        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&l), Some(&g)) = (small.last(), large.last()) {
            small.pop();
            columns[l] = Column { threshold: scaled[l], alias: g as u32 };
            scaled[g] = (scaled[g] + scaled[l]) - 1.0;
            if scaled[g] < 1.0 {
                large.pop();
                small.push(g);
            }
        }
        // Leftovers carry mass one up to rounding.
        for i in small.into_iter().chain(large) {
            columns[i] = Column { threshold: 1.0, alias: i as u32 };
        }
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Maps one uniform 64-bit word to an outcome. The high part of
    /// `bits · n` picks the column, the low part is the coin.
    #[inline]
    pub fn sample_with(&self, bits: u64) -> usize {
        let wide = (bits as u128) * (self.columns.len() as u128);
        let column = (wide >> 64) as usize;
        let coin = ((wide as u64) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let c = self.columns[column];
        if coin < c.threshold {
            column
        } else {
            c.alias as usize
        }
    }

    /// The distribution the table encodes, recovered from its columns.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.columns.len() as f64;
        let mut p = vec![0.0; self.columns.len()];
        for (i, c) in self.columns.iter().enumerate() {
            p[i] += c.threshold / n;
            p[c.alias as usize] += (1.0 - c.threshold) / n;
        }
        p
    }
}
