use crate::error::{Error, Result};

pub const PRECISION_BITS: u32 = 16;
/// Sum of all frequencies in a table.
pub const TOTAL: u32 = 1 << PRECISION_BITS;

/// Cumulative frequencies `[0, c_1, .., TOTAL]`, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable(Vec<u32>);

impl CdfTable {
    pub fn new(cum: Vec<u32>) -> Result<Self> {
        if cum.len() < 2 || cum[0] != 0 || *cum.last().unwrap() != TOTAL {
            return Err(Error::InvalidArgument("cdf must start at 0 and end at 65536".into()));
        }
        if cum.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("cdf must be strictly increasing".into()));
        }
        Ok(Self(cum))
    }

    pub fn alphabet(&self) -> usize {
        self.0.len() - 1
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.0
    }

    /// `(start, frequency)` of `symbol`.
    #[inline]
    pub fn span(&self, symbol: usize) -> (u32, u32) {
        (self.0[symbol], self.0[symbol + 1] - self.0[symbol])
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.span(symbol).1
    }

    /// Symbol whose interval contains `target < TOTAL`.
    #[inline]
    pub fn lookup(&self, target: u32) -> usize {
        self.0.partition_point(|&c| c <= target) - 1
    }

    /// Self-information of `symbol` under the quantised table.
    pub fn bits(&self, symbol: usize) -> f64 {
        PRECISION_BITS as f64 - (self.freq(symbol) as f64).log2()
    }
}

/// Scale `pmf` to integer counts summing to [`TOTAL`], every symbol getting
/// at least one. Counts are floored, the shortfall is handed out by largest
/// remainder, and any excess from the one-count minimum is taken back from
/// the largest bins.
pub fn quantize_cdf(pmf: &[f64]) -> Result<CdfTable> {
    let n = pmf.len();
    if n == 0 || n > TOTAL as usize {
        return Err(Error::InvalidArgument(format!("alphabet size {n} outside 1..=65536")));
    }
    if let Some(p) = pmf.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("pmf entry {p} is not a finite non-negative number")));
    }
    let sum: f64 = pmf.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroPmf);
    }
    let scale = TOTAL as f64 / sum;
    let mut counts = Vec::with_capacity(n);
    let mut rem = Vec::with_capacity(n);
    for &p in pmf {
        let raw = p * scale;
        let fl = raw.floor();
        counts.push((fl as u32).max(1));
        rem.push(if fl >= 1.0 { raw - fl } else { 0.0 });
    }
    let assigned: i64 = counts.iter().map(|&c| c as i64).sum();
    let mut deficit = TOTAL as i64 - assigned;
    if deficit > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if deficit == 0 {
                break;
            }
            counts[i] += 1;
            deficit -= 1;
        }
    }
    while deficit < 0 {
        // largest count, lowest index on ties
        let i = (0..n).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
        let take = (counts[i] - 1).min((-deficit) as u32);
        if take == 0 {
            return Err(Error::InvalidArgument("alphabet too large for 16-bit table".into()));
        }
        counts[i] -= take;
        deficit += take as i64;
    }
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0u32;
    cum.push(0);
    for c in counts {
        acc += c;
        cum.push(acc);
    }
    CdfTable::new(cum)
}
