use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Bandwidth, IfId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("matrix must be square, row {row} has {len} entries for {n} interfaces")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("diagonal entry ({0},{0}) must be zero")]
    NonZeroDiagonal(usize),
}

/// Reservable bandwidth between every ordered pair of interfaces of one AS.
/// Entry `(a, b)` covers traffic entering at `a` and leaving at `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct AllocationMatrix {
    n: usize,
    entries: Vec<Bandwidth>,
}

impl AllocationMatrix {
    pub fn zeros(n: usize) -> Self {
        AllocationMatrix {
            n,
            entries: vec![Bandwidth::ZERO; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self, MatrixError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (a, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(MatrixError::NotSquare {
                    row: a,
                    len: row.len(),
                    n,
                });
            }
            for (b, v) in row.into_iter().enumerate() {
                if a == b && v != 0 {
                    return Err(MatrixError::NonZeroDiagonal(a));
                }
                m.entries[a * n + b] = Bandwidth(v);
            }
        }
        Ok(m)
    }

    /// Builds the matrix from per-interface link capacities: every entry
    /// `(a, b)` starts at `C_b`, columns are normalised to sum to `C_b`,
    /// then any row whose sum exceeds `C_a` is scaled down to `C_a`.
    /// Values are floored to whole bits per second, so both sums stay
    /// within their capacities.
    pub fn from_capacities(caps: &[Bandwidth]) -> Self {
        let n = caps.len();
        let mut m = Self::zeros(n);
        if n < 2 {
            return m;
        }
        // Column step: n-1 equal entries of C_b summing to C_b.
        let col: Vec<u128> = caps.iter().map(|c| c.0 as u128).collect();
        for a in 0..n {
            let row_sum: u128 = (0..n).filter(|&b| b != a).map(|b| col[b]).sum::<u128>();
            // Entries are C_b / (n-1); compare row sum scaled by (n-1) to avoid rounding.
            let cap_a = caps[a].0 as u128 * (n as u128 - 1);
            for b in 0..n {
                if a == b {
                    continue;
                }
                let v = if row_sum > cap_a {
                    // C_b/(n-1) * C_a / (row_sum/(n-1)) = C_b * C_a / row_sum
                    col[b] * caps[a].0 as u128 / row_sum
                } else {
                    col[b] / (n as u128 - 1)
                };
                m.entries[a * n + b] = Bandwidth(v as u64);
            }
        }
        m
    }

    pub fn n_interfaces(&self) -> usize {
        self.n
    }

    pub fn contains(&self, a: IfId, b: IfId) -> bool {
        (a.0 as usize) < self.n && (b.0 as usize) < self.n
    }

    /// Entry `(a, b)`; zero for interfaces outside the matrix.
    pub fn get(&self, a: IfId, b: IfId) -> Bandwidth {
        if !self.contains(a, b) {
            return Bandwidth::ZERO;
        }
        self.entries[a.0 as usize * self.n + b.0 as usize]
    }

    pub fn set(&mut self, a: IfId, b: IfId, v: Bandwidth) {
        assert!(self.contains(a, b), "interface pair ({a},{b}) outside matrix");
        assert!(a != b || v == Bandwidth::ZERO, "diagonal entries are zero");
        self.entries[a.0 as usize * self.n + b.0 as usize] = v;
    }

    pub fn row_sum(&self, a: usize) -> u128 {
        (0..self.n).map(|b| self.entries[a * self.n + b].0 as u128).sum()
    }

    pub fn column_sum(&self, b: usize) -> u128 {
        (0..self.n).map(|a| self.entries[a * self.n + b].0 as u128).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.entries
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|r| r.iter().map(|b| b.0).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<u64>>> for AllocationMatrix {
    type Error = MatrixError;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self, MatrixError> {
        Self::from_rows(rows)
    }
}

impl From<AllocationMatrix> for Vec<Vec<u64>> {
    fn from(m: AllocationMatrix) -> Self {
        m.to_rows()
    }
}

/// Result of an allocation-matrix change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledUpdate {
    pub admission_value: Bandwidth,
    /// When the physical capacity of the pair reaches the new value.
    pub capacity_effective_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PendingDecrease {
    at: Timestamp,
    a: IfId,
    b: IfId,
    value: Bandwidth,
}

/// Admission matrix plus the physical per-pair capacity it protects.
/// Decreases reach admission immediately but capacity only after one
/// reservation validity period, so grants already issued stay covered.
#[derive(Debug, Clone)]
pub struct MatrixState {
    admission: AllocationMatrix,
    capacity: AllocationMatrix,
    pending: Vec<PendingDecrease>,
}

impl MatrixState {
    pub fn new(matrix: AllocationMatrix) -> Self {
        MatrixState {
            capacity: matrix.clone(),
            admission: matrix,
            pending: Vec::new(),
        }
    }

    pub fn admission(&self) -> &AllocationMatrix {
        &self.admission
    }

    pub fn entry(&self, a: IfId, b: IfId) -> Bandwidth {
        self.admission.get(a, b)
    }

    pub fn update(
        &mut self,
        a: IfId,
        b: IfId,
        value: Bandwidth,
        now: Timestamp,
        validity: Duration,
    ) -> ScheduledUpdate {
        self.apply_due(now);
        let old = self.admission.get(a, b);
        self.admission.set(a, b, value);
        // A newer update supersedes any pending decrease on the same pair.
        self.pending.retain(|p| (p.a, p.b) != (a, b));
        if value < old {
            let at = now + validity;
            self.pending.push(PendingDecrease { at, a, b, value });
            ScheduledUpdate {
                admission_value: value,
                capacity_effective_at: at,
            }
        } else {
            self.capacity.set(a, b, value);
            ScheduledUpdate {
                admission_value: value,
                capacity_effective_at: now,
            }
        }
    }

    fn apply_due(&mut self, now: Timestamp) {
        let capacity = &mut self.capacity;
        self.pending.retain(|p| {
            if p.at <= now {
                capacity.set(p.a, p.b, p.value);
                false
            } else {
                true
            }
        });
    }

    /// Physical capacity of the pair at `now`.
    pub fn capacity(&mut self, a: IfId, b: IfId, now: Timestamp) -> Bandwidth {
        self.apply_due(now);
        self.capacity.get(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: u64 = 1_000_000_000;

    #[test]
    fn capacities_example_hand_computed() {
        let m = AllocationMatrix::from_capacities(&[
            Bandwidth::gbps(100),
            Bandwidth::gbps(100),
            Bandwidth::gbps(40),
        ]);
        assert_eq!(
            m.to_rows(),
            vec![
                vec![0, 50 * G, 20 * G],
                vec![50 * G, 0, 20 * G],
                vec![20 * G, 20 * G, 0],
            ]
        );
        for i in 0..3 {
            assert!(m.column_sum(i) <= [100, 100, 40][i] as u128 * G as u128);
            assert!(m.row_sum(i) <= [100, 100, 40][i] as u128 * G as u128);
        }
    }

    #[test]
    fn symmetric_two_interfaces() {
        let c = 7 * G;
        let m = AllocationMatrix::from_capacities(&[Bandwidth(c), Bandwidth(c)]);
        assert_eq!(m.to_rows(), vec![vec![0, c], vec![c, 0]]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(
            AllocationMatrix::from_rows(vec![vec![1, 2], vec![3, 0]]),
            Err(MatrixError::NonZeroDiagonal(0))
        );
        assert!(matches!(
            AllocationMatrix::from_rows(vec![vec![0, 2], vec![3]]),
            Err(MatrixError::NotSquare { .. })
        ));
    }

    #[test]
    fn decrease_reaches_capacity_after_validity() {
        let m = AllocationMatrix::from_rows(vec![vec![0, 100 * G], vec![100 * G, 0]]).unwrap();
        let mut st = MatrixState::new(m);
        let t = Timestamp::from_secs(50);
        let eps = Duration::from_secs(10);
        let up = st.update(IfId(0), IfId(1), Bandwidth::gbps(50), t, eps);
        assert_eq!(up.capacity_effective_at, t + eps);
        assert_eq!(st.entry(IfId(0), IfId(1)), Bandwidth::gbps(50));
        assert_eq!(st.capacity(IfId(0), IfId(1), t + Duration::from_secs(9)), Bandwidth::gbps(100));
        assert_eq!(st.capacity(IfId(0), IfId(1), t + eps), Bandwidth::gbps(50));
        assert_eq!(st.entry(IfId(1), IfId(0)), Bandwidth::gbps(100));
    }

    #[test]
    fn increase_is_immediate() {
        let m = AllocationMatrix::from_rows(vec![vec![0, 50 * G], vec![50 * G, 0]]).unwrap();
        let mut st = MatrixState::new(m);
        let t = Timestamp::from_secs(1);
        let up = st.update(IfId(0), IfId(1), Bandwidth::gbps(100), t, Duration::from_secs(10));
        assert_eq!(up.capacity_effective_at, t);
        assert_eq!(st.capacity(IfId(0), IfId(1), t), Bandwidth::gbps(100));
    }
}
