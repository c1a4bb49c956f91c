use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major table of small categorical codes (trader/group states, hour of
/// day) with named columns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredictorMatrix {
    pub columns: Vec<String>,
    data: Vec<i8>,
}

impl PredictorMatrix {
    pub fn new(columns: Vec<String>) -> Self {
        PredictorMatrix { columns, data: Vec::new() }
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<i8>]) -> Result<Self> {
        let mut m = PredictorMatrix::new(columns);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[i8]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Schema {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.data.len() / self.columns.len()
        }
    }

    pub fn row(&self, r: usize) -> &[i8] {
        let k = self.n_cols();
        &self.data[r * k..(r + 1) * k]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.n_cols() + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.data.chunks_exact(self.n_cols().max(1))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Distinct values of column `c`, ascending.
    pub fn levels(&self, c: usize) -> Vec<i8> {
        let mut v: Vec<i8> = (0..self.n_rows()).map(|r| self.get(r, c)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> PredictorMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        PredictorMatrix {
            columns: self.columns.clone(),
            data,
        }
    }

    /// Copy with an extra column appended.
    pub fn with_column(&self, name: &str, values: &[i8]) -> Result<PredictorMatrix> {
        if values.len() != self.n_rows() {
            return Err(Error::Schema {
                expected: self.n_rows(),
                got: values.len(),
            });
        }
        let mut columns = self.columns.clone();
        columns.push(name.to_owned());
        let mut data = Vec::with_capacity(self.data.len() + values.len());
        for (r, &v) in values.iter().enumerate() {
            data.extend_from_slice(self.row(r));
            data.push(v);
        }
        Ok(PredictorMatrix { columns, data })
    }
}

/// Class of a target value: −1, 0, +1.
pub const CLASSES: [i8; 3] = [-1, 0, 1];

#[inline]
pub(crate) fn class_index(y: i8) -> usize {
    match y {
        -1 => 0,
        0 => 1,
        1 => 2,
        _ => panic!("target {y} outside {{-1, 0, +1}}"),
    }
}

/// Index of the largest count; ties go to the smallest class.
#[inline]
pub(crate) fn argmax_class<T: PartialOrd + Copy>(counts: &[T; 3]) -> i8 {
    let mut best = 0;
    for k in 1..3 {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    CLASSES[best]
}

pub(crate) fn check_targets(x: &PredictorMatrix, y: &[i8]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::Schema {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|v| !CLASSES.contains(v)) {
        return Err(Error::Domain(format!("target {bad} outside {{-1, 0, +1}}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let m = PredictorMatrix::from_rows(vec!["a".into(), "b".into()], &[vec![1, 2], vec![-1, 0]]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[-1, 0]);
        assert_eq!(m.levels(0), vec![-1, 1]);
        let w = m.with_column("h", &[9, 10]).unwrap();
        assert_eq!(w.row(0), &[1, 2, 9]);
        assert!(m.clone().push_row(&[1]).is_err());
    }

    #[test]
    fn argmax_ties_to_smallest() {
        assert_eq!(argmax_class(&[3, 1, 3]), -1);
        assert_eq!(argmax_class(&[0, 2, 2]), 0);
        assert_eq!(argmax_class(&[0, 0, 1]), 1);
    }

    proptest::proptest! {
        #[test]
        fn argmax_invariant_under_monotone_maps(c in proptest::array::uniform3(0u32..500), a in 1u64..50, b in 0u64..1000) {
            let affine = [c[0] as u64 * a + b, c[1] as u64 * a + b, c[2] as u64 * a + b];
            let cubed = [(c[0] as f64).powi(3), (c[1] as f64).powi(3), (c[2] as f64).powi(3)];
            let logged = [(1.0 + c[0] as f64).ln(), (1.0 + c[1] as f64).ln(), (1.0 + c[2] as f64).ln()];
            let base = argmax_class(&c);
            proptest::prop_assert_eq!(argmax_class(&affine), base);
            proptest::prop_assert_eq!(argmax_class(&cubed), base);
            proptest::prop_assert_eq!(argmax_class(&logged), base);
        }
    }
}
