//! Binary network states `z = (v, h)` shared by every sampling backend.

use std::io::Write;

use crate::boltzmann::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Decoded network states, one row per readout (or per enumerated state).
///
/// Rows store `z_k ∈ {0, 1}` for the visible units first, then the hidden
/// units. Visible configurations index into distributions with bit `i` of the
/// index equal to `v_i`.
///
/// Samples may carry weights. Backends that enumerate all states exactly use
/// the probabilities as weights; physical and Markov-chain backends leave them
/// unweighted.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSamples {
    n_visible: usize,
    n_hidden: usize,
    readout_interval: Option<f64>,
    rows: Vec<u8>,
    weights: Option<Vec<f64>>,
}

impl StateSamples {
    pub fn new(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            n_visible,
            n_hidden,
            readout_interval: None,
            rows: Vec::new(),
            weights: None,
        }
    }

    pub fn with_capacity(n_visible: usize, n_hidden: usize, n_samples: usize) -> Self {
        let mut s = Self::new(n_visible, n_hidden);
        s.rows.reserve(n_samples * (n_visible + n_hidden));
        s
    }

    pub fn from_rows(n_visible: usize, n_hidden: usize, rows: Vec<u8>) -> Result<Self> {
        let n_units = n_visible + n_hidden;
        if n_units == 0 || !rows.len().is_multiple_of(n_units) {
            return Err(Error::Shape(format!(
                "{} state entries do not split into rows of {n_units}",
                rows.len()
            )));
        }
        if rows.iter().any(|&z| z > 1) {
            return Err(Error::invalid("rows", "states must be 0 or 1"));
        }
        Ok(Self {
            rows,
            ..Self::new(n_visible, n_hidden)
        })
    }

    /// Attaches per-row weights. Weights must be non-negative with a positive sum.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} rows",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("weights", "must have a positive sum"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_readout_interval(mut self, interval: f64) -> Self {
        self.readout_interval = Some(interval);
        self
    }

    pub fn push(&mut self, row: &[u8]) {
        debug_assert_eq!(row.len(), self.n_units());
        debug_assert!(self.weights.is_none());
        self.rows.extend_from_slice(row);
    }

    /// Appends all rows of `other` (which must have the same layout and be unweighted).
    pub fn extend(&mut self, other: &StateSamples) -> Result<()> {
        if other.n_visible != self.n_visible || other.n_hidden != self.n_hidden {
            return Err(Error::Shape("cannot merge samples of different layouts".into()));
        }
        if self.weights.is_some() || other.weights.is_some() {
            return Err(Error::invalid("weights", "weighted samples cannot be concatenated"));
        }
        self.rows.extend_from_slice(&other.rows);
        Ok(())
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_units(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.n_units().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn readout_interval(&self) -> Option<f64> {
        self.readout_interval
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn row(&self, k: usize) -> &[u8] {
        let n = self.n_units();
        &self.rows[k * n..(k + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.rows.chunks_exact(self.n_units().max(1))
    }

    /// Weight of row `k` (1 for unweighted samples).
    pub fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn total_weight(&self) -> f64 {
        self.weights
            .as_ref()
            .map_or(self.len() as f64, |w| w.iter().sum())
    }

    /// Visible configuration of row `k` as an index (bit `i` = `v_i`).
    pub fn visible_index(&self, k: usize) -> usize {
        visible_index(&self.row(k)[..self.n_visible])
    }

    /// Histogram over visible configurations (weights count as fractional occurrences).
    pub fn visible_histogram(&self) -> Result<EmpiricalDistribution> {
        let mut hist = EmpiricalDistribution::new(self.n_visible)?;
        for k in 0..self.len() {
            hist.add(self.visible_index(k), self.weight(k));
        }
        Ok(hist)
    }

    /// Mean of every unit over the samples.
    pub fn unit_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.n_units()];
        for (k, row) in self.rows().enumerate() {
            let w = self.weight(k);
            for (m, &z) in means.iter_mut().zip(row) {
                *m += w * f64::from(z);
            }
        }
        let total = self.total_weight();
        means.iter_mut().for_each(|m| *m /= total);
        means
    }

    /// Writes one CSV row per readout: `index[,time],z0,z1,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        if self.readout_interval.is_some() {
            header.push("time".into());
        }
        if self.weights.is_some() {
            header.push("weight".into());
        }
        header.extend((0..self.n_units()).map(|k| format!("z{k}")));
        w.write_record(&header)?;
        for (k, row) in self.rows().enumerate() {
            let mut rec = vec![k.to_string()];
            if let Some(dt) = self.readout_interval {
                rec.push(format!("{}", (k + 1) as f64 * dt));
            }
            if let Some(ws) = &self.weights {
                rec.push(format!("{:e}", ws[k]));
            }
            rec.extend(row.iter().map(|z| z.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of a visible configuration, bit `i` set iff `v_i = 1`.
pub fn visible_index(v: &[u8]) -> usize {
    v.iter()
        .enumerate()
        .fold(0usize, |acc, (i, &z)| acc | (usize::from(z & 1) << i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visible_index_uses_bit_per_spin() {
        assert_eq!(visible_index(&[1, 0, 1]), 0b101);
        assert_eq!(visible_index(&[0, 0, 0]), 0);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(StateSamples::from_rows(2, 1, vec![0, 1, 0, 1]).is_err());
        assert!(StateSamples::from_rows(2, 1, vec![0, 2, 0]).is_err());
    }

    #[test]
    fn histogram_ignores_hidden_units() {
        let s = StateSamples::from_rows(2, 1, vec![1, 0, 1, 1, 0, 0, 0, 1, 1]).unwrap();
        let h = s.visible_histogram().unwrap();
        assert_eq!(h.count(0b01), 2.0);
        assert_eq!(h.count(0b10), 1.0);
        assert_eq!(h.total(), 3.0);
    }

    #[test]
    fn csv_has_one_row_per_readout() {
        let s = StateSamples::from_rows(1, 1, vec![1, 0, 0, 1])
            .unwrap()
            .with_readout_interval(2.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,time,z0,z1\n0,2,1,0\n1,4,0,1\n");
    }
}
