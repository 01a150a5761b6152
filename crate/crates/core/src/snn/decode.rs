//! Spike trains to binary network states.
//!
//! A neuron is in state 1 at readout time `t` iff it spiked in `(t - τ_ref, t]`.

use super::network::NetworkConfig;
use super::sim::SpikeRecord;
use crate::error::{Error, Result};
use crate::states::StateSamples;

/// Decodes states at `t = (r + 1)·interval` for every full interval in the record.
pub fn decode_states(record: &SpikeRecord, config: &NetworkConfig, interval: f64) -> Result<StateSamples> {
    decode_window(record, config, interval, 0.0)
}

/// Like [`decode_states`], with readouts starting after `start` (burn-in).
pub fn decode_window(
    record: &SpikeRecord,
    config: &NetworkConfig,
    interval: f64,
    start: f64,
) -> Result<StateSamples> {
    let tau_ref: Vec<f64> = config.neurons.iter().map(|p| p.refractory_time).collect();
    if record.n_neurons != tau_ref.len() {
        return Err(Error::Shape(format!(
            "spike record has {} neurons, network has {}",
            record.n_neurons,
            tau_ref.len()
        )));
    }
    let mut out = StateSamples::new(config.n_visible, config.n_hidden).with_readout_interval(interval);
    decode_into(record, &tau_ref, interval, start, &mut out)?;
    Ok(out)
}

pub(crate) fn decode_into(
    record: &SpikeRecord,
    tau_ref: &[f64],
    interval: f64,
    start: f64,
    out: &mut StateSamples,
) -> Result<()> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(Error::invalid("interval", "must be positive"));
    }
    if !(start.is_finite() && start >= 0.0) {
        return Err(Error::invalid("start", "must be non-negative"));
    }
    let span = record.duration - start;
    let n_rows = if span > 0.0 { (span / interval).floor() as usize } else { 0 };
    let trains = record.trains();
    let mut cursor = vec![0usize; trains.len()];
    let mut row = vec![0u8; trains.len()];
    for r in 0..n_rows {
        let t = start + (r + 1) as f64 * interval;
        for (k, train) in trains.iter().enumerate() {
            // Advance to the last spike at or before t.
            while cursor[k] < train.len() && train[cursor[k]] <= t {
                cursor[k] += 1;
            }
            row[k] = u8::from(cursor[k] > 0 && train[cursor[k] - 1] > t - tau_ref[k]);
        }
        out.push(&row);
    }
    Ok(())
}
