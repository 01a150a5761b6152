//! Event-driven network simulation.
//!
//! Synaptic transmission is instantaneous, so the only scheduled events are
//! predicted threshold crossings and noise arrivals. Each neuron and each noise
//! generator owns one slot holding its next event time; a crossing prediction
//! is recomputed whenever the neuron receives input.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;

use super::network::{NetworkConfig, NoiseMode};
use super::neuron::Membrane;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub time: f64,
    pub neuron: usize,
}

/// All output spikes of one run, ordered by time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpikeRecord {
    pub duration: f64,
    pub n_neurons: usize,
    pub spikes: Vec<Spike>,
}

impl SpikeRecord {
    pub fn count(&self, neuron: usize) -> usize {
        self.spikes.iter().filter(|s| s.neuron == neuron).count()
    }

    /// Spike times of every neuron.
    pub fn trains(&self) -> Vec<Vec<f64>> {
        let mut trains = vec![Vec::new(); self.n_neurons];
        for s in &self.spikes {
            trains[s.neuron].push(s.time);
        }
        trains
    }

    /// Checks time ordering and refractory exclusion.
    pub fn validate(&self, refractory_times: &[f64]) -> Result<()> {
        if self.spikes.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::invalid("spike record", "times are not non-decreasing"));
        }
        for (k, train) in self.trains().iter().enumerate() {
            // Relative slack for accumulated rounding in event times.
            let tol = 1e-9 * refractory_times[k];
            if let Some(w) = train.windows(2).find(|w| w[1] - w[0] < refractory_times[k] - tol) {
                return Err(Error::invalid(
                    "spike record",
                    format!("neuron {k} spiked at {} and {} within τ_ref", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "neuron_id"])?;
        for s in &self.spikes {
            w.write_record([format!("{}", s.time), s.neuron.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct PrivateNoise {
    rate: f64,
    exc_fraction: f64,
    w_exc: f64,
    w_inh: f64,
}

#[derive(Debug, Clone)]
enum Noise {
    Private(Vec<PrivateNoise>),
    Shared {
        /// `(rate, signed current)` per source.
        sources: Vec<(f64, f64)>,
        targets: Vec<Vec<usize>>,
    },
}

/// Network in simulation-ready form. Edges may be directed.
#[derive(Debug, Clone)]
pub(crate) struct CompiledNetwork {
    pub membranes: Vec<Membrane>,
    /// Presynaptic neuron → `(postsynaptic neuron, current jump)`.
    pub edges: Vec<Vec<(usize, f64)>>,
    noise: Noise,
}

impl CompiledNetwork {
    pub fn compile(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_neurons();
        let membranes = (0..n)
            .map(|k| Membrane::new(&config.neurons[k], config.effective_leak(k)))
            .collect();
        let edges = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (j, config.effective_weight(i, j) * config.weight_unit))
                    .filter(|&(_, current)| current != 0.0)
                    .collect()
            })
            .collect();
        let pool = &config.noise;
        let noise = match pool.mode {
            NoiseMode::Independent => Noise::Private(
                config
                    .noise_assignment
                    .iter()
                    .map(|sources| {
                        let n_exc = sources.iter().filter(|&&s| pool.is_excitatory(s)).count();
                        let n_inh = sources.len() - n_exc;
                        private_noise(pool.rate_per_source, n_exc, n_inh, pool.noise_weight_exc, pool.noise_weight_inh)
                    })
                    .collect(),
            ),
            NoiseMode::SharedPool => {
                let sources = (0..pool.n_sources())
                    .map(|s| {
                        let w = if pool.is_excitatory(s) {
                            pool.noise_weight_exc
                        } else {
                            -pool.noise_weight_inh
                        };
                        (pool.rate_per_source, w)
                    })
                    .collect();
                let mut targets = vec![Vec::new(); pool.n_sources()];
                for (k, assigned) in config.noise_assignment.iter().enumerate() {
                    for &s in assigned {
                        targets[s].push(k);
                    }
                }
                Noise::Shared { sources, targets }
            }
        };
        Ok(Self {
            membranes,
            edges,
            noise,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.membranes.len()
    }
}

fn private_noise(rate: f64, n_exc: usize, n_inh: usize, w_exc: f64, w_inh: f64) -> PrivateNoise {
    PrivateNoise {
        rate: 0.0,
        exc_fraction: 0.0,
        w_exc,
        w_inh,
    }
    .with_rates(rate * n_exc as f64, rate * n_inh as f64)
}

impl PrivateNoise {
    fn with_rates(mut self, exc: f64, inh: f64) -> Self {
        self.rate = exc + inh;
        self.exc_fraction = if self.rate > 0.0 { exc / self.rate } else { 0.0 };
        self
    }
}

/// Tournament tree holding the next event time of every slot.
///
/// Ties resolve to the lower slot index.
#[derive(Debug, Clone)]
struct EventTree {
    size: usize,
    times: Vec<f64>,
    /// Winning slot per internal node; leaves start at `size`.
    winners: Vec<u32>,
}

impl EventTree {
    fn new(n_slots: usize) -> Self {
        let size = n_slots.next_power_of_two().max(1);
        let mut tree = Self {
            size,
            times: vec![f64::INFINITY; size],
            winners: vec![0; 2 * size],
        };
        for i in 0..size {
            tree.winners[size + i] = i as u32;
        }
        for node in (1..size).rev() {
            tree.winners[node] = tree.pick(tree.winners[2 * node], tree.winners[2 * node + 1]);
        }
        tree
    }

    #[inline]
    fn pick(&self, a: u32, b: u32) -> u32 {
        if self.times[b as usize] < self.times[a as usize] {
            b
        } else {
            a
        }
    }

    #[inline]
    fn set(&mut self, slot: usize, time: f64) {
        self.times[slot] = time;
        let mut node = (self.size + slot) / 2;
        while node >= 1 {
            self.winners[node] = self.pick(self.winners[2 * node], self.winners[2 * node + 1]);
            node /= 2;
        }
    }

    #[inline]
    fn next(&self) -> (usize, f64) {
        let slot = self.winners[1] as usize;
        (slot, self.times[slot])
    }
}

#[derive(Debug, Clone, Copy)]
struct NeuronState {
    t: f64,
    u: f64,
    current: f64,
    refractory_until: f64,
}

/// Simulation state that can be advanced in consecutive windows.
///
/// Slots `0..n` hold predicted threshold crossings, the following slots the
/// next event of each noise generator (one per neuron for private noise, one
/// per source for a shared pool).
pub(crate) struct Engine<'a> {
    net: &'a CompiledNetwork,
    states: Vec<NeuronState>,
    events: EventTree,
    rng: rng::Rng,
}

impl<'a> Engine<'a> {
    /// Starts every membrane at its leak potential with no synaptic current.
    pub fn new(net: &'a CompiledNetwork, seed: u64) -> Self {
        let n = net.n_neurons();
        let states = net
            .membranes
            .iter()
            .map(|m| NeuronState {
                t: 0.0,
                u: m.leak,
                current: 0.0,
                refractory_until: f64::NEG_INFINITY,
            })
            .collect();
        let n_generators = match &net.noise {
            Noise::Private(noise) => noise.len(),
            Noise::Shared { sources, .. } => sources.len(),
        };
        let mut engine = Self {
            net,
            states,
            events: EventTree::new(n + n_generators),
            rng: rng::stream(seed, 0x736e6e),
        };
        for g in 0..n_generators {
            engine.schedule_noise(g, 0.0);
        }
        for k in 0..n {
            engine.predict(k);
        }
        engine
    }

    fn schedule_noise(&mut self, generator: usize, now: f64) {
        let rate = match &self.net.noise {
            Noise::Private(noise) => noise[generator].rate,
            Noise::Shared { sources, .. } => sources[generator].0,
        };
        let time = if rate > 0.0 {
            let e: f64 = self.rng.sample(Exp1);
            now + e / rate
        } else {
            f64::INFINITY
        };
        self.events.set(self.net.n_neurons() + generator, time);
    }

    fn advance(&mut self, k: usize, t: f64) {
        let m = &self.net.membranes[k];
        let st = &mut self.states[k];
        if t <= st.t {
            return;
        }
        if st.refractory_until >= t {
            st.current *= (-(t - st.t) / m.tau_syn).exp();
            st.u = m.reset;
        } else {
            let mut t0 = st.t;
            if st.refractory_until > t0 {
                st.current *= (-(st.refractory_until - t0) / m.tau_syn).exp();
                st.u = m.reset;
                t0 = st.refractory_until;
            }
            let (u, i) = m.evolve(st.u, st.current, t - t0);
            st.u = u;
            st.current = i;
        }
        st.t = t;
    }

    fn predict(&mut self, k: usize) {
        let m = &self.net.membranes[k];
        let st = &self.states[k];
        let (t0, u0, i0) = if st.refractory_until > st.t {
            (
                st.refractory_until,
                m.reset,
                st.current * (-(st.refractory_until - st.t) / m.tau_syn).exp(),
            )
        } else {
            (st.t, st.u, st.current)
        };
        let time = m.next_crossing(u0, i0).map_or(f64::INFINITY, |s| t0 + s);
        self.events.set(k, time);
    }

    fn inject(&mut self, k: usize, t: f64, current: f64) {
        self.advance(k, t);
        self.states[k].current += current;
        self.predict(k);
    }

    /// Processes all events up to and including `t_end`, appending spikes to `out`.
    pub fn run_until(&mut self, t_end: f64, out: &mut Vec<Spike>) {
        let net = self.net;
        let n = net.n_neurons();
        loop {
            let (slot, time) = self.events.next();
            if time > t_end {
                break;
            }
            if slot < n {
                let k = slot;
                self.advance(k, time);
                let m = &net.membranes[k];
                let st = &mut self.states[k];
                st.u = m.reset;
                st.refractory_until = time + m.tau_ref;
                out.push(Spike { time, neuron: k });
                for e in 0..net.edges[k].len() {
                    let (post, w) = net.edges[k][e];
                    self.inject(post, time, w);
                }
                self.predict(k);
                continue;
            }
            let g = slot - n;
            match &net.noise {
                Noise::Private(noise) => {
                    let nz = noise[g];
                    let w = if self.rng.random::<f64>() < nz.exc_fraction {
                        nz.w_exc
                    } else {
                        -nz.w_inh
                    };
                    self.inject(g, time, w);
                }
                Noise::Shared { sources, targets } => {
                    let w = sources[g].1;
                    for t in 0..targets[g].len() {
                        self.inject(targets[g][t], time, w);
                    }
                }
            }
            self.schedule_noise(g, time);
        }
    }
}

/// Simulates the network for `duration` model time.
pub fn simulate(config: &NetworkConfig, duration: f64, seed: u64) -> Result<SpikeRecord> {
    let net = CompiledNetwork::compile(config)?;
    simulate_compiled(&net, duration, seed)
}

pub(crate) fn simulate_compiled(net: &CompiledNetwork, duration: f64, seed: u64) -> Result<SpikeRecord> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(Error::invalid("duration", "must be finite and non-negative"));
    }
    let mut spikes = Vec::new();
    if duration > 0.0 {
        Engine::new(net, seed).run_until(duration, &mut spikes);
    }
    Ok(SpikeRecord {
        duration,
        n_neurons: net.n_neurons(),
        spikes,
    })
}
