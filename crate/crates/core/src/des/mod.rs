//! Discrete-event simulation of the TWDM-PON upstream of one vPON slice.
//!
//! Each member ONU emits fixed-size eCPRI frames as a Poisson stream at its
//! fronthaul rate. Members are statically mapped to wavelengths, and each
//! wavelength runs its own sequence of grant rounds:
//!
//! * At the start of a round the cooperative DBA sees every ONU's backlog
//!   and grants it in one burst per ONU ([`dba::scheduler_grant`]).
//! * Frames arriving during a round wait for the next one, which starts as
//!   soon as the current round's bursts are done.
//! * When a round starts with no backlog at all, the wavelength idles for a
//!   full grant cycle before polling again.
//!
//! Guard overhead is reserved per member per grant cycle, so payload moves at
//! the guard-discounted rate of [`ChannelParams::wavelength_capacity_bps`].
//! A frame's latency is the time from arrival to the end of its transmission
//! plus the propagation delay of its ONU.

pub mod dba;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::slice::{
    wavelength_loads, ChannelParams, LatencyError, LatencyEstimate, LatencySource, VPonSlice,
};
use dba::{scheduler_grant, CycleState};

/// Remaining-bit slack below which a frame counts as fully transmitted.
const BIT_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub channel: ChannelParams,
    /// Minimum number of leading frames discarded; at least 10% of all
    /// simulated frames are discarded regardless.
    pub warmup_frames: u64,
    /// Frames whose latency is reported. Use at least 10^4 for statistics.
    pub measured_frames: u64,
    pub seed: u64,
    /// Keep a per-frame record of the measured window.
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            warmup_frames: 1_000,
            measured_frames: 20_000,
            seed: 1,
            record_trace: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), LatencyError> {
        self.channel.validate()?;
        if self.measured_frames == 0 {
            return Err(LatencyError::InvalidConfig("measured_frames must be >= 1".into()));
        }
        Ok(())
    }

    /// Frames discarded before measurement starts.
    pub fn effective_warmup(&self) -> u64 {
        self.warmup_frames.max(self.measured_frames.div_ceil(9))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub ru_id: usize,
    pub wavelength: u32,
    pub arrival_us: f64,
    pub departure_us: f64,
    pub propagation_us: f64,
    pub latency_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub estimate: LatencyEstimate,
    pub min_us: f64,
    pub max_us: f64,
    pub frames_generated: u64,
    pub frames_delivered: u64,
    pub frames_in_flight: u64,
    pub end_time_us: f64,
    /// Utilisation per wavelength, in slice wavelength order.
    pub rho: Vec<f64>,
    pub trace: Option<Vec<FrameRecord>>,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival { wl: usize, onu: usize },
    RoundStart { wl: usize },
    Departure { wl: usize, onu: usize, frame_id: u64, arrival_us: f64 },
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Frame {
    id: u64,
    arrival_us: f64,
    remaining_bits: f64,
}

struct Onu {
    member: usize,
    interarrival: Exp<f64>,
    queue: VecDeque<Frame>,
}

struct Wavelength {
    id: u32,
    /// Payload bits per microsecond.
    rate_per_us: f64,
    round_capacity_bits: f64,
    onus: Vec<Onu>,
}

struct Engine<'a> {
    slice: &'a VPonSlice,
    config: &'a SimConfig,
    heap: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    wavelengths: Vec<Wavelength>,
    next_frame: u64,
    delivered: u64,
    pending_departures: u64,
    warmup: u64,
    window_end: u64,
    delivered_before_end: u64,
    latencies: Vec<f64>,
    trace: Option<Vec<FrameRecord>>,
    now: f64,
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn run(&mut self) {
        for wl in 0..self.wavelengths.len() {
            self.schedule(0.0, EventKind::RoundStart { wl });
            for onu in 0..self.wavelengths[wl].onus.len() {
                let dt = self.wavelengths[wl].onus[onu].interarrival.sample(&mut self.rng);
                self.schedule(dt, EventKind::Arrival { wl, onu });
            }
        }
        while self.delivered_before_end < self.window_end {
            let ev = self.heap.pop().expect("arrivals keep the queue non-empty");
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            match ev.kind {
                EventKind::Arrival { wl, onu } => self.on_arrival(wl, onu),
                EventKind::RoundStart { wl } => self.on_round_start(wl),
                EventKind::Departure {
                    wl,
                    onu,
                    frame_id,
                    arrival_us,
                } => self.on_departure(wl, onu, frame_id, arrival_us),
            }
        }
    }

    fn on_arrival(&mut self, wl: usize, onu: usize) {
        let id = self.next_frame;
        self.next_frame += 1;
        let bits = self.config.channel.packet_bits;
        let now = self.now;
        let o = &mut self.wavelengths[wl].onus[onu];
        o.queue.push_back(Frame {
            id,
            arrival_us: now,
            remaining_bits: bits,
        });
        let dt = o.interarrival.sample(&mut self.rng);
        self.schedule(now + dt, EventKind::Arrival { wl, onu });
    }

    fn on_round_start(&mut self, wl: usize) {
        let now = self.now;
        let w = &mut self.wavelengths[wl];
        let demands: Vec<f64> = w
            .onus
            .iter()
            .map(|o| o.queue.iter().map(|f| f.remaining_bits).sum())
            .collect();
        if demands.iter().all(|&d| d <= BIT_EPS) {
            let cycle = self.config.channel.grant_cycle_us;
            self.schedule(now + cycle, EventKind::RoundStart { wl });
            return;
        }
        let state = CycleState {
            start_us: now,
            capacity: w.round_capacity_bits,
            rate_per_us: w.rate_per_us,
            guard_us: 0.0,
            // Whole frames only: fragments would leave frames half-sent
            // across rounds.
            quantum: self.config.channel.packet_bits,
        };
        let grants = scheduler_grant(&state, &demands);
        let mut departures = Vec::new();
        let mut round_end = now;
        for g in &grants {
            let onu = &mut w.onus[g.onu];
            let mut t = g.start_us;
            let mut budget = g.size;
            while budget > BIT_EPS {
                let Some(front) = onu.queue.front_mut() else { break };
                let tx = front.remaining_bits.min(budget);
                t += tx / w.rate_per_us;
                budget -= tx;
                front.remaining_bits -= tx;
                if front.remaining_bits > BIT_EPS {
                    break;
                }
                let f = onu.queue.pop_front().expect("front exists");
                departures.push((t, g.onu, f.id, f.arrival_us));
            }
            round_end = round_end.max(g.end_us);
        }
        for (t, onu, frame_id, arrival_us) in departures {
            self.pending_departures += 1;
            self.schedule(
                t,
                EventKind::Departure {
                    wl,
                    onu,
                    frame_id,
                    arrival_us,
                },
            );
        }
        self.schedule(round_end, EventKind::RoundStart { wl });
    }

    fn on_departure(&mut self, wl: usize, onu: usize, frame_id: u64, arrival_us: f64) {
        self.pending_departures -= 1;
        self.delivered += 1;
        if frame_id < self.window_end {
            self.delivered_before_end += 1;
        }
        if frame_id < self.warmup || frame_id >= self.window_end {
            return;
        }
        let w = &self.wavelengths[wl];
        let member = &self.slice.members[w.onus[onu].member];
        let propagation_us = self.config.channel.propagation_us(member.distance_km);
        let latency_us = self.now - arrival_us + propagation_us;
        self.latencies.push(latency_us);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(FrameRecord {
                frame_id,
                ru_id: member.ru_id,
                wavelength: w.id,
                arrival_us,
                departure_us: self.now,
                propagation_us,
                latency_us,
            });
        }
    }

    fn queued_frames(&self) -> u64 {
        self.wavelengths
            .iter()
            .flat_map(|w| &w.onus)
            .map(|o| o.queue.len() as u64)
            .sum()
    }
}

/// Simulates the upstream of `slice` and reports latency over the measured
/// window. Deterministic for a fixed `(slice, config)` pair.
pub fn simulate_slice(slice: &VPonSlice, config: &SimConfig) -> Result<SimReport, LatencyError> {
    config.validate()?;
    let loads = wavelength_loads(slice, &config.channel)?;
    let ch = &config.channel;

    let wavelengths: Vec<Wavelength> = loads
        .iter()
        .map(|load| {
            let rate_per_us = load.capacity_bps / 1e6;
            Wavelength {
                id: load.wavelength,
                rate_per_us,
                round_capacity_bits: rate_per_us * ch.grant_cycle_us,
                onus: load
                    .members
                    .iter()
                    .map(|&member| {
                        let frames_per_us = slice.members[member].rate_bps / ch.packet_bits / 1e6;
                        Onu {
                            member,
                            interarrival: Exp::new(frames_per_us).expect("positive rate"),
                            queue: VecDeque::new(),
                        }
                    })
                    .collect(),
            }
        })
        .collect();

    let warmup = config.effective_warmup();
    let window_end = warmup + config.measured_frames;
    let mut engine = Engine {
        slice,
        config,
        heap: BinaryHeap::new(),
        seq: 0,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        wavelengths,
        next_frame: 0,
        delivered: 0,
        pending_departures: 0,
        warmup,
        window_end,
        delivered_before_end: 0,
        latencies: Vec::with_capacity(config.measured_frames as usize),
        trace: config
            .record_trace
            .then(|| Vec::with_capacity(config.measured_frames as usize)),
        now: 0.0,
    };
    engine.run();

    let frames_in_flight = engine.queued_frames() + engine.pending_departures;
    let mut lat = std::mem::take(&mut engine.latencies);
    let n = lat.len();
    let mean_us = lat.iter().sum::<f64>() / n as f64;
    lat.sort_by(f64::total_cmp);
    let p99_us = lat[(0.99 * n as f64).ceil() as usize - 1];
    let mut trace = engine.trace.take();
    if let Some(t) = trace.as_mut() {
        t.sort_by_key(|r| r.frame_id);
    }

    Ok(SimReport {
        estimate: LatencyEstimate {
            mean_us,
            p99_us: Some(p99_us),
            frames_measured: n as u64,
            source: LatencySource::Simulated,
        },
        min_us: lat[0],
        max_us: lat[n - 1],
        frames_generated: engine.next_frame,
        frames_delivered: engine.delivered,
        frames_in_flight,
        end_time_us: engine.now,
        rho: loads.iter().map(|l| l.rho()).collect(),
        trace,
    })
}
