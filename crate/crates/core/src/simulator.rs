//! Event-driven simulation of `N` prioritized Poisson streams sharing one
//! exponential server with strict preemptive priority.
//!
//! Stream 0 has the highest priority. The server always works on the
//! highest-priority packet present. Each stream holds at most one packet in
//! the system at any time:
//!
//! * [`Discipline::Wq`]: a preempted packet waits in its stream's slot and
//!   resumes when the server gets back to it. A new arrival replaces the
//!   stream's packet wherever it is (in the slot or in service).
//! * [`Discipline::Nq`]: a preempted packet is dropped, and an arrival that
//!   finds a higher-priority packet in service is dropped.
//!
//! The age of stream `k` is `t - U_k(t)` with `U_k` the generation time of
//! its last delivered packet (`U_k(0) = 0`). Between deliveries it grows
//! linearly, so the area under it is accumulated exactly, segment by
//! segment, over the measurement window `[warmup, horizon]`.
//!
//! Randomness: each replication gets its own seed, derived from the base
//! seed, and within a replication every stream draws inter-arrival times
//! and service times from separate ChaCha streams. Runs with the same seed
//! under the two disciplines therefore see identical arrival sequences.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{check_streams, Discipline, SystemConfig};
use crate::{Error, Result};

/// Relative standard error above which an estimate is flagged.
pub const CONVERGENCE_THRESHOLD: f64 = 0.05;

/// Default measurement warm-up as a fraction of the horizon.
pub const DEFAULT_WARMUP: f64 = 0.1;

/// How a preempted WQ packet continues once it gets the server back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResumePolicy {
    /// Keeps its remaining service time.
    #[default]
    Resume,
    /// Draws a fresh exponential service time.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemConfig,
    pub streams: usize,
    pub discipline: Discipline,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: usize,
    #[serde(default)]
    pub resume: ResumePolicy,
}

impl SimConfig {
    pub fn new(system: SystemConfig, streams: usize, discipline: Discipline) -> Self {
        Self {
            system,
            streams,
            discipline,
            horizon: 1e6,
            warmup_fraction: DEFAULT_WARMUP,
            seed: 0,
            replications: 5,
            resume: ResumePolicy::Resume,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_resume(mut self, resume: ResumePolicy) -> Self {
        self.resume = resume;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        check_streams(self.streams)?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidConfig(format!(
                "warm-up fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "at least one replication is required".into(),
            ));
        }
        Ok(())
    }
}

/// Measurement of one stream in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamMeasurement {
    pub area: f64,
    pub measured_time: f64,
}

impl StreamMeasurement {
    pub fn age(&self) -> f64 {
        self.area / self.measured_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub streams: Vec<StreamMeasurement>,
}

/// Across-replication summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub per_stream_age: Vec<f64>,
    /// Standard error of each mean; `NaN` (`null` in JSON) with a single
    /// replication.
    pub stderr: Vec<f64>,
    pub total_age: f64,
    /// Set when some stream's standard error exceeds
    /// [`CONVERGENCE_THRESHOLD`] of its mean, or cannot be estimated.
    pub non_convergence: bool,
    pub replications: Vec<Replication>,
}

impl SimEstimate {
    fn from_replications(replications: Vec<Replication>) -> Self {
        let r = replications.len();
        let n = replications[0].streams.len();
        let mut per_stream_age = Vec::with_capacity(n);
        let mut stderr = Vec::with_capacity(n);
        for k in 0..n {
            let ages: Vec<f64> = replications
                .iter()
                .map(|rep| rep.streams[k].age())
                .collect();
            let mean = ages.iter().sum::<f64>() / r as f64;
            let se = if r > 1 {
                let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
                (var / r as f64).sqrt()
            } else {
                f64::NAN
            };
            per_stream_age.push(mean);
            stderr.push(se);
        }
        let non_convergence = per_stream_age
            .iter()
            .zip(&stderr)
            .any(|(m, s)| !(s / m <= CONVERGENCE_THRESHOLD));
        Self {
            total_age: per_stream_age.iter().sum(),
            per_stream_age,
            stderr,
            non_convergence,
            replications,
        }
    }

    /// Writes the per-replication CSV
    /// (`replication,stream,discipline,lambda,mu,N,age,area,measured_time`).
    /// Streams are numbered from 1, top priority first.
    pub fn write_csv<W: Write + ?Sized>(
        &self,
        cfg: &SimConfig,
        out: &mut W,
    ) -> std::io::Result<()> {
        writeln!(
            out,
            "replication,stream,discipline,lambda,mu,N,age,area,measured_time"
        )?;
        for rep in &self.replications {
            for (k, m) in rep.streams.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    rep.index,
                    k + 1,
                    cfg.discipline,
                    cfg.system.lambda,
                    cfg.system.mu,
                    cfg.streams,
                    m.age(),
                    m.area,
                    m.measured_time
                )?;
            }
        }
        Ok(())
    }
}

/// Runs `config.replications` independent sample paths in parallel and
/// merges them in replication order.
pub fn simulate(config: &SimConfig) -> Result<SimEstimate> {
    config.validate()?;
    let replications: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(config.seed, r);
            Replication {
                index: r,
                seed,
                streams: run_replication(config, seed),
            }
        })
        .collect();
    Ok(SimEstimate::from_replications(replications))
}

/// Simulates every config, replacing each seed with
/// [`derive_seed`]`(seed, index)`.
pub fn sweep_simulate(configs: &[SimConfig]) -> Result<Vec<SimEstimate>> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut c = c.clone();
            c.seed = derive_seed(c.seed, i);
            simulate(&c)
        })
        .collect()
}

/// Seed for the `index`-th point of a sweep. Index 0 keeps the base seed.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn replication_seed(base: u64, replication: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(replication as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    // Declaration order is the tie-break order at equal timestamps.
    Completion { generation: u64 },
    Arrival,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    stream: usize,
}

impl Event {
    fn rank(&self) -> u8 {
        match self.kind {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival => 1,
        }
    }
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
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.rank().cmp(&other.rank()))
            .then(self.stream.cmp(&other.stream))
            .then(self.kind.cmp(&other.kind))
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    generated: f64,
    /// Remaining work if the packet was interrupted, `None` if a fresh
    /// service time must be drawn.
    remaining: Option<f64>,
}

struct InService {
    stream: usize,
    started: f64,
    service: f64,
}

struct StreamState {
    packet: Option<Packet>,
    last_delivered: f64,
    integrated_to: f64,
    area: f64,
    arrivals: ChaCha8Rng,
    services: ChaCha8Rng,
}

struct Replica<'a> {
    cfg: &'a SimConfig,
    arrival_dist: Exp<f64>,
    service_dist: Exp<f64>,
    streams: Vec<StreamState>,
    server: Option<InService>,
    generation: u64,
    queue: BinaryHeap<Reverse<Event>>,
    warmup: f64,
}

impl Replica<'_> {
    fn draw_service(&mut self, stream: usize) -> f64 {
        self.service_dist.sample(&mut self.streams[stream].services)
    }

    fn schedule_arrival(&mut self, stream: usize, now: f64) {
        let gap = self.arrival_dist.sample(&mut self.streams[stream].arrivals);
        self.queue.push(Reverse(Event {
            time: now + gap,
            kind: EventKind::Arrival,
            stream,
        }));
    }

    /// Accumulates the age area of `stream` from its last checkpoint to
    /// `now`, clipped to the measurement window.
    fn integrate(&mut self, stream: usize, now: f64) {
        let s = &mut self.streams[stream];
        let from = s.integrated_to.max(self.warmup);
        if now > from {
            // ∫_from^now (t - U) dt
            s.area += (now - from) * (0.5 * (from + now) - s.last_delivered);
        }
        s.integrated_to = now;
    }

    /// Takes the packet in service off the server, saving its remaining
    /// work under the current resume policy.
    fn interrupt(&mut self, now: f64) -> Option<(usize, f64)> {
        let cur = self.server.take()?;
        self.generation += 1;
        let left = (cur.service - (now - cur.started)).max(0.0);
        Some((cur.stream, left))
    }

    /// Puts the highest-priority waiting packet (if any) into service.
    fn dispatch(&mut self, now: f64) {
        debug_assert!(self.server.is_none());
        let Some(stream) = self.streams.iter().position(|s| s.packet.is_some()) else {
            return;
        };
        let service = match self.streams[stream].packet.and_then(|p| p.remaining) {
            Some(left) => left,
            None => self.draw_service(stream),
        };
        self.generation += 1;
        self.server = Some(InService {
            stream,
            started: now,
            service,
        });
        self.queue.push(Reverse(Event {
            time: now + service,
            kind: EventKind::Completion {
                generation: self.generation,
            },
            stream,
        }));
    }

    fn on_arrival(&mut self, stream: usize, now: f64) {
        self.schedule_arrival(stream, now);
        let fresh = Packet {
            generated: now,
            remaining: None,
        };
        let serving = self.server.as_ref().map(|s| s.stream);
        match self.cfg.discipline {
            Discipline::Wq => match serving {
                Some(cur) if cur < stream => {
                    // Waits behind higher-priority work, replacing any
                    // older packet of its stream.
                    self.streams[stream].packet = Some(fresh);
                }
                Some(cur) => {
                    let (_, left) = self.interrupt(now).expect("server busy");
                    if cur != stream {
                        let policy = self.cfg.resume;
                        if let Some(p) = self.streams[cur].packet.as_mut() {
                            p.remaining = match policy {
                                ResumePolicy::Resume => Some(left),
                                ResumePolicy::Restart => None,
                            };
                        }
                    }
                    self.streams[stream].packet = Some(fresh);
                    self.dispatch(now);
                }
                None => {
                    self.streams[stream].packet = Some(fresh);
                    self.dispatch(now);
                }
            },
            Discipline::Nq => match serving {
                Some(cur) if cur < stream => {}
                Some(cur) => {
                    self.interrupt(now);
                    self.streams[cur].packet = None;
                    self.streams[stream].packet = Some(fresh);
                    self.dispatch(now);
                }
                None => {
                    self.streams[stream].packet = Some(fresh);
                    self.dispatch(now);
                }
            },
        }
    }

    fn on_completion(&mut self, stream: usize, generation: u64, now: f64) {
        if generation != self.generation {
            return; // superseded by a preemption
        }
        let done = self.server.take().expect("completion with idle server");
        debug_assert_eq!(done.stream, stream);
        let packet = self.streams[stream]
            .packet
            .take()
            .expect("served packet present");
        self.integrate(stream, now);
        debug_assert!(packet.generated >= self.streams[stream].last_delivered);
        self.streams[stream].last_delivered = packet.generated;
        self.dispatch(now);
    }

    fn run(mut self) -> Vec<StreamMeasurement> {
        let horizon = self.cfg.horizon;
        for k in 0..self.streams.len() {
            self.schedule_arrival(k, 0.0);
        }
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > horizon {
                break;
            }
            match ev.kind {
                EventKind::Arrival => self.on_arrival(ev.stream, ev.time),
                EventKind::Completion { generation } => {
                    self.on_completion(ev.stream, generation, ev.time)
                }
            }
        }
        for k in 0..self.streams.len() {
            self.integrate(k, horizon);
        }
        let measured_time = horizon - self.warmup;
        self.streams
            .iter()
            .map(|s| StreamMeasurement {
                area: s.area,
                measured_time,
            })
            .collect()
    }
}

fn substream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn run_replication(cfg: &SimConfig, seed: u64) -> Vec<StreamMeasurement> {
    let streams = (0..cfg.streams)
        .map(|k| StreamState {
            packet: None,
            last_delivered: 0.0,
            integrated_to: 0.0,
            area: 0.0,
            arrivals: substream(seed, 2 * k as u64),
            services: substream(seed, 2 * k as u64 + 1),
        })
        .collect();
    Replica {
        cfg,
        arrival_dist: Exp::new(cfg.system.lambda).expect("validated rate"),
        service_dist: Exp::new(cfg.system.mu).expect("validated rate"),
        streams,
        server: None,
        generation: 0,
        queue: BinaryHeap::new(),
        warmup: cfg.warmup_fraction * cfg.horizon,
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(n: usize, l: f64, m: f64, d: Discipline) -> SimConfig {
        SimConfig::new(SystemConfig::new(l, m).unwrap(), n, d)
    }

    #[test]
    fn event_order_breaks_ties() {
        let a = Event {
            time: 1.0,
            kind: EventKind::Arrival,
            stream: 0,
        };
        let c = Event {
            time: 1.0,
            kind: EventKind::Completion { generation: 9 },
            stream: 3,
        };
        let b = Event {
            time: 1.0,
            kind: EventKind::Arrival,
            stream: 1,
        };
        let early = Event {
            time: 0.5,
            kind: EventKind::Arrival,
            stream: 7,
        };
        let mut heap: BinaryHeap<Reverse<Event>> =
            [a, b, c, early].into_iter().map(Reverse).collect();
        let order: Vec<(u8, usize)> =
            std::iter::from_fn(|| heap.pop().map(|Reverse(e)| (e.rank(), e.stream))).collect();
        assert_eq!(order, vec![(1, 7), (0, 3), (1, 0), (1, 1)]);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = sim(2, 1.0, 1.0, Discipline::Wq);
        let mut c = base.clone();
        c.horizon = 0.0;
        assert!(matches!(simulate(&c), Err(Error::InvalidConfig(_))));
        let mut c = base.clone();
        c.warmup_fraction = 1.0;
        assert!(simulate(&c).is_err());
        let mut c = base.clone();
        c.replications = 0;
        assert!(simulate(&c).is_err());
        let mut c = base;
        c.streams = 0;
        assert!(simulate(&c).is_err());
        assert!(sweep_simulate(&[]).is_err());
    }

    #[test]
    fn area_is_exact_for_a_single_sawtooth() {
        // No deliveries before the horizon: the age is just t, so the
        // window [2, 10] integrates to (100 - 4) / 2.
        let cfg = sim(1, 1.0, 1.0, Discipline::Wq).with_horizon(10.0);
        let mut r = Replica {
            cfg: &cfg,
            arrival_dist: Exp::new(1.0).unwrap(),
            service_dist: Exp::new(1.0).unwrap(),
            streams: vec![StreamState {
                packet: None,
                last_delivered: 0.0,
                integrated_to: 0.0,
                area: 0.0,
                arrivals: substream(0, 0),
                services: substream(0, 1),
            }],
            server: None,
            generation: 0,
            queue: BinaryHeap::new(),
            warmup: 2.0,
        };
        r.integrate(0, 5.0);
        r.streams[0].last_delivered = 4.0;
        r.integrate(0, 10.0);
        // [2,5]: ∫t dt = 10.5; [5,10]: ∫(t-4) dt = 17.5
        assert!((r.streams[0].area - 28.0).abs() < 1e-12);
    }

    #[test]
    fn single_replication_is_flagged() {
        let est = simulate(
            &sim(1, 1.0, 1.0, Discipline::Wq)
                .with_horizon(1e3)
                .with_replications(1),
        )
        .unwrap();
        assert!(est.stderr[0].is_nan());
        assert!(est.non_convergence);
    }

    #[test]
    fn csv_layout() {
        let cfg = sim(2, 1.0, 1.0, Discipline::Nq)
            .with_horizon(100.0)
            .with_replications(2);
        let est = simulate(&cfg).unwrap();
        let mut buf = Vec::new();
        est.write_csv(&cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "replication,stream,discipline,lambda,mu,N,age,area,measured_time"
        );
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("0,1,nq,1,1,2,"));
        assert!(lines[4].starts_with("1,2,nq,"));
    }

    #[test]
    fn sweep_seeds() {
        assert_eq!(derive_seed(42, 0), 42);
        assert_ne!(derive_seed(42, 1), derive_seed(42, 2));
    }
}
