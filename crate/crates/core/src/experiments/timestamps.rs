//! Detector timestamp streams and the sliding-window coincidence counter.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Default offset of the delayed window used to estimate accidentals.
pub const DEFAULT_ACCIDENTAL_OFFSET_PS: f64 = 100_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    I,
    II,
}

impl Channel {
    fn index(self) -> usize {
        match self {
            Channel::I => 0,
            Channel::II => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Channel::I => Channel::II,
            Channel::II => Channel::I,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::I => "I",
            Channel::II => "II",
        })
    }
}

impl FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "I" => Ok(Channel::I),
            "II" => Ok(Channel::II),
            other => Err(format!("unknown channel {other:?}, expected I or II")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub channel: Channel,
    pub time_ps: u64,
}

/// Detection events whose times never decrease within a channel.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimestampStream {
    events: Vec<Event>,
}

impl TimestampStream {
    /// Fails with the 1-based index of the first event that goes back in
    /// time on its channel.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let mut last = [0u64; 2];
        for (i, e) in events.iter().enumerate() {
            let k = e.channel.index();
            if e.time_ps < last[k] {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("channel {} time {} precedes {}", e.channel, e.time_ps, last[k]),
                });
            }
            last[k] = e.time_ps;
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Adds `offset_ps` to every timestamp.
    pub fn shifted(&self, offset_ps: u64) -> Result<Self> {
        let events = self
            .events
            .iter()
            .map(|e| {
                e.time_ps
                    .checked_add(offset_ps)
                    .map(|t| Event { time_ps: t, ..*e })
                    .ok_or_else(|| domain("time shift overflows"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { events })
    }

    /// Same stream with channel labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| Event {
                    channel: e.channel.other(),
                    ..*e
                })
                .collect(),
        }
    }

    /// Text form: one `channel,time_ps` line per event.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.events.len() * 16);
        s.push_str("# channel,time_ps\n");
        for e in &self.events {
            s.push_str(&format!("{},{}\n", e.channel, e.time_ps));
        }
        s
    }
}

/// Parses one non-comment line. `None` for blank and comment lines.
pub fn parse_event_line(line: &str, line_no: usize) -> Result<Option<Event>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    let bad = |message: String| Error::Format { line: line_no, message };
    let (ch, time) = t
        .split_once(',')
        .ok_or_else(|| bad(format!("expected `channel,time_ps`, got {t:?}")))?;
    let channel = ch.trim().parse::<Channel>().map_err(bad)?;
    let time_ps = time
        .trim()
        .parse::<u64>()
        .map_err(|e| bad(format!("time {:?}: {e}", time.trim())))?;
    Ok(Some(Event { channel, time_ps }))
}

/// Reads a whole stream into memory.
pub fn parse_stream<R: BufRead>(reader: R) -> Result<TimestampStream> {
    let mut events = Vec::new();
    let mut last = [0u64; 2];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(e) = parse_event_line(&line, i + 1)? {
            check_order(&mut last, e, i + 1)?;
            events.push(e);
        }
    }
    Ok(TimestampStream { events })
}

fn check_order(last: &mut [u64; 2], e: Event, line: usize) -> Result<()> {
    let k = e.channel.index();
    if e.time_ps < last[k] {
        return Err(Error::Format {
            line,
            message: format!("channel {} time {} precedes {}", e.channel, e.time_ps, last[k]),
        });
    }
    last[k] = e.time_ps;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub raw_coincidences: u64,
    pub accidentals: f64,
    pub net: f64,
    /// `sqrt(raw_coincidences)`.
    pub sigma: f64,
    pub window_ps: f64,
    pub accidental_offset_ps: f64,
    pub singles_i: u64,
    pub singles_ii: u64,
}

/// Pairs `(t_I, t_II)` with `|t_II − t_I − shift| ≤ half`.
///
/// Each pair is counted when its later event (in input order) arrives, by
/// a binary search over the other channel's retained events. Events that
/// can no longer match anything are dropped, so memory stays bounded by
/// the events inside one window span for time-ordered input.
#[derive(Debug)]
struct ShiftedMatcher {
    shift: i128,
    half: i128,
    held: [VecDeque<u64>; 2],
    count: u64,
}

impl ShiftedMatcher {
    fn new(shift: i128, half: i128) -> Self {
        Self {
            shift,
            half,
            held: [VecDeque::new(), VecDeque::new()],
            count: 0,
        }
    }

    fn push(&mut self, e: Event) {
        let t = e.time_ps as i128;
        // Partner window on the other channel, in that channel's time.
        let (lo, hi) = match e.channel {
            Channel::I => (t + self.shift - self.half, t + self.shift + self.half),
            Channel::II => (t - self.shift - self.half, t - self.shift + self.half),
        };
        let k = e.channel.index();
        let other = &mut self.held[1 - k];
        while other.front().is_some_and(|&s| (s as i128) < lo) {
            other.pop_front();
        }
        let end = other.partition_point(|&s| (s as i128) <= hi);
        self.count += end as u64;
        self.held[k].push_back(e.time_ps);
    }
}

/// Single forward pass over a stream, one event at a time.
#[derive(Debug)]
pub struct CoincidenceCounter {
    window_ps: f64,
    offset_ps: f64,
    prompt: ShiftedMatcher,
    early: ShiftedMatcher,
    late: ShiftedMatcher,
    last: [u64; 2],
    singles: [u64; 2],
    seen: usize,
}

impl CoincidenceCounter {
    /// `window_ps` is the full width; the accidental estimate averages the
    /// windows displaced by `±offset_ps`, which keeps it symmetric in the
    /// channel labels.
    pub fn new(window_ps: f64, offset_ps: f64) -> Result<Self> {
        if !(window_ps > 0.0 && window_ps.is_finite()) {
            return Err(domain("coincidence window must be positive"));
        }
        if !(offset_ps > window_ps && offset_ps.is_finite()) {
            return Err(domain("accidental offset must exceed the coincidence window"));
        }
        let half = (window_ps / 2.0).floor() as i128;
        let offset = offset_ps.round() as i128;
        Ok(Self {
            window_ps,
            offset_ps,
            prompt: ShiftedMatcher::new(0, half),
            early: ShiftedMatcher::new(-offset, half),
            late: ShiftedMatcher::new(offset, half),
            last: [0; 2],
            singles: [0; 2],
            seen: 0,
        })
    }

    /// Errors report the event's 1-based position in the input.
    pub fn push(&mut self, e: Event) -> Result<()> {
        self.push_at(e, self.seen + 1)
    }

    fn push_at(&mut self, e: Event, line: usize) -> Result<()> {
        self.seen += 1;
        check_order(&mut self.last, e, line)?;
        self.singles[e.channel.index()] += 1;
        self.prompt.push(e);
        self.early.push(e);
        self.late.push(e);
        Ok(())
    }

    pub fn record(&self) -> CoincidenceRecord {
        let raw = self.prompt.count;
        let accidentals = 0.5 * (self.early.count + self.late.count) as f64;
        CoincidenceRecord {
            raw_coincidences: raw,
            accidentals,
            net: raw as f64 - accidentals,
            sigma: (raw as f64).sqrt(),
            window_ps: self.window_ps,
            accidental_offset_ps: self.offset_ps,
            singles_i: self.singles[0],
            singles_ii: self.singles[1],
        }
    }
}

pub fn count_coincidences(stream: &TimestampStream, window_ps: f64) -> Result<CoincidenceRecord> {
    count_coincidences_with(stream, window_ps, DEFAULT_ACCIDENTAL_OFFSET_PS)
}

pub fn count_coincidences_with(stream: &TimestampStream, window_ps: f64, offset_ps: f64) -> Result<CoincidenceRecord> {
    let mut c = CoincidenceCounter::new(window_ps, offset_ps)?;
    for &e in stream.events() {
        c.push(e)?;
    }
    Ok(c.record())
}

/// Counts straight from text without holding the stream in memory.
pub fn count_coincidences_from_reader<R: BufRead>(
    reader: R,
    window_ps: f64,
    offset_ps: f64,
) -> Result<CoincidenceRecord> {
    let mut c = CoincidenceCounter::new(window_ps, offset_ps)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(e) = parse_event_line(&line, i + 1)? {
            c.push_at(e, i + 1)?;
        }
    }
    Ok(c.record())
}

/// Rates and efficiencies for a simulated two-detector run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamParams {
    pub pair_rate_hz: f64,
    /// Probability that the idler of a pair clicks channel I.
    pub idler_detection: f64,
    /// Probability that the signal of a pair clicks channel II.
    pub signal_detection: f64,
    pub dark_rate_hz: f64,
    pub duration_s: f64,
}

impl StreamParams {
    fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.pair_rate_hz >= 0.0 && self.pair_rate_hz.is_finite()) {
            return Err(domain("pair rate must be finite and >= 0"));
        }
        if !prob(self.idler_detection) || !prob(self.signal_detection) {
            return Err(domain("detection probabilities must lie in [0, 1]"));
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return Err(domain("dark rate must be finite and >= 0"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(domain("duration must be positive"));
        }
        Ok(())
    }
}

/// Arrival times of a Poisson process on `[0, duration_ps)`.
fn poisson_times<R: Rng + ?Sized>(rate_per_ps: f64, duration_ps: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if rate_per_ps <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate_per_ps).expect("positive rate");
    let mut t = exp.sample(rng);
    while t < duration_ps {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

fn merge_sorted(a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Event-by-event simulation: pairs arrive as a Poisson process, each
/// photon clicks its detector independently, and each detector adds its
/// own Poisson dark counts. The result is globally time ordered.
pub fn simulate_stream<R: Rng + ?Sized>(params: &StreamParams, rng: &mut R) -> Result<TimestampStream> {
    params.validate()?;
    let duration_ps = params.duration_s * 1e12;
    let pairs = poisson_times(params.pair_rate_hz * 1e-12, duration_ps, rng);
    let mut idler = Vec::with_capacity(pairs.len());
    let mut signal = Vec::with_capacity(pairs.len());
    for &t in &pairs {
        let ts = t as u64;
        if rng.random::<f64>() < params.idler_detection {
            idler.push(ts);
        }
        if rng.random::<f64>() < params.signal_detection {
            signal.push(ts);
        }
    }
    let dark = |rng: &mut R| -> Vec<u64> {
        poisson_times(params.dark_rate_hz * 1e-12, duration_ps, rng)
            .into_iter()
            .map(|t| t as u64)
            .collect()
    };
    let ch_i = merge_sorted(idler, dark(rng));
    let ch_ii = merge_sorted(signal, dark(rng));

    let mut events = Vec::with_capacity(ch_i.len() + ch_ii.len());
    let (mut i, mut j) = (0, 0);
    while i < ch_i.len() || j < ch_ii.len() {
        let take_i = j >= ch_ii.len() || (i < ch_i.len() && ch_i[i] <= ch_ii[j]);
        if take_i {
            events.push(Event {
                channel: Channel::I,
                time_ps: ch_i[i],
            });
            i += 1;
        } else {
            events.push(Event {
                channel: Channel::II,
                time_ps: ch_ii[j],
            });
            j += 1;
        }
    }
    Ok(TimestampStream { events })
}
