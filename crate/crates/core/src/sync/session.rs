use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{read_message, write_message, Message, Role, SyncError};
use crate::coincidence::{argmax_toward, check_peak};
use crate::link::TimeTag;

/// Largest histogram a peer will agree to send.
const MAX_BINS: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncParams {
    /// ps per time unit on this station's tag files
    pub resolution: u32,
    /// ps
    pub bin_width: u64,
    /// Histogram length; times are folded modulo `bin_width · bin_count`.
    pub bin_count: u32,
    /// Offsets searched are within `±search_range` ps.
    pub search_range: i64,
    pub origin: i64,
    pub timeout: Duration,
}

impl Default for SyncParams {
    fn default() -> Self {
        SyncParams {
            resolution: 1,
            bin_width: 100,
            bin_count: 1 << 20,
            search_range: 50_000_000,
            origin: 0,
            timeout: Duration::from_secs(10),
        }
    }
}

impl SyncParams {
    fn validate(&self) -> Result<(), SyncError> {
        if self.resolution == 0 || self.bin_width == 0 || self.bin_count == 0 || self.bin_count > MAX_BINS {
            return Err(SyncError::InvalidParams(format!("{self:?}")));
        }
        let span = self.bin_width as i128 * self.bin_count as i128;
        if 2 * self.search_range.max(0) as i128 >= span {
            return Err(SyncError::InvalidParams(format!(
                "search range {} ps needs a fold period above {} ps",
                self.search_range,
                2 * self.search_range
            )));
        }
        Ok(())
    }
}

/// Counts of tags per bin, with time folded modulo the histogram span.
/// Tags before `origin` are ignored.
pub fn fold_histogram(tags: &[TimeTag], origin: i64, bin_width: u64, bin_count: u32) -> Vec<u32> {
    let mut counts = vec![0u32; bin_count as usize];
    for tag in tags {
        let since = tag.time as i128 - origin as i128;
        if since < 0 {
            continue;
        }
        let bin = (since / bin_width as i128) as u128 % bin_count as u128;
        let slot = &mut counts[bin as usize];
        *slot = slot.saturating_add(1);
    }
    counts
}

/// Circular cross-correlation `Σ_k own[k]·peer[k+s]` for `|s| ≤ max_shift`;
/// returns the best shift in bins.
fn best_shift(own: &[u32], peer: &[u32], max_shift: usize) -> Result<i64, SyncError> {
    let n = own.len();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let spectrum = |h: &[u32]| {
        let mut x: Vec<Complex64> = h.iter().map(|&c| Complex64::new(c as f64, 0.0)).collect();
        forward.process(&mut x);
        x
    };
    let mut corr: Vec<Complex64> = spectrum(own).iter().zip(spectrum(peer)).map(|(a, b)| a.conj() * b).collect();
    inverse.process(&mut corr);
    // Products of integer counts: rounding recovers the exact sums.
    let scores: Vec<u64> =
        (0..=2 * max_shift).map(|i| (corr[(i + n - max_shift) % n].re / n as f64).round().max(0.0) as u64).collect();
    let best = argmax_toward(&scores, max_shift);
    check_peak(&scores, best).map_err(|_| SyncError::NoPeak)?;
    Ok(best as i64 - max_shift as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Start,
    AwaitHello,
    AwaitHistogram,
    AwaitOffsetEcho,
    AwaitRequest,
    AwaitOffset,
    AwaitBye,
    Done,
}

/// Protocol state of one endpoint. Alice initiates: she requests Bob's
/// histogram, announces the offset, waits for Bob's echo and closes.
#[derive(Debug)]
pub struct Session<'a> {
    role: Role,
    params: SyncParams,
    tags: &'a [TimeTag],
    state: State,
    offset: Option<i64>,
}

impl<'a> Session<'a> {
    pub fn new(role: Role, params: SyncParams, tags: &'a [TimeTag]) -> Self {
        let state = match role {
            Role::Alice => State::Start,
            Role::Bob => State::AwaitHello,
        };
        Session { role, params, tags, state, offset: None }
    }

    /// Frames to send before anything has been received.
    pub fn start(&mut self) -> Result<Vec<Message>, SyncError> {
        self.params.validate()?;
        if self.state != State::Start {
            return Ok(Vec::new());
        }
        self.state = State::AwaitHello;
        Ok(vec![Message::Hello { role: self.role, resolution: self.params.resolution }])
    }

    pub fn is_done(&self) -> bool {
        self.state == State::Done
    }

    /// Agreed offset `t_B − t_A` in ps, once known.
    pub fn offset(&self) -> Option<i64> {
        self.offset
    }

    fn violation(&self, msg: &Message) -> SyncError {
        SyncError::ProtocolViolation(format!("{} received by {:?} in state {:?}", msg.name(), self.role, self.state))
    }

    /// Consumes one incoming frame and returns the replies.
    pub fn handle(&mut self, msg: Message) -> Result<Vec<Message>, SyncError> {
        let p = self.params;
        match (self.role, self.state, &msg) {
            (_, State::AwaitHello, Message::Hello { role, resolution }) if *role == self.role.peer() => {
                if *resolution != p.resolution {
                    return Err(SyncError::VersionMismatch { ours: p.resolution, theirs: *resolution });
                }
                match self.role {
                    Role::Alice => {
                        self.state = State::AwaitHistogram;
                        Ok(vec![Message::HistReq { origin: p.origin, bin_width: p.bin_width, bin_count: p.bin_count }])
                    }
                    Role::Bob => {
                        self.state = State::AwaitRequest;
                        Ok(vec![Message::Hello { role: Role::Bob, resolution: p.resolution }])
                    }
                }
            }
            (Role::Alice, State::AwaitHistogram, Message::HistResp { counts }) => {
                if counts.len() != p.bin_count as usize {
                    return Err(SyncError::ProtocolViolation(format!(
                        "histogram has {} bins, requested {}",
                        counts.len(),
                        p.bin_count
                    )));
                }
                let own = fold_histogram(self.tags, p.origin, p.bin_width, p.bin_count);
                let max_shift = (p.search_range.max(0) as u64).div_ceil(p.bin_width) as usize;
                let offset = best_shift(&own, counts, max_shift)? * p.bin_width as i64;
                self.offset = Some(offset);
                self.state = State::AwaitOffsetEcho;
                Ok(vec![Message::Offset(offset)])
            }
            (Role::Alice, State::AwaitOffsetEcho, Message::Offset(v)) => {
                if Some(*v) != self.offset {
                    return Err(SyncError::ProtocolViolation(format!(
                        "peer echoed offset {v}, announced {:?}",
                        self.offset
                    )));
                }
                self.state = State::Done;
                Ok(vec![Message::Bye])
            }
            (Role::Bob, State::AwaitRequest, Message::HistReq { origin, bin_width, bin_count }) => {
                if *bin_width == 0 || *bin_count == 0 || *bin_count > MAX_BINS {
                    return Err(SyncError::ProtocolViolation(format!(
                        "unacceptable histogram request: width {bin_width}, {bin_count} bins"
                    )));
                }
                self.state = State::AwaitOffset;
                Ok(vec![Message::HistResp { counts: fold_histogram(self.tags, *origin, *bin_width, *bin_count) }])
            }
            (Role::Bob, State::AwaitOffset, Message::Offset(v)) => {
                self.offset = Some(*v);
                self.state = State::AwaitBye;
                Ok(vec![Message::Offset(*v)])
            }
            (Role::Bob, State::AwaitBye, Message::Bye) => {
                self.state = State::Done;
                Ok(Vec::new())
            }
            _ => Err(self.violation(&msg)),
        }
    }
}

/// Runs one endpoint to completion over a byte stream and returns the
/// agreed offset.
pub fn run_sync<S: Read + Write>(
    role: Role,
    tags: &[TimeTag],
    stream: &mut S,
    params: SyncParams,
) -> Result<i64, SyncError> {
    let mut session = Session::new(role, params, tags);
    for msg in session.start()? {
        write_message(stream, &msg)?;
    }
    while !session.is_done() {
        let incoming = read_message(stream)?;
        for msg in session.handle(incoming)? {
            write_message(stream, &msg)?;
        }
    }
    session.offset().ok_or_else(|| SyncError::ProtocolViolation("session closed without an offset".into()))
}

/// Accepts `sessions` TCP connections and runs each on its own thread.
pub fn serve_sessions(
    listener: &TcpListener,
    role: Role,
    tags: &[TimeTag],
    params: SyncParams,
    sessions: usize,
) -> Vec<Result<i64, SyncError>> {
    thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..sessions {
            match listener.accept() {
                Ok((mut stream, _)) => handles.push(scope.spawn(move || {
                    stream.set_read_timeout(Some(params.timeout))?;
                    run_sync(role, tags, &mut stream, params)
                })),
                Err(e) => handles.push(scope.spawn(move || Err(e.into()))),
            }
        }
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SyncError::ProtocolViolation("session thread panicked".into()))))
            .collect()
    })
}
