//! Frame transport between camera nodes and the ground station.
//!
//! Wire format per message: `"GTK1"` | `u32` BE header length | UTF-8 JSON
//! header | `u32` BE payload length | payload. In request/reply mode the
//! receiver answers each message with the single byte `0x01`.

mod codec;
mod pubsub;
mod reqrep;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

pub use codec::{
    decode_frame, encode_frame, read_raw_frame, write_frame, Encoding, FrameHeader, FrameMessage, RawFrame,
    MAGIC, MAX_CAMERA_ID_BYTES, MAX_HEADER_BYTES, MAX_PAYLOAD_BYTES, WIRE_VERSION,
};
pub use pubsub::{conflate, Conflator, PubSender};
pub use reqrep::{RepReceiver, ReqSender, REP_BYTE};

pub const DEFAULT_PORT: u16 = 5555;
pub const DEFAULT_REPLY_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("timed out waiting for reply")]
    Timeout,
    #[error("connection closed by peer")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which messaging pattern a session uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    ReqRep,
    PubSub,
}

struct Slot<T> {
    value: Option<T>,
    closed: bool,
}

/// One-slot overwrite mailbox between a capture loop and a send loop: the
/// reader always gets the newest value and anything older is lost.
pub struct LatestSlot<T> {
    slot: Mutex<Slot<T>>,
    ready: Condvar,
}

impl<T> Default for LatestSlot<T> {
    fn default() -> Self {
        LatestSlot {
            slot: Mutex::new(Slot { value: None, closed: false }),
            ready: Condvar::new(),
        }
    }
}

impl<T> LatestSlot<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `v`, returning the unread value it replaced, if any.
    pub fn put(&self, v: T) -> Option<T> {
        let mut s = self.slot.lock().unwrap();
        let old = s.value.replace(v);
        self.ready.notify_one();
        old
    }

    pub fn try_take(&self) -> Option<T> {
        self.slot.lock().unwrap().value.take()
    }

    /// Blocks until a value is available; `None` once closed and drained.
    pub fn take(&self) -> Option<T> {
        let mut s = self.slot.lock().unwrap();
        loop {
            if let Some(v) = s.value.take() {
                return Some(v);
            }
            if s.closed {
                return None;
            }
            s = self.ready.wait(s).unwrap();
        }
    }

    pub fn take_timeout(&self, timeout: Duration) -> Option<T> {
        let mut s = self.slot.lock().unwrap();
        if s.value.is_none() && !s.closed {
            s = self.ready.wait_timeout(s, timeout).unwrap().0;
        }
        s.value.take()
    }

    pub fn close(&self) {
        self.slot.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.slot.lock().unwrap().closed
    }
}

/// One frame's trip through a request/reply session on a virtual clock.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    /// Index into the capture sequence.
    pub index: usize,
    pub sent_us: u64,
    pub received_us: u64,
    pub replied_us: u64,
}

/// Replays request/reply pacing on a virtual clock.
///
/// The sender transmits the newest frame captured so far, waits for the
/// reply (one-way `transit_us` each direction plus `processing_us` at the
/// receiver), then transmits whatever frame is newest at that moment. If no
/// frame newer than the last one sent exists yet, it waits for the next
/// capture. Frames captured while a reply is outstanding are never queued.
pub fn reqrep_schedule(capture_ts_us: &[u64], processing_us: u64, transit_us: u64) -> Vec<Delivery> {
    debug_assert!(capture_ts_us.windows(2).all(|w| w[0] <= w[1]));
    let mut out = Vec::new();
    let Some(&first) = capture_ts_us.first() else {
        return out;
    };
    let mut now = first;
    let mut next_unsent = 0usize;
    while next_unsent < capture_ts_us.len() {
        // newest frame captured at or before `now`
        let newest = capture_ts_us.partition_point(|&t| t <= now);
        let index = if newest > next_unsent {
            newest - 1
        } else {
            now = capture_ts_us[next_unsent];
            next_unsent
        };
        let received_us = now + transit_us;
        let done = received_us + processing_us;
        out.push(Delivery {
            index,
            sent_us: now,
            received_us,
            replied_us: done + transit_us,
        });
        next_unsent = index + 1;
        now = done + transit_us;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn camera_clock(fps: f64, seconds: f64) -> Vec<u64> {
        let n = (fps * seconds) as usize;
        (0..n).map(|i| (i as f64 * 1e6 / fps).round() as u64).collect()
    }

    #[test]
    fn backpressure_drops_intermediate_frames() {
        let caps = camera_clock(30.0, 60.0);
        let sched = reqrep_schedule(&caps, 300_000, 0);
        let span_s = (sched.last().unwrap().received_us - sched[0].received_us) as f64 / 1e6;
        let rate = (sched.len() - 1) as f64 / span_s;
        assert!((rate - 1.0 / 0.3).abs() < 0.1, "rate {rate}");
        for w in sched.windows(2) {
            assert!(w[1].index > w[0].index + 1, "expected gaps");
            assert!(w[1].sent_us >= w[0].replied_us, "more than one outstanding frame");
        }
        for d in &sched {
            // each transmitted frame is the newest available at send time
            let newest = caps.partition_point(|&t| t <= d.sent_us) - 1;
            assert_eq!(d.index, newest);
        }
    }

    #[test]
    fn no_backpressure_sends_every_frame() {
        let caps = camera_clock(30.0, 2.0);
        let sched = reqrep_schedule(&caps, 0, 0);
        let idx: Vec<usize> = sched.iter().map(|d| d.index).collect();
        assert_eq!(idx, (0..caps.len()).collect::<Vec<_>>());
    }

    #[test]
    fn paper_band_processing_times() {
        let caps = camera_clock(30.0, 120.0);
        for ms in [300u64, 325, 350] {
            let sched = reqrep_schedule(&caps, ms * 1000, 0);
            let span = (sched.last().unwrap().received_us - sched[0].received_us) as f64 / 1e6;
            let rate = (sched.len() - 1) as f64 / span;
            assert!((2.6..=3.45).contains(&rate), "{ms} ms -> {rate}");
        }
    }

    #[test]
    fn latest_slot_overwrites() {
        let slot = LatestSlot::new();
        assert_eq!(slot.put(1), None);
        assert_eq!(slot.put(2), Some(1));
        assert_eq!(slot.take(), Some(2));
        assert_eq!(slot.try_take(), None);
        assert_eq!(slot.take_timeout(Duration::from_millis(1)), None);

        let slot = Arc::new(LatestSlot::new());
        let s2 = slot.clone();
        let h = std::thread::spawn(move || s2.take());
        std::thread::sleep(Duration::from_millis(10));
        slot.put(7);
        assert_eq!(h.join().unwrap(), Some(7));
        slot.close();
        assert_eq!(slot.take(), None);
    }
}
