//! Non-blocking publish/subscribe with receiver-side conflation: only the
//! newest frame per camera is kept.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::codec::{write_frame, FrameMessage};
use super::TransportError;

/// Stores `m` if it is newer than what `latest` holds for its camera.
/// Returns whether the message was kept.
pub fn conflate(latest: &mut HashMap<String, FrameMessage>, m: FrameMessage) -> bool {
    match latest.get(&m.header.camera_id) {
        Some(cur) if cur.header.seq >= m.header.seq => false,
        _ => {
            latest.insert(m.header.camera_id.clone(), m);
            true
        }
    }
}

/// Publishing half: frames are written without waiting for any acknowledgement.
pub struct PubSender<W> {
    sink: W,
    last_seq: Option<u64>,
}

impl<W: Write> PubSender<W> {
    pub fn new(sink: W) -> Self {
        PubSender { sink, last_seq: None }
    }

    pub fn publish(&mut self, m: &FrameMessage) -> Result<(), TransportError> {
        if let Some(last) = self.last_seq {
            if m.header.seq <= last {
                return Err(TransportError::ProtocolViolation(format!(
                    "seq {} does not follow {last}",
                    m.header.seq
                )));
            }
        }
        write_frame(&mut self.sink, m)?;
        self.last_seq = Some(m.header.seq);
        Ok(())
    }
}

#[derive(Default)]
struct ConflatorState {
    latest: HashMap<String, FrameMessage>,
    consumed: HashMap<String, u64>,
    closed: bool,
}

/// Shared latest-per-camera store fed by subscriber sessions and drained by a
/// processing loop.
#[derive(Default)]
pub struct Conflator {
    state: Mutex<ConflatorState>,
    fresh: Condvar,
}

impl Conflator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offer(&self, m: FrameMessage) -> bool {
        let mut st = self.state.lock().unwrap();
        let kept = conflate(&mut st.latest, m);
        if kept {
            self.fresh.notify_all();
        }
        kept
    }

    pub fn latest(&self, camera_id: &str) -> Option<FrameMessage> {
        self.state.lock().unwrap().latest.get(camera_id).cloned()
    }

    /// `(camera_id, seq)` of every held message.
    pub fn seqs(&self) -> HashMap<String, u64> {
        let st = self.state.lock().unwrap();
        st.latest.iter().map(|(k, v)| (k.clone(), v.header.seq)).collect()
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Messages newer than the last ones taken, one per camera, ordered by camera id.
    pub fn take_fresh(&self) -> Vec<FrameMessage> {
        let mut st = self.state.lock().unwrap();
        Self::drain(&mut st)
    }

    /// Like [`take_fresh`](Self::take_fresh) but waits up to `timeout` for
    /// something new. Returns an empty vector on timeout or after [`close`](Self::close).
    pub fn wait_fresh(&self, timeout: Duration) -> Vec<FrameMessage> {
        let mut st = self.state.lock().unwrap();
        loop {
            let out = Self::drain(&mut st);
            if !out.is_empty() || st.closed {
                return out;
            }
            let (guard, res) = self.fresh.wait_timeout(st, timeout).unwrap();
            st = guard;
            if res.timed_out() {
                return Self::drain(&mut st);
            }
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.fresh.notify_all();
    }

    fn drain(st: &mut ConflatorState) -> Vec<FrameMessage> {
        let mut out: Vec<FrameMessage> = st
            .latest
            .values()
            .filter(|m| st.consumed.get(&m.header.camera_id).is_none_or(|&s| m.header.seq > s))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.header.camera_id.cmp(&b.header.camera_id));
        for m in &out {
            st.consumed.insert(m.header.camera_id.clone(), m.header.seq);
        }
        out
    }
}
