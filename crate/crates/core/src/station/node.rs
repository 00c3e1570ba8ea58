use std::net::{Shutdown, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::transport::{
    FrameMessage, LatestSlot, PubSender, ReqSender, TransportError, TransportMode, DEFAULT_REPLY_TIMEOUT,
};

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    /// `host:port` of the ground station.
    pub connect: String,
    pub camera_id: String,
    pub mode: TransportMode,
    pub reply_timeout: Duration,
    /// Consecutive failed connection attempts tolerated before giving up.
    pub max_reconnects: u32,
}

impl NodeConfig {
    pub fn new(connect: impl Into<String>, camera_id: impl Into<String>) -> Self {
        NodeConfig {
            connect: connect.into(),
            camera_id: camera_id.into(),
            mode: TransportMode::ReqRep,
            reply_timeout: DEFAULT_REPLY_TIMEOUT,
            max_reconnects: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NodeStats {
    pub captured: u64,
    /// Frames written to the wire.
    pub sent: u64,
    /// Frames the station replied to.
    pub acked: u64,
    /// Frames replaced by a newer capture before they could be sent.
    pub skipped: u64,
    /// Frames abandoned after a timeout or a broken connection.
    pub lost: u64,
    pub reconnects: u64,
}

enum Link {
    Req(ReqSender<TcpStream>),
    Pub(PubSender<TcpStream>),
}

/// Client end of a camera session. A frame that times out or hits a broken
/// connection is abandoned rather than retried; the node reconnects and
/// continues with the next frame, keeping its sequence numbers increasing.
pub struct CameraNode {
    cfg: NodeConfig,
    link: Option<Link>,
    stream: Option<TcpStream>,
    last_seq: Option<u64>,
    stats: NodeStats,
}

impl CameraNode {
    pub fn connect(cfg: NodeConfig) -> Result<Self, TransportError> {
        let mut node = CameraNode {
            cfg,
            link: None,
            stream: None,
            last_seq: None,
            stats: NodeStats::default(),
        };
        node.open()?;
        Ok(node)
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    fn open(&mut self) -> Result<(), TransportError> {
        let stream = TcpStream::connect(&self.cfg.connect)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(self.cfg.reply_timeout))?;
        self.stream = Some(stream.try_clone()?);
        self.link = Some(match self.cfg.mode {
            TransportMode::ReqRep => Link::Req(ReqSender::resume(stream, self.last_seq)),
            TransportMode::PubSub => Link::Pub(PubSender::new(stream)),
        });
        Ok(())
    }

    fn reconnect(&mut self) -> Result<(), TransportError> {
        self.close_link();
        let mut attempt = 0;
        loop {
            match self.open() {
                Ok(()) => {
                    self.stats.reconnects += 1;
                    log::info!("{} reconnected after seq {:?}", self.cfg.camera_id, self.last_seq);
                    return Ok(());
                }
                Err(e) if attempt < self.cfg.max_reconnects => {
                    attempt += 1;
                    log::warn!("{} reconnect attempt {attempt}: {e}", self.cfg.camera_id);
                    std::thread::sleep(Duration::from_millis(100 * attempt.min(10) as u64));
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Sends one frame and, under request/reply, waits for its reply.
    /// Returns whether the frame was acknowledged (always true for pub/sub
    /// once written).
    pub fn send(&mut self, m: &FrameMessage) -> Result<bool, TransportError> {
        if self.last_seq.is_some_and(|last| m.header.seq <= last) {
            return Err(TransportError::ProtocolViolation(format!(
                "seq {} does not follow {:?}",
                m.header.seq, self.last_seq
            )));
        }
        if self.link.is_none() {
            self.reconnect()?;
        }
        let result = match self.link.as_mut().expect("connected") {
            Link::Req(tx) => tx.send(m).and_then(|_| {
                self.stats.sent += 1;
                tx.await_reply()
            }),
            Link::Pub(tx) => tx.publish(m).map(|_| self.stats.sent += 1),
        };
        self.last_seq = Some(m.header.seq);
        match result {
            Ok(()) => {
                self.stats.acked += 1;
                Ok(true)
            }
            Err(e @ (TransportError::Timeout | TransportError::Closed | TransportError::Io(_))) => {
                log::warn!("{} frame {} lost: {e}", self.cfg.camera_id, m.header.seq);
                self.stats.lost += 1;
                self.reconnect()?;
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }

    /// Sends every frame in order, each as soon as the previous one is done.
    pub fn run_sequential(
        mut self,
        frames: impl IntoIterator<Item = FrameMessage>,
    ) -> Result<NodeStats, TransportError> {
        for m in frames {
            self.stats.captured += 1;
            self.send(&m)?;
        }
        Ok(self.finish())
    }

    /// Replays frames on the wall clock at their capture timestamps through a
    /// one-slot mailbox: while a send is blocked, newer captures overwrite
    /// older unsent ones.
    pub fn run_realtime(mut self, frames: Vec<FrameMessage>) -> Result<NodeStats, TransportError> {
        let slot = Arc::new(LatestSlot::new());
        let capture = {
            let slot = slot.clone();
            std::thread::spawn(move || {
                let mut skipped = 0u64;
                let n = frames.len() as u64;
                let Some(t0) = frames.first().map(|m| m.header.ts_us) else {
                    slot.close();
                    return (0, 0);
                };
                let start = Instant::now();
                for m in frames {
                    let due = start + Duration::from_micros(m.header.ts_us.saturating_sub(t0));
                    let now = Instant::now();
                    if due > now {
                        std::thread::sleep(due - now);
                    }
                    if slot.put(m).is_some() {
                        skipped += 1;
                    }
                }
                slot.close();
                (n, skipped)
            })
        };
        let mut failure = None;
        while let Some(m) = slot.take() {
            if let Err(e) = self.send(&m) {
                failure = Some(e);
                slot.close();
                break;
            }
        }
        // drain so the capture thread never blocks
        while slot.try_take().is_some() {}
        let (captured, skipped) = capture.join().expect("capture thread");
        self.stats.captured += captured;
        self.stats.skipped += skipped;
        match failure {
            Some(e) => Err(e),
            None => Ok(self.finish()),
        }
    }

    fn close_link(&mut self) {
        self.link = None;
        if let Some(s) = self.stream.take() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }

    /// Closes the session and returns the counters.
    pub fn finish(mut self) -> NodeStats {
        self.close_link();
        self.stats
    }
}
