use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{GroundStation, StationError};
use crate::transport::{read_raw_frame, Conflator, RepReceiver, TransportError, TransportMode};

const POLL: Duration = Duration::from_millis(10);

struct Shared {
    station: Arc<GroundStation>,
    stop: AtomicBool,
    active: AtomicUsize,
    streams: Mutex<HashMap<u64, TcpStream>>,
    sessions: Mutex<Vec<JoinHandle<()>>>,
    conflator: Conflator,
}

/// TCP front end of a [`GroundStation`]. Each connection is one camera
/// session served by its own thread; frames within a session are handled in
/// order, sessions run concurrently.
pub struct StationServer {
    addr: SocketAddr,
    mode: TransportMode,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    worker: Option<JoinHandle<()>>,
}

impl StationServer {
    pub fn start(station: Arc<GroundStation>, listen: &str, mode: TransportMode) -> Result<Self, StationError> {
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        log::info!("ground station listening on {addr} ({mode:?})");
        let shared = Arc::new(Shared {
            station,
            stop: AtomicBool::new(false),
            active: AtomicUsize::new(0),
            streams: Mutex::default(),
            sessions: Mutex::default(),
            conflator: Conflator::new(),
        });
        let acceptor = {
            let shared = shared.clone();
            std::thread::spawn(move || accept_loop(listener, shared, mode))
        };
        let worker = (mode == TransportMode::PubSub).then(|| {
            let shared = shared.clone();
            std::thread::spawn(move || conflated_worker(shared))
        });
        Ok(StationServer {
            addr,
            mode,
            shared,
            acceptor: Some(acceptor),
            worker,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn mode(&self) -> TransportMode {
        self.mode
    }

    pub fn station(&self) -> &Arc<GroundStation> {
        &self.shared.station
    }

    pub fn active_sessions(&self) -> usize {
        self.shared.active.load(Ordering::SeqCst)
    }

    /// Serves until the process exits.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        self.shutdown(Duration::ZERO);
    }

    /// Stops accepting, gives open sessions up to `grace` to end on their own,
    /// then closes the rest and waits for all processing to finish.
    pub fn shutdown(mut self, grace: Duration) {
        self.stop_and_join(grace);
    }

    fn stop_and_join(&mut self, grace: Duration) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let deadline = Instant::now() + grace;
        while self.shared.active.load(Ordering::SeqCst) > 0 && Instant::now() < deadline {
            std::thread::sleep(POLL);
        }
        for (_, s) in self.shared.streams.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
        let sessions: Vec<_> = self.shared.sessions.lock().unwrap().drain(..).collect();
        for h in sessions {
            let _ = h.join();
        }
        self.shared.conflator.close();
        if let Some(h) = self.worker.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StationServer {
    fn drop(&mut self) {
        if self.acceptor.is_some() || self.worker.is_some() {
            self.stop_and_join(Duration::ZERO);
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, mode: TransportMode) {
    let mut next_id = 0u64;
    while !shared.stop.load(Ordering::SeqCst) {
        let (stream, peer) = match listener.accept() {
            Ok(c) => c,
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(POLL);
                continue;
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(POLL);
                continue;
            }
        };
        log::info!("session from {peer}");
        let setup = stream
            .set_nonblocking(false)
            .and_then(|_| stream.set_nodelay(true))
            .and_then(|_| stream.try_clone());
        let handle = match setup {
            Ok(h) => h,
            Err(e) => {
                log::warn!("session setup for {peer}: {e}");
                continue;
            }
        };
        let id = next_id;
        next_id += 1;
        shared.streams.lock().unwrap().insert(id, handle);
        shared.active.fetch_add(1, Ordering::SeqCst);
        let s2 = shared.clone();
        let join = std::thread::spawn(move || {
            let result = match mode {
                TransportMode::ReqRep => reqrep_session(stream, &s2),
                TransportMode::PubSub => pubsub_session(stream, &s2),
            };
            match result {
                Ok(()) => log::info!("session {peer} closed"),
                Err(e) => log::warn!("session {peer} ended: {e}"),
            }
            s2.streams.lock().unwrap().remove(&id);
            s2.active.fetch_sub(1, Ordering::SeqCst);
        });
        let mut sessions = shared.sessions.lock().unwrap();
        sessions.retain(|h| !h.is_finished());
        sessions.push(join);
    }
}

fn reqrep_session(stream: TcpStream, shared: &Shared) -> Result<(), TransportError> {
    let st = &shared.station;
    let mut rx = RepReceiver::new(stream);
    loop {
        let raw = match rx.recv() {
            Ok(Some(raw)) => raw,
            Ok(None) => return Ok(()),
            Err(TransportError::Malformed(why)) => {
                // framing is lost, so the stream cannot be resynchronized
                st.note_received();
                st.note_unframed();
                return Err(TransportError::Malformed(why));
            }
            Err(e) => return Err(e),
        };
        st.note_received();
        st.process_raw(raw);
        rx.reply()?;
        st.note_reply();
    }
}

fn pubsub_session(mut stream: TcpStream, shared: &Shared) -> Result<(), TransportError> {
    let st = &shared.station;
    loop {
        let raw = match read_raw_frame(&mut stream) {
            Ok(Some(raw)) => raw,
            Ok(None) => return Ok(()),
            Err(TransportError::Malformed(why)) => {
                st.note_received();
                st.note_unframed();
                return Err(TransportError::Malformed(why));
            }
            Err(e) => return Err(e),
        };
        st.note_received();
        match raw.parse() {
            Ok(m) => {
                if !shared.conflator.offer(m) {
                    log::debug!("conflated away a stale frame");
                }
            }
            Err(e) => {
                st.note_unframed();
                log::warn!("malformed frame: {e}");
            }
        }
    }
}

fn conflated_worker(shared: Arc<Shared>) {
    loop {
        let batch = shared.conflator.wait_fresh(Duration::from_millis(50));
        let idle = batch.is_empty();
        for m in batch {
            shared.station.process_message(m);
        }
        if idle && shared.stop.load(Ordering::SeqCst) && shared.active.load(Ordering::SeqCst) == 0 {
            for m in shared.conflator.take_fresh() {
                shared.station.process_message(m);
            }
            return;
        }
    }
}
