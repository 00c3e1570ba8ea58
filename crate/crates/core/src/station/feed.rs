use std::io::{ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;

use crate::tracking::TrackPoint;

const POLL: Duration = Duration::from_millis(20);

#[derive(Serialize)]
struct FeedLine<'a> {
    ts_us: u64,
    camera_id: &'a str,
    person_tag: u16,
    x_m: f64,
    y_m: f64,
}

/// Line-delimited JSON stream of new track points for local consumers.
/// Subscribers that stop reading are dropped.
pub struct SnapshotFeed {
    addr: SocketAddr,
    clients: Arc<Mutex<Vec<TcpStream>>>,
    stop: Arc<AtomicBool>,
    acceptor: Mutex<Option<JoinHandle<()>>>,
}

impl SnapshotFeed {
    pub fn bind(addr: &str) -> std::io::Result<Arc<Self>> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let clients: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let (clients, stop) = (clients.clone(), stop.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((s, peer)) => {
                            log::info!("snapshot subscriber {peer}");
                            if s.set_nonblocking(false).is_ok() && s.set_write_timeout(Some(POLL)).is_ok() {
                                clients.lock().unwrap().push(s);
                            }
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                        Err(e) => log::warn!("snapshot accept: {e}"),
                    }
                }
            })
        };
        Ok(Arc::new(SnapshotFeed {
            addr,
            clients,
            stop,
            acceptor: Mutex::new(Some(acceptor)),
        }))
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn subscribers(&self) -> usize {
        self.clients.lock().unwrap().len()
    }

    pub fn publish(&self, p: &TrackPoint) {
        let line = serde_json::to_string(&FeedLine {
            ts_us: p.ts_us,
            camera_id: &p.camera_id,
            person_tag: p.person_tag,
            x_m: p.pos.x,
            y_m: p.pos.y,
        })
        .expect("feed line serializes")
            + "\n";
        self.clients
            .lock()
            .unwrap()
            .retain_mut(|s| s.write_all(line.as_bytes()).is_ok());
    }

    pub fn close(&self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.lock().unwrap().take() {
            let _ = h.join();
        }
        self.clients.lock().unwrap().clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::tracking::AnchorSource;
    use std::io::{BufRead, BufReader};
    use std::time::Instant;

    #[test]
    fn subscribers_receive_json_lines() {
        let feed = SnapshotFeed::bind("127.0.0.1:0").unwrap();
        let sub = TcpStream::connect(feed.local_addr()).unwrap();
        let t = Instant::now();
        while feed.subscribers() == 0 {
            assert!(t.elapsed() < Duration::from_secs(5));
            std::thread::sleep(Duration::from_millis(5));
        }
        feed.publish(&TrackPoint {
            ts_us: 7,
            pos: Point2::new(1.5, 2.0),
            camera_id: "cam0".into(),
            person_tag: 3,
            source: AnchorSource::Pose,
        });
        let mut line = String::new();
        BufReader::new(sub).read_line(&mut line).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["person_tag"], 3);
        assert_eq!(v["x_m"], 1.5);
        feed.close();
    }
}
