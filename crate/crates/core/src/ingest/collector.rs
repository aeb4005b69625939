//! TCP collector in front of the queue.
//!
//! Sensors write one envelope per line. Each line is answered with
//! `ok <partition> <offset>` after the append is durable, or
//! `err <message>` if it was rejected. Producers that time out resend, so
//! the queue may hold duplicates.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::queue::Queue;
use crate::envelope::{Envelope, MAX_LINE_BYTES};
use crate::{Error, Result};

/// Where a sensor's envelopes go.
pub trait EnvelopeSink: Send + Sync {
    fn submit(&self, env: &Envelope) -> Result<()>;
}

impl EnvelopeSink for Queue {
    fn submit(&self, env: &Envelope) -> Result<()> {
        self.enqueue(env).map(|_| ())
    }
}

pub fn serve_collector(queue: Arc<Queue>, listener: TcpListener) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let queue = queue.clone();
            thread::spawn(move || {
                if let Err(e) = serve_conn(&queue, stream) {
                    log::debug!("collector connection ended: {e}");
                }
            });
        }
    })
}

/// Writes a whole reply line with one syscall; split writes stall on Nagle.
fn reply(out: &mut TcpStream, text: &str) -> Result<()> {
    let mut buf = String::with_capacity(text.len() + 1);
    buf.push_str(text);
    buf.push('\n');
    out.write_all(buf.as_bytes())?;
    Ok(())
}

fn serve_conn(queue: &Queue, stream: TcpStream) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut out = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = (&mut reader)
            .take(MAX_LINE_BYTES as u64 + 1)
            .read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(());
        }
        if line.last() != Some(&b'\n') {
            if n > MAX_LINE_BYTES {
                reply(&mut out, "err line too long")?;
            }
            return Ok(());
        }
        let body = line.trim_ascii();
        if body.is_empty() {
            continue;
        }
        match queue.enqueue_line(body) {
            Ok((p, o)) => reply(&mut out, &format!("ok {p} {o}"))?,
            Err(e) => reply(
                &mut out,
                &format!("err {}", e.to_string().replace('\n', " ")),
            )?,
        }
    }
}

struct Conn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// Producer side of the collector protocol with resend on timeout.
pub struct CollectorClient {
    addr: String,
    timeout: Duration,
    attempts: u32,
    conn: Mutex<Option<Conn>>,
}

impl CollectorClient {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout: Duration::from_secs(5),
            attempts: 3,
            conn: Mutex::new(None),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration, attempts: u32) -> Self {
        self.timeout = timeout;
        self.attempts = attempts.max(1);
        self
    }

    fn connect(&self) -> Result<Conn> {
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::invalid(format!("cannot resolve {}", self.addr)))?;
        let writer = TcpStream::connect_timeout(&addr, self.timeout)?;
        writer.set_read_timeout(Some(self.timeout))?;
        writer.set_nodelay(true)?;
        Ok(Conn {
            reader: BufReader::new(writer.try_clone()?),
            writer,
        })
    }

    fn attempt(&self, slot: &mut Option<Conn>, line: &[u8]) -> Result<String> {
        if slot.is_none() {
            *slot = Some(self.connect()?);
        }
        let c = slot.as_mut().expect("connected");
        c.writer.write_all(line)?;
        let mut reply = String::new();
        if c.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Unavailable("collector closed the connection".into()));
        }
        Ok(reply)
    }

    /// Sends one envelope and returns its `(partition, offset)`.
    pub fn send(&self, env: &Envelope) -> Result<(u32, u64)> {
        let mut line = env.to_line().into_bytes();
        line.push(b'\n');
        let mut slot = self.conn.lock().expect("collector conn");
        let mut last = None;
        for _ in 0..self.attempts {
            match self.attempt(&mut slot, &line) {
                Ok(reply) => return parse_reply(&reply),
                Err(e) => {
                    *slot = None;
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| Error::Unavailable("collector".into())))
    }
}

impl EnvelopeSink for CollectorClient {
    fn submit(&self, env: &Envelope) -> Result<()> {
        self.send(env).map(|_| ())
    }
}

fn parse_reply(reply: &str) -> Result<(u32, u64)> {
    let mut it = reply.split_whitespace();
    match it.next() {
        Some("ok") => {
            let p = it.next().and_then(|s| s.parse().ok());
            let o = it.next().and_then(|s| s.parse().ok());
            p.zip(o)
                .ok_or_else(|| Error::parse(format!("bad collector reply {reply:?}")))
        }
        Some("err") => Err(Error::InvalidArgument(
            reply.trim_end()[3..].trim().to_owned(),
        )),
        _ => Err(Error::parse(format!("bad collector reply {reply:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::ingest::QueueConfig;
    use crate::sensor::{GainMeta, PsdSegment};
    use crate::{CampaignId, SensorId};

    fn env(seq: u64) -> Envelope {
        Envelope::from_segment(
            seq,
            &PsdSegment {
                sensor_id: SensorId::new("s-7"),
                campaign_id: CampaignId::default_campaign(),
                center_freq: 401.2e6,
                bin_width: 2.4e6 / 8.0,
                t0: 5_000,
                dwell_ms: 125,
                bins: vec![2e-9; 8],
                n_avg: 1,
                gain_meta: GainMeta::default(),
            },
        )
    }

    #[test]
    fn send_over_tcp() {
        let dir = tempfile::tempdir().unwrap();
        let q = Arc::new(
            Queue::open(
                dir.path(),
                QueueConfig::default(),
                Arc::new(ManualClock::new(0)),
            )
            .unwrap(),
        );
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        serve_collector(q.clone(), listener);
        let client = CollectorClient::new(addr.clone());
        let (p, o0) = client.send(&env(0)).unwrap();
        let (_, o1) = client.send(&env(1)).unwrap();
        assert_eq!((o0, o1), (0, 1));
        let (got, _) = q.consume(p, 0, 10).unwrap();
        assert_eq!(got[1].envelope, env(1));

        let mut raw = TcpStream::connect(addr).unwrap();
        raw.write_all(b"{\"v\":1}\n").unwrap();
        let mut reply = String::new();
        BufReader::new(raw).read_line(&mut reply).unwrap();
        assert!(reply.starts_with("err "), "{reply}");
    }

    #[test]
    fn replies() {
        assert_eq!(parse_reply("ok 3 17\n").unwrap(), (3, 17));
        assert!(matches!(parse_reply("err bad\n"), Err(Error::InvalidArgument(m)) if m == "bad"));
        assert!(parse_reply("ok x\n").is_err());
        assert!(parse_reply("").is_err());
    }
}
