//! Topic-string publish-subscribe.
//!
//! [`Broker`] is the in-process broker: per-topic ordering, delivery to every
//! live subscriber whose pattern matches. Patterns use MQTT wildcards (`+`
//! one level, trailing `#` any number of levels), so topic names carry over
//! to an external broker unchanged. [`serve_broker_tcp`] and
//! [`RemoteBroker`] bridge it to out-of-process sensors with a line
//! protocol: `SUB <pattern>`, `PUB <topic> <payload>` and, from the server,
//! `MSG <topic> <payload>`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrokerMessage {
    pub topic: String,
    pub payload: String,
}

pub trait Transport: Send + Sync {
    fn publish(&self, topic: &str, payload: &str) -> Result<()>;
    fn subscribe(&self, pattern: &str) -> Result<Receiver<BrokerMessage>>;
}

pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    let mut p = pattern.split('/');
    let mut t = topic.split('/');
    loop {
        match (p.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

fn valid_topic(topic: &str) -> bool {
    !topic.is_empty() && !topic.contains(char::is_whitespace) && !topic.contains(['+', '#'])
}

#[derive(Default)]
pub struct Broker {
    subs: Mutex<Vec<(String, Sender<BrokerMessage>)>>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of live subscriptions.
    pub fn subscriber_count(&self) -> usize {
        self.subs.lock().expect("broker lock").len()
    }

    fn deliver(&self, topic: &str, payload: &str) -> usize {
        let mut subs = self.subs.lock().expect("broker lock");
        let mut delivered = 0;
        subs.retain(|(pattern, tx)| {
            if !topic_matches(pattern, topic) {
                return true;
            }
            let ok = tx
                .send(BrokerMessage {
                    topic: topic.to_owned(),
                    payload: payload.to_owned(),
                })
                .is_ok();
            delivered += ok as usize;
            ok
        });
        delivered
    }
}

impl Transport for Broker {
    fn publish(&self, topic: &str, payload: &str) -> Result<()> {
        if !valid_topic(topic) {
            return Err(Error::invalid(format!("bad topic {topic:?}")));
        }
        if payload.contains('\n') {
            return Err(Error::invalid("payload must be a single line"));
        }
        self.deliver(topic, payload);
        Ok(())
    }

    fn subscribe(&self, pattern: &str) -> Result<Receiver<BrokerMessage>> {
        if pattern.is_empty() || pattern.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("bad pattern {pattern:?}")));
        }
        let (tx, rx) = channel();
        self.subs
            .lock()
            .expect("broker lock")
            .push((pattern.to_owned(), tx));
        Ok(rx)
    }
}

/// Serves `broker` to remote clients; returns the accept-loop thread.
pub fn serve_broker_tcp(broker: Arc<Broker>, listener: TcpListener) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let broker = broker.clone();
            thread::spawn(move || {
                if let Err(e) = serve_conn(&broker, stream) {
                    log::debug!("broker connection closed: {e}");
                }
            });
        }
    })
}

/// One write per line, on a no-delay socket: split small writes stall on
/// Nagle's algorithm.
fn send_line(w: &mut TcpStream, line: String) -> std::io::Result<()> {
    let mut buf = line.into_bytes();
    buf.push(b'\n');
    w.write_all(&buf)
}

fn serve_conn(broker: &Broker, stream: TcpStream) -> Result<()> {
    stream.set_nodelay(true)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    for line in BufReader::new(stream).lines() {
        let line = line?;
        let (verb, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match verb {
            "SUB" => {
                let rx = broker.subscribe(rest.trim())?;
                let writer = writer.clone();
                thread::spawn(move || {
                    for m in rx {
                        let mut w = writer.lock().expect("writer lock");
                        if send_line(&mut w, format!("MSG {} {}", m.topic, m.payload)).is_err() {
                            break;
                        }
                    }
                });
            }
            "PUB" => {
                let (topic, payload) = rest.split_once(' ').unwrap_or((rest, ""));
                if let Err(e) = broker.publish(topic, payload) {
                    log::warn!("rejected remote publish: {e}");
                }
            }
            "" => {}
            other => log::warn!("unknown broker verb {other:?}"),
        }
    }
    Ok(())
}

/// Client side of the TCP bridge.
pub struct RemoteBroker {
    writer: Mutex<TcpStream>,
    local: Arc<Broker>,
}

impl RemoteBroker {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let local = Arc::new(Broker::new());
        let fanout = local.clone();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let Ok(line) = line else { break };
                if let Some(rest) = line.strip_prefix("MSG ") {
                    let (topic, payload) = rest.split_once(' ').unwrap_or((rest, ""));
                    fanout.deliver(topic, payload);
                }
            }
        });
        Ok(Self {
            writer: Mutex::new(stream),
            local,
        })
    }
}

impl Transport for RemoteBroker {
    fn publish(&self, topic: &str, payload: &str) -> Result<()> {
        if !valid_topic(topic) || payload.contains('\n') {
            return Err(Error::invalid("bad topic or multi-line payload"));
        }
        let mut w = self.writer.lock().expect("writer lock");
        send_line(&mut w, format!("PUB {topic} {payload}"))?;
        Ok(())
    }

    fn subscribe(&self, pattern: &str) -> Result<Receiver<BrokerMessage>> {
        let rx = self.local.subscribe(pattern)?;
        let mut w = self.writer.lock().expect("writer lock");
        send_line(&mut w, format!("SUB {pattern}"))?;
        Ok(rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn wildcard_matching() {
        assert!(topic_matches("control/+/ack", "control/s-1/ack"));
        assert!(!topic_matches("control/+/ack", "control/s-1/cmd"));
        assert!(topic_matches("control/#", "control/s-1/cmd"));
        assert!(topic_matches("control/s-1/cmd", "control/s-1/cmd"));
        assert!(!topic_matches("control/s-1", "control/s-1/cmd"));
        assert!(!topic_matches("control/+", "control/s-1/cmd"));
    }

    #[test]
    fn in_order_delivery_to_matching_subscribers() {
        let b = Broker::new();
        let all = b.subscribe("control/#").unwrap();
        let one = b.subscribe("control/s-2/cmd").unwrap();
        for i in 0..5 {
            b.publish("control/s-1/cmd", &format!("{i}")).unwrap();
        }
        b.publish("control/s-2/cmd", "x").unwrap();
        let got: Vec<String> = all.try_iter().map(|m| m.payload).collect();
        assert_eq!(got, ["0", "1", "2", "3", "4", "x"]);
        assert_eq!(one.try_iter().count(), 1);
    }

    #[test]
    fn dropped_subscribers_are_pruned() {
        let b = Broker::new();
        drop(b.subscribe("a/b").unwrap());
        b.publish("a/b", "1").unwrap();
        assert_eq!(b.subscriber_count(), 0);
        assert!(b.publish("a/+", "1").is_err());
        assert!(b.publish("a/b", "two\nlines").is_err());
    }

    #[test]
    fn tcp_bridge_roundtrip() {
        let broker = Arc::new(Broker::new());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        serve_broker_tcp(broker.clone(), listener);
        let remote = RemoteBroker::connect(addr).unwrap();
        let rx = remote.subscribe("control/s-9/cmd").unwrap();
        let server_side = broker.subscribe("control/+/ack").unwrap();
        // Wait for the SUB to land before publishing.
        for _ in 0..100 {
            if broker.subscriber_count() >= 2 {
                break;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        broker
            .publish("control/s-9/cmd", "{\"verb\":\"stop\"}")
            .unwrap();
        let m = rx.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(m.payload, "{\"verb\":\"stop\"}");
        remote.publish("control/s-9/ack", "ok").unwrap();
        let a = server_side.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(a.topic, "control/s-9/ack");
    }
}
