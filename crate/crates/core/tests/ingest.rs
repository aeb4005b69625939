mod common;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{env, manual, random_segment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specmon_core::envelope::Envelope;
use specmon_core::ingest::{serve_collector, CollectorClient, OffsetStore, Queue, QueueConfig};
use specmon_core::speed::{SpeedConfig, SpeedLayer, SpeedWorker};
use specmon_core::SensorId;

fn envelopes(n: usize, sensors: usize, t0: i64) -> Vec<Envelope> {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    (0..n)
        .map(|i| {
            let s = format!("s-{}", i % sensors);
            let seq = (i / sensors) as u64;
            env(
                seq,
                &random_segment(&mut rng, &s, t0 + seq as i64 * 125, 500e6),
            )
        })
        .collect()
}

fn drain(queue: &Queue, offsets: &mut OffsetStore) -> Vec<Envelope> {
    let mut out = Vec::new();
    for p in 0..queue.partitions() {
        loop {
            let (batch, next) = queue.consume(p, offsets.get(p), 256).unwrap();
            if batch.is_empty() {
                break;
            }
            out.extend(batch.into_iter().map(|c| c.envelope));
            offsets.set(p, next);
        }
    }
    out
}

#[test]
fn per_sensor_order_is_preserved() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clock) = manual(0);
    let q = Queue::open(dir.path(), QueueConfig::default(), clock).unwrap();
    let all = envelopes(10_000, 13, 0);
    for e in &all {
        q.enqueue(e).unwrap();
    }
    let mut offsets = OffsetStore::open(dir.path(), "check").unwrap();
    let got = drain(&q, &mut offsets);
    assert_eq!(got.len(), all.len());
    let mut last: BTreeMap<SensorId, u64> = BTreeMap::new();
    for e in &got {
        if let Some(prev) = last.insert(e.sensor_id.clone(), e.seq) {
            assert_eq!(e.seq, prev + 1, "{} out of order", e.sensor_id);
        }
    }
    assert_eq!(last.len(), 13);
}

#[test]
fn restarted_consumer_sees_exactly_what_it_missed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clock) = manual(0);
    let q = Queue::open(dir.path(), QueueConfig::default(), clock).unwrap();
    let all = envelopes(3_000, 5, 0);
    for e in &all[..2_000] {
        q.enqueue(e).unwrap();
    }
    {
        let mut offsets = OffsetStore::open(dir.path(), "speed").unwrap();
        assert_eq!(drain(&q, &mut offsets).len(), 2_000);
        offsets.commit().unwrap();
    }
    for e in &all[2_000..] {
        q.enqueue(e).unwrap();
    }
    let mut offsets = OffsetStore::open(dir.path(), "speed").unwrap();
    let missed = drain(&q, &mut offsets);
    assert_eq!(missed.len(), 1_000);
    let want: HashSet<_> = all[2_000..].iter().map(Envelope::key).collect();
    let got: HashSet<_> = missed.iter().map(Envelope::key).collect();
    assert_eq!(got, want);
}

#[test]
fn consumers_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clock) = manual(0);
    let q = Queue::open(dir.path(), QueueConfig::default(), clock).unwrap();
    for e in envelopes(500, 3, 0) {
        q.enqueue(&e).unwrap();
    }
    let mut a = OffsetStore::open(dir.path(), "batch").unwrap();
    assert_eq!(drain(&q, &mut a).len(), 500);
    a.commit().unwrap();
    let mut b = OffsetStore::open(dir.path(), "speed").unwrap();
    assert_eq!(drain(&q, &mut b).len(), 500);
    assert_eq!(drain(&q, &mut a).len(), 0);
}

#[test]
fn queue_survives_reopen_and_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clock) = manual(0);
    let all = envelopes(200, 2, 0);
    {
        let q = Queue::open(dir.path(), QueueConfig::default(), clock.clone()).unwrap();
        for e in &all {
            q.enqueue(e).unwrap();
        }
    }
    // simulate a crash mid-append on every partition
    for entry in walk(dir.path()) {
        if entry.extension().is_some_and(|x| x == "seg") {
            let mut f = std::fs::OpenOptions::new()
                .append(true)
                .open(&entry)
                .unwrap();
            f.write_all(&[0x20, 0, 0, 0, 1, 2, 3]).unwrap();
        }
    }
    let q = Queue::open(dir.path(), QueueConfig::default(), clock).unwrap();
    let mut offsets = OffsetStore::open(dir.path(), "check").unwrap();
    let got = drain(&q, &mut offsets);
    let want: HashSet<_> = all.iter().map(Envelope::key).collect();
    assert_eq!(got.iter().map(Envelope::key).collect::<HashSet<_>>(), want);
    assert_eq!(q.corrupt_count(), 0);
    // appends continue after the truncated tail
    q.enqueue(&envelopes(1, 1, 99_000)[0]).unwrap();
    assert_eq!(drain(&q, &mut offsets).len(), 1);
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn collector_acks_with_queue_position() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clock) = manual(0);
    let q = Arc::new(Queue::open(dir.path(), QueueConfig::default(), clock).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    serve_collector(q.clone(), listener);

    let client = CollectorClient::new(addr.to_string());
    let all = envelopes(100, 4, 0);
    let mut acked = Vec::new();
    for e in &all {
        acked.push(client.send(e).unwrap());
    }
    for ((p, o), e) in acked.iter().zip(&all) {
        let (got, _) = q.consume(*p, *o, 1).unwrap();
        assert_eq!(got[0].envelope.key(), e.key());
    }

    // malformed lines get an error reply and the connection stays usable
    let mut raw = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(raw.try_clone().unwrap());
    raw.write_all(b"{not json}\n").unwrap();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert!(line.starts_with("err "), "{line}");
    raw.write_all(format!("{}\n", all[0].to_line()).as_bytes())
        .unwrap();
    line.clear();
    reader.read_line(&mut line).unwrap();
    assert!(line.starts_with("ok "), "{line}");
}

#[test]
fn collector_client_fails_when_nobody_listens() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = CollectorClient::new(addr.to_string()).with_timeout(Duration::from_millis(200), 2);
    assert!(client.send(&envelopes(1, 1, 0)[0]).is_err());
}

#[test]
fn speed_worker_resumes_from_committed_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let (_, clock) = manual(0);
    let q = Arc::new(Queue::open(dir.path(), QueueConfig::default(), clock.clone()).unwrap());
    let layer = Arc::new(SpeedLayer::new(SpeedConfig::default(), clock).unwrap());
    let all = envelopes(2_000, 4, 0);
    let spawn = || {
        SpeedWorker::spawn(
            layer.clone(),
            q.clone(),
            OffsetStore::open(dir.path(), "speed").unwrap(),
            vec![],
            None,
            Duration::from_millis(10),
        )
    };
    let wait = |n: u64| {
        let deadline = Instant::now() + Duration::from_secs(20);
        while layer.metrics().snapshot().envelopes < n {
            assert!(
                Instant::now() < deadline,
                "worker stuck at {:?}",
                layer.metrics().snapshot()
            );
            std::thread::sleep(Duration::from_millis(5));
        }
    };
    let w = spawn();
    for e in &all[..1_000] {
        q.enqueue(e).unwrap();
    }
    wait(1_000);
    w.stop();
    for e in &all[1_000..] {
        q.enqueue(e).unwrap();
    }
    let w = spawn();
    wait(2_000);
    std::thread::sleep(Duration::from_millis(100));
    w.stop();
    let m = layer.metrics().snapshot();
    assert_eq!(m.envelopes, 2_000);
    assert_eq!(m.duplicates, 0);
    assert_eq!(m.lag_offsets, 0);
}
