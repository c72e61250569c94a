//! In-process publish/subscribe with bounded, drop-oldest subscriber queues.
//!
//! Publishing never blocks on a slow subscriber: when a queue is full its
//! oldest frame is discarded and the subscriber's drop counter incremented.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::time::Duration;

use super::{Payload, StreamId, TelemetryFrame};

struct Queue {
    frames: Mutex<VecDeque<TelemetryFrame>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
    streams: Option<Vec<StreamId>>,
}

impl Queue {
    fn accepts(&self, stream: StreamId) -> bool {
        self.streams.as_ref().map_or(true, |s| s.contains(&stream))
    }

    fn push(&self, frame: TelemetryFrame) {
        let mut q = self.frames.lock().unwrap();
        if q.len() == self.capacity {
            q.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(frame);
        self.ready.notify_one();
    }
}

#[derive(Default)]
struct BusInner {
    subscribers: Mutex<Vec<Weak<Queue>>>,
    closed: AtomicBool,
}

/// Cheaply cloneable handle to a shared bus.
#[derive(Clone, Default)]
pub struct TelemetryBus {
    inner: Arc<BusInner>,
}

impl TelemetryBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Subscribes to every stream.
    pub fn subscribe(&self, capacity: usize) -> Subscriber {
        self.subscribe_filtered(capacity, None)
    }

    /// Subscribes to the listed streams only (`None` = all).
    pub fn subscribe_filtered(&self, capacity: usize, streams: Option<Vec<StreamId>>) -> Subscriber {
        let q = Arc::new(Queue {
            frames: Mutex::new(VecDeque::with_capacity(capacity.max(1))),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            dropped: AtomicU64::new(0),
            streams,
        });
        self.inner.subscribers.lock().unwrap().push(Arc::downgrade(&q));
        Subscriber { queue: q, bus: self.inner.clone() }
    }

    /// Producer handle for one stream. Sequence numbers start at 0.
    pub fn publisher(&self, stream: StreamId) -> Publisher {
        Publisher { bus: self.clone(), stream, next_seq: 0 }
    }

    /// Delivers an already-sequenced frame to all matching subscribers.
    pub fn deliver(&self, frame: &TelemetryFrame) {
        let mut subs = self.inner.subscribers.lock().unwrap();
        subs.retain(|w| w.strong_count() > 0);
        for q in subs.iter().filter_map(Weak::upgrade) {
            if q.accepts(frame.stream()) {
                q.push(frame.clone());
            }
        }
    }

    pub fn subscriber_count(&self) -> usize {
        let mut subs = self.inner.subscribers.lock().unwrap();
        subs.retain(|w| w.strong_count() > 0);
        subs.len()
    }

    /// Wakes all blocked subscribers; subsequent `recv` calls drain and then return `None`.
    pub fn close(&self) {
        self.inner.closed.store(true, Ordering::SeqCst);
        for q in self.inner.subscribers.lock().unwrap().iter().filter_map(Weak::upgrade) {
            q.ready.notify_all();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }
}

/// Single producer for one stream; assigns strictly increasing sequence numbers.
pub struct Publisher {
    bus: TelemetryBus,
    stream: StreamId,
    next_seq: u32,
}

impl Publisher {
    pub fn stream(&self) -> StreamId {
        self.stream
    }

    pub fn publish(&mut self, timestamp_us: u64, payload: Payload) -> TelemetryFrame {
        debug_assert_eq!(payload.stream(), self.stream);
        let frame = TelemetryFrame::new(self.next_seq, timestamp_us, payload);
        self.next_seq = self.next_seq.wrapping_add(1);
        self.bus.deliver(&frame);
        frame
    }
}

pub struct Subscriber {
    queue: Arc<Queue>,
    bus: Arc<BusInner>,
}

impl Subscriber {
    pub fn try_recv(&self) -> Option<TelemetryFrame> {
        self.queue.frames.lock().unwrap().pop_front()
    }

    /// Blocks up to `timeout`; returns `None` on timeout or after the bus closes and the queue drains.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<TelemetryFrame> {
        let q = self.queue.frames.lock().unwrap();
        let (mut q, _) = self
            .queue
            .ready
            .wait_timeout_while(q, timeout, |q| q.is_empty() && !self.bus.closed.load(Ordering::SeqCst))
            .unwrap();
        q.pop_front()
    }

    pub fn drain(&self) -> Vec<TelemetryFrame> {
        self.queue.frames.lock().unwrap().drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.frames.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity
    }

    /// Frames discarded because this subscriber fell behind.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }
}

/// Tracks per-stream sequence gaps so a consumer can count lost frames.
#[derive(Debug, Default, Clone)]
pub struct SeqTracker {
    last: BTreeMap<StreamId, u32>,
    gaps: BTreeMap<StreamId, u64>,
    out_of_order: u64,
}

impl SeqTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, frame: &TelemetryFrame) {
        let s = frame.stream();
        if let Some(&prev) = self.last.get(&s) {
            if frame.seq > prev {
                *self.gaps.entry(s).or_default() += (frame.seq - prev - 1) as u64;
            } else {
                self.out_of_order += 1;
                return;
            }
        }
        self.last.insert(s, frame.seq);
    }

    pub fn missing(&self, stream: StreamId) -> u64 {
        self.gaps.get(&stream).copied().unwrap_or(0)
    }

    pub fn total_missing(&self) -> u64 {
        self.gaps.values().sum()
    }

    pub fn out_of_order(&self) -> u64 {
        self.out_of_order
    }
}
