use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use super::{decode, encode, DecodeError, Message};
use crate::model::Tick;

/// Delivery-time bookkeeping for reliable per-pair FIFO links with a
/// constant one-way delay.
#[derive(Clone, Debug)]
pub struct FifoLinks {
    delay: Tick,
    last: HashMap<(String, String), Tick>,
}

impl FifoLinks {
    pub fn new(delay: Tick) -> Self {
        Self {
            delay,
            last: HashMap::new(),
        }
    }

    pub fn delay(&self) -> Tick {
        self.delay
    }

    /// Tick at which a message sent now from `from` to `to` arrives. Never
    /// earlier than the previous message on the same link.
    pub fn delivery_tick(&mut self, from: &str, to: &str, now: Tick) -> Tick {
        let slot = self
            .last
            .entry((from.to_string(), to.to_string()))
            .or_insert(0);
        let at = (now + self.delay).max(*slot);
        *slot = at;
        at
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Delivery<M> {
    pub at: Tick,
    pub from: String,
    pub to: String,
    pub message: M,
}

/// In-process binding: a send queue drained by tick.
#[derive(Clone, Debug)]
pub struct InProcessTransport<M> {
    links: FifoLinks,
    queue: BTreeMap<(Tick, u64), Delivery<M>>,
    sent: u64,
}

impl<M> InProcessTransport<M> {
    pub fn new(delay: Tick) -> Self {
        Self {
            links: FifoLinks::new(delay),
            queue: BTreeMap::new(),
            sent: 0,
        }
    }

    pub fn send(&mut self, from: &str, to: &str, message: M, now: Tick) -> Tick {
        let at = self.links.delivery_tick(from, to, now);
        self.queue.insert(
            (at, self.sent),
            Delivery {
                at,
                from: from.to_string(),
                to: to.to_string(),
                message,
            },
        );
        self.sent += 1;
        at
    }

    /// Everything due by `now`, in delivery order.
    pub fn poll(&mut self, now: Tick) -> Vec<Delivery<M>> {
        let later = self.queue.split_off(&(now + 1, 0));
        std::mem::replace(&mut self.queue, later).into_values().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Byte-stream binding: records framed by `\n` over any reliable stream.
pub struct LineWriter<W: Write> {
    inner: W,
}

impl<W: Write> LineWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn send(&mut self, m: &Message) -> io::Result<()> {
        self.inner.write_all(&encode(m))?;
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub struct LineReader<R: BufRead> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: BufRead> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::new(),
        }
    }

    /// Next record, or `None` at a clean end of stream. A trailing partial
    /// record is a decode error.
    pub fn recv(&mut self) -> Option<Result<Message, FrameError>> {
        self.buf.clear();
        match self.inner.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => Some(decode(&self.buf).map_err(FrameError::from)),
            Err(e) => Some(Err(e.into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_send_never_overtakes() {
        let mut links = FifoLinks::new(3);
        assert_eq!(links.delivery_tick("a", "b", 0), 3);
        assert_eq!(links.delivery_tick("a", "b", 0), 3);
        assert_eq!(links.delivery_tick("a", "c", 0), 3);
    }

    #[test]
    fn poll_drains_due_messages_in_order() {
        let mut t = InProcessTransport::new(1);
        t.send("a", "b", 1, 0);
        t.send("a", "b", 2, 0);
        t.send("b", "a", 3, 5);
        assert!(t.poll(0).is_empty());
        let got: Vec<i32> = t.poll(1).into_iter().map(|d| d.message).collect();
        assert_eq!(got, vec![1, 2]);
        assert_eq!(t.poll(10).len(), 1);
        assert!(t.is_empty());
    }
}
