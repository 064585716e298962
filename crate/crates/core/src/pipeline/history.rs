use std::borrow::Cow;
use std::collections::VecDeque;
use std::ops::Range;

use crate::rf::{FrameSource, RfStreamHeader};

/// Bounded window of the most recent ticks, addressed by absolute tick.
#[derive(Debug, Clone)]
pub struct FrameHistory {
    header: RfStreamHeader,
    first_tick: usize,
    ticks: VecDeque<Vec<i16>>,
    capacity: usize,
}

impl FrameHistory {
    pub fn new(header: RfStreamHeader, capacity: usize) -> Self {
        Self {
            header,
            first_tick: 0,
            ticks: VecDeque::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity.max(1);
        self.trim();
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Appends the next tick, dropping the oldest ones beyond capacity.
    pub fn push(&mut self, tick: &[i16]) {
        let buf = if self.ticks.len() >= self.capacity {
            self.first_tick += 1;
            let mut b = self.ticks.pop_front().unwrap_or_default();
            b.clear();
            b.extend_from_slice(tick);
            b
        } else {
            tick.to_vec()
        };
        self.ticks.push_back(buf);
        self.trim();
    }

    fn trim(&mut self) {
        while self.ticks.len() > self.capacity {
            self.ticks.pop_front();
            self.first_tick += 1;
        }
    }
}

impl FrameSource for FrameHistory {
    fn header(&self) -> &RfStreamHeader {
        &self.header
    }

    fn ticks(&self) -> Range<usize> {
        self.first_tick..self.first_tick + self.ticks.len()
    }

    fn frame(&self, tick: usize, channel: usize) -> Cow<'_, [i16]> {
        let len = self.header.frame_len();
        let t = &self.ticks[tick - self.first_tick];
        Cow::Borrowed(&t[channel * len..(channel + 1) * len])
    }
}
