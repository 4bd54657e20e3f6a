//! Logical protocol steps laid out over engine rounds.
//!
//! A step whose payloads need `b` bits occupies `⌈b/B⌉` rounds: the sender
//! produces whole payloads once, the adapter ships them one `B`-bit fragment
//! per round, and the receiver sees the reassembled payloads after the last
//! fragment. Steps of 0 rounds are local computation and run right before the
//! next communicating step.

use std::sync::Arc;

use super::{NodeCtx, NodeProgram, Payload};

/// A node state machine expressed in whole steps.
pub trait Protocol: Send {
    type Step: Copy + Send + Sync;
    fn send(&mut self, step: Self::Step, ctx: &mut NodeCtx, out: &mut [Option<Payload>]);
    fn receive(&mut self, step: Self::Step, ctx: &mut NodeCtx, inbox: &[Option<Payload>]);
    fn is_done(&self) -> bool;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimedStep<S> {
    pub step: S,
    pub rounds: u32,
    pub label: Arc<str>,
}

impl<S> TimedStep<S> {
    pub fn new(step: S, rounds: u32, label: &Arc<str>) -> Self {
        TimedStep {
            step,
            rounds,
            label: Arc::clone(label),
        }
    }
}

#[derive(Clone, Debug)]
struct Slot<S> {
    locals: Vec<S>,
    step: S,
    rounds: u32,
    start: u64,
    label: Arc<str>,
}

/// A fixed prefix of steps followed by an optional cycle repeated forever.
#[derive(Clone, Debug)]
pub struct Schedule<S> {
    prefix: Vec<Slot<S>>,
    prefix_rounds: u64,
    cycle: Vec<Slot<S>>,
    cycle_rounds: u64,
}

impl<S: Copy> Schedule<S> {
    /// Zero-round steps after the last communicating step of a part are
    /// dropped. A nonempty cycle must contain a communicating step.
    pub fn new(prefix: Vec<TimedStep<S>>, cycle: Vec<TimedStep<S>>) -> Self {
        let (prefix, prefix_rounds) = Self::lay_out(prefix);
        let (cycle, cycle_rounds) = Self::lay_out(cycle);
        Schedule {
            prefix,
            prefix_rounds,
            cycle,
            cycle_rounds,
        }
    }

    fn lay_out(steps: Vec<TimedStep<S>>) -> (Vec<Slot<S>>, u64) {
        let mut slots = Vec::new();
        let mut locals = Vec::new();
        let mut at = 0u64;
        for t in steps {
            if t.rounds == 0 {
                locals.push(t.step);
                continue;
            }
            slots.push(Slot {
                locals: std::mem::take(&mut locals),
                step: t.step,
                rounds: t.rounds,
                start: at,
                label: t.label,
            });
            at += t.rounds as u64;
        }
        (slots, at)
    }

    pub fn prefix_rounds(&self) -> u64 {
        self.prefix_rounds
    }

    pub fn has_cycle(&self) -> bool {
        self.cycle_rounds > 0
    }

    fn position(&self, round: u64) -> Option<(&Slot<S>, u32)> {
        let (slots, r) = if round < self.prefix_rounds {
            (&self.prefix, round)
        } else if self.cycle_rounds > 0 {
            (&self.cycle, (round - self.prefix_rounds) % self.cycle_rounds)
        } else {
            return None;
        };
        let i = slots.partition_point(|s| s.start <= r) - 1;
        Some((&slots[i], (r - slots[i].start) as u32))
    }

    pub fn label_at_round(&self, round: u64) -> Option<&str> {
        self.position(round).map(|(s, _)| &*s.label)
    }

    /// Consecutive runs of equal labels in the prefix as
    /// `(label, first round, rounds)`.
    pub fn phase_spans(&self) -> Vec<(Arc<str>, u64, u64)> {
        let mut spans: Vec<(Arc<str>, u64, u64)> = Vec::new();
        for s in &self.prefix {
            match spans.last_mut() {
                Some(last) if last.0 == s.label => last.2 += s.rounds as u64,
                _ => spans.push((Arc::clone(&s.label), s.start, s.rounds as u64)),
            }
        }
        spans
    }
}

/// Runs a [`Protocol`] on the engine according to a shared [`Schedule`].
pub struct Scheduled<P: Protocol> {
    inner: P,
    schedule: Arc<Schedule<P::Step>>,
    staged: Vec<Option<Payload>>,
    assembled: Vec<Option<Payload>>,
    mid_step: bool,
    finished: bool,
}

impl<P: Protocol> Scheduled<P> {
    pub fn new(inner: P, schedule: Arc<Schedule<P::Step>>, degree: usize) -> Self {
        Scheduled {
            inner,
            schedule,
            staged: vec![None; degree],
            assembled: vec![None; degree],
            mid_step: false,
            finished: false,
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// False while a multi-round step is in flight.
    pub fn at_step_boundary(&self) -> bool {
        !self.mid_step
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Protocol> NodeProgram for Scheduled<P> {
    fn send(&mut self, ctx: &mut NodeCtx, out: &mut [Option<Payload>]) {
        let schedule = Arc::clone(&self.schedule);
        let Some((slot, offset)) = schedule.position(ctx.round()) else {
            self.finished = true;
            return;
        };
        if offset == 0 {
            let mut none = vec![None; out.len()];
            for &step in &slot.locals {
                self.inner.send(step, ctx, &mut none);
                debug_assert!(none.iter().all(Option::is_none), "local step sent a frame");
                self.inner.receive(step, ctx, &none);
            }
            self.staged.iter_mut().for_each(|s| *s = None);
            self.assembled.iter_mut().for_each(|s| *s = None);
            self.inner.send(slot.step, ctx, &mut self.staged);
            self.mid_step = true;
        }
        let b = ctx.bandwidth();
        let last = offset + 1 == slot.rounds;
        for (o, staged) in out.iter_mut().zip(&self.staged) {
            let Some(p) = staged else { continue };
            let lo = offset as usize * b;
            if lo < p.len() || (offset == 0 && p.is_empty()) {
                // The final round carries whatever is left; an overlong
                // payload then trips the engine's budget check.
                let hi = if last { p.len() } else { (lo + b).min(p.len()) };
                *o = Some(p[lo..hi].to_bitvec());
            }
        }
    }

    fn receive(&mut self, ctx: &mut NodeCtx, inbox: &[Option<Payload>]) {
        let schedule = Arc::clone(&self.schedule);
        let Some((slot, offset)) = schedule.position(ctx.round()) else {
            return;
        };
        for (acc, frame) in self.assembled.iter_mut().zip(inbox) {
            if let Some(f) = frame {
                acc.get_or_insert_with(Payload::new).extend_from_bitslice(f);
            }
        }
        if offset + 1 == slot.rounds {
            self.inner.receive(slot.step, ctx, &self.assembled);
            self.mid_step = false;
            if schedule.position(ctx.round() + 1).is_none() {
                self.finished = true;
            }
        }
    }

    fn is_done(&self) -> bool {
        !self.mid_step && (self.finished || self.inner.is_done())
    }
}
