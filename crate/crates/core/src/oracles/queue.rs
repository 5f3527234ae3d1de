use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::{AnswerSet, Labeler, QueryBatch, Responder};
use crate::error::{PalError, Result};

#[derive(Debug, Default)]
struct Slot {
    open: Option<QueryBatch>,
    partial: Vec<Option<bool>>,
    done: Option<AnswerSet>,
}

/// Hand-off point between one run loop and any number of answer producers.
///
/// The loop publishes a batch and waits; producers submit answers tagged with
/// the batch id. Answers for any other id are rejected.
#[derive(Debug, Default)]
pub struct AnswerQueue {
    slot: Mutex<Slot>,
    ready: Condvar,
}

impl AnswerQueue {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Slot> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn publish(&self, batch: QueryBatch) {
        let mut s = self.lock();
        s.partial = vec![None; batch.len()];
        s.open = Some(batch);
        s.done = None;
    }

    /// The batch awaiting answers, if any.
    pub fn open_batch(&self) -> Option<QueryBatch> {
        self.lock().open.clone()
    }

    fn check_id(s: &Slot, batch_id: u64) -> Result<usize> {
        match &s.open {
            Some(b) if b.id == batch_id && s.done.is_none() => Ok(b.len()),
            other => Err(PalError::StaleBatch {
                expected: other.as_ref().map(|b| b.id),
                got: batch_id,
            }),
        }
    }

    /// Complete answers for the open batch.
    pub fn submit(&self, answers: AnswerSet) -> Result<()> {
        let mut s = self.lock();
        let expected = Self::check_id(&s, answers.batch_id)?;
        if answers.answers.len() != expected {
            return Err(PalError::AnswerCount {
                expected,
                found: answers.answers.len(),
            });
        }
        s.done = Some(answers);
        self.ready.notify_all();
        Ok(())
    }

    /// Answers for some positions of the open batch. Returns whether the batch
    /// is now complete; until then it stays open.
    pub fn submit_partial(&self, batch_id: u64, answers: &[(usize, bool)]) -> Result<bool> {
        let mut s = self.lock();
        let expected = Self::check_id(&s, batch_id)?;
        if let Some(&(bad, _)) = answers.iter().find(|(k, _)| *k >= expected) {
            return Err(PalError::IndexOutOfRange {
                index: bad,
                bound: expected,
            });
        }
        for &(k, a) in answers {
            s.partial[k] = Some(a);
        }
        if s.partial.iter().all(Option::is_some) {
            let answers = s.partial.iter().map(|a| a.unwrap_or(false)).collect();
            s.done = Some(AnswerSet {
                batch_id,
                answers,
                responder: Responder::Human,
            });
            self.ready.notify_all();
            return Ok(true);
        }
        Ok(false)
    }

    /// Block until `batch_id` is answered or `timeout` passes. On timeout the
    /// batch stays open.
    pub fn wait(&self, batch_id: u64, timeout: Duration) -> Result<AnswerSet> {
        let deadline = Instant::now() + timeout;
        let mut s = self.lock();
        loop {
            if s.open.as_ref().map(|b| b.id) != Some(batch_id) {
                return Err(PalError::StaleBatch {
                    expected: s.open.as_ref().map(|b| b.id),
                    got: batch_id,
                });
            }
            if let Some(done) = s.done.take() {
                s.open = None;
                s.partial.clear();
                return Ok(done);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(PalError::Timeout { batch_id });
            }
            s = self
                .ready
                .wait_timeout(s, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

/// Labeler that waits for answers delivered through an [`AnswerQueue`].
#[derive(Debug, Clone)]
pub struct HumanLabeler {
    pub queue: Arc<AnswerQueue>,
    pub timeout: Duration,
}

impl HumanLabeler {
    pub fn new(queue: Arc<AnswerQueue>, timeout: Duration) -> Self {
        HumanLabeler { queue, timeout }
    }
}

impl Labeler for HumanLabeler {
    fn answer(&mut self, batch: &QueryBatch) -> Result<AnswerSet> {
        if let Some(auto) = batch.auto_answers() {
            return Ok(auto);
        }
        let pending = self.queue.open_batch();
        if pending.as_ref() != Some(batch) {
            self.queue.publish(batch.clone());
        }
        self.queue.wait(batch.id, self.timeout)
    }
}

#[cfg(test)]
mod tests {
    use std::thread;

    use super::*;
    use crate::oracles::{passive_supervised_oracle, OracleState, SimulatedLabeler};

    #[test]
    fn injected_answers_match_simulated() {
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let mut s = OracleState::new(8, 2, 1);
        let b = passive_supervised_oracle(&mut s, 5);
        let sim = SimulatedLabeler::new(labels).answer(&b).unwrap();
        let q = Arc::new(AnswerQueue::new());
        let mut human = HumanLabeler::new(q.clone(), Duration::from_secs(5));
        let producer = {
            let q = q.clone();
            let mut a = sim.clone();
            a.responder = Responder::Human;
            thread::spawn(move || loop {
                if q.open_batch().is_some() {
                    q.submit(a).unwrap();
                    break;
                }
                thread::sleep(Duration::from_millis(1));
            })
        };
        let got = human.answer(&b).unwrap();
        producer.join().unwrap();
        assert_eq!(got.answers, sim.answers);
        assert_eq!(got.responder, Responder::Human);
        s.ingest(&b, &got).unwrap();
    }

    #[test]
    fn timeout_keeps_batch_open() {
        let mut s = OracleState::new(4, 2, 0);
        let b = passive_supervised_oracle(&mut s, 2);
        let q = Arc::new(AnswerQueue::new());
        let mut human = HumanLabeler::new(q.clone(), Duration::from_millis(20));
        assert_eq!(human.answer(&b), Err(PalError::Timeout { batch_id: b.id }));
        assert_eq!(q.open_batch(), Some(b.clone()));
        // resumed after the timeout
        assert!(!q.submit_partial(b.id, &[(1, true)]).unwrap());
        assert_eq!(human.answer(&b), Err(PalError::Timeout { batch_id: b.id }));
        assert!(q.submit_partial(b.id, &[(0, false)]).unwrap());
        assert_eq!(human.answer(&b).unwrap().answers, vec![false, true]);
        assert_eq!(q.open_batch(), None);
    }

    #[test]
    fn wrong_id_and_count_rejected() {
        let mut s = OracleState::new(4, 2, 0);
        let b = passive_supervised_oracle(&mut s, 2);
        let q = AnswerQueue::new();
        q.publish(b.clone());
        let bad = AnswerSet {
            batch_id: b.id + 7,
            answers: vec![true, true],
            responder: Responder::Human,
        };
        assert!(matches!(q.submit(bad), Err(PalError::StaleBatch { .. })));
        let short = AnswerSet {
            batch_id: b.id,
            answers: vec![true],
            responder: Responder::Human,
        };
        assert!(matches!(q.submit(short), Err(PalError::AnswerCount { .. })));
        assert!(q.submit_partial(b.id, &[(2, true)]).is_err());
    }
}
