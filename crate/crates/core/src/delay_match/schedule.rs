use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use super::align::SynthesizedSegment;
use crate::model::{Ms, ParticipantId, Utterance, UtteranceId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("practice utterance `{0}` is never presented")]
    PracticeRejected(UtteranceId),
    #[error("segment `{0}` was not announced to this receiver")]
    Unexpected(UtteranceId),
}

/// The Delay-Match step: a segment starts once it is ready and the receiver's
/// previous presentation has finished.
pub fn schedule_presentation(busy_until: Ms, mut synth: SynthesizedSegment) -> SynthesizedSegment {
    let start = synth.ready_time.max(busy_until);
    synth.presentation_start = Some(start);
    synth.presentation_end = Some(start + synth.final_duration_ms);
    synth
}

/// Presentation order for one receiver.
///
/// Segments of one speaker leave in capture order even when their translations
/// finish out of order; across speakers the earliest ready segment goes first,
/// ties broken by capture start and then speaker id.
#[derive(Debug, Clone)]
pub struct PresentationQueue {
    receiver: ParticipantId,
    busy_until: Ms,
    expected: BTreeMap<ParticipantId, VecDeque<(Ms, UtteranceId)>>,
    held: BTreeMap<UtteranceId, SynthesizedSegment>,
}

impl PresentationQueue {
    pub fn new(receiver: ParticipantId) -> Self {
        Self {
            receiver,
            busy_until: 0,
            expected: BTreeMap::new(),
            held: BTreeMap::new(),
        }
    }

    pub fn receiver(&self) -> &ParticipantId {
        &self.receiver
    }

    pub fn busy_until(&self) -> Ms {
        self.busy_until
    }

    /// Utterances announced but not yet released for presentation.
    pub fn pending(&self) -> usize {
        self.expected.values().map(VecDeque::len).sum()
    }

    /// Announce a captured utterance so its capture-order slot is reserved.
    pub fn expect(&mut self, utterance: &Utterance) -> Result<(), ScheduleError> {
        if utterance.practice {
            return Err(ScheduleError::PracticeRejected(utterance.id.clone()));
        }
        let slots = self.expected.entry(utterance.speaker.clone()).or_default();
        let key = (utterance.capture_start, utterance.id.clone());
        let at = slots.partition_point(|slot| *slot < key);
        slots.insert(at, key);
        Ok(())
    }

    /// Hand over an aligned segment; returns every segment that can now be scheduled,
    /// in presentation order.
    pub fn offer(&mut self, synth: SynthesizedSegment) -> Result<Vec<SynthesizedSegment>, ScheduleError> {
        self.offer_batch(vec![synth])
    }

    /// Hand over segments that became ready at the same instant, so the
    /// cross-speaker ordering applies among them.
    pub fn offer_batch(&mut self, batch: Vec<SynthesizedSegment>) -> Result<Vec<SynthesizedSegment>, ScheduleError> {
        for synth in &batch {
            let announced = self
                .expected
                .get(&synth.speaker)
                .is_some_and(|slots| slots.iter().any(|(_, id)| *id == synth.utterance_id));
            if !announced {
                return Err(ScheduleError::Unexpected(synth.utterance_id.clone()));
            }
        }
        for synth in batch {
            self.held.insert(synth.utterance_id.clone(), synth);
        }

        let mut released = Vec::new();
        loop {
            let next = self
                .expected
                .iter()
                .filter_map(|(speaker, slots)| {
                    let (_, head) = slots.front()?;
                    let seg = self.held.get(head)?;
                    Some(((seg.ready_time, seg.capture_start, speaker.clone()), head.clone()))
                })
                .min();
            let Some(((_, _, speaker), head)) = next else { break };
            if let Some(slots) = self.expected.get_mut(&speaker) {
                slots.pop_front();
            }
            let seg = self.held.remove(&head).expect("head is held");
            let scheduled = schedule_presentation(self.busy_until, seg);
            self.busy_until = scheduled.presentation_end.expect("scheduled");
            released.push(scheduled);
        }
        Ok(released)
    }
}
