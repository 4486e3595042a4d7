use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Ms, UtteranceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MediaKind {
    Video,
    Audio,
}

impl MediaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaKind::Video => "video",
            MediaKind::Audio => "audio",
        }
    }
}

/// Original captured media. The payload is an opaque reference; nothing is decoded here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaSegment {
    pub utterance_id: UtteranceId,
    pub kind: MediaKind,
    pub duration_ms: Ms,
    pub payload_ref: String,
    pub checksum: String,
}

impl MediaSegment {
    /// Synthetic segment for a simulated capture; the checksum hashes the
    /// identifying metadata and the transcript.
    pub fn mock(session: &str, utterance_id: &UtteranceId, kind: MediaKind, duration_ms: Ms, text: &str) -> Self {
        let mut hasher = Sha256::new();
        for part in [session, utterance_id.as_str(), kind.as_str(), &duration_ms.to_string(), text] {
            hasher.update(part.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        let checksum = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self {
            utterance_id: utterance_id.clone(),
            kind,
            duration_ms,
            payload_ref: format!("media/{session}/{utterance_id}/{}", kind.as_str()),
            checksum,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BufferError {
    #[error("segment for unknown utterance `{0}`")]
    UnknownUtterance(UtteranceId),
    #[error("duplicate {kind:?} segment for utterance `{utterance}`")]
    Duplicate { utterance: UtteranceId, kind: MediaKind },
    #[error("segment for utterance `{0}` has zero duration")]
    ZeroDuration(UtteranceId),
}

/// Holds original media until its translation is ready. Nothing leaves the
/// buffer except through alignment.
#[derive(Debug, Clone, Default)]
pub struct MediaBuffer {
    known: BTreeSet<UtteranceId>,
    segments: BTreeMap<(UtteranceId, MediaKind), MediaSegment>,
}

impl MediaBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, utterance: &UtteranceId) {
        self.known.insert(utterance.clone());
    }

    pub fn ingest_segment(&mut self, segment: MediaSegment) -> Result<(), BufferError> {
        if !self.known.contains(&segment.utterance_id) {
            return Err(BufferError::UnknownUtterance(segment.utterance_id));
        }
        if segment.duration_ms == 0 {
            return Err(BufferError::ZeroDuration(segment.utterance_id));
        }
        let key = (segment.utterance_id.clone(), segment.kind);
        if self.segments.contains_key(&key) {
            return Err(BufferError::Duplicate {
                utterance: key.0,
                kind: key.1,
            });
        }
        self.segments.insert(key, segment);
        Ok(())
    }

    pub fn get(&self, utterance: &UtteranceId, kind: MediaKind) -> Option<&MediaSegment> {
        self.segments.get(&(utterance.clone(), kind))
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Drop the media of an utterance once it has been presented.
    pub fn release(&mut self, utterance: &UtteranceId) {
        self.segments.remove(&(utterance.clone(), MediaKind::Video));
        self.segments.remove(&(utterance.clone(), MediaKind::Audio));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_holds_segment() {
        let mut buf = MediaBuffer::new();
        let u1 = UtteranceId::from("u1");
        buf.register(&u1);
        buf.ingest_segment(MediaSegment::mock("s", &u1, MediaKind::Video, 4000, "hi")).unwrap();
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.get(&u1, MediaKind::Video).unwrap().duration_ms, 4000);
        assert!(buf.get(&u1, MediaKind::Audio).is_none());
    }

    #[test]
    fn duplicate_rejected() {
        let mut buf = MediaBuffer::new();
        let u1 = UtteranceId::from("u1");
        buf.register(&u1);
        let seg = MediaSegment::mock("s", &u1, MediaKind::Video, 4000, "hi");
        buf.ingest_segment(seg.clone()).unwrap();
        assert_eq!(
            buf.ingest_segment(seg),
            Err(BufferError::Duplicate {
                utterance: u1,
                kind: MediaKind::Video
            })
        );
    }

    #[test]
    fn unknown_utterance_rejected() {
        let mut buf = MediaBuffer::new();
        let u9 = UtteranceId::from("utt9");
        assert_eq!(
            buf.ingest_segment(MediaSegment::mock("s", &u9, MediaKind::Audio, 10, "x")),
            Err(BufferError::UnknownUtterance(u9))
        );
    }

    #[test]
    fn mock_checksum_is_content_addressed() {
        let u1 = UtteranceId::from("u1");
        let a = MediaSegment::mock("s", &u1, MediaKind::Video, 4000, "hi");
        let b = MediaSegment::mock("s", &u1, MediaKind::Video, 4000, "hi");
        let c = MediaSegment::mock("s", &u1, MediaKind::Video, 4000, "ho");
        assert_eq!(a.checksum, b.checksum);
        assert_ne!(a.checksum, c.checksum);
        assert_eq!(a.checksum.len(), 16);
        assert_eq!(a.payload_ref, "media/s/u1/video");
    }
}
