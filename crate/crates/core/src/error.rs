use alloc::string::String;

/// Errors raised by the protocol model and the analysis chain.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("angle must be finite, got {0}")]
    NonFiniteAngle(f64),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("reference counts are all zero; no phase estimate possible")]
    NoReferenceCounts,
    #[error("no events survive post-selection (N' = 0)")]
    EmptySelection,
    #[error("discarded count {discarded} exceeds sent count {sent} for state {state}")]
    InconsistentAnnouncement {
        state: &'static str,
        sent: f64,
        discarded: f64,
    },
    #[error("no effective detections in {0}")]
    NoDetections(&'static str),
    #[error("no sent pulses for {0}")]
    EmptyCell(&'static str),
    #[error("invalid search range: {0}")]
    InvalidRange(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_range(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<()> {
    if ok && !value.is_nan() {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
