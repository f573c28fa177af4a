//! Canonical signal representation: windows, peaks, RR intervals and the
//! scripted synthetic stream generator used as a hermetic test substrate.

mod peaks;
mod rr;
mod synth;
mod window;

pub use peaks::{detect_peaks, detect_peaks_with, saturated_fraction, DetectorConfig, PeakDetection};
pub use rr::{derive_rr, RrBand, RrSeries};
pub use synth::{
    synthesize_stream, EpisodeLabel, ScriptSegment, SegmentKind, StreamScript, SynthAnnotation, SynthOutput,
};
pub use window::{read_windows, segment_stream, write_windows, Dataset, Modality, SampleWindow, Segmented, StreamMeta};
