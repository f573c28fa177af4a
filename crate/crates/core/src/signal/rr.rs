use serde::{Deserialize, Serialize};

/// Plausibility band for beat-to-beat intervals, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrBand {
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for RrBand {
    /// 0.3 s to 2.0 s, i.e. 30 to 200 bpm.
    fn default() -> Self {
        Self { min_s: 0.3, max_s: 2.0 }
    }
}

impl RrBand {
    pub fn contains(&self, rr: f64) -> bool {
        rr >= self.min_s && rr <= self.max_s
    }
}

/// Beat-to-beat intervals derived from a run of detected peaks.
///
/// `rr_s` keeps only intervals inside the plausibility band; `excluded`
/// counts the ones that were dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RrSeries {
    pub peak_times_s: Vec<f64>,
    pub rr_s: Vec<f64>,
    pub excluded: usize,
    pub source_window_range: Option<(u64, u64)>,
}

impl RrSeries {
    /// Builds a series straight from intervals, bypassing peak detection.
    pub fn from_intervals(rr_s: Vec<f64>) -> Self {
        let mut t = 0.0;
        let mut peaks = Vec::with_capacity(rr_s.len() + 1);
        if !rr_s.is_empty() {
            peaks.push(0.0);
        }
        for r in &rr_s {
            t += r;
            peaks.push(t);
        }
        Self {
            peak_times_s: peaks,
            rr_s,
            excluded: 0,
            source_window_range: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rr_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rr_s.is_empty()
    }

    /// Number of beats backing the accepted intervals.
    pub fn n_beats(&self) -> usize {
        if self.rr_s.is_empty() {
            0
        } else {
            self.rr_s.len() + 1
        }
    }

    /// Intervals accepted plus excluded.
    pub fn total_intervals(&self) -> usize {
        self.rr_s.len() + self.excluded
    }

    pub fn with_range(mut self, first: u64, last: u64) -> Self {
        self.source_window_range = Some((first, last));
        self
    }
}

/// Successive differences of strictly increasing peak times, with
/// out-of-band intervals excluded and tallied.
pub fn derive_rr(peak_times_s: &[f64], band: &RrBand) -> RrSeries {
    let mut rr = Vec::with_capacity(peak_times_s.len().saturating_sub(1));
    let mut excluded = 0;
    for w in peak_times_s.windows(2) {
        let d = w[1] - w[0];
        if band.contains(d) {
            rr.push(d);
        } else {
            excluded += 1;
        }
    }
    RrSeries {
        peak_times_s: peak_times_s.to_vec(),
        rr_s: rr,
        excluded,
        source_window_range: None,
    }
}
