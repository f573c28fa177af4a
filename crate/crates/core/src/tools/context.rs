use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::memory::PatientMemory;
use crate::proactive::{GuidelineStore, MonitorConfig};
use crate::signal::{Dataset, Modality, SampleWindow};

/// Raw windows by patient, ordered by window index.
#[derive(Debug, Clone, Default)]
pub struct WindowStore {
    by_patient: BTreeMap<String, Vec<SampleWindow>>,
}

const EPS: f64 = 1e-6;

impl WindowStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_windows(windows: impl IntoIterator<Item = SampleWindow>) -> Self {
        let mut s = Self::new();
        s.extend(windows);
        s
    }

    pub fn extend(&mut self, windows: impl IntoIterator<Item = SampleWindow>) {
        for w in windows {
            self.insert(w);
        }
    }

    /// Inserts a window, replacing any window with the same index.
    pub fn insert(&mut self, window: SampleWindow) {
        let v = self.by_patient.entry(window.patient_id.clone()).or_default();
        match v.binary_search_by_key(&window.window_index, |w| w.window_index) {
            Ok(i) => v[i] = window,
            Err(i) => v.insert(i, window),
        }
    }

    pub fn patients(&self) -> impl Iterator<Item = (&str, &[SampleWindow])> {
        self.by_patient.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn windows(&self, patient_id: &str) -> &[SampleWindow] {
        self.by_patient.get(patient_id).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.by_patient.is_empty()
    }

    /// Windows lying inside `[start_s, end_s]`. Without bounds, the latest
    /// window.
    pub fn locate(
        &self,
        patient_id: &str,
        start_s: Option<f64>,
        end_s: Option<f64>,
    ) -> std::result::Result<Vec<&SampleWindow>, String> {
        let all = self.windows(patient_id);
        if all.is_empty() {
            return Err(format!("no windows stored for patient {patient_id}"));
        }
        let found: Vec<&SampleWindow> = match (start_s, end_s) {
            (None, None) => all.last().into_iter().collect(),
            (s, e) => all
                .iter()
                .filter(|w| s.is_none_or(|s| w.start_s >= s - EPS) && e.is_none_or(|e| w.end_s() <= e + EPS))
                .collect(),
        };
        if found.is_empty() {
            Err(format!(
                "no window of patient {patient_id} inside [{}, {}]",
                start_s.map_or("-".into(), |v| v.to_string()),
                end_s.map_or("-".into(), |v| v.to_string())
            ))
        } else {
            Ok(found)
        }
    }

    /// Up to `n` contiguous windows ending at `last` (inclusive).
    pub fn context_for<'a>(&'a self, last: &'a SampleWindow, n: usize) -> Vec<&'a SampleWindow> {
        let all = self.windows(&last.patient_id);
        let Ok(end) = all.binary_search_by_key(&last.window_index, |w| w.window_index) else {
            return vec![last];
        };
        let mut start = end;
        while start > 0 && end - start + 1 < n && all[start - 1].window_index + 1 == all[start].window_index {
            start -= 1;
        }
        all[start..=end].iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub topic: String,
    pub title: String,
    pub summary: String,
    pub source: String,
}

pub trait KnowledgeClient: Send + Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<KnowledgeEntry>>;
    fn lookup(&self, topic: &str) -> Result<Option<KnowledgeEntry>>;
}

/// Canned entries, ranked by query-term overlap.
#[derive(Debug, Clone, Default)]
pub struct FixtureKnowledge {
    entries: Vec<KnowledgeEntry>,
}

impl FixtureKnowledge {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Self {
        Self { entries }
    }

    pub fn bundled() -> Self {
        Self::new(
            serde_json::from_str(include_str!("../../fixtures/knowledge.json"))
                .expect("bundled knowledge fixture is valid"),
        )
    }
}

fn terms(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() > 2)
        .map(str::to_lowercase)
        .collect()
}

impl KnowledgeClient for FixtureKnowledge {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<KnowledgeEntry>> {
        let q = terms(query);
        let mut scored: Vec<(usize, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let text = format!("{} {} {}", e.topic, e.title, e.summary).to_lowercase();
                (q.iter().filter(|t| text.contains(t.as_str())).count(), i)
            })
            .filter(|&(score, _)| score > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(limit)
            .map(|(_, i)| self.entries[i].clone())
            .collect())
    }

    fn lookup(&self, topic: &str) -> Result<Option<KnowledgeEntry>> {
        let t = topic.trim().to_lowercase();
        if let Some(e) = self.entries.iter().find(|e| e.topic == t) {
            return Ok(Some(e.clone()));
        }
        Ok(self.search(topic, 1)?.into_iter().next())
    }
}

#[cfg(feature = "http")]
pub use http::HttpKnowledge;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{KnowledgeClient, KnowledgeEntry};
    use crate::error::{Error, Result};

    pub const ENV_KNOWLEDGE_URL: &str = "VITALMON_KNOWLEDGE_URL";

    /// Client for a JSON search endpoint: `GET {url}?q=...&limit=...`
    /// returning an array of entries.
    pub struct HttpKnowledge {
        url: String,
        client: reqwest::blocking::Client,
    }

    impl HttpKnowledge {
        pub fn new(url: impl Into<String>) -> Result<Self> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(15))
                .build()
                .map_err(|e| Error::Backend(e.to_string()))?;
            Ok(Self {
                url: url.into(),
                client,
            })
        }

        pub fn from_env() -> Result<Self> {
            let url = std::env::var(ENV_KNOWLEDGE_URL)
                .map_err(|_| Error::Config(format!("{ENV_KNOWLEDGE_URL} is not set")))?;
            Self::new(url)
        }
    }

    impl KnowledgeClient for HttpKnowledge {
        fn search(&self, query: &str, limit: usize) -> Result<Vec<KnowledgeEntry>> {
            let resp = self
                .client
                .get(&self.url)
                .query(&[("q", query), ("limit", &limit.to_string())])
                .send()
                .map_err(|e| Error::Backend(e.to_string()))?;
            if !resp.status().is_success() {
                return Err(Error::Backend(format!("knowledge endpoint returned {}", resp.status())));
            }
            resp.json().map_err(|e| Error::Backend(e.to_string()))
        }

        fn lookup(&self, topic: &str) -> Result<Option<KnowledgeEntry>> {
            Ok(self.search(topic, 1)?.into_iter().next())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCapabilities {
    pub dataset: Dataset,
    pub modalities: Vec<Modality>,
    pub heart_rate: bool,
    pub hrv: bool,
    pub rhythm: bool,
    pub stress: bool,
    pub activity: bool,
    pub sleep: bool,
}

pub fn dataset_capabilities(dataset: Dataset) -> DatasetCapabilities {
    let base = DatasetCapabilities {
        dataset,
        modalities: vec![Modality::Ecg, Modality::Ppg],
        heart_rate: true,
        hrv: true,
        rhythm: false,
        stress: false,
        activity: false,
        sleep: false,
    };
    match dataset {
        Dataset::Icentia11k => DatasetCapabilities {
            modalities: vec![Modality::Ecg],
            rhythm: true,
            ..base
        },
        Dataset::AfPpgEcg | Dataset::Synthetic => DatasetCapabilities { rhythm: true, ..base },
        Dataset::PpgDalia => DatasetCapabilities {
            modalities: vec![Modality::Ppg],
            activity: true,
            ..base
        },
        Dataset::Wesad => DatasetCapabilities { stress: true, ..base },
    }
}

/// Everything a tool handler may read. Shared read-only during QA.
#[derive(Clone)]
pub struct ToolContext {
    pub windows: WindowStore,
    pub memories: BTreeMap<String, PatientMemory>,
    pub patient_contexts: BTreeMap<String, Map<String, Value>>,
    pub guidelines: Arc<GuidelineStore>,
    pub knowledge: Arc<dyn KnowledgeClient>,
    pub monitor: MonitorConfig,
}

impl Default for ToolContext {
    fn default() -> Self {
        Self {
            windows: WindowStore::new(),
            memories: BTreeMap::new(),
            patient_contexts: BTreeMap::new(),
            guidelines: Arc::new(GuidelineStore::bundled()),
            knowledge: Arc::new(FixtureKnowledge::bundled()),
            monitor: MonitorConfig::default(),
        }
    }
}

impl fmt::Debug for ToolContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolContext")
            .field("patients", &self.windows.patients().map(|(p, _)| p).collect::<Vec<_>>())
            .field("memories", &self.memories.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl ToolContext {
    pub fn new(windows: WindowStore, memories: BTreeMap<String, PatientMemory>, monitor: MonitorConfig) -> Self {
        Self {
            windows,
            memories,
            monitor,
            ..Self::default()
        }
    }

    pub fn memory(&self, patient_id: &str) -> Result<&PatientMemory> {
        self.memories
            .get(patient_id)
            .ok_or_else(|| Error::DataIntegrity(format!("no monitoring memory for patient {patient_id}")))
    }

    /// Modality of a patient's stream, from raw windows or stored states.
    pub fn modality_of(&self, patient_id: &str) -> Option<Modality> {
        self.windows
            .windows(patient_id)
            .first()
            .map(|w| w.modality)
            .or_else(|| self.memories.get(patient_id)?.states().first().map(|s| s.modality))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(pid: &str, i: u64) -> SampleWindow {
        SampleWindow {
            patient_id: pid.into(),
            dataset: Dataset::Synthetic,
            modality: Modality::Ecg,
            fs: 10.0,
            start_s: 10.0 * i as f64,
            duration_s: 10.0,
            window_index: i,
            samples: vec![0.0; 100],
        }
    }

    #[test]
    fn locate_and_context() {
        let store = WindowStore::from_windows([3, 0, 1, 2, 5].map(|i| win("p", i)));
        let w = store.locate("p", Some(10.0), Some(30.0)).unwrap();
        assert_eq!(w.iter().map(|w| w.window_index).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(store.locate("p", None, None).unwrap()[0].window_index, 5);
        assert!(store.locate("p", Some(200.0), Some(210.0)).is_err());
        assert!(store.locate("q", None, None).is_err());

        let last = &store.windows("p")[3];
        let ctx: Vec<u64> = store.context_for(last, 6).iter().map(|w| w.window_index).collect();
        assert_eq!(ctx, [0, 1, 2, 3]);
        let gap: Vec<u64> = store
            .context_for(&store.windows("p")[4], 6)
            .iter()
            .map(|w| w.window_index)
            .collect();
        assert_eq!(gap, [5]);
    }

    #[test]
    fn fixture_search_ranks_by_overlap() {
        let k = FixtureKnowledge::bundled();
        let hits = k.search("what is atrial fibrillation", 3).unwrap();
        assert_eq!(hits[0].topic, "atrial fibrillation");
        assert!(k.search("zzzz", 3).unwrap().is_empty());
        assert_eq!(k.lookup("Tachycardia").unwrap().unwrap().topic, "tachycardia");
    }
}
