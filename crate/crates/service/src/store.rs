//! In-memory session state: immutable datasets, mutable views, and the
//! assignment / pair-matrix caches that keep edits incremental.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use cpcp_core::binning::{
    assign_column, default_config, merge_at_boundary, move_boundary, split_cluster,
    AssignmentVector,
};
use cpcp_core::bundling::{assemble_layout, count_pairs, KeepMask, PairCountMatrix};
use cpcp_core::geometry::{render_svg, PlotFrame, SvgStyle};
use cpcp_core::ingest::{parse_table, IngestError, IngestOptions};
use cpcp_core::model::{ClusterConfig, DatasetId, ModelError, DEFAULT_K};
use cpcp_core::{BinningError, BundleLayout64, Dataset64, ViewState64};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

pub type ViewId = String;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown view `{0}`")]
    UnknownView(String),
    #[error("view is at version {current}, request cited {cited}")]
    VersionConflict { current: u64, cited: u64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] cpcp_core::Error),
    #[error("persisting views failed: {0}")]
    Persist(String),
}

impl ServiceError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UnknownDataset(_) => "UnknownDataset",
            Self::UnknownView(_) => "UnknownView",
            Self::VersionConflict { .. } => "VersionConflict",
            Self::Ingest(e) => e.name(),
            Self::Core(e) => e.name(),
            Self::Persist(_) => "Persist",
        }
    }
}

impl From<ModelError> for ServiceError {
    fn from(e: ModelError) -> Self {
        Self::Core(e.into())
    }
}

impl From<BinningError> for ServiceError {
    fn from(e: BinningError) -> Self {
        Self::Core(e.into())
    }
}

impl From<cpcp_core::BundlingError> for ServiceError {
    fn from(e: cpcp_core::BundlingError) -> Self {
        Self::Core(e.into())
    }
}

/// Body of a view-creation request.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRequest {
    pub axis_order: Vec<String>,
    /// Cluster count for every numeric axis without a more specific setting.
    #[serde(default)]
    pub k: Option<usize>,
    /// Per-axis cluster counts.
    #[serde(default)]
    pub bins: BTreeMap<String, usize>,
    /// Per-axis explicit boundaries; wins over `bins` and `k`.
    #[serde(default)]
    pub boundaries: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub w_max: Option<f64>,
    #[serde(default)]
    pub anomaly_threshold: Option<f64>,
    #[serde(default)]
    pub curve_tension: Option<f64>,
    #[serde(default)]
    pub frame: Option<PlotFrame<f64>>,
}

/// One interactive edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    ReorderAxes {
        axis_order: Vec<String>,
    },
    MoveBoundary {
        axis: String,
        index: usize,
        value: f64,
    },
    SplitCluster {
        axis: String,
        position: f64,
    },
    MergeAtBoundary {
        axis: String,
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRequest {
    pub version: u64,
    #[serde(flatten)]
    pub mutation: Mutation,
}

/// Builds the initial view state for a request.
pub fn view_from_request(
    dataset: &Dataset64,
    req: &ViewRequest,
) -> Result<ViewState64, ServiceError> {
    let mut configs = Vec::with_capacity(req.axis_order.len());
    for axis in &req.axis_order {
        let column = dataset
            .column(axis)
            .ok_or_else(|| ModelError::UnknownAxis(axis.clone()))?;
        let config = match req.boundaries.get(axis) {
            Some(b) => ClusterConfig::from_boundaries(axis.clone(), b.clone()),
            None => {
                let k = req.bins.get(axis).copied().or(req.k).unwrap_or(DEFAULT_K);
                default_config(column, k)?
            }
        };
        configs.push(config);
    }
    let mut state = ViewState64::new(dataset.id().clone(), req.axis_order.clone(), configs);
    if let Some(w) = req.w_max {
        state.w_max = w;
    }
    if let Some(t) = req.anomaly_threshold {
        state.anomaly_threshold = t;
    }
    if let Some(t) = req.curve_tension {
        state.curve_tension = t;
    }
    if let Some(f) = req.frame {
        state.frame = f;
    }
    state.validate(dataset)?;
    Ok(state)
}

fn axis_config<'a>(
    state: &'a ViewState64,
    axis: &str,
) -> Result<&'a ClusterConfig<f64>, ServiceError> {
    state
        .config(axis)
        .filter(|_| state.axis_order.iter().any(|a| a == axis))
        .ok_or_else(|| ModelError::UnknownAxis(axis.to_owned()).into())
}

/// Applies one edit to a view state, producing the next state.
pub fn apply_mutation(
    state: &ViewState64,
    mutation: &Mutation,
) -> Result<ViewState64, ServiceError> {
    Ok(match mutation {
        Mutation::ReorderAxes { axis_order } => state.reordered(axis_order.clone())?,
        Mutation::MoveBoundary { axis, index, value } => {
            state.with_config(move_boundary(axis_config(state, axis)?, *index, *value)?)
        }
        Mutation::SplitCluster { axis, position } => {
            state.with_config(split_cluster(axis_config(state, axis)?, *position)?)
        }
        Mutation::MergeAtBoundary { axis, index } => {
            state.with_config(merge_at_boundary(axis_config(state, axis)?, *index)?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct AssignKey {
    dataset: DatasetId,
    axis: String,
    config: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct MaskKey {
    dataset: DatasetId,
    axes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PairKey {
    left: AssignKey,
    right: AssignKey,
    mask: MaskKey,
}

fn assign_key(state: &ViewState64, axis: &str) -> AssignKey {
    AssignKey {
        dataset: state.dataset_id.clone(),
        axis: axis.to_owned(),
        config: state.config(axis).map_or(0, ClusterConfig::fingerprint),
    }
}

fn mask_key(state: &ViewState64) -> MaskKey {
    let mut axes = state.axis_order.clone();
    axes.sort();
    MaskKey {
        dataset: state.dataset_id.clone(),
        axes,
    }
}

fn pair_keys(state: &ViewState64) -> Vec<PairKey> {
    let mask = mask_key(state);
    state
        .axis_order
        .windows(2)
        .map(|w| PairKey {
            left: assign_key(state, &w[0]),
            right: assign_key(state, &w[1]),
            mask: mask.clone(),
        })
        .collect()
}

/// How many cache entries were computed rather than reused.
#[derive(Debug, Default)]
pub struct CacheCounters {
    pub assignments: AtomicU64,
    pub masks: AtomicU64,
    pub pairs: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub assignments_computed: u64,
    pub masks_computed: u64,
    pub pairs_computed: u64,
    pub assignments_cached: usize,
    pub pairs_cached: usize,
}

#[derive(Debug)]
struct ViewEntry {
    state: ViewState64,
    version: u64,
    layout: Arc<BundleLayout64>,
    body: Arc<Vec<u8>>,
}

/// A view as returned to callers.
#[derive(Debug, Clone)]
pub struct ViewSnapshot {
    pub view_id: ViewId,
    pub version: u64,
    pub state: ViewState64,
    pub layout: Arc<BundleLayout64>,
    /// Serialized `layout`, byte-stable between edits.
    pub body: Arc<Vec<u8>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PersistedView {
    view_id: ViewId,
    version: u64,
    state: ViewState64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct PersistedViews {
    views: Vec<PersistedView>,
}

#[derive(Debug, Default)]
pub struct SessionStore {
    datasets: RwLock<HashMap<DatasetId, Arc<Dataset64>>>,
    views: RwLock<HashMap<ViewId, Arc<Mutex<ViewEntry>>>>,
    /// Persisted views whose dataset has not been uploaded in this process.
    dormant: Mutex<HashMap<ViewId, PersistedView>>,
    assignments: RwLock<HashMap<AssignKey, Arc<AssignmentVector>>>,
    masks: RwLock<HashMap<MaskKey, Arc<KeepMask>>>,
    pairs: RwLock<HashMap<PairKey, Arc<PairCountMatrix>>>,
    persist_path: Option<PathBuf>,
    persist_lock: Mutex<()>,
    counters: CacheCounters,
    ingest: IngestOptions,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Store that writes every view through to `path` and restores the
    /// views found there. Restored views stay dormant until their dataset
    /// (identified by content) is uploaded again.
    pub fn with_persistence(path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let path = path.into();
        let mut store = Self::new();
        if path.exists() {
            let text = std::fs::read(&path).map_err(|e| ServiceError::Persist(e.to_string()))?;
            let saved: PersistedViews =
                serde_json::from_slice(&text).map_err(|e| ServiceError::Persist(e.to_string()))?;
            let dormant = store.dormant.get_mut().expect("fresh mutex");
            for v in saved.views {
                dormant.insert(v.view_id.clone(), v);
            }
        }
        store.persist_path = Some(path);
        Ok(store)
    }

    pub fn with_ingest_options(mut self, opts: IngestOptions) -> Self {
        self.ingest = opts;
        self
    }

    pub fn persist_path(&self) -> Option<&Path> {
        self.persist_path.as_deref()
    }

    /// Parses and registers a dataset. Re-uploading identical bytes returns
    /// the existing dataset.
    pub fn upload(&self, bytes: &[u8], name: Option<&str>) -> Result<Arc<Dataset64>, ServiceError> {
        let mut dataset: Dataset64 = parse_table(bytes, &self.ingest)?;
        if let Some(name) = name {
            dataset = dataset.with_name(name);
        }
        let id = dataset.id().clone();
        let dataset = {
            let mut map = self.datasets.write().expect("datasets lock");
            map.entry(id.clone())
                .or_insert_with(|| Arc::new(dataset))
                .clone()
        };
        self.activate_dormant(&dataset);
        Ok(dataset)
    }

    /// Registers an already-built dataset under its own id.
    pub fn insert_dataset(&self, dataset: Dataset64) -> Arc<Dataset64> {
        let dataset = Arc::new(dataset);
        self.datasets
            .write()
            .expect("datasets lock")
            .insert(dataset.id().clone(), dataset.clone());
        self.activate_dormant(&dataset);
        dataset
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset64>, ServiceError> {
        self.datasets
            .read()
            .expect("datasets lock")
            .get(&DatasetId::new(id))
            .cloned()
            .ok_or_else(|| ServiceError::UnknownDataset(id.to_owned()))
    }

    fn activate_dormant(&self, dataset: &Dataset64) {
        let waiting: Vec<PersistedView> = {
            let mut dormant = self.dormant.lock().expect("dormant lock");
            let ids: Vec<ViewId> = dormant
                .values()
                .filter(|v| &v.state.dataset_id == dataset.id())
                .map(|v| v.view_id.clone())
                .collect();
            ids.iter().filter_map(|id| dormant.remove(id)).collect()
        };
        for v in waiting {
            match self.entry_for(dataset, v.state, v.version) {
                Ok(entry) => {
                    debug!(view = %v.view_id, "restored persisted view");
                    self.views
                        .write()
                        .expect("views lock")
                        .insert(v.view_id, Arc::new(Mutex::new(entry)));
                }
                Err(e) => warn!(view = %v.view_id, error = %e, "dropping persisted view"),
            }
        }
    }

    fn cached_assignment(
        &self,
        dataset: &Dataset64,
        state: &ViewState64,
        axis: &str,
    ) -> Result<Arc<AssignmentVector>, ServiceError> {
        let key = assign_key(state, axis);
        if let Some(hit) = self.assignments.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let column = dataset
            .column(axis)
            .ok_or_else(|| ModelError::UnknownAxis(axis.to_owned()))?;
        let config = state
            .config(axis)
            .ok_or_else(|| ModelError::MissingConfig(axis.to_owned()))?;
        let computed = Arc::new(assign_column(column, config)?);
        self.counters.assignments.fetch_add(1, Ordering::Relaxed);
        self.assignments
            .write()
            .expect("cache lock")
            .insert(key, computed.clone());
        Ok(computed)
    }

    /// Layout for a state, reusing every cached assignment and pair matrix
    /// whose inputs are unchanged.
    fn compute_layout(
        &self,
        dataset: &Dataset64,
        state: &ViewState64,
    ) -> Result<BundleLayout64, ServiceError> {
        state.validate(dataset)?;
        let assignments = state
            .axis_order
            .iter()
            .map(|axis| self.cached_assignment(dataset, state, axis))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&AssignmentVector> = assignments.iter().map(|a| a.as_ref()).collect();

        let mkey = mask_key(state);
        let cached_mask = self.masks.read().expect("cache lock").get(&mkey).cloned();
        let mask = match cached_mask {
            Some(m) => m,
            None => {
                let m = Arc::new(KeepMask::from_assignments(&refs));
                self.counters.masks.fetch_add(1, Ordering::Relaxed);
                self.masks
                    .write()
                    .expect("cache lock")
                    .insert(mkey, m.clone());
                m
            }
        };

        let mut matrices = Vec::with_capacity(refs.len().saturating_sub(1));
        for (p, key) in pair_keys(state).into_iter().enumerate() {
            let cached = self.pairs.read().expect("cache lock").get(&key).cloned();
            let m = match cached {
                Some(m) => m,
                None => {
                    let m = Arc::new(count_pairs(refs[p], refs[p + 1], &mask)?);
                    self.counters.pairs.fetch_add(1, Ordering::Relaxed);
                    self.pairs
                        .write()
                        .expect("cache lock")
                        .insert(key, m.clone());
                    m
                }
            };
            matrices.push(m);
        }
        let mrefs: Vec<&PairCountMatrix> = matrices.iter().map(|m| m.as_ref()).collect();
        Ok(assemble_layout(state, dataset, &refs, &mrefs, &mask)?)
    }

    fn entry_for(
        &self,
        dataset: &Dataset64,
        state: ViewState64,
        version: u64,
    ) -> Result<ViewEntry, ServiceError> {
        let layout = self.compute_layout(dataset, &state)?;
        let body = serde_json::to_vec(&layout).map_err(|e| ServiceError::Persist(e.to_string()))?;
        Ok(ViewEntry {
            state,
            version,
            layout: Arc::new(layout),
            body: Arc::new(body),
        })
    }

    fn snapshot(view_id: &str, entry: &ViewEntry) -> ViewSnapshot {
        ViewSnapshot {
            view_id: view_id.to_owned(),
            version: entry.version,
            state: entry.state.clone(),
            layout: entry.layout.clone(),
            body: entry.body.clone(),
        }
    }

    pub fn create_view(
        &self,
        dataset_id: &str,
        req: &ViewRequest,
    ) -> Result<ViewSnapshot, ServiceError> {
        let dataset = self.dataset(dataset_id)?;
        let state = view_from_request(&dataset, req)?;
        let entry = self.entry_for(&dataset, state, 1)?;
        let view_id = uuid::Uuid::new_v4().simple().to_string();
        let snap = Self::snapshot(&view_id, &entry);
        self.views
            .write()
            .expect("views lock")
            .insert(view_id, Arc::new(Mutex::new(entry)));
        self.persist()?;
        Ok(snap)
    }

    fn view_entry(&self, view_id: &str) -> Result<Arc<Mutex<ViewEntry>>, ServiceError> {
        self.views
            .read()
            .expect("views lock")
            .get(view_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownView(view_id.to_owned()))
    }

    pub fn view(&self, view_id: &str) -> Result<ViewSnapshot, ServiceError> {
        let entry = self.view_entry(view_id)?;
        let guard = entry.lock().expect("view lock");
        Ok(Self::snapshot(view_id, &guard))
    }

    /// Applies one mutation. The caller must cite the version it last saw.
    /// Mutations on one view are serialized by the view's lock.
    pub fn patch_view(
        &self,
        view_id: &str,
        req: &PatchRequest,
    ) -> Result<ViewSnapshot, ServiceError> {
        let entry = self.view_entry(view_id)?;
        let snap = {
            let mut guard = entry.lock().expect("view lock");
            if guard.version != req.version {
                return Err(ServiceError::VersionConflict {
                    current: guard.version,
                    cited: req.version,
                });
            }
            let dataset = self.dataset(guard.state.dataset_id.as_str())?;
            let next = apply_mutation(&guard.state, &req.mutation)?;
            let version = guard.version + 1;
            *guard = self.entry_for(&dataset, next, version)?;
            Self::snapshot(view_id, &guard)
        };
        self.prune_caches();
        self.persist()?;
        Ok(snap)
    }

    pub fn svg(&self, view_id: &str) -> Result<String, ServiceError> {
        let snap = self.view(view_id)?;
        Ok(render_svg(&snap.layout, &SvgStyle::default()))
    }

    pub fn view_ids(&self) -> Vec<ViewId> {
        let mut ids: Vec<_> = self
            .views
            .read()
            .expect("views lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Drops cache entries no live view references any more.
    pub fn prune_caches(&self) {
        let states: Vec<ViewState64> = {
            let views = self.views.read().expect("views lock");
            views
                .values()
                .map(|e| e.lock().expect("view lock").state.clone())
                .collect()
        };
        let mut akeys = HashSet::new();
        let mut mkeys = HashSet::new();
        let mut pkeys = HashSet::new();
        for s in &states {
            for axis in &s.axis_order {
                akeys.insert(assign_key(s, axis));
            }
            mkeys.insert(mask_key(s));
            pkeys.extend(pair_keys(s));
        }
        self.assignments
            .write()
            .expect("cache lock")
            .retain(|k, _| akeys.contains(k));
        self.masks
            .write()
            .expect("cache lock")
            .retain(|k, _| mkeys.contains(k));
        self.pairs
            .write()
            .expect("cache lock")
            .retain(|k, _| pkeys.contains(k));
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats {
            assignments_computed: self.counters.assignments.load(Ordering::Relaxed),
            masks_computed: self.counters.masks.load(Ordering::Relaxed),
            pairs_computed: self.counters.pairs.load(Ordering::Relaxed),
            assignments_cached: self.assignments.read().expect("cache lock").len(),
            pairs_cached: self.pairs.read().expect("cache lock").len(),
        }
    }

    fn persist(&self) -> Result<(), ServiceError> {
        let Some(path) = &self.persist_path else {
            return Ok(());
        };
        let _guard = self.persist_lock.lock().expect("persist lock");
        let mut views: Vec<PersistedView> = {
            let live = self.views.read().expect("views lock");
            live.iter()
                .map(|(id, e)| {
                    let e = e.lock().expect("view lock");
                    PersistedView {
                        view_id: id.clone(),
                        version: e.version,
                        state: e.state.clone(),
                    }
                })
                .collect()
        };
        views.extend(self.dormant.lock().expect("dormant lock").values().cloned());
        views.sort_by(|a, b| a.view_id.cmp(&b.view_id));
        let body = serde_json::to_vec_pretty(&PersistedViews { views })
            .map_err(|e| ServiceError::Persist(e.to_string()))?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .map_err(|e| ServiceError::Persist(e.to_string()))?;
        std::io::Write::write_all(&mut tmp, &body)
            .map_err(|e| ServiceError::Persist(e.to_string()))?;
        tmp.persist(path)
            .map_err(|e| ServiceError::Persist(e.to_string()))?;
        Ok(())
    }
}
