//! Sketch creation: sample, generate, label, featurize, train.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{BaselineStats, ZeroTupleGuess};
use super::format::FORMAT_VERSION;
use super::{DeepSketch, SketchError, SketchMetadata};
use crate::datastore::{
    draw_samples, true_cardinality, SampleSet, SampleTables, TableStore, DEFAULT_BUCKETS, DEFAULT_SAMPLE_SIZE,
};
use crate::featurizer::{build_vocabulary, featurize, LabeledSample};
use crate::mscn::{train, EpochRecord, MscnParams, MscnShape, TrainConfig, TrainEvent};
use crate::queryir::{GeneratorConfig, Query, QueryGenerator};
use crate::seed::{derive_seed, name_stream, streams};

const LABEL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SketchConfig {
    /// Tables covered; empty means every table in the store.
    pub tables: Vec<String>,
    pub num_queries: usize,
    pub sample_size: usize,
    /// Master seed; samples, queries, initialization and training each
    /// get a stream derived from it.
    pub seed: u64,
    pub created_at: i64,
    pub histogram_buckets: usize,
    pub max_tables: usize,
    pub zero_tuple_guess: ZeroTupleGuess,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
}

impl Default for SketchConfig {
    fn default() -> Self {
        SketchConfig {
            tables: Vec::new(),
            num_queries: 10_000,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            created_at: 0,
            histogram_buckets: DEFAULT_BUCKETS,
            max_tables: 6,
            zero_tuple_guess: ZeroTupleGuess::default(),
            generator: GeneratorConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl SketchConfig {
    /// Config hash recorded in the sketch metadata.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", name_stream(&json))
    }

    fn resolve_tables(&self, store: &TableStore) -> Result<Vec<String>, SketchError> {
        let bad = |m: String| Err(SketchError::InvalidConfig(m));
        let tables: BTreeSet<String> = if self.tables.is_empty() {
            store.schema().table_names().map(str::to_string).collect()
        } else {
            self.tables.iter().cloned().collect()
        };
        if tables.len() != self.tables.len() && !self.tables.is_empty() {
            return bad("duplicate table in selection".into());
        }
        for t in &tables {
            if store.table(t).is_none() {
                return bad(format!("unknown table {t}"));
            }
        }
        if tables.is_empty() {
            return bad("no tables selected".into());
        }
        if tables.len() > self.max_tables {
            return bad(format!(
                "{} tables selected, at most {} allowed",
                tables.len(),
                self.max_tables
            ));
        }
        if !store.schema().is_connected(&tables) {
            return bad("selected tables are not connected by foreign keys".into());
        }
        if self.sample_size == 0 {
            return bad("sample_size must be positive".into());
        }
        if self.histogram_buckets == 0 {
            return bad("histogram_buckets must be positive".into());
        }
        if let ZeroTupleGuess::Fixed { selectivity } = self.zero_tuple_guess {
            if !(0.0..=1.0).contains(&selectivity) {
                return bad("zero-tuple selectivity must lie in [0, 1]".into());
            }
        }
        self.generator.validate()?;
        self.train.validate()?;
        if self.num_queries == 0 {
            return Err(SketchError::EmptyCorpus);
        }
        Ok(tables.into_iter().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Queued,
    Generating,
    Labeling,
    Training,
    Done,
    Failed,
    Cancelled,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed | Phase::Cancelled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub phase: Phase,
    /// Completed fraction of the current phase.
    pub fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<EpochRecord>,
}

/// Receives progress and may request cancellation.
pub trait ProgressSink: Sync {
    fn report(&self, event: ProgressEvent);

    fn cancelled(&self) -> bool {
        false
    }
}

/// Discards progress.
pub struct NoProgress;

impl ProgressSink for NoProgress {
    fn report(&self, _: ProgressEvent) {}
}

fn step(sink: &dyn ProgressSink, phase: Phase, fraction: f64) -> Result<(), SketchError> {
    if sink.cancelled() {
        return Err(SketchError::Cancelled);
    }
    sink.report(ProgressEvent {
        phase,
        fraction,
        epoch: None,
    });
    Ok(())
}

/// Builds a sketch over `config.tables` of `store`. The result depends only
/// on the store contents and the config.
pub fn create_sketch(
    store: &TableStore,
    config: &SketchConfig,
    sink: &dyn ProgressSink,
) -> Result<DeepSketch, SketchError> {
    let tables = config.resolve_tables(store)?;
    let schema = store.schema().subset(&tables)?;

    step(sink, Phase::Generating, 0.0)?;
    let all = draw_samples(store, config.sample_size, derive_seed(config.seed, streams::SAMPLES));
    let sample_index = SampleSet {
        size: all.size,
        seed: all.seed,
        indices: all.indices.into_iter().filter(|(t, _)| tables.contains(t)).collect(),
    };
    let samples = SampleTables::materialize(store, &sample_index)?;
    let generator = QueryGenerator::new(&schema, store, &config.generator)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::GENERATOR));
    let n = config.num_queries;
    let mut queries: Vec<Query> = Vec::with_capacity(n);
    for i in 0..n {
        queries.push(generator.generate(&mut rng));
        if (i + 1) % LABEL_CHUNK == 0 {
            step(sink, Phase::Generating, (i + 1) as f64 / n as f64)?;
        }
    }

    step(sink, Phase::Labeling, 0.0)?;
    let mut cards: Vec<u64> = Vec::with_capacity(n);
    for chunk in queries.chunks(LABEL_CHUNK) {
        let labeled: Vec<u64> = chunk
            .par_iter()
            .map(|q| true_cardinality(store, q))
            .collect::<Result<_, _>>()?;
        cards.extend(labeled);
        step(sink, Phase::Labeling, cards.len() as f64 / n as f64 * 0.9)?;
    }
    let vocab = build_vocabulary(&schema, store, &cards, config.sample_size)?;
    let corpus: Vec<LabeledSample> = queries
        .iter()
        .zip(&cards)
        .map(|(q, &c)| Ok(LabeledSample::new(&vocab, featurize(&vocab, q, &samples)?, c)))
        .collect::<Result<_, SketchError>>()?;
    let baselines = BaselineStats::build(
        store,
        &schema,
        config.histogram_buckets,
        config.max_tables,
        config.zero_tuple_guess,
    )?;
    step(sink, Phase::Labeling, 1.0)?;

    step(sink, Phase::Training, 0.0)?;
    let dims = vocab.dims();
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::INIT));
    let init = MscnParams::<f32>::init(MscnShape::new(&dims, config.train.hidden_units), &mut init_rng);
    let train_cfg = TrainConfig {
        seed: derive_seed(config.seed, streams::TRAIN),
        ..config.train.clone()
    };
    let epochs = train_cfg.epochs as f64;
    let mut observer = |event: TrainEvent<'_>| {
        if sink.cancelled() {
            return ControlFlow::Break(());
        }
        let progress = match event {
            TrainEvent::Batch { epoch, done, total } => ProgressEvent {
                phase: Phase::Training,
                fraction: ((epoch - 1) as f64 + done as f64 / total as f64) / epochs,
                epoch: None,
            },
            TrainEvent::Epoch(record) => ProgressEvent {
                phase: Phase::Training,
                fraction: record.epoch as f64 / epochs,
                epoch: Some(record.clone()),
            },
        };
        sink.report(progress);
        ControlFlow::Continue(())
    };
    let (params, mut report) = train(init, &dims, &corpus, vocab.label_log_max(), &train_cfg, &mut observer)?;
    // wall-clock times would make otherwise identical files differ
    for e in &mut report.epochs {
        e.wall_ms = 0;
    }

    let metadata = SketchMetadata {
        format_version: FORMAT_VERSION,
        seed: config.seed,
        created_at: config.created_at,
        config_hash: config.hash(),
        tables,
        sample_size: config.sample_size,
        num_queries: n,
        config: config.clone(),
        train: report,
    };
    let sketch = DeepSketch::from_parts(metadata, schema, vocab, params, sample_index, samples, baselines)?;
    sink.report(ProgressEvent {
        phase: Phase::Done,
        fraction: 1.0,
        epoch: None,
    });
    Ok(sketch)
}
