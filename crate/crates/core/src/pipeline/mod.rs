//! Upload analysis and task orchestration: pluggable detector, classifier,
//! tagger and embedder stages, the detection post-processing rules, and a
//! worker-pool executor for task DAGs.

mod bbox;
mod dag;
mod plugins;
mod run;

pub use bbox::{postprocess_detections, BoundingBox, KeptBox, PostprocessConfig};
pub use dag::{execute_dag, DagRun, TaskDag, TaskOutcome, TraceEvent};
pub use plugins::{
    render_synthetic_ootd, stub_plugins, BandDetector, Classification, Classifier, Detector, Embedder,
    PaletteClassifier, PaletteTagger, PluginKind, PluginSet, ProjectionEmbedder, SyntheticGarment, Tagger,
    BAND_GAP, BAND_HEIGHT, BAND_WIDTH,
};
pub use run::{
    parallel_map, run_ootd_pipeline, AnalyzedCrop, AnalyzedOotd, CropError, PipelineConfig, StagingArea,
};
