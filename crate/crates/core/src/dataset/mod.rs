//! Procedural training corpus: objects, multi-view renders under sampled
//! lighting, inconsistent-lighting composites and refiner pairs.

pub mod augment;
pub mod corpus;
pub mod objects;

pub use augment::{
    compose_inconsistent, compose_with_rect, degrade, make_refiner_pair, make_refiner_pair_with, sample_holes, Degradation, Rect,
    RefinerSample,
};
pub use corpus::{
    build_dataset, generate_corpus, load_refiner_sample, load_training_sample, make_training_sample, object_samples,
    object_seed, render_views, Manifest, ObjectSamples, MANIFEST_NAME, Record, RecordKind, TrainingSample, ViewRenders,
};
pub use objects::{gen_object, gen_object_seeded, tag_id, Pattern, ProceduralObject, Shape, TAGS};
