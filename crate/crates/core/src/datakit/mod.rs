//! Data model, CSV ingestion, synthetic Gaussian mixtures and persistence.

mod csv_io;
mod dataset;
mod mixture;
mod persist;

pub use csv_io::{ingest_csv, read_csv, write_csv, ColumnKind, IngestOptions};
pub use dataset::{Dataset, FeatureKind, FeatureMeta};
pub use mixture::{bayes_posterior, sample_mixture, GaussianMixtureSpec, PreparedMixture};
pub use persist::{
    from_document_str, load_dataset, load_document, save_dataset, save_document,
    to_document_string, FORMAT_VERSION,
};
