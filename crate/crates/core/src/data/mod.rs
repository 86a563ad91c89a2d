//! Raw record ingestion, encoding into model space, and stratified splits.

mod dataset;
mod raw;
mod schema;

pub use dataset::{encode, split, stratified_split_indices, Dataset, DatasetFile, DATASET_FORMAT, DATASET_VERSION};
pub use raw::RawTable;
pub use schema::{
    fit_schema, Block, BlockKind, DecodedValue, EncodingSchema, LogStats, Role, VariableKind, VariableSpec,
    POSITIVE_FLOOR,
};
