//! Dataset assembly: building, record files, mixtures and summaries.

mod builder;
mod mix;
mod records;
mod stats;

pub use builder::{
    build_atom_base, build_composite, build_datasets, rule_codes, BuildConfig, BuildError, BuildStats, BuiltDatasets,
    SetStats, ATOM_BASE,
};
pub use mix::{mix, resample, MixComponent, MixError, MixtureSpec, Rate};
pub use records::{
    emit_records, load_records, to_rl_records, to_sft_records, DatasetRecord, LineRecord, RecordError, RecordKind,
    RecordMeta, Sample,
};
pub use stats::{record_stats, RecordStats};

/// A record-to-record rewrite applied after building, for producing prompt
/// variants such as rephrased or translated instructions.
pub trait RecordTransform {
    fn transform(&self, record: DatasetRecord) -> DatasetRecord;
}

impl<F: Fn(DatasetRecord) -> DatasetRecord> RecordTransform for F {
    fn transform(&self, record: DatasetRecord) -> DatasetRecord {
        self(record)
    }
}

pub fn apply_transform(records: Vec<DatasetRecord>, t: &dyn RecordTransform) -> Vec<DatasetRecord> {
    records.into_iter().map(|r| t.transform(r)).collect()
}
