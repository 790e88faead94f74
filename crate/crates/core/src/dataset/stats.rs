use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::records::{DatasetRecord, RecordKind};

/// Summary of a record file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStats {
    pub records: usize,
    pub sft: usize,
    pub rl: usize,
    pub by_dataset: BTreeMap<String, usize>,
    pub length_histogram: BTreeMap<usize, usize>,
    pub unit_tests: usize,
    pub distinct_prompts: usize,
}

pub fn record_stats(records: &[DatasetRecord]) -> RecordStats {
    let mut s = RecordStats { records: records.len(), ..RecordStats::default() };
    let mut prompts = std::collections::HashSet::new();
    for r in records {
        match r.kind {
            RecordKind::Sft => s.sft += 1,
            RecordKind::Rl => s.rl += 1,
        }
        *s.by_dataset.entry(r.meta.dataset.clone()).or_default() += 1;
        *s.length_histogram.entry(r.meta.length).or_default() += 1;
        s.unit_tests += r.unit_tests.as_ref().map_or(0, Vec::len);
        prompts.insert(r.prompt.as_str());
    }
    s.distinct_prompts = prompts.len();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::records::RecordMeta;

    #[test]
    fn counts_by_kind_and_length() {
        let meta = |len| RecordMeta { id: format!("r{len}"), dataset: "d".into(), atoms: vec![], length: len, seed: 0 };
        let recs = vec![
            DatasetRecord::sft("p".into(), "r".into(), meta(2)),
            DatasetRecord::rl("p".into(), vec!["assert 1".into(), "assert 2".into()], meta(3)),
            DatasetRecord::rl("q".into(), vec!["assert 1".into()], meta(3)),
        ];
        let s = record_stats(&recs);
        assert_eq!((s.records, s.sft, s.rl, s.unit_tests, s.distinct_prompts), (3, 1, 2, 3, 2));
        assert_eq!(s.length_histogram, BTreeMap::from([(2, 1), (3, 2)]));
        assert_eq!(record_stats(&[]), RecordStats::default());
    }
}
