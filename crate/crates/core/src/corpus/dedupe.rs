use std::collections::{BTreeMap, HashSet};

use super::record::{ExclusionReason, RecordSet};
use super::{CorpusError, PrismaStage};

/// Excludes records without a DOI and all but the first record of every
/// normalized-DOI group, then appends a `dedupe` ledger stage.
pub fn dedupe_and_require_doi(mut set: RecordSet) -> Result<RecordSet, CorpusError> {
    let entering = set.active_count();
    let mut seen: HashSet<String> = HashSet::new();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for record in set.records.iter_mut().filter(|r| !r.is_excluded()) {
        let reason = match &record.doi {
            None => Some(ExclusionReason::MissingDoi),
            Some(doi) if !seen.insert(doi.clone()) => Some(ExclusionReason::DuplicateDoi),
            Some(_) => None,
        };
        if let Some(reason) = reason {
            record.exclude(reason)?;
            *reasons.entry(reason.as_str().to_string()).or_default() += 1;
        }
    }
    set.ledger
        .push(PrismaStage::from_reasons("dedupe", entering, reasons)?)?;
    Ok(set)
}
