use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cvf_core::select::EditRecord;

/// Edits chosen for human validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSample {
    pub seed: u64,
    pub per_type_cap: usize,
    /// Sampled edits per question type.
    pub per_type: BTreeMap<String, usize>,
    /// Sorted.
    pub edit_ids: Vec<String>,
}

/// Restricts `manifest` to edits flipped under any of `flip_sources` (when
/// given), then keeps at most `per_type_cap` edits per question type, drawn
/// with a generator seeded by `seed`.
pub fn build_sample(
    manifest: &[EditRecord],
    flip_sources: Option<&[BTreeSet<String>]>,
    per_type_cap: usize,
    seed: u64,
) -> ReviewSample {
    let mut by_type: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in manifest {
        if let Some(sources) = flip_sources {
            if !sources.iter().any(|s| s.contains(&r.edit_id)) {
                continue;
            }
        }
        by_type.entry(&r.question_type).or_default().push(&r.edit_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edit_ids = Vec::new();
    let mut per_type = BTreeMap::new();
    for (qtype, mut ids) in by_type {
        ids.sort_unstable();
        ids.dedup();
        let picked: Vec<&str> = if ids.len() <= per_type_cap {
            ids
        } else {
            let mut k = index::sample(&mut rng, ids.len(), per_type_cap).into_vec();
            k.sort_unstable();
            k.into_iter().map(|i| ids[i]).collect()
        };
        per_type.insert(qtype.to_owned(), picked.len());
        edit_ids.extend(picked.into_iter().map(str::to_owned));
    }
    edit_ids.sort();
    ReviewSample {
        seed,
        per_type_cap,
        per_type,
        edit_ids,
    }
}
