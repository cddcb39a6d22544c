//! Attribution scores over a shared damped kernel: the Newton-step score,
//! every kernel/similarity baseline, slow validation oracles, and the
//! name-keyed strategy registry.

pub mod kernel;
pub mod oracle;
pub mod registry;
pub mod scores;

pub use kernel::{build_kernel, Kernel};
pub use registry::{
    lookup, method_names, registry, AttributionContext, AttributionStrategy, ScoringConfig,
    Target,
};
pub use scores::{
    apply_candidate_filter, candidate_filter, cosine, das_per_timestep, das_score, dtrak_score,
    gradient_similarity, journey_trak_score, newton_loo_delta, normalized_if_score,
    raw_similarity, tracincp_score, trak_score, AttributionResult,
};

use crate::error::Result;
use std::io::Write;

/// CSV emission: one row per (target, train sample), ranked per target.
pub fn write_scores_csv<W: Write>(w: &mut W, results: &[AttributionResult]) -> Result<()> {
    writeln!(w, "target_id,train_id,method,lambda,score,rank")?;
    for r in results {
        let ranks = r.ranks();
        for (i, &s) in r.scores.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.target_id, i, r.method, r.lambda, s, ranks[i]
            )?;
        }
    }
    Ok(())
}
