//! Combined appearance/geometry distance, database search and top-k
//! evaluation.

mod combine;
mod eval;
mod search;

pub use combine::{combine_exponential, combine_polynomial, CombineParams, CombineRule};
pub use eval::{
    evaluate_leave_one_out, evaluate_leave_one_out_images, evaluate_manifest, evaluate_split,
    evaluate_split_images, format_grid, per_query_csv, topk_accuracy, write_per_query_csv,
    EvalReport, Protocol, QueryRecord, PER_QUERY_HEADER,
};
pub use search::{
    query_database, score_pair, DbEntry, GeometryCache, IdentityUnit, MatchCandidate, RankedResult,
    ReidDatabase,
};
