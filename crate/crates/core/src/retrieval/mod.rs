//! Euclidean ranking of descriptors and CMC / mAP evaluation with multiple
//! ground truths per query.
//!
//! A gallery item whose item id equals the query's is removed from that
//! query's ranking, so a single set can serve as both queries and gallery
//! (leave-one-out). Queries with no same-identity gallery item are excluded
//! and reported rather than scored as zero.

mod descriptor;
mod metrics;
mod report;

pub use descriptor::{load_descriptors, save_descriptors, DescriptorEntry, DescriptorSet, DESCRIPTOR_MAGIC};
pub use metrics::{cmc, distance_matrix, evaluate, mean_ap, rank_gallery, Cmc, DistanceMatrix, EvalReport, MeanAp};
pub use report::{parse_report_csv, render_report, table_row, ParsedCsv, RenderedReport, CSV_HEADER, TABLE_HEADER};
