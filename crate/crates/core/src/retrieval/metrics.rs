use rayon::prelude::*;

use super::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense `queries x gallery` Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..][..self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

pub fn distance_matrix<T: Scalar>(queries: &DescriptorSet<T>, gallery: &DescriptorSet<T>) -> Result<DistanceMatrix> {
    if queries.dim() != gallery.dim() {
        return Err(Error::shape(
            "distance_matrix",
            format!("query dimension {} vs gallery dimension {}", queries.dim(), gallery.dim()),
        ));
    }
    let cols = gallery.len();
    let mut data = vec![0.0; queries.len() * cols];
    data.par_chunks_mut(cols).zip(queries.entries()).for_each(|(row, q)| {
        for (d, g) in row.iter_mut().zip(gallery.entries()) {
            *d = q
                .vector
                .data()
                .iter()
                .zip(g.vector.data())
                .map(|(a, b)| {
                    let diff = a.wide() - b.wide();
                    diff * diff
                })
                .sum::<f64>()
                .sqrt();
        }
    });
    Ok(DistanceMatrix {
        rows: queries.len(),
        cols,
        data,
    })
}

/// Gallery indices by ascending distance; ties keep ascending index order.
pub fn rank_gallery(distances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    order
}

/// Where the ground truths of one query landed.
struct QueryHits {
    /// 1-based ranks of same-identity gallery items, ascending.
    hit_ranks: Vec<usize>,
}

/// Ranks the gallery for every query, dropping gallery items that share the
/// query's item id. Queries without any ground truth are returned by id.
fn per_query_hits<T: Scalar>(queries: &DescriptorSet<T>, gallery: &DescriptorSet<T>) -> Result<(Vec<Option<QueryHits>>, DistanceMatrix)> {
    let dist = distance_matrix(queries, gallery)?;
    let hits = queries
        .entries()
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let mut rank = 0;
            let mut hit_ranks = Vec::new();
            for gi in rank_gallery(dist.row(qi)) {
                let g = &gallery.entries()[gi];
                if g.item_id == q.item_id {
                    continue;
                }
                rank += 1;
                if g.person_id == q.person_id {
                    hit_ranks.push(rank);
                }
            }
            (!hit_ranks.is_empty()).then_some(QueryHits { hit_ranks })
        })
        .collect();
    Ok((hits, dist))
}

fn excluded_ids<T: Scalar>(queries: &DescriptorSet<T>, hits: &[Option<QueryHits>]) -> Vec<String> {
    queries
        .entries()
        .iter()
        .zip(hits)
        .filter(|(_, h)| h.is_none())
        .map(|(q, _)| q.item_id.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cmc {
    /// Recognition rate at ranks `1..=max_rank`.
    pub rates: Vec<f64>,
    pub evaluated: usize,
    /// Item ids of queries with no ground truth in the gallery.
    pub excluded: Vec<String>,
}

fn cmc_from_hits(hits: &[Option<QueryHits>], max_rank: usize) -> Result<Vec<f64>> {
    if max_rank == 0 {
        return Err(Error::InvalidArgument("max rank must be positive".into()));
    }
    let firsts: Vec<usize> = hits.iter().flatten().map(|h| h.hit_ranks[0]).collect();
    if firsts.is_empty() {
        return Err(Error::Validation("no query has a ground truth in the gallery".into()));
    }
    let mut counts = vec![0usize; max_rank];
    for r in firsts.iter().filter(|&&r| r <= max_rank) {
        counts[r - 1] += 1;
    }
    let n = firsts.len() as f64;
    let mut acc = 0;
    Ok(counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect())
}

/// Fraction of queries whose first same-identity match is within rank `r`.
pub fn cmc<T: Scalar>(queries: &DescriptorSet<T>, gallery: &DescriptorSet<T>, max_rank: usize) -> Result<Cmc> {
    let (hits, _) = per_query_hits(queries, gallery)?;
    Ok(Cmc {
        rates: cmc_from_hits(&hits, max_rank)?,
        evaluated: hits.iter().flatten().count(),
        excluded: excluded_ids(queries, &hits),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanAp {
    pub map: f64,
    /// AP of each evaluated query, in query order.
    pub per_query_ap: Vec<f64>,
    pub excluded: Vec<String>,
}

/// `AP = (1/G) sum_k k / rank_k` over the `G` ground-truth hits.
fn average_precision(h: &QueryHits) -> f64 {
    let g = h.hit_ranks.len() as f64;
    h.hit_ranks
        .iter()
        .enumerate()
        .map(|(k, &r)| (k + 1) as f64 / r as f64)
        .sum::<f64>()
        / g
}

pub fn mean_ap<T: Scalar>(queries: &DescriptorSet<T>, gallery: &DescriptorSet<T>) -> Result<MeanAp> {
    let (hits, _) = per_query_hits(queries, gallery)?;
    let per_query_ap: Vec<f64> = hits.iter().flatten().map(average_precision).collect();
    if per_query_ap.is_empty() {
        return Err(Error::Validation("no query has a ground truth in the gallery".into()));
    }
    Ok(MeanAp {
        map: per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64,
        per_query_ap,
        excluded: excluded_ids(queries, &hits),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub cmc: Vec<f64>,
    pub per_query_ap: Vec<f64>,
    pub map: f64,
    pub evaluated: usize,
    pub excluded: Vec<String>,
}

impl EvalReport {
    /// Recognition rate at `rank` (1-based); ranks past the curve read its last value.
    pub fn rate_at(&self, rank: usize) -> f64 {
        let i = rank.clamp(1, self.cmc.len()) - 1;
        self.cmc[i]
    }

    /// Rank-1, rank-5, rank-10 recognition and mAP as percentages.
    pub fn table_values(&self) -> [f64; 4] {
        [
            self.rate_at(1) * 100.0,
            self.rate_at(5) * 100.0,
            self.rate_at(10) * 100.0,
            self.map * 100.0,
        ]
    }
}

/// CMC and mAP in one ranking pass.
pub fn evaluate<T: Scalar>(queries: &DescriptorSet<T>, gallery: &DescriptorSet<T>, max_rank: usize) -> Result<EvalReport> {
    let (hits, _) = per_query_hits(queries, gallery)?;
    let cmc = cmc_from_hits(&hits, max_rank)?;
    let per_query_ap: Vec<f64> = hits.iter().flatten().map(average_precision).collect();
    Ok(EvalReport {
        cmc,
        map: per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64,
        evaluated: per_query_ap.len(),
        per_query_ap,
        excluded: excluded_ids(queries, &hits),
    })
}
