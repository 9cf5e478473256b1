use egoreid::retrieval::*;
use egoreid::rng::rng_from;
use egoreid::DescriptorSetF64;
use rand::seq::SliceRandom;
use rand::Rng;

type Item = (String, i32, Vec<f64>);

/// Straightforward re-implementation: sort `(distance, index)` pairs, walk
/// the list, and accumulate precision at every hit.
fn oracle(queries: &[Item], gallery: &[Item], max_rank: usize) -> (Vec<f64>, f64) {
    let mut first_hits = Vec::new();
    let mut aps = Vec::new();
    for (qid, qp, qv) in queries {
        let mut scored: Vec<(f64, usize)> = gallery
            .iter()
            .enumerate()
            .filter(|(_, (gid, ..))| gid != qid)
            .map(|(i, (_, _, gv))| (qv.iter().zip(gv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut hits = 0;
        let mut precision_sum = 0.0;
        let mut first = None;
        for (pos, (_, i)) in scored.iter().enumerate() {
            if gallery[*i].1 == *qp {
                hits += 1;
                precision_sum += hits as f64 / (pos + 1) as f64;
                first.get_or_insert(pos + 1);
            }
        }
        if let Some(f) = first {
            first_hits.push(f);
            aps.push(precision_sum / hits as f64);
        }
    }
    let n = first_hits.len() as f64;
    let cmc = (1..=max_rank)
        .map(|r| first_hits.iter().filter(|&&f| f <= r).count() as f64 / n)
        .collect();
    (cmc, aps.iter().sum::<f64>() / aps.len() as f64)
}

/// 50 descriptors over 5 identities; small integer coordinates so ties occur.
fn instance(seed: u64, quantized: bool) -> Vec<Item> {
    let mut rng = rng_from(seed);
    (0..50)
        .map(|i| {
            let pid = rng.gen_range(0..5);
            let v = (0..6)
                .map(|_| if quantized { rng.gen_range(0..3) as f64 } else { rng.gen_range(-1.0..1.0) })
                .collect();
            (format!("item{i}"), pid, v)
        })
        .collect()
}

fn set(items: &[Item]) -> DescriptorSetF64 {
    DescriptorSet::from_vectors(items.iter().cloned()).unwrap()
}

#[test]
fn matches_brute_force_oracle() {
    for seed in 0..20 {
        let items = instance(seed, seed % 2 == 0);
        let (q, g) = items.split_at(15);
        for (queries, gallery) in [(&items[..], &items[..]), (q, g)] {
            let report = evaluate(&set(queries), &set(gallery), 20);
            let (cmc, map) = oracle(queries, gallery, 20);
            match report {
                Ok(r) => {
                    assert_eq!(r.cmc, cmc, "seed {seed}");
                    assert_eq!(r.map, map, "seed {seed}");
                    assert!(r.cmc.windows(2).all(|w| w[0] <= w[1]));
                }
                Err(_) => assert!(cmc.iter().all(|v| v.is_nan())),
            }
        }
    }
}

#[test]
fn gallery_order_does_not_matter_without_ties() {
    let items = instance(40, false);
    let (q, g) = items.split_at(10);
    let base = evaluate(&set(q), &set(g), 10).unwrap();
    let mut shuffled = g.to_vec();
    shuffled.shuffle(&mut rng_from(1));
    let again = evaluate(&set(q), &set(&shuffled), 10).unwrap();
    assert_eq!(base.cmc, again.cmc);
    assert!((base.map - again.map).abs() < 1e-12);
}

#[test]
fn rotating_all_descriptors_keeps_the_ranking() {
    let items = instance(41, false);
    let (c, s) = (0.6f64, 0.8f64);
    let rotated: Vec<Item> = items
        .iter()
        .map(|(id, p, v)| {
            let mut r = v.clone();
            r[0] = c * v[0] - s * v[1];
            r[1] = s * v[0] + c * v[1];
            (id.clone(), *p, r)
        })
        .collect();
    let a = evaluate(&set(&items), &set(&items), 10).unwrap();
    let b = evaluate(&set(&rotated), &set(&rotated), 10).unwrap();
    assert_eq!(a.cmc, b.cmc);
    assert!((a.map - b.map).abs() < 1e-12);
}

#[test]
fn single_ground_truth_map_equals_mean_reciprocal_rank() {
    let mut rng = rng_from(7);
    let queries: Vec<Item> = (0..10).map(|i| (format!("q{i}"), i, vec![rng.gen_range(-1.0..1.0); 3])).collect();
    let gallery: Vec<Item> = (0..10).map(|i| (format!("g{i}"), i, vec![rng.gen_range(-1.0..1.0); 3])).collect();
    let r = evaluate(&set(&queries), &set(&gallery), 10).unwrap();
    let (cmc, _) = oracle(&queries, &gallery, 10);
    assert_eq!(r.cmc, cmc);
    // With one truth per query AP is 1/rank, so AP = 1 exactly when rank-1 hits.
    let ones = r.per_query_ap.iter().filter(|&&ap| ap == 1.0).count() as f64;
    assert_eq!(ones / 10.0, r.rate_at(1));
}

#[test]
fn perfect_clusters_score_one_hundred() {
    let items: Vec<Item> = (0..12).map(|i| (format!("x{i}"), i / 3, vec![(i / 3) as f64 * 10.0, (i % 3) as f64 * 0.1])).collect();
    let r = evaluate(&set(&items), &set(&items), 5).unwrap();
    assert_eq!(table_row(&r), "100.00 100.00 100.00 100.00");
}

#[test]
fn descriptor_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let items = instance(8, false);
    let original: egoreid::DescriptorSetF32 = DescriptorSet::from_vectors(items).unwrap();
    let path = dir.path().join("d.nstd");
    save_descriptors(&original, &path).unwrap();
    let back = load_descriptors::<f32>(&path).unwrap();
    assert_eq!(back, original);
    assert!(matches!(load_descriptors::<f32>(dir.path().join("missing.nstd")), Err(egoreid::Error::Io { .. })));
}
