/// Pairwise Mann–Whitney count: two points per win, one per tie.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice_wins = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / 2.0 / (p * n) as f64
}

/// Each item's rank is counted directly: items with a higher score, plus
/// equal scores appearing earlier, come before it.
pub fn exhaustive_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let ahead = |k: usize| {
        (0..scores.len())
            .filter(|&j| scores[j] > scores[k] || (scores[j] == scores[k] && j < k))
            .collect::<Vec<_>>()
    };
    let mut at_positive: Vec<(usize, f64)> = labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l)
        .map(|(k, _)| {
            let before = ahead(k);
            let hits = 1 + before.iter().filter(|&&j| labels[j]).count();
            let rank = before.len() + 1;
            (rank, hits as f64 / rank as f64)
        })
        .collect();
    at_positive.sort_by_key(|&(rank, _)| rank);
    let total: f64 = at_positive.iter().map(|&(_, p)| p).sum();
    total / at_positive.len() as f64
}

/// Random scored instance with at least one label of each kind. Scores are
/// coarse half the time so ties are common.
pub fn random_instance(rng: &mut inhibited_softmax::RngStream, n: usize) -> (Vec<f64>, Vec<bool>) {
    let coarse = rng.unit() < 0.5;
    let scores = (0..n)
        .map(|_| {
            if coarse {
                (rng.unit() * 5.0).floor()
            } else {
                rng.normal(0.0, 1.0).unwrap()
            }
        })
        .collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.unit() < 0.4).collect();
    labels[0] = true;
    labels[n - 1] = false;
    (scores, labels)
}
