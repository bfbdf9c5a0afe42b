//! One-to-one keypoint matching under a distance tolerance, and the
//! repeatability rate built on it.
//!
//! Correspondence is the identity map: the supported degradations are all
//! photometric, so a repeated detection must appear at (nearly) the same
//! pixel. `repeatability` uses maximum-cardinality matching; the greedy
//! nearest-pair strategy is kept for comparison because it undercounts on
//! crossing configurations (see `greedy_undercounts_crossing_pairs`).

use crate::detect::Keypoint;
use crate::error::{Error, Result};
use crate::{real, Real};

fn within_eps<S: Real>(a: &Keypoint<S>, b: &Keypoint<S>, eps: S) -> bool {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy <= eps * eps
}

/// Candidate pairs sorted by squared distance (then indices, so the order
/// is total and deterministic).
fn candidate_pairs<S: Real>(
    ref_kps: &[Keypoint<S>],
    tgt_kps: &[Keypoint<S>],
    eps: S,
) -> Vec<(S, usize, usize)> {
    let mut pairs = Vec::new();
    for (i, a) in ref_kps.iter().enumerate() {
        for (j, b) in tgt_kps.iter().enumerate() {
            if within_eps(a, b, eps) {
                let dx = a.x - b.x;
                let dy = a.y - b.y;
                pairs.push((dx * dx + dy * dy, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    pairs
}

/// Greedy matching: walk candidate pairs by increasing distance, taking a
/// pair whenever both endpoints are still free. Not maximum in general.
pub fn match_greedy<S: Real>(
    ref_kps: &[Keypoint<S>],
    tgt_kps: &[Keypoint<S>],
    eps: S,
) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; ref_kps.len()];
    let mut tgt_used = vec![false; tgt_kps.len()];
    let mut matches = Vec::new();
    for (_, i, j) in candidate_pairs(ref_kps, tgt_kps, eps) {
        if !ref_used[i] && !tgt_used[j] {
            ref_used[i] = true;
            tgt_used[j] = true;
            matches.push((i, j));
        }
    }
    matches
}

/// Maximum-cardinality matching on the within-eps bipartite graph
/// (augmenting paths). Cardinality is unique, so the rate built on it is
/// deterministic even though the matched pair set need not be.
pub fn match_optimal<S: Real>(
    ref_kps: &[Keypoint<S>],
    tgt_kps: &[Keypoint<S>],
    eps: S,
) -> Vec<(usize, usize)> {
    let adjacency: Vec<Vec<usize>> = ref_kps
        .iter()
        .map(|a| {
            tgt_kps
                .iter()
                .enumerate()
                .filter(|(_, b)| within_eps(a, b, eps))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    let mut tgt_owner: Vec<Option<usize>> = vec![None; tgt_kps.len()];

    fn augment(
        i: usize,
        adjacency: &[Vec<usize>],
        tgt_owner: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &j in &adjacency[i] {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let free = match tgt_owner[j] {
                None => true,
                Some(owner) => augment(owner, adjacency, tgt_owner, visited),
            };
            if free {
                tgt_owner[j] = Some(i);
                return true;
            }
        }
        false
    }

    for i in 0..ref_kps.len() {
        let mut visited = vec![false; tgt_kps.len()];
        augment(i, &adjacency, &mut tgt_owner, &mut visited);
    }

    let mut matches: Vec<(usize, usize)> = tgt_owner
        .iter()
        .enumerate()
        .filter_map(|(j, owner)| owner.map(|i| (i, j)))
        .collect();
    matches.sort_unstable();
    matches
}

/// Fraction of repeated detections: maximum number of one-to-one matches
/// within `eps` pixels, divided by the smaller list size. Two empty lists
/// agree vacuously (1.0); one empty list cannot agree (0.0).
pub fn repeatability<S: Real>(
    ref_kps: &[Keypoint<S>],
    tgt_kps: &[Keypoint<S>],
    eps: S,
) -> Result<S> {
    if !(eps > S::zero()) {
        return Err(Error::Domain(format!("matching eps {eps} must be > 0")));
    }
    if ref_kps.is_empty() && tgt_kps.is_empty() {
        return Ok(S::one());
    }
    if ref_kps.is_empty() || tgt_kps.is_empty() {
        return Ok(S::zero());
    }
    let matches = match_optimal(ref_kps, tgt_kps, eps);
    let denom = ref_kps.len().min(tgt_kps.len());
    Ok(real::<S>(matches.len() as f64) / real(denom as f64))
}
