//! Centre seeding: Double Roulette Selection and centralised k-means++.

use rand::Rng;

use super::{AuditKind, AuditLog, CentroidSet, ClientShard, ClusterError, Result};
use crate::matrix::{sq_dist, Matrix};

/// Draws an index with probability proportional to `weights`. Zero weights
/// are never selected. Returns `None` when every weight is zero.
pub(crate) fn roulette<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    // Rounding can leave `u` just above the final partial sum.
    last
}

fn check_k(k: usize, rows: usize) -> Result<()> {
    if k == 0 {
        return Err(ClusterError::InvalidConfig("k must be >= 1".into()));
    }
    if k > rows {
        return Err(ClusterError::KTooLarge { k, rows });
    }
    Ok(())
}

fn update_min_d2(data: &Matrix, centre: &[f64], min_d2: &mut [f64]) {
    for (m, row) in min_d2.iter_mut().zip(data.iter_rows()) {
        let d = sq_dist(row, centre);
        if d < *m {
            *m = d;
        }
    }
}

/// Double Roulette Selection.
///
/// The first centre is a uniform draw over all rows, realised as a client
/// draw weighted by shard size followed by a uniform draw inside the client.
/// Each further centre picks a client with probability proportional to its
/// total squared distance `D_p` to the current centres, then a row of that
/// client proportional to its own squared distance. If every distance is
/// zero, the next centre is drawn uniformly among rows not yet chosen.
pub fn drs_init<R: Rng + ?Sized>(
    shards: &[ClientShard],
    data: &Matrix,
    k: usize,
    rng: &mut R,
    audit: &mut AuditLog,
) -> Result<CentroidSet> {
    let rows: usize = shards.iter().map(|s| s.row_indices.len()).sum();
    check_k(k, rows)?;
    let mut chosen_flag = vec![false; data.rows()];
    let mut min_d2 = vec![f64::INFINITY; data.rows()];
    let mut centres = Vec::with_capacity(k);

    let select = |shard: &ClientShard,
                      local: usize,
                      centres: &mut Vec<Vec<f64>>,
                      chosen_flag: &mut [bool],
                      min_d2: &mut [f64],
                      audit: &mut AuditLog| {
        let row = shard.row_indices[local];
        let x = data.row(row).to_vec();
        audit.record(0, shard.client_id, AuditKind::SelectedCentre, Some(centres.len()), &x);
        chosen_flag[row] = true;
        update_min_d2(data, &x, min_d2);
        centres.push(x);
    };

    let sizes: Vec<f64> = shards
        .iter()
        .map(|s| {
            let n = s.row_indices.len() as f64;
            audit.record(0, s.client_id, AuditKind::ShardSize, None, &[n]);
            n
        })
        .collect();
    let p = roulette(&sizes, rng).expect("non-empty shards");
    let local = rng.random_range(0..shards[p].row_indices.len());
    select(&shards[p], local, &mut centres, &mut chosen_flag, &mut min_d2, audit);

    while centres.len() < k {
        let totals: Vec<f64> = shards
            .iter()
            .map(|s| {
                let d: f64 = s.row_indices.iter().map(|&i| min_d2[i]).sum();
                audit.record(0, s.client_id, AuditKind::DistanceTotal, None, &[d]);
                d
            })
            .collect();
        if let Some(p) = roulette(&totals, rng) {
            let shard = &shards[p];
            let local_w: Vec<f64> = shard.row_indices.iter().map(|&i| min_d2[i]).collect();
            let local = roulette(&local_w, rng).expect("client total is positive");
            select(shard, local, &mut centres, &mut chosen_flag, &mut min_d2, audit);
        } else {
            let unchosen: Vec<Vec<usize>> = shards
                .iter()
                .map(|s| {
                    (0..s.row_indices.len())
                        .filter(|&j| !chosen_flag[s.row_indices[j]])
                        .collect()
                })
                .collect();
            let counts: Vec<f64> = shards
                .iter()
                .zip(&unchosen)
                .map(|(s, u)| {
                    let n = u.len() as f64;
                    audit.record(0, s.client_id, AuditKind::UnchosenCount, None, &[n]);
                    n
                })
                .collect();
            let p = roulette(&counts, rng).expect("k <= rows leaves an unchosen row");
            let local = unchosen[p][rng.random_range(0..unchosen[p].len())];
            select(&shards[p], local, &mut centres, &mut chosen_flag, &mut min_d2, audit);
        }
    }
    Ok(CentroidSet::new(Matrix::from_rows(&centres)))
}

/// Centralised k-means++ D² seeding with the same degenerate fallback as
/// [`drs_init`].
pub fn kmeanspp_init<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Result<CentroidSet> {
    check_k(k, data.rows())?;
    let mut chosen = vec![false; data.rows()];
    let mut min_d2 = vec![f64::INFINITY; data.rows()];
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut pick = rng.random_range(0..data.rows());
    loop {
        chosen[pick] = true;
        let x = data.row(pick).to_vec();
        update_min_d2(data, &x, &mut min_d2);
        centres.push(x);
        if centres.len() == k {
            break;
        }
        pick = match roulette(&min_d2, rng) {
            Some(i) => i,
            None => {
                let unchosen: Vec<usize> = (0..data.rows()).filter(|&i| !chosen[i]).collect();
                unchosen[rng.random_range(0..unchosen.len())]
            }
        };
    }
    Ok(CentroidSet::new(Matrix::from_rows(&centres)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn col(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    #[test]
    fn roulette_skips_zero_weights() {
        let mut r = rng::stream(5, &[]);
        for _ in 0..200 {
            let i = roulette(&[0.0, 1.0, 0.0, 2.0], &mut r).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert_eq!(roulette(&[0.0, 0.0], &mut r), None);
    }

    #[test]
    fn forced_second_centre() {
        // Client A holds (0), client B holds (10),(10). Whenever (0) is the
        // first centre, B carries all distance mass and the next centre is 10.
        let data = col(&[0.0, 10.0, 10.0]);
        let shards = vec![
            ClientShard { client_id: 0, row_indices: vec![0] },
            ClientShard { client_id: 1, row_indices: vec![1, 2] },
        ];
        let mut seen = 0;
        for seed in 0..200 {
            let mut audit = AuditLog::enabled();
            let c = drs_init(&shards, &data, 2, &mut rng::stream(seed, &[]), &mut audit).unwrap();
            if c.centres.row(0) == [0.0] {
                seen += 1;
                assert_eq!(c.centres.row(1), [10.0]);
                let totals: Vec<f64> = audit
                    .records()
                    .iter()
                    .filter(|r| r.kind == AuditKind::DistanceTotal)
                    .map(|r| r.payload[0])
                    .collect();
                assert_eq!(totals, [0.0, 200.0]);
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn identical_points_use_fallback() {
        let data = col(&[3.0, 3.0, 3.0, 3.0]);
        let shards = vec![
            ClientShard { client_id: 0, row_indices: vec![0, 1] },
            ClientShard { client_id: 1, row_indices: vec![2, 3] },
        ];
        let mut audit = AuditLog::enabled();
        let c = drs_init(&shards, &data, 4, &mut rng::stream(2, &[]), &mut audit).unwrap();
        assert_eq!(c.k(), 4);
        let selected = audit.records().iter().filter(|r| r.kind == AuditKind::SelectedCentre).count();
        assert_eq!(selected, 4);
        assert!(audit.records().iter().any(|r| r.kind == AuditKind::UnchosenCount));
    }

    #[test]
    fn k_one_picks_a_data_row() {
        let data = col(&[1.0, 2.0, 3.0]);
        let c = kmeanspp_init(&data, 1, &mut rng::stream(0, &[])).unwrap();
        assert!([1.0, 2.0, 3.0].contains(&c.centres.row(0)[0]));
        assert!(kmeanspp_init(&data, 4, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn kmeanspp_distinct_rows() {
        let data = col(&[0.0, 1.0, 2.0, 5.0, 9.0]);
        for seed in 0..50 {
            let c = kmeanspp_init(&data, 5, &mut rng::stream(seed, &[])).unwrap();
            let mut v: Vec<f64> = c.centres.as_slice().to_vec();
            v.sort_by(f64::total_cmp);
            assert_eq!(v, [0.0, 1.0, 2.0, 5.0, 9.0]);
        }
    }
}
