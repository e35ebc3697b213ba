use std::collections::BTreeMap;

use super::{ClusterAssignment, NumericsError};

/// Compacts arbitrary labels to `0..c` in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn entropy_of_counts(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Expected mutual information under the hypergeometric permutation model.
fn expected_mutual_information(a: &[usize], b: &[usize], n: usize) -> f64 {
    // ln(k!) table
    let mut lfact = vec![0.0f64; n + 1];
    for i in 1..=n {
        lfact[i] = lfact[i - 1] + (i as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let nijf = nij as f64;
                let term1 = nijf / nf * (nf * nijf / (ai as f64 * bj as f64)).ln();
                let log_p = lfact[ai] + lfact[bj] + lfact[n - ai] + lfact[n - bj]
                    - lfact[n]
                    - lfact[nij]
                    - lfact[ai - nij]
                    - lfact[bj - nij]
                    - lfact[n + nij - ai - bj];
                emi += term1 * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with the arithmetic-mean normalizer.
///
/// Returns 0 when either partition has a single cluster and 1 when the two
/// partitions coincide up to relabeling.
pub fn adjusted_mutual_information(u: &ClusterAssignment, v: &ClusterAssignment) -> Result<f64, NumericsError> {
    if u.len() != v.len() {
        return Err(NumericsError::LengthMismatch(u.len(), v.len()));
    }
    let n = u.len();
    let (lu, cu) = compact(&u.labels);
    let (lv, cv) = compact(&v.labels);
    if cu <= 1 || cv <= 1 {
        return Ok(0.0);
    }
    let mut table = vec![vec![0usize; cv]; cu];
    for (&a, &b) in lu.iter().zip(&lv) {
        table[a][b] += 1;
    }
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..cv).map(|j| table.iter().map(|r| r[j]).sum()).collect();

    // identical up to relabeling: one nonzero per row and per column
    let nonzero = table.iter().flatten().filter(|&&c| c > 0).count();
    if cu == cv && nonzero == cu {
        return Ok(1.0);
    }

    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nijf = nij as f64;
                mi += nijf / nf * (nf * nijf / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
            }
        }
    }
    let hu = entropy_of_counts(&row_sums, nf);
    let hv = entropy_of_counts(&col_sums, nf);
    let emi = expected_mutual_information(&row_sums, &col_sums, n);
    let mut denom = 0.5 * (hu + hv) - emi;
    let eps = f64::EPSILON;
    denom = if denom < 0.0 { denom.min(-eps) } else { denom.max(eps) };
    Ok((mi - emi) / denom)
}
