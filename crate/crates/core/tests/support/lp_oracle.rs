//! Brute-force reference for small stage LPs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_adp::lp::{self, LpInstance, LpStatus};

/// Solves a small square system by Gaussian elimination; `None` when singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-9 {
            return None;
        }
        a.swap(k, p);
        r.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            r[i] -= f * r[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (r[i] - s) / a[i][i];
    }
    Some(x)
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Brute force over all `M`-subsets of rows: a bounded instance has a basic
/// nonnegative dual solution, and its optimum sits at a feasible vertex.
pub fn vertex_oracle(rows: &[Vec<f64>], b: &[f64], c: &[f64]) -> Oracle {
    let m = c.len();
    let mut bounded = false;
    let mut best = f64::INFINITY;
    for s in subsets(rows.len(), m) {
        let a: Vec<Vec<f64>> = s.iter().map(|&i| rows[i].clone()).collect();
        let at: Vec<Vec<f64>> = (0..m).map(|j| s.iter().map(|&i| rows[i][j]).collect()).collect();
        if let Some(lam) = solve_square(at, c.to_vec()) {
            if lam.iter().all(|&l| l >= -1e-12) {
                bounded = true;
            }
        }
        if let Some(w) = solve_square(a, s.iter().map(|&i| b[i]).collect()) {
            let feasible = rows
                .iter()
                .zip(b)
                .all(|(r, bi)| r.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() >= bi - 1e-9);
            if feasible {
                best = best.min(c.iter().zip(&w).map(|(x, y)| x * y).sum());
            }
        }
    }
    if bounded && best.is_finite() {
        Oracle::Optimal(best)
    } else if bounded {
        Oracle::Infeasible
    } else {
        Oracle::Unbounded
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng, positive: bool) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(m..=12);
    let lo = if positive { 0.01 } else { -1.0 };
    let rows = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(lo..1.0)).collect())
        .collect();
    let b = (0..n).map(|_| rng.random_range(-0.5..1.0)).collect();
    let c = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    (rows, b, c)
}

/// Solves `count` random instances and compares each with the vertex
/// oracle. Returns the number of bounded feasible instances, or the first
/// disagreement.
pub fn vertex_enumeration_check(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut optimal = 0;
    for k in 0..count {
        let (rows, b, c) = random_instance(&mut rng, k % 2 == 0);
        let lp = LpInstance::from_rows(c.clone(), &rows, b.clone()).unwrap();
        let sol = lp::solve(&lp).map_err(|e| format!("instance {k}: {e}"))?;
        match vertex_oracle(&rows, &b, &c) {
            Oracle::Optimal(obj) => {
                optimal += 1;
                if !sol.status.is_optimal() {
                    return Err(format!("instance {k}: {:?}, expected optimum {obj}", sol.status));
                }
                if (sol.objective - obj).abs() > 1e-8 * (1.0 + obj.abs()) {
                    return Err(format!("instance {k}: objective {} vs {obj}", sol.objective));
                }
                if !sol.certificate.is_some_and(|c| c.holds(sol.objective)) {
                    return Err(format!("instance {k}: certificate does not hold"));
                }
            }
            Oracle::Infeasible => {
                if sol.status != LpStatus::Infeasible {
                    return Err(format!("instance {k}: {:?}, expected infeasible", sol.status));
                }
            }
            Oracle::Unbounded => {
                if sol.status != LpStatus::Unbounded {
                    return Err(format!("instance {k}: {:?}, expected unbounded", sol.status));
                }
                let d = sol.ray.unwrap();
                let dot = |r: &[f64]| r.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>();
                if rows.iter().any(|r| dot(r) < -1e-9) || dot(&c) >= 0.0 {
                    return Err(format!("instance {k}: ray is not a certificate"));
                }
            }
        }
    }
    Ok(optimal)
}
