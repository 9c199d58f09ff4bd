//! Independent reference computations for the regression machinery.

use std::collections::BTreeMap;

use boundbench::econometrics::{Column, Frame};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Random player-game panel: each game has two players, each player-game
/// 1..=`max_rows` rows. Columns `game_id`, `player_id`, `y`, `x0..`.
pub fn random_panel(seed: u64, max_games: usize, max_rows: usize, k: usize) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let games = rng.random_range(3..=max_games.max(3));
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let (mut gid, mut pid, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); k];
    for g in 0..games {
        for p in ["w", "b"] {
            let rows = rng.random_range(1..=max_rows);
            let effect = 3.0 * normal.sample(&mut rng);
            let shifts: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
            for _ in 0..rows {
                let mut yi = effect + 0.7 * normal.sample(&mut rng);
                for j in 0..k {
                    let x = shifts[j] + normal.sample(&mut rng);
                    yi += beta[j] * x;
                    xs[j].push(x);
                }
                gid.push(format!("g{g}"));
                pid.push(format!("{p}{}", g % 5));
                y.push(yi);
            }
        }
    }
    let mut f = Frame::new();
    f.push_text("game_id", gid).unwrap();
    f.push_text("player_id", pid).unwrap();
    f.push_numeric("y", y).unwrap();
    for (j, x) in xs.into_iter().enumerate() {
        f.push_numeric(&format!("x{j}"), x).unwrap();
    }
    f
}

pub fn regressor_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

fn text(frame: &Frame, col: &str) -> Vec<String> {
    match frame.column(col).unwrap() {
        Column::Text(v) => v.iter().map(|s| s.clone().unwrap()).collect(),
        Column::Numeric(v) => v.iter().map(|x| x.unwrap().to_string()).collect(),
    }
}

fn numeric(frame: &Frame, col: &str) -> Vec<f64> {
    frame.numeric(col).unwrap().iter().map(|x| x.unwrap()).collect()
}

pub struct OracleFit {
    pub beta: Vec<f64>,
    pub vcov: DMatrix<f64>,
}

/// OLS of `y` on the regressors plus one indicator per player-game, solved
/// by LU on the normal equations; CR1 game-clustered covariance summed
/// cluster by cluster over the full parameter vector.
pub fn dummy_ols(frame: &Frame, y: &str, regressors: &[String]) -> OracleFit {
    let n = frame.n_rows();
    let k = regressors.len();
    let games = text(frame, "game_id");
    let players = text(frame, "player_id");
    let mut group_index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for i in 0..n {
        let len = group_index.len();
        group_index.entry((players[i].clone(), games[i].clone())).or_insert(len);
    }
    let n_groups = group_index.len();
    let cols = k + n_groups;
    let mut z = DMatrix::<f64>::zeros(n, cols);
    for (j, r) in regressors.iter().enumerate() {
        for (i, v) in numeric(frame, r).into_iter().enumerate() {
            z[(i, j)] = v;
        }
    }
    for i in 0..n {
        z[(i, k + group_index[&(players[i].clone(), games[i].clone())])] = 1.0;
    }
    let yv = DVector::from_vec(numeric(frame, y));
    let ztz = z.transpose() * &z;
    let coef = ztz.clone().lu().solve(&(z.transpose() * &yv)).expect("full rank");
    let resid = &yv - &z * &coef;
    let bread = ztz.try_inverse().expect("invertible");

    let mut by_cluster: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
    for i in 0..n {
        let s = by_cluster.entry(games[i].as_str()).or_insert_with(|| DVector::zeros(cols));
        for c in 0..cols {
            s[c] += z[(i, c)] * resid[i];
        }
    }
    let mut meat = DMatrix::<f64>::zeros(cols, cols);
    for s in by_cluster.values() {
        meat += s * s.transpose();
    }
    let g = by_cluster.len() as f64;
    let scale = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - cols as f64);
    let full = &bread * meat * &bread * scale;
    OracleFit {
        beta: coef.rows(0, k).iter().copied().collect(),
        vcov: full.view((0, 0), (k, k)).into_owned(),
    }
}

/// `(XᵀX)⁻¹ (Σ_g X_gᵀ u_g u_gᵀ X_g) (XᵀX)⁻¹`, one explicit outer product
/// per cluster, without any correction factor.
pub fn brute_sandwich(x: &DMatrix<f64>, u: &DVector<f64>, cluster: &[usize]) -> DMatrix<f64> {
    let k = x.ncols();
    let bread = (x.transpose() * x).try_inverse().unwrap();
    let mut ids: Vec<usize> = cluster.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for g in ids {
        let rows: Vec<usize> = (0..x.nrows()).filter(|&i| cluster[i] == g).collect();
        let xg = DMatrix::from_fn(rows.len(), k, |r, c| x[(rows[r], c)]);
        let ug = DVector::from_fn(rows.len(), |r, _| u[rows[r]]);
        let s = xg.transpose() * ug;
        meat += &s * s.transpose();
    }
    &bread * meat * &bread
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}
