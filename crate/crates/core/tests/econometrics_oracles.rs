mod common;

use boundbench::econometrics::{
    binned_effects, build_design, cluster_vcov, decomposition, fit_model, hc1, ols_fit, render_table,
    results_csv, two_sided_p, within_transform, BinnedSpec, Column, EconError, Frame, ModelSpec,
};
use common::oracle::{brute_sandwich, dummy_ols, max_relative_error, random_panel, regressor_names};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spec_for(k: usize) -> ModelSpec {
    let names = regressor_names(k);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    ModelSpec::new("y", &refs)
}

fn numeric_col(f: &Frame, c: &str) -> Vec<f64> {
    f.numeric(c).unwrap().iter().map(|x| x.unwrap()).collect()
}

#[test]
fn within_estimator_matches_dummy_variable_ols() {
    for seed in 0..40 {
        let k = 1 + (seed as usize % 4);
        let f = random_panel(seed, 25, 10, k);
        let fit = fit_model(&f, &spec_for(k)).unwrap();
        let oracle = dummy_ols(&f, "y", &regressor_names(k));
        let beta: Vec<f64> = fit.coefficients.iter().map(|c| c.estimate).collect();
        assert!(max_relative_error(&beta, &oracle.beta) < 1e-8, "seed {seed}");
        let se: Vec<f64> = fit.coefficients.iter().map(|c| c.std_error).collect();
        let se_oracle: Vec<f64> = (0..k).map(|j| oracle.vcov[(j, j)].sqrt()).collect();
        assert!(max_relative_error(&se, &se_oracle) < 1e-8, "seed {seed}");
    }
}

#[test]
fn within_example_recovers_slope_two() {
    let mut f = Frame::new();
    f.push_text("game_id", ["g1", "g1", "g2", "g2"].map(String::from).to_vec()).unwrap();
    f.push_text("player_id", ["a", "a", "b", "b"].map(String::from).to_vec()).unwrap();
    f.push_numeric("x", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    f.push_numeric("y", vec![2.0, 4.0, 7.0, 9.0]).unwrap();
    let fit = fit_model(&f, &ModelSpec::new("y", &["x"])).unwrap();
    assert!((fit.coefficients[0].estimate - 2.0).abs() < 1e-14);
    assert_eq!(fit.dof, 1);
    assert_eq!((fit.n_obs, fit.n_groups, fit.n_clusters), (4, 2, 2));
    // exact fit, so the standard error vanishes up to rounding
    assert!(fit.coefficients[0].std_error < 1e-12);
}

#[test]
fn singleton_group_contributes_nothing() {
    let f = random_panel(7, 10, 6, 2);
    let base = fit_model(&f, &spec_for(2)).unwrap();
    let mut g = Frame::new();
    let n = f.n_rows();
    for name in f.names() {
        let col = f.column(name).unwrap().clone();
        let extended = match col {
            Column::Text(mut v) => {
                v.push(Some(if name == "game_id" { "solo_game" } else { "solo_player" }.into()));
                Column::Text(v)
            }
            Column::Numeric(mut v) => {
                v.push(Some(1234.5 + n as f64));
                Column::Numeric(v)
            }
        };
        g.push(name, extended).unwrap();
    }
    let with_singleton = fit_model(&g, &spec_for(2)).unwrap();
    for (a, b) in base.coefficients.iter().zip(&with_singleton.coefficients) {
        assert!((a.estimate - b.estimate).abs() < 1e-12);
    }
    assert_eq!(with_singleton.n_groups, base.n_groups + 1);
    assert_eq!(with_singleton.dof, base.dof);
}

#[test]
fn group_constant_shifts_leave_slopes_unchanged() {
    for seed in 100..120 {
        let f = random_panel(seed, 15, 8, 3);
        let base = fit_model(&f, &spec_for(3)).unwrap();
        let games: Vec<String> = (0..f.n_rows()).map(|i| f.column("game_id").unwrap().text_at(i).unwrap()).collect();
        let players: Vec<String> = (0..f.n_rows()).map(|i| f.column("player_id").unwrap().text_at(i).unwrap()).collect();
        let shift = |i: usize, salt: f64| {
            let h = games[i].bytes().chain(players[i].bytes()).fold(7u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
            (h % 97) as f64 * salt - 40.0
        };
        let mut g = f.clone();
        let y: Vec<f64> = numeric_col(&f, "y").iter().enumerate().map(|(i, v)| v + shift(i, 1.3)).collect();
        let x1: Vec<f64> = numeric_col(&f, "x1").iter().enumerate().map(|(i, v)| v + shift(i, 0.7)).collect();
        g.push_numeric("y", y).unwrap();
        g.push_numeric("x1", x1).unwrap();
        let shifted = fit_model(&g, &spec_for(3)).unwrap();
        let a: Vec<f64> = base.coefficients.iter().map(|c| c.estimate).collect();
        let b: Vec<f64> = shifted.coefficients.iter().map(|c| c.estimate).collect();
        assert!(max_relative_error(&b, &a) < 1e-8, "seed {seed}");
    }
}

#[test]
fn row_permutation_gives_identical_results() {
    let f = random_panel(3, 20, 9, 3);
    let n = f.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.reverse();
    order.swap(0, n / 2);
    let a = fit_model(&f, &spec_for(3)).unwrap();
    let b = fit_model(&f.select_rows(&order), &spec_for(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn duplicating_rows_keeps_coefficients() {
    let f = random_panel(11, 12, 6, 2);
    let n = f.n_rows();
    let doubled: Vec<usize> = (0..n).chain(0..n).collect();
    let a = fit_model(&f, &spec_for(2)).unwrap();
    let b = fit_model(&f.select_rows(&doubled), &spec_for(2)).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x.estimate - y.estimate).abs() < 1e-10 * x.estimate.abs().max(1.0));
    }
    assert_eq!(b.n_obs, 2 * a.n_obs);
    assert_eq!(b.n_clusters, a.n_clusters);
}

#[test]
fn three_cluster_toy_matches_brute_force_sandwich() {
    let x = DMatrix::from_row_slice(7, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, 1.5, 1.0, -2.0, 0.0, 4.0, 2.5, 0.5, -0.5]);
    let y = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.3, -1.2, 3.3, 0.1]);
    let clusters = [0, 0, 1, 1, 1, 2, 2];
    let names = vec!["a".to_string(), "b".to_string()];
    let fit = ols_fit(&y, &x, &names, 0).unwrap();
    let ours = cluster_vcov(&x, &fit.residuals, &fit.xtx_inv, &clusters, 3, 2);
    let scale = 3.0 / 2.0 * 6.0 / 5.0;
    let oracle = brute_sandwich(&x, &fit.residuals, &clusters) * scale;
    let rel = (&ours - &oracle).amax() / oracle.amax();
    assert!(rel < 1e-10, "{rel}");
}

#[test]
fn singleton_clusters_match_hc1() {
    let f = random_panel(21, 10, 5, 2);
    let mut g = f.clone();
    g.push_text("row_id", (0..f.n_rows()).map(|i| format!("r{i:05}")).collect()).unwrap();
    let mut spec = spec_for(2).without_fe();
    spec.cluster = "row_id".into();
    let fit = fit_model(&g, &spec).unwrap();
    let d = build_design(&g, &spec).unwrap();
    let ols = ols_fit(&d.y, &d.x, &d.names, 0).unwrap();
    let h = hc1(&d.x, &ols.residuals, &ols.xtx_inv, d.x.ncols());
    for j in 0..d.x.ncols() {
        for l in 0..d.x.ncols() {
            assert!((fit.vcov[j][l] - h[(j, l)]).abs() <= 1e-12 * h[(j, j)].abs().max(1e-300));
        }
    }
}

#[test]
fn rank_deficiency_is_reported_by_name() {
    let mut f = random_panel(5, 8, 6, 2);
    let doubled: Vec<f64> = numeric_col(&f, "x0").iter().map(|v| 2.0 * v).collect();
    f.push_numeric("x0_twice", doubled).unwrap();
    match fit_model(&f, &ModelSpec::new("y", &["x0", "x1", "x0_twice"])) {
        Err(EconError::RankDeficient { columns }) => {
            assert!(columns.contains(&"x0".into()) && columns.contains(&"x0_twice".into()));
            assert!(!columns.contains(&"x1".into()));
        }
        other => panic!("{other:?}"),
    }
    // a regressor constant within each player-game is absorbed by the fixed effects
    let per_game: Vec<f64> = (0..f.n_rows())
        .map(|i| f.column("game_id").unwrap().text_at(i).unwrap()[1..].parse::<f64>().unwrap())
        .collect();
    f.push_numeric("game_number", per_game).unwrap();
    match fit_model(&f, &ModelSpec::new("y", &["x0", "game_number"])) {
        Err(EconError::RankDeficient { columns }) => assert_eq!(columns, ["game_number"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn single_cluster_is_rejected() {
    let mut f = Frame::new();
    f.push_text("game_id", vec!["g".into(); 4]).unwrap();
    f.push_text("player_id", ["a", "a", "b", "b"].map(String::from).to_vec()).unwrap();
    f.push_numeric("x", vec![1.0, 2.0, 3.0, 5.0]).unwrap();
    f.push_numeric("y", vec![1.0, 3.0, 2.0, 2.0]).unwrap();
    assert!(matches!(
        fit_model(&f, &ModelSpec::new("y", &["x"])),
        Err(EconError::TooFewClusters { clusters: 1 })
    ));
}

#[test]
fn lpm_fitted_value_at_means_lies_in_outcome_range() {
    let f = random_panel(31, 20, 8, 2);
    let binary: Vec<f64> = numeric_col(&f, "y").iter().map(|v| f64::from(u8::from(*v > 0.0))).collect();
    let mut g = f.clone();
    g.push_numeric("yb", binary.clone()).unwrap();
    let fit = fit_model(&g, &ModelSpec::new("yb", &["x0", "x1"]).without_fe()).unwrap();
    let mean = |c: &str| numeric_col(&g, c).iter().sum::<f64>() / g.n_rows() as f64;
    let fitted = fit.coefficient("x0").unwrap().estimate * mean("x0")
        + fit.coefficient("x1").unwrap().estimate * mean("x1")
        + fit.coefficient("(intercept)").unwrap().estimate;
    assert!((0.0..=1.0).contains(&fitted));
    assert!((fitted - mean("yb")).abs() < 1e-12);
}

fn deviation_frame(delta: Vec<f64>) -> Frame {
    let n = delta.len();
    let mut f = Frame::new();
    f.push_text("game_id", (0..n).map(|i| format!("g{}", i % 6)).collect()).unwrap();
    f.push_text("player_id", (0..n).map(|i| format!("p{}", (i / 6) % 2)).collect()).unwrap();
    f.push_numeric("x", (0..n).map(|i| ((i * 37) % 11) as f64 / 3.0).collect()).unwrap();
    f.push_numeric("z", (0..n).map(|i| ((i * 17) % 7) as f64).collect()).unwrap();
    f.push_numeric("delta_E", delta.iter().map(|d| f64::from(u8::from(*d != 0.0))).collect()).unwrap();
    f.push_numeric("delta", delta).unwrap();
    f
}

#[test]
fn decomposition_null_case_is_exactly_zero() {
    let f = deviation_frame(vec![0.0; 72]);
    let d = decomposition(&f, &ModelSpec::new("delta", &["x", "z"])).unwrap();
    for r in &d.rows {
        assert_eq!((r.total, r.extensive, r.intensive, r.gap), (0.0, Some(0.0), 0.0, 0.0));
    }
    assert!(d.intensive.is_none());
}

#[test]
fn decomposition_all_deviating_total_equals_intensive() {
    let delta: Vec<f64> = (0..72).map(|i| if i % 3 == 0 { -0.4 } else { 0.1 + i as f64 / 100.0 }).collect();
    let f = deviation_frame(delta);
    let d = decomposition(&f, &ModelSpec::new("delta", &["x", "z"])).unwrap();
    assert!(d.extensive.is_none());
    let intensive = d.intensive.as_ref().unwrap();
    for (t, i) in d.total.coefficients.iter().zip(&intensive.coefficients) {
        assert_eq!(t.estimate, i.estimate);
        assert_eq!(t.std_error, i.std_error);
    }
    assert_eq!(d.share_deviating, 1.0);
    assert!(d.rows.iter().all(|r| r.gap == 0.0 && r.extensive.is_none()));
}

#[test]
fn decomposition_accounting_is_reported() {
    let delta: Vec<f64> = (0..120).map(|i| if i % 4 == 0 { 0.0 } else { ((i * 13) % 9) as f64 / 10.0 - 0.4 }).collect();
    let f = deviation_frame(delta.clone());
    let d = decomposition(&f, &ModelSpec::new("delta", &["x", "z"])).unwrap();
    let nz: Vec<f64> = delta.iter().copied().filter(|v| *v != 0.0).collect();
    assert!((d.share_deviating - nz.len() as f64 / 120.0).abs() < 1e-15);
    assert!((d.conditional_mean - nz.iter().sum::<f64>() / nz.len() as f64).abs() < 1e-15);
    for r in &d.rows {
        let predicted = d.conditional_mean * r.extensive.unwrap() + r.intensive * d.share_deviating;
        assert!((r.predicted - predicted).abs() < 1e-15);
        assert!((r.total - r.predicted - r.gap).abs() < 1e-15);
    }
}

fn binned_frame(outcome: impl Fn(f64, usize) -> f64, values: impl Fn(usize) -> f64) -> Frame {
    let n = 240;
    let mut f = Frame::new();
    f.push_text("game_id", (0..n).map(|i| format!("g{}", i % 12)).collect()).unwrap();
    f.push_text("player_id", (0..n).map(|i| format!("p{}", (i / 12) % 2)).collect()).unwrap();
    let v: Vec<f64> = (0..n).map(&values).collect();
    f.push_numeric("y", v.iter().enumerate().map(|(i, x)| outcome(*x, i)).collect()).unwrap();
    f.push_numeric("v", v).unwrap();
    f
}

fn bin_spec(n_bins: usize) -> BinnedSpec {
    BinnedSpec {
        outcome: "y".into(),
        variable: "v".into(),
        n_bins,
        reference: 0,
        controls: vec![],
        fixed_effects: true,
        range: None,
    }
}

#[test]
fn binned_range_sends_outliers_to_end_bins() {
    let noise = |i: usize| (((i * 7919) % 101) as f64 / 101.0 - 0.5) * 0.2;
    let value = |i: usize| match i % 50 {
        0 => 400.0,
        1 => -400.0,
        _ => ((i * 31) % 97) as f64 / 10.0,
    };
    let f = binned_frame(|x, i| 0.1 * x.clamp(0.0, 10.0) + noise(i), value);
    let mut spec = bin_spec(5);
    spec.range = Some([0.0, 10.0]);
    let b = binned_effects(&f, &spec).unwrap();
    assert_eq!(b.bins.len(), 5);
    assert_eq!(b.bins[0].lower, 0.0);
    assert_eq!(b.bins[4].upper, 10.0);
    let values = f.numeric("v").unwrap();
    let below_two = values.iter().flatten().filter(|&&x| x < 2.0).count();
    let from_eight = values.iter().flatten().filter(|&&x| x >= 8.0).count();
    assert_eq!(b.bins[0].n_obs, below_two);
    assert_eq!(b.bins[4].n_obs, from_eight);
    spec.range = Some([1.0, 1.0]);
    assert!(matches!(binned_effects(&f, &spec), Err(EconError::InvalidSpec(_))));
}

#[test]
fn binned_linear_effect_is_monotone() {
    let noise = |i: usize| (((i * 7919) % 101) as f64 / 101.0 - 0.5) * 0.2;
    let f = binned_frame(|x, i| 0.8 * x + noise(i), |i| ((i * 31) % 97) as f64 / 10.0);
    let b = binned_effects(&f, &bin_spec(5)).unwrap();
    assert_eq!(b.bins.len(), 5);
    assert!(b.bins[0].reference && b.bins[0].estimate == 0.0);
    for w in b.bins.windows(2) {
        assert!(w[1].estimate > w[0].estimate);
    }
    assert!(b.bins.iter().all(|r| r.ci_low <= r.estimate && r.estimate <= r.ci_high));
    assert!(b.plot_csv().starts_with("bin,lower,upper,center"));
}

#[test]
fn binned_constant_outcome_is_zero() {
    let f = binned_frame(|_, _| 0.25, |i| (i % 13) as f64);
    let b = binned_effects(&f, &bin_spec(4)).unwrap();
    for r in &b.bins {
        assert_eq!(r.estimate, 0.0);
        assert!(r.ci_low <= 0.0 && 0.0 <= r.ci_high);
    }
}

#[test]
fn two_bins_on_binary_variable_equal_dummy_fit() {
    let f = binned_frame(|x, i| 0.3 * x + ((i * 17) % 5) as f64 / 7.0, |i| ((i / 12) % 3 == 0) as u8 as f64);
    let b = binned_effects(&f, &bin_spec(2)).unwrap();
    let dummy = fit_model(&f, &ModelSpec::new("y", &["v"])).unwrap();
    let c = &dummy.coefficients[0];
    assert!((b.bins[1].estimate - c.estimate).abs() < 1e-12);
    assert!((b.bins[1].std_error - c.std_error).abs() < 1e-12);
}

#[test]
fn empty_bins_are_merged_with_warning() {
    // values cluster at both ends, leaving middle bins empty
    let f = binned_frame(|x, i| x + (i % 3) as f64, |i| if (i / 24) % 2 == 0 { ((i / 12) % 5) as f64 / 10.0 } else { 9.5 + ((i / 12) % 5) as f64 / 10.0 });
    let b = binned_effects(&f, &bin_spec(6)).unwrap();
    assert!(!b.warnings.is_empty());
    assert!(b.bins.len() < 6);
    assert_eq!(b.bins.iter().map(|r| r.n_obs).sum::<usize>(), 240);
}

#[test]
fn report_layout() {
    let f = random_panel(2, 10, 6, 2);
    let fits = vec![
        fit_model(&f, &spec_for(2).with_label("first")).unwrap(),
        fit_model(&f, &spec_for(1).with_label("second")).unwrap(),
    ];
    let text = render_table("Demo", &fits);
    let lines: Vec<&str> = text.lines().collect();
    let x0 = lines.iter().position(|l| l.starts_with("x0")).unwrap();
    assert!(lines[x0 + 1].trim_start().starts_with('('));
    for footer in ["Player-Game Fixed Effects", "Move Observations", "Player-Game Observations"] {
        assert!(text.contains(footer));
    }
    assert!(text.contains("*: p<0.1, **: p<0.05, ***: p<0.01"));
    assert!(text.contains("CR1"));
    let csv = results_csv("demo", &fits).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 + 1);
}

#[test]
fn within_transform_matches_group_means() {
    let y = DVector::from_vec(vec![1.0, 2.0, 6.0, 3.0, 3.0]);
    let x = DMatrix::from_vec(5, 1, vec![1.0, 1.0, 4.0, 0.0, 2.0]);
    let (yt, xt) = within_transform(&y, &x, &[0, 0, 1, 2, 2], 3);
    assert_eq!(yt.as_slice(), &[-0.5, 0.5, 0.0, 0.0, 0.0]);
    assert_eq!(xt.as_slice(), &[0.0, 0.0, 0.0, -1.0, 1.0]);
}

proptest! {
    #[test]
    fn p_values_are_probabilities_decreasing_in_t(a in 0.0f64..50.0, b in 0.0f64..50.0, dof in 1usize..500) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (plo, phi) = (two_sided_p(lo, dof), two_sided_p(hi, dof));
        prop_assert!((0.0..=1.0).contains(&plo) && (0.0..=1.0).contains(&phi));
        prop_assert!(phi <= plo);
        prop_assert_eq!(two_sided_p(-hi, dof), phi);
    }

    #[test]
    fn cluster_ses_ignore_within_cluster_order(seed in 0u64..1000, rot in 1usize..5) {
        let f = random_panel(seed, 8, 6, 2);
        let n = f.n_rows();
        // rotate rows inside each game
        let games: Vec<String> = (0..n).map(|i| f.column("game_id").unwrap().text_at(i).unwrap()).collect();
        let mut order = Vec::new();
        let mut seen: Vec<&String> = Vec::new();
        for g in &games {
            if !seen.contains(&g) {
                seen.push(g);
                let mut rows: Vec<usize> = (0..n).filter(|&i| &games[i] == g).collect();
                let r = rot % rows.len();
                rows.rotate_left(r);
                order.extend(rows);
            }
        }
        let a = fit_model(&f, &spec_for(2)).unwrap();
        let b = fit_model(&f.select_rows(&order), &spec_for(2)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn within_matches_dummy_ols_on_random_panels(seed in 1000u64..100000, k in 1usize..=4) {
        let f = random_panel(seed, 12, 7, k);
        let fit = fit_model(&f, &spec_for(k)).unwrap();
        let oracle = dummy_ols(&f, "y", &regressor_names(k));
        let beta: Vec<f64> = fit.coefficients.iter().map(|c| c.estimate).collect();
        prop_assert!(max_relative_error(&beta, &oracle.beta) < 1e-8);
    }
}
