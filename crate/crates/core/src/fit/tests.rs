use proptest::prelude::*;

use super::*;
use crate::synthetic::{add_accel_noise, rng, simulated_episode, EpisodeSpec, LeaderProfile};

fn library_of(params: &[(u32, GhrParams)]) -> ClusterLibrary {
    ClusterLibrary::new(params.iter().map(|&(cluster_id, params)| ClusterDefinition {
        cluster_id,
        class: ClusterClass::Car,
        params,
    }))
    .unwrap()
}

fn gp(c: f64, m: f64, l: f64, tau: f64) -> GhrParams {
    GhrParams::new(c, m, l, tau).unwrap()
}

#[test]
fn rmse_examples() {
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355).abs() < 1e-4);
    assert_eq!(rmse(&[1.5, 2.0], &[1.5, 2.0]).unwrap(), 0.0);
    assert_eq!(rmse(&[1.0], &[-1.0]).unwrap(), 2.0);
    assert_eq!(rmse(&[], &[]), Err(FitError::EmptySeries));
    assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(FitError::LengthMismatch { .. })));
}

#[test]
fn argmin_prefers_first_of_ties() {
    assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
    assert_eq!(argmin(&[f64::INFINITY, 5.0]), Some(1));
    assert_eq!(argmin(&[f64::INFINITY, f64::INFINITY]), None);
    assert_eq!(argmin(&[]), None);
}

#[test]
fn noise_free_round_trip_recovers_every_placeholder_cluster() {
    let lib = placeholder_library();
    for class in [ClusterClass::Car, ClusterClass::Heavy] {
        for def in lib.group(class) {
            let mut spec = EpisodeSpec::default();
            if class == ClusterClass::Heavy {
                spec.follower_class = VehicleClass::HeavyVehicle;
            }
            let ep = simulated_episode(def.cluster_id as u64, &def.params, &spec).unwrap();
            let r = fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()).unwrap();
            assert_eq!(r.best_cluster_id, def.cluster_id, "{class:?}");
            assert!(r.rmse < 1e-9, "{}", r.rmse);
            assert_eq!(r.library, class);
        }
    }
}

#[test]
fn noisy_round_trip_mostly_recovers() {
    let lib = placeholder_library();
    let mut noise = rng(11);
    let recovered = lib
        .group(ClusterClass::Car)
        .iter()
        .filter(|def| {
            let mut ep = simulated_episode(0, &def.params, &EpisodeSpec::default()).unwrap();
            add_accel_noise(&mut ep, 0.05, &mut noise);
            fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()).unwrap().best_cluster_id
                == def.cluster_id
        })
        .count();
    assert!(recovered >= 28, "{recovered}/30");
}

#[test]
fn zero_relative_speed_ties_to_lowest_id() {
    let spec = EpisodeSpec { leader: LeaderProfile::Constant { speed: 14.0 }, ..Default::default() };
    let ep = simulated_episode(0, &gp(1.0, 0.5, 1.0, 1.0), &spec).unwrap();
    let lib = library_of(&[(9, gp(2.0, 0.0, 0.0, 0.5)), (4, gp(0.3, 1.0, 1.0, 1.5)), (17, gp(1.0, 0.2, 0.3, 0.1))]);
    let r = fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()).unwrap();
    assert!(r.per_cluster_rmse.iter().all(|&x| x == 0.0));
    assert_eq!(r.best_cluster_id, 4);
    assert_eq!(r.cluster_ids, vec![4, 9, 17]);
}

#[test]
fn heavy_follower_without_heavy_group_fails() {
    let spec = EpisodeSpec { follower_class: VehicleClass::HeavyVehicle, ..Default::default() };
    let ep = simulated_episode(5, &gp(1.0, 0.5, 1.0, 1.0), &spec).unwrap();
    let lib = library_of(&[(1, gp(1.0, 0.5, 1.0, 1.0))]);
    assert_eq!(
        fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()),
        Err(FitError::MissingGroup { episode_id: 5, class: "heavy" })
    );
}

#[test]
fn suv_follower_uses_car_library_with_flag() {
    let spec = EpisodeSpec { follower_class: VehicleClass::SuvLightTruck, ..Default::default() };
    let ep = simulated_episode(0, &gp(1.0, 0.5, 1.0, 1.0), &spec).unwrap();
    let lib = library_of(&[(1, gp(1.0, 0.5, 1.0, 1.0))]);
    let r = fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()).unwrap();
    assert!(r.fallback);
    assert_eq!(r.library, ClusterClass::Car);
}

#[test]
fn delay_longer_than_episode_scores_infinite() {
    let spec = EpisodeSpec { duration_s: 2.0, ..Default::default() };
    let ep = simulated_episode(0, &gp(1.0, 0.5, 1.0, 0.5), &spec).unwrap();
    let lib = library_of(&[(1, gp(1.0, 0.5, 1.0, 2.95)), (2, gp(1.0, 0.5, 1.0, 0.5))]);
    let r = fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()).unwrap();
    assert!(r.per_cluster_rmse[0].is_infinite());
    assert_eq!(r.best_cluster_id, 2);
    assert_eq!(r.unscoreable_clusters, 1);
    let lib = library_of(&[(1, gp(1.0, 0.5, 1.0, 2.95))]);
    assert_eq!(
        fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()),
        Err(FitError::Unscoreable { episode_id: 0 })
    );
}

#[test]
fn speed_target_and_forward_mode_recover_generator() {
    let lib = placeholder_library();
    let def = lib.get(ClusterClass::Car, 24).unwrap();
    let ep = simulated_episode(0, &def.params, &EpisodeSpec::default()).unwrap();
    for (mode, target) in [
        (SimMode::OneStepPrediction, FitTarget::Speed),
        (SimMode::ForwardSimulation, FitTarget::Accel),
        (SimMode::ForwardSimulation, FitTarget::Speed),
    ] {
        let sim = SimConfig { mode, ..SimConfig::default() };
        let r = fit_episode(&ep, &lib, &sim, &FitConfig { target }).unwrap();
        assert_eq!(r.best_cluster_id, 24, "{mode:?} {target:?}");
        assert!(r.rmse < 1e-6, "{mode:?} {target:?} {}", r.rmse);
    }
}

#[test]
fn fit_all_keeps_input_order_and_collects_failures() {
    let lib = library_of(&[(1, gp(1.0, 0.5, 1.0, 1.0))]);
    let heavy = EpisodeSpec { follower_class: VehicleClass::HeavyVehicle, ..Default::default() };
    let car = EpisodeSpec::default();
    let eps: Vec<_> = (0..6)
        .map(|i| simulated_episode(i, &gp(1.0, 0.5, 1.0, 1.0), if i == 3 { &heavy } else { &car }).unwrap())
        .collect();
    let out = fit_all(&eps, &lib, &SimConfig::default(), &FitConfig::default());
    assert_eq!(out.results.iter().map(|r| r.episode_id).collect::<Vec<_>>(), vec![0, 1, 2, 4, 5]);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].episode_id, 3);
}

fn result(pair: PairClass, section: Section, best: u32, rmse: f64) -> FitResult {
    FitResult {
        episode_id: 0,
        follower_class: VehicleClass::PassengerCar,
        pair,
        section,
        library: ClusterClass::Car,
        fallback: false,
        best_cluster_id: best,
        rmse,
        cluster_ids: vec![best],
        per_cluster_rmse: vec![rmse],
        n_frames_scored: 1,
        unscoreable_clusters: 0,
    }
}

#[test]
fn frequencies() {
    let rs: Vec<_> = (0..3).map(|_| result(PairClass::CarFollowsCar, Section::Full, 24, 0.1)).collect();
    let h = cluster_frequencies(&rs);
    assert_eq!(h[&PairClass::CarFollowsCar].counts, BTreeMap::from([(24, 3)]));
    assert_eq!(h[&PairClass::CarFollowsCar].distinct(), 1);
    assert!(cluster_frequencies(&[]).is_empty());
}

#[test]
fn group_means() {
    let rs = vec![
        result(PairClass::CarFollowsHeavy, Section::BeforeMerge, 1, 1.0),
        result(PairClass::CarFollowsHeavy, Section::AfterMerge, 2, 3.0),
        result(PairClass::HeavyFollowsCar, Section::AfterMerge, 2, 2.0),
    ];
    let by_pair = mean_rmse_by_group(&rs, Grouping::Pair);
    assert_eq!(by_pair[0], GroupRmse { group: "car_follows_heavy".into(), n: 2, mean_rmse: 2.0 });
    assert_eq!(by_pair[1], GroupRmse { group: "heavy_follows_car".into(), n: 1, mean_rmse: 2.0 });
    let by_side = mean_rmse_by_group(&rs, Grouping::MergeSide);
    assert_eq!(by_side.iter().map(|g| g.group.as_str()).collect::<Vec<_>>(), ["before_merge", "after_merge"]);
    assert_eq!(by_side[1].mean_rmse, 2.5);
}

#[test]
fn lower_noise_before_merge_gives_lower_mean() {
    let lib = placeholder_library();
    let mut noise = rng(3);
    let mut results = Vec::new();
    for (k, def) in lib.group(ClusterClass::Car).iter().enumerate() {
        let (section, sigma) = if k % 2 == 0 { (Section::BeforeMerge, 0.02) } else { (Section::AfterMerge, 0.1) };
        let mut ep = simulated_episode(k as u64, &def.params, &EpisodeSpec::default()).unwrap();
        ep.section = section;
        add_accel_noise(&mut ep, sigma, &mut noise);
        results.push(fit_episode(&ep, &lib, &SimConfig::default(), &FitConfig::default()).unwrap());
    }
    let g = mean_rmse_by_group(&results, Grouping::MergeSide);
    assert!(g[0].mean_rmse < g[1].mean_rmse);
}

proptest! {
    #[test]
    fn best_is_minimum_with_lowest_id_on_ties(values in prop::collection::vec(prop::sample::select(vec![0.5, 1.0, 1.5, f64::INFINITY]), 1..30)) {
        if let Some(i) = argmin(&values) {
            prop_assert!(values.iter().all(|&v| v >= values[i]));
            prop_assert!(values[..i].iter().all(|&v| v > values[i]));
        } else {
            prop_assert!(values.iter().all(|v| v.is_infinite()));
        }
    }

    #[test]
    fn rmse_is_permutation_invariant(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..50), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng(seed));
        let (p1, o1): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (p2, o2): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let (a, b) = (rmse(&p1, &o1).unwrap(), rmse(&p2, &o2).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn adding_a_cluster_never_raises_best_rmse(extra_c in 0.1f64..3.0, extra_m in 0.0f64..1.0, extra_l in 0.0f64..2.0, extra_tau in 0.0f64..2.0) {
        let base = library_of(&[(1, gp(1.0, 0.5, 1.0, 1.0)), (2, gp(0.5, 0.2, 0.5, 0.6))]);
        let mut defs: Vec<_> = base.iter().copied().collect();
        defs.push(ClusterDefinition { cluster_id: 3, class: ClusterClass::Car, params: gp(extra_c, extra_m, extra_l, extra_tau) });
        let bigger = ClusterLibrary::new(defs).unwrap();
        let ep = simulated_episode(0, &gp(0.8, 0.4, 0.8, 0.9), &EpisodeSpec::default()).unwrap();
        let a = fit_episode(&ep, &base, &SimConfig::default(), &FitConfig::default()).unwrap();
        let b = fit_episode(&ep, &bigger, &SimConfig::default(), &FitConfig::default()).unwrap();
        prop_assert!(b.rmse <= a.rmse);
    }
}
