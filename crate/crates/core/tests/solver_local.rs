mod common;

use common::{context, grid_oracle_t2, random_context, soc2_profile};
use dr_optout::domain::{check_feasible, EventConfig, ExogenousSeries, PowerLimits, Trajectory};
use dr_optout::objective::{evaluate, Objective};
use dr_optout::solver::{
    project_feasible, run_dual_gradient, solve_local_soc1, solve_local_soc2, DualSettings,
    LocalAgent, SolverConfig,
};
use dr_optout::thermal::LinearThermal;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn soc1_matches_grid_oracle_on_two_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = SolverConfig::default();
    let total = 20;
    let mut good = 0;
    for _ in 0..total {
        let ctx = random_context(&mut rng, 2);
        let sol = solve_local_soc1(&ctx, &cfg, None);
        let grid = grid_oracle_t2(&ctx, |u| evaluate(&ctx, u, Objective::Soc1, None, None));
        assert!(check_feasible(&sol.traj, &ctx.limits(), 2)
            .unwrap()
            .is_feasible());
        if sol.value <= grid + 1e-3 {
            good += 1;
        }
    }
    assert!(good >= 19, "{good} of {total}");
}

#[test]
fn soc2_matches_grid_oracle_on_two_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let cfg = SolverConfig::default();
    let total = 20;
    let mut good = 0;
    for _ in 0..total {
        let ctx = random_context(&mut rng, 2);
        let lambda: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let sol = solve_local_soc2(&ctx, &lambda, &cfg, None).unwrap();
        assert!(sol.traj.l.as_ref().unwrap().iter().all(|&l| l >= 0.0));
        let grid = grid_oracle_t2(&ctx, |u| soc2_profile(&ctx, u, &lambda));
        if sol.value <= grid + 1e-3 {
            good += 1;
        }
    }
    assert!(good >= 19, "{good} of {total}");
}

#[test]
fn riskless_energy_plan_drops_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ctx = random_context(&mut rng, 6);
    ctx.theta.theta = [60.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    std::sync::Arc::make_mut(&mut ctx.cfg).rho = 0.0;
    let sol = solve_local_soc1(&ctx, &SolverConfig::default(), None);
    let lim = ctx.limits();
    for (k, u) in sol.traj.u.iter().enumerate() {
        let floor = (lim.u_prev - lim.du_max * (k + 1) as f64).max(0.0);
        assert!((u - floor).abs() < 1e-6, "step {k}: {u} vs {floor}");
    }
}

#[test]
fn tracking_without_prices_or_risk_follows_power() {
    let cfg = EventConfig {
        steps: 3,
        rho: 0.7,
        ..EventConfig::default()
    };
    let exo = ExogenousSeries {
        s_out: vec![90.0; 4],
        price: vec![0.5; 3],
    };
    let ctx = context(
        [60.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        LinearThermal::new(0.1, -1.4).unwrap().into(),
        cfg,
        exo,
    );
    let sol = solve_local_soc2(&ctx, &[0.0; 3], &SolverConfig::default(), None).unwrap();
    let l = sol.traj.l.as_ref().unwrap();
    for (u, l) in sol.traj.u.iter().zip(l) {
        assert!((u - l).abs() < 1e-6);
    }
    assert!((sol.value + 0.7).abs() < 1e-9);
}

#[test]
fn projection_hand_cases() {
    let lim = PowerLimits {
        u_max: 2.0,
        du_max: 1.0,
        u_prev: 2.0,
    };
    assert_eq!(project_feasible(&[3.0; 5], &lim), vec![2.0; 5]);
    let lim = PowerLimits {
        u_max: 2.0,
        du_max: 1.0,
        u_prev: 0.0,
    };
    let out = project_feasible(&[5.0], &lim);
    assert!((out[0] - 1.0).abs() < 1e-12);
}

#[test]
fn single_agent_carries_the_target() {
    // A target the agent produces at known negative prices, where its plan
    // sits at full cooling and its tracking trajectory moves with the price.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ctx = random_context(&mut rng, 4);
    let cfg = SolverConfig::default();
    let lambda0 = [-0.2; 4];
    let reference = solve_local_soc2(&ctx, &lambda0, &cfg, None).unwrap();
    let target = reference.traj.l.clone().unwrap();
    let mut agents = vec![LocalAgent::new(0, ctx, cfg, None)];
    let settings = DualSettings {
        schedule: dr_optout::solver::StepSchedule {
            scale: 200.0,
            ..Default::default()
        },
        eps: 1e-10,
        k_max: 500,
    };
    let out = run_dual_gradient(&mut agents, &target, &settings, None).unwrap();
    let rel = *out.relative_residuals(&target).last().unwrap();
    assert!(rel < 1e-4, "relative residual {rel}");
    for l in &out.state.lambda {
        assert!((l + 0.2).abs() < 1e-3, "{:?}", out.state.lambda);
    }
}

#[test]
fn infinite_tolerance_stops_after_one_round() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let agents: Vec<_> = (0..3)
        .map(|i| {
            LocalAgent::new(
                i,
                random_context(&mut rng, 3),
                SolverConfig::default(),
                None,
            )
        })
        .collect();
    let mut agents = agents;
    let settings = DualSettings {
        eps: f64::INFINITY,
        ..DualSettings::default()
    };
    let out = run_dual_gradient(&mut agents, &[3.0; 3], &settings, None).unwrap();
    assert_eq!(out.state.k, 1);
    assert!(out.converged);
    assert_eq!(out.state.residuals.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_idempotent_and_feasible(
        u in prop::collection::vec(-3.0f64..5.0, 1..16),
        u_prev in 0.0f64..2.0,
    ) {
        let lim = PowerLimits { u_max: 2.0, du_max: 1.0, u_prev };
        let p = project_feasible(&u, &lim);
        let traj = Trajectory::power(p.clone());
        prop_assert!(check_feasible(&traj, &lim, u.len()).unwrap().is_feasible());
        let pp = project_feasible(&p, &lim);
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
