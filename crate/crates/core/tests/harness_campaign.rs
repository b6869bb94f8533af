use std::path::Path;
use std::process::Command;

use dr_optout::domain::Mode;
use dr_optout::harness::{
    baseline_setpoint_raise, expected_cost, gen_customers, oracle_control, read_records,
    run_campaign, CampaignConfig, RegretRecord, RECORDS_FILE, SUMMARY_FILE, TRANSCRIPT_FILE,
};
use dr_optout::objective::baseline_series;
use dr_optout::thermal::ThermalModel;

fn small(n: usize, events: usize) -> CampaignConfig {
    let mut cc = CampaignConfig {
        events,
        seed: 11,
        ..CampaignConfig::default()
    };
    cc.population.n = n;
    cc
}

#[test]
fn campaigns_replay_byte_for_byte() {
    let cc = small(3, 3);
    let pop = cc.load_population().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_campaign(&cc, &pop, Some(a.path())).unwrap();
    let rb = run_campaign(&cc, &pop, Some(b.path())).unwrap();
    assert_eq!(ra.records, rb.records);
    for f in [SUMMARY_FILE, RECORDS_FILE, TRANSCRIPT_FILE] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let logged = read_records(std::fs::File::open(a.path().join(RECORDS_FILE)).unwrap()).unwrap();
    assert_eq!(logged, ra.records);
}

#[test]
fn single_event_cumulative_is_its_regret() {
    let cc = small(2, 1);
    let res = run_campaign(&cc, &cc.load_population().unwrap(), None).unwrap();
    let r = &res.records[0];
    assert_eq!(r.cumulative, r.regret);
    assert!((r.regret - (r.online_value - r.oracle_value)).abs() < 1e-12);
    assert!(r.failure.is_none() && !r.flagged);
    assert_eq!(r.baseline_energy_kwh.len(), 2);
}

#[test]
fn setpoint_raise_shifts_linear_baseline() {
    let cc = small(2, 1);
    let customers = cc.load_population().unwrap().customers();
    let spec = cc.event_generator().spec(cc.seed, 1, &customers).unwrap();
    for c in &customers {
        let u_set = baseline_series(&c.thermal, &spec.cfg, &spec.exo);
        let same = baseline_setpoint_raise(0.0, &spec, &c.thermal).unwrap();
        assert!(same.u.iter().zip(&u_set).all(|(a, b)| (a - b).abs() < 1e-9));
        let ThermalModel::Linear(m) = *c.thermal else {
            panic!("population customers are linear")
        };
        let raised = baseline_setpoint_raise(2.0, &spec, &c.thermal).unwrap();
        let drop = m.kappa * 2.0 / m.eta.abs();
        for (a, b) in raised.u.iter().zip(&u_set) {
            assert!((b - a - drop).abs() < 1e-9);
        }
    }
    assert!(baseline_setpoint_raise(-1.0, &spec, &customers[0].thermal).is_err());
}

#[test]
fn oracle_beats_simple_plans() {
    for mode in [Mode::Soc1, Mode::Soc2] {
        let mut cc = if mode == Mode::Soc2 {
            CampaignConfig::soc2_default()
        } else {
            CampaignConfig::default()
        };
        cc.population.n = 4;
        let customers = gen_customers(5, &cc.population).unwrap().customers();
        let spec = cc.event_generator().spec(5, 2, &customers).unwrap();
        let scaling = cc.online.scaling;
        let oracle = oracle_control(&customers, &spec, scaling, &cc.online.solver).unwrap();
        let again = expected_cost(&customers, &spec, scaling, &oracle.plans).unwrap();
        assert_eq!(again, oracle.value);
        for delta in [0.0, 3.0, 5.0] {
            let plans: Vec<Vec<f64>> = customers
                .iter()
                .map(|c| baseline_setpoint_raise(delta, &spec, &c.thermal).unwrap().u)
                .collect();
            let v = expected_cost(&customers, &spec, scaling, &plans).unwrap();
            assert!(
                oracle.value <= v + 1e-6,
                "{mode:?} raise {delta}: {} vs {v}",
                oracle.value
            );
        }
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cc = CampaignConfig::soc2_default();
    let back = CampaignConfig::from_toml_str(&cc.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cc);
    let partial = CampaignConfig::from_toml_str("events = 7\nseed = 3\n").unwrap();
    assert_eq!((partial.events, partial.seed), (7, 3));
    assert!(CampaignConfig::from_toml_str("events = 0\n").is_err());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dr-optout"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn command_line_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let pop = d.join("pop.json");
    let out = cli(&["gen-customers", "--n", "2", "--seed", "4", "--out", s(&pop)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let hist = d.join("hist.csv");
    assert!(cli(&["gen-history", "--seed", "4", "--out", s(&hist)])
        .status
        .success());
    let header = std::fs::read_to_string(&hist).unwrap();
    assert!(header.starts_with("timestamp,indoor_f,outdoor_f,ac_kw"));
    let model = d.join("model.json");
    let out = cli(&[
        "fit-thermal",
        "--model",
        "linear",
        "--history",
        s(&hist),
        "--out",
        s(&model),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&model).unwrap();
    assert!(text.contains("linear"));

    let mut cc = small(2, 2);
    cc.population_file = Some(pop.clone());
    let cfg = d.join("campaign.toml");
    std::fs::write(&cfg, cc.to_toml_string().unwrap()).unwrap();
    let run = d.join("run");
    let out = cli(&[
        "campaign",
        "--seed",
        "4",
        "--config",
        s(&cfg),
        "--out",
        s(&run),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(run.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("event,regret,cum_regret,optouts,energy_kwh"));

    let rebuilt = d.join("rebuilt.csv");
    let out = cli(&[
        "regret-report",
        "--seed",
        "4",
        "--records",
        s(&run.join(RECORDS_FILE)),
        "--out",
        s(&rebuilt),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&rebuilt).unwrap(), summary);

    let one = d.join("one");
    let out = cli(&[
        "run-event",
        "--seed",
        "4",
        "--config",
        s(&cfg),
        "--event",
        "2",
        "--out",
        s(&one),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        std::fs::read_to_string(one.join(SUMMARY_FILE))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn command_line_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.csv");
    let out = cli(&[
        "fit-thermal",
        "--history",
        s(&missing),
        "--out",
        s(&d.join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let failed = RegretRecord {
        event: 1,
        regret: 0.0,
        cumulative: 0.0,
        online_value: 0.0,
        oracle_value: 0.0,
        optouts: 0,
        energy_kwh: 0.0,
        baseline_energy_kwh: Vec::new(),
        flagged: false,
        solver_warnings: 0,
        failure: Some("agent 0 at iteration 1: no response".into()),
    };
    let log = d.join(RECORDS_FILE);
    std::fs::write(&log, serde_json::to_string(&failed).unwrap() + "\n").unwrap();
    let out = cli(&[
        "regret-report",
        "--records",
        s(&log),
        "--out",
        s(&d.join("sum.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let sum = std::fs::read_to_string(d.join("sum.csv")).unwrap();
    assert_eq!(sum.lines().nth(1), Some("1,,0,0,"));
}

#[test]
fn partial_tracking_config_parses() {
    let text = "events = 200\nmode = \"soc2\"\nprior_var = 4.0\nbaselines = [3.0, 5.0]\n\n[population]\nn = 50\n\n[online.dual]\nk_max = 20\neps = 1e-4\n";
    let cc = CampaignConfig::from_toml_str(text).unwrap();
    assert_eq!(cc.mode, Mode::Soc2);
    assert_eq!(cc.population.n, 50);
    assert_eq!(cc.online.dual.k_max, 20);
    assert_eq!(
        cc.online.dual.schedule,
        CampaignConfig::default().online.dual.schedule
    );
}
