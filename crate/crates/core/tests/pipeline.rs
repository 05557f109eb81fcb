use btai_core::env::{DeepRewardSpec, Lake, TaskOptions};
use btai_core::experiment::{emit_csv, parse_config, read_csv, run_experiment, AgentKind};
use btai_core::{aci_select_action, build_task, one_hot, BtaiAgent, EnvId, PlannerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn config_text_to_csv_and_back() {
    let cfg = parse_config("ENV = deep_medium\nNB_SIMULATIONS = 4\nNB_PLANNING_STEPS = 10,20\nPRECISION_PRIOR_PREFERENCES = 3\n").unwrap();
    let rows = run_experiment(&cfg, None).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.p_success == 1.0 && r.p_failure == 0.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    emit_csv(&rows, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap(), rows);
}

#[test]
fn every_environment_builds_a_valid_task() {
    for id in EnvId::ALL {
        let task = build_task(id, &TaskOptions::default(), None).unwrap();
        assert_eq!(task.prefs.c_o.len(), task.model.num_obs(), "{id}");
        assert_eq!(task.prefs.c_s.len(), task.model.num_states(), "{id}");
        let mut env = task.env.clone();
        let first = env.reset(&mut ChaCha8Rng::seed_from_u64(1));
        assert!(first < task.model.num_obs(), "{id}");
        assert!(env.num_actions() == task.model.num_actions(), "{id}");
    }
}

#[test]
fn planner_and_exhaustive_baseline_agree_on_the_first_move() {
    let task = build_task(EnvId::DeepMedium, &TaskOptions { gamma: 3.0, ..Default::default() }, None).unwrap();
    let d = one_hot(0, task.model.num_states()).unwrap();
    let exhaustive = aci_select_action(&task.model, &task.prefs, &d, 5, 1 << 30).unwrap().action;
    let mut agent = BtaiAgent::new(&task.model, &task.prefs, PlannerConfig::default(), 0).unwrap();
    let planned = agent.act(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(exhaustive, DeepRewardSpec::medium().longest_path());
    assert_eq!(planned, exhaustive);
}

#[test]
fn pomcp_runs_on_both_lakes() {
    for env in [EnvId::LakeA, EnvId::LakeB] {
        let mut cfg = parse_config(&format!("ENV = {env}\nAGENT = pomcp\nTIMEOUT = 50\nNB_SIMULATIONS = 3\n")).unwrap();
        cfg.nb_action_perception_cycles = 5;
        assert_eq!(cfg.agent, AgentKind::Pomcp);
        let rows = run_experiment(&cfg, None).unwrap();
        assert_eq!(rows[0].planning_iterations, 50);
        assert_eq!(rows[0].p_success, 0.0);
    }
}

#[test]
fn lake_layouts_load_from_disk() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let text = std::fs::read_to_string(dir.join("lake_a.txt")).unwrap();
    let from_disk = Lake::new(btai_core::env::GridSpec::parse(&text).unwrap()).unwrap();
    let builtin = Lake::new(btai_core::env::load_layout(EnvId::LakeA, None).unwrap()).unwrap();
    assert_eq!(from_disk.num_states(), builtin.num_states());
    assert_eq!(from_disk.goal_state(), builtin.goal_state());
}
