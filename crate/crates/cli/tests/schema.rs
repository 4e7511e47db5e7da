//! Payloads against docs/api.schema.json.

use std::path::PathBuf;

use atl_cli::server::{ServeOptions, Server};
use atl_core::runtime::{Disturbance, Simulation, StateSnapshot, Transport};
use atl_core::sequencer::{OperatorCommand, Phase};
use serde_json::{json, Value};

fn root() -> Value {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/api.schema.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn validator(def: &str) -> jsonschema::Validator {
    let mut s = root();
    s["$ref"] = format!("#/$defs/{def}").into();
    jsonschema::draft202012::new(&s).unwrap()
}

fn check(def: &str, v: &Value) {
    let errors: Vec<String> = validator(def).iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{def}: {v}\n{errors:#?}");
}

fn all_commands() -> Vec<OperatorCommand> {
    vec![
        OperatorCommand::Start,
        OperatorCommand::Stop,
        OperatorCommand::AckFault,
        OperatorCommand::SetSetpoint { value: 180.0 },
        OperatorCommand::SetForce { value: 30.0 },
        OperatorCommand::SetGains { zone: Some(1), kp: 10.0, ki: 0.5, kd: 0.0 },
        OperatorCommand::SetGains { zone: None, kp: 10.0, ki: 0.5, kd: 0.0 },
        OperatorCommand::ManualFeed,
        OperatorCommand::ManualCut,
        OperatorCommand::Jog { dx: 0.01, dy: 0.0, dz: -0.01 },
    ]
}

fn scenario() -> atl_core::runtime::RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/plane_three_tracks.json");
    let mut cfg = atl_cli::load(&path).unwrap();
    cfg.modbus.transport = Transport::Loopback;
    cfg
}

#[test]
fn every_command_is_documented() {
    let documented: Vec<String> = root()["$defs"]["OperatorCommand"]["oneOf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["properties"]["type"]["const"].as_str().unwrap().to_string())
        .collect();
    let mut names: Vec<&str> = all_commands().iter().map(|c| c.name()).collect();
    names.dedup();
    assert_eq!(documented, names);
    for c in all_commands() {
        let v = serde_json::to_value(&c).unwrap();
        check("OperatorCommand", &v);
        // And the schema form parses back.
        assert_eq!(serde_json::from_value::<OperatorCommand>(v).unwrap(), c);
    }
}

#[test]
fn schema_rejects_what_the_server_rejects() {
    let v = validator("OperatorCommand");
    for bad in [
        json!({"type": "warp"}),
        json!({"type": "set_force", "args": {"value": -1.0}}),
        json!({"type": "set_setpoint"}),
        json!({"type": "jog", "args": {"dx": 1.0}}),
        json!({"type": "set_gains", "args": {"zone": 7, "kp": 1, "ki": 0, "kd": 0}}),
    ] {
        assert!(!v.is_valid(&bad), "{bad}");
    }
}

#[test]
fn trace_record_properties_follow_the_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let mut cfg = scenario();
    cfg.process.max_time = 0.05;
    atl_core::runtime::run_to_file(cfg, &mut atl_core::runtime::ScriptedCommands::start(), &trace).unwrap();
    let header = std::fs::read_to_string(&trace).unwrap().lines().next().unwrap().to_string();
    let schema = root();
    let props: Vec<&str> = schema["$defs"]["TraceRecord"]["properties"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    let required: Vec<&str> =
        schema["$defs"]["TraceRecord"]["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let cols: Vec<&str> = header.split(',').collect();
    assert_eq!(required, cols);
    let mut sorted_cols = cols.clone();
    sorted_cols.sort();
    let mut sorted_props = props.clone();
    sorted_props.sort();
    assert_eq!(sorted_props, sorted_cols);
}

#[test]
fn snapshots_conform_in_every_phase() {
    let mut sim = Simulation::new(scenario()).unwrap();
    check("StateSnapshot", &serde_json::to_value(StateSnapshot::of(&sim)).unwrap());
    sim.enqueue(OperatorCommand::Start);
    let mut seen = std::collections::HashSet::new();
    while sim.sequencer().phase != Phase::Indexing {
        let out = sim.step();
        if seen.insert(out.record.state) {
            check("StateSnapshot", &serde_json::to_value(StateSnapshot::of(&sim)).unwrap());
            check("TraceRecord", &serde_json::to_value(&out.record).unwrap());
        }
        if out.record.state == Phase::Taping && out.record.s_progress > 0.5 && sim.fault_count() == 0 {
            sim.inject(Disturbance::GapOffset { mm: 100.0 });
        }
        if sim.sequencer().phase == Phase::Fault {
            let snap = serde_json::to_value(StateSnapshot::of(&sim)).unwrap();
            check("StateSnapshot", &snap);
            assert!(!snap["alarms"].as_array().unwrap().is_empty());
            break;
        }
    }
    assert!(seen.contains(&Phase::Taping));
}

#[test]
fn alarms_and_disturbances_conform() {
    use atl_core::Alarm;
    for a in [
        Alarm::AcfError { code: 1 },
        Alarm::CommTimeout,
        Alarm::CommError { detail: "x".into() },
        Alarm::TemperatureOutOfWindow { zone: 1, temperature: 170.0 },
        Alarm::ContactLost,
        Alarm::ForceBelowMinimum { force: 3.0 },
        Alarm::SpoolShort { required: 3.0, remaining: 2.0 },
        Alarm::SpoolEmpty,
        Alarm::Interlock { detail: "x".into() },
        Alarm::Motion { detail: "x".into() },
    ] {
        check("Alarm", &serde_json::to_value(&a).unwrap());
    }
    for d in [
        Disturbance::ZoneTemperatureStep { zone: 2, delta: -40.0 },
        Disturbance::HeaterFailure { zone: 0 },
        Disturbance::GapOffset { mm: 40.0 },
        Disturbance::StopModbusServer,
    ] {
        check("Disturbance", &serde_json::to_value(&d).unwrap());
    }
}

#[tokio::test]
async fn live_replies_conform() {
    let server = Server::start(scenario(), ServeOptions::default()).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = server.router();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    let http = reqwest::Client::new();
    let url = |p: &str| format!("http://{addr}{p}");

    let state: Value = http.get(url("/state")).send().await.unwrap().json().await.unwrap();
    check("StateSnapshot", &state);
    let post = |body: Value| http.post(url("/command")).json(&body).send();

    let r = post(json!({"type": "ack_fault"})).await.unwrap();
    assert_eq!(r.status(), 409);
    check("Refusal", &r.json().await.unwrap());
    let r = post(json!({"type": "set_force", "args": {"value": 0}})).await.unwrap();
    assert_eq!(r.status(), 400);
    check("ApiError", &r.json().await.unwrap());
    let r = post(json!({"type": "set_force", "args": {"value": 35}})).await.unwrap();
    assert_eq!(r.status(), 202);
    check("CommandAck", &r.json().await.unwrap());
    server.shutdown().unwrap();
}
