use std::path::Path;

use super::server::{select_script, SessionHub};
use super::*;
use crate::kernel::Origin;
use crate::project::load_project;

fn bundled() -> Project {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../projects/plug-interlock/plug-interlock.toml");
    load_project(&p).unwrap()
}

fn session(mode: SimMode) -> (Project, SimSession) {
    let p = bundled();
    let script = select_script(&p, None).unwrap();
    let s = SimSession::new("s1", &p.program, script, mode).unwrap();
    (p, s)
}

#[test]
fn default_script_is_the_first_feature_scenario() {
    let p = bundled();
    let scripts = project_scripts(&p).unwrap();
    assert_eq!(scripts.len(), 2 + p.tests.len());
    let first = select_script(&p, None).unwrap();
    assert_eq!(first, scripts[0]);
    assert_eq!(first.events.len(), 3);
    assert_eq!(first.events[0].message, "connectChargingPlug");
    assert!(matches!(
        select_script(&p, Some("nope")),
        Err(SimError::UnknownScript(_))
    ));
}

#[test]
fn manual_stepping_matches_auto_run() {
    let (_p, mut manual) = session(SimMode::Manual);
    let (_p, auto) = session(SimMode::Auto);
    assert_eq!(manual.revision(), 0);
    assert!(manual.trace().is_empty());

    let first = manual.enabled_events();
    assert_eq!(first.len(), 1);
    assert!(first[0].external);
    assert_eq!(first[0].event_id, "e1");

    while manual.enabled_events().iter().any(EnabledEvent::selectable) {
        let rev = manual.revision();
        let r = manual.step(rev, &Choice::NextByTieBreak).unwrap();
        assert_eq!(r.revision, rev + 1);
    }
    assert_eq!(manual.trace(), auto.trace());
    assert_eq!(auto.revision(), auto.trace().len() as u64);
    assert_eq!(auto.trace().len(), 9);
    assert_eq!(auto.trace()[0].origin, Origin::Triggered);
}

#[test]
fn stale_revision_and_unknown_event_leave_state_alone() {
    let (_p, mut s) = session(SimMode::Manual);
    s.step(0, &Choice::Event("e1".into())).unwrap();
    let before = s.trace().to_vec();
    assert_eq!(
        s.step(0, &Choice::NextByTieBreak),
        Err(SimError::StaleRevision { given: 0, current: 1 })
    );
    assert_eq!(
        s.step(1, &Choice::Event("e9".into())),
        Err(SimError::NotEnabled("e9".into()))
    );
    assert_eq!(s.trace(), before);
    assert_eq!(s.revision(), 1);
}

#[test]
fn step_reports_deltas() {
    let (_p, mut s) = session(SimMode::Manual);
    let r = s.step(0, &Choice::NextByTieBreak).unwrap();
    assert_eq!(r.executed.event.message, "connectChargingPlug");
    assert!(r.deltas.is_empty());
    let r = s.step(1, &Choice::NextByTieBreak).unwrap();
    assert_eq!(r.executed.event.message, "cpSignalHW");
    assert_eq!(r.deltas.len(), 1);
    assert_eq!(r.deltas[0].def_id, "hardwareControlPilotSignals");
    assert_eq!(r.deltas[0].before, None);
    assert!(!r.enabled.is_empty());
}

#[test]
fn quiescent_step_is_rejected() {
    let (_p, mut s) = session(SimMode::Auto);
    let rev = s.revision();
    assert!(s.enabled_events().is_empty());
    assert!(matches!(
        s.step(rev, &Choice::NextByTieBreak),
        Err(SimError::NotEnabled(_))
    ));
    assert_eq!(s.revision(), rev);
}

#[test]
fn reset_bumps_the_revision_and_replays() {
    let (_p, mut s) = session(SimMode::Auto);
    let trace = s.trace().to_vec();
    let rev = s.revision();
    let new = s.reset().unwrap();
    assert!(new > rev);
    assert_eq!(s.trace(), trace);

    let (_p, mut m) = session(SimMode::Manual);
    m.step(0, &Choice::NextByTieBreak).unwrap();
    assert_eq!(m.reset().unwrap(), 2);
    assert!(m.trace().is_empty());
}

#[test]
fn sequence_diagram_lists_lifelines_in_first_appearance_order() {
    let (_p, s) = session(SimMode::Auto);
    let d = s.diagram();
    let participants: Vec<&str> = d.lines().filter_map(|l| l.strip_prefix("participant ")).collect();
    assert_eq!(
        participants,
        [
            "vehicleUser",
            "chargingSocket",
            "hardwareControl",
            "controlPilot",
            "application",
            "proximityPilot",
            "lockingControl"
        ]
    );
    assert!(d.starts_with("@startuml\n") && d.ends_with("@enduml\n"));
    assert_eq!(d.lines().filter(|l| l.contains(" -> ")).count(), 9);
    assert!(d.contains("vehicleUser -> chargingSocket : connectChargingPlug(\"A\", \"A\")\n"));
    assert_eq!(emit_sequence_diagram(&[]), "@startuml\n@enduml\n");
}

#[test]
fn component_graph_has_declared_nodes_and_sorted_edges() {
    let p = bundled();
    let g = emit_component_graph(&p.manifest.name, &p.manifest.declarations, &p.defs);
    assert!(g.starts_with("digraph \"plug-interlock\" {\n"));
    let nodes = g.lines().filter(|l| l.ends_with(';') && !l.contains("->")).count();
    assert_eq!(nodes, 7);
    let edges: Vec<&str> = g.lines().filter(|l| l.contains("->")).collect();
    let mut unique = edges.clone();
    unique.dedup();
    assert_eq!(unique, edges);
    assert!(g.contains("hardwareControl -> chargingSocket [label=\"actuateMotorHW\"];"));
    assert_eq!(
        g,
        emit_component_graph(&p.manifest.name, &p.manifest.declarations, &p.defs)
    );
}

fn rpc(hub: &SessionHub, line: &str) -> serde_json::Value {
    serde_json::from_str(&hub.handle_line(line)).unwrap()
}

#[test]
fn protocol_round_trip() {
    let hub = SessionHub::new(Some(bundled()));
    let r = rpc(&hub, r#"{"id":1,"kind":"createSession","mode":"manual"}"#);
    assert_eq!(r["ok"], true);
    assert_eq!(r["id"], 1);
    assert_eq!(r["sessionId"], "s1");
    assert_eq!(r["revision"], 0);
    assert_eq!(r["enabled"][0]["eventId"], "e1");
    assert_eq!(r["enabled"][0]["external"], true);

    let r = rpc(&hub, r#"{"kind":"step","sessionId":"s1","revision":0,"eventId":"e1"}"#);
    assert_eq!(r["revision"], 1);
    assert_eq!(r["executed"][0]["event"]["message"], "connectChargingPlug");

    let r = rpc(&hub, r#"{"kind":"step","sessionId":"s1","revision":0}"#);
    assert_eq!(r["ok"], false);
    assert_eq!(r["error"]["code"], "StaleRevision");

    let r = rpc(&hub, r#"{"kind":"step","sessionId":"s1","revision":1,"auto":true}"#);
    assert_eq!(r["revision"], 9);
    assert_eq!(r["quiescent"], true);
    assert_eq!(r["trace"].as_array().unwrap().len(), 9);

    let r = rpc(&hub, r#"{"kind":"getDiagram","sessionId":"s1"}"#);
    assert!(r["diagram"].as_str().unwrap().starts_with("@startuml"));
    let r = rpc(&hub, r#"{"kind":"getDiagram","sessionId":"s1","diagram":"component"}"#);
    assert!(r["diagram"].as_str().unwrap().starts_with("digraph"));

    let r = rpc(&hub, r#"{"kind":"reset","sessionId":"s1"}"#);
    assert_eq!(r["revision"], 10);
    assert_eq!(r["trace"].as_array().unwrap().len(), 0);

    assert_eq!(rpc(&hub, r#"{"kind":"closeSession","sessionId":"s1"}"#)["ok"], true);
    assert_eq!(
        rpc(&hub, r#"{"kind":"getState","sessionId":"s1"}"#)["error"]["code"],
        "UnknownSession"
    );
}

#[test]
fn protocol_rejects_malformed_requests() {
    let hub = SessionHub::new(None);
    assert_eq!(rpc(&hub, "not json")["error"]["code"], "BadRequest");
    assert_eq!(rpc(&hub, r#"{"kind":"fly"}"#)["error"]["code"], "BadRequest");
    assert_eq!(
        rpc(&hub, r#"{"kind":"createSession"}"#)["error"]["code"],
        "InvalidProject"
    );
    let r = rpc(&hub, r#"{"id":"x","kind":"getState"}"#);
    assert_eq!(r["id"], "x");
    assert_eq!(r["ok"], false);
}

#[test]
fn sessions_are_independent() {
    let hub = SessionHub::new(Some(bundled()));
    rpc(&hub, r#"{"kind":"createSession"}"#);
    let r = rpc(&hub, r#"{"kind":"createSession","mode":"auto"}"#);
    assert_eq!(r["sessionId"], "s2");
    assert_eq!(rpc(&hub, r#"{"kind":"getState","sessionId":"s1"}"#)["revision"], 0);
}

#[test]
fn tcp_server_answers_line_by_line() {
    use std::io::{BufRead, BufReader, Write};
    use std::sync::Arc;

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hub = Arc::new(SessionHub::new(Some(bundled())));
    std::thread::spawn(move || server::serve_listener(hub, listener));

    let mut conn = std::net::TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    conn.write_all(
        b"{\"id\":7,\"kind\":\"createSession\",\"mode\":\"auto\"}\n\n{\"kind\":\"getState\",\"sessionId\":\"s1\"}\n",
    )
    .unwrap();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let r: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!((r["id"].clone(), r["revision"].clone()), (7.into(), 9.into()));
    line.clear();
    reader.read_line(&mut line).unwrap();
    let r: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(r["revision"], 9);

    assert!(matches!(
        server::serve(Arc::new(SessionHub::new(None)), &addr.to_string()),
        Err(SimError::BindFailure { .. })
    ));
}
