//! Newline-delimited JSON protocol over TCP. Each request line gets exactly
//! one response line; an optional `id` is echoed back.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{emit_component_graph, project_scripts, Choice, Script, SimError, SimMode, SimSession};
use crate::project::{load_project, Project};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "camelCase",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum Request {
    CreateSession {
        /// Manifest path; the hub's default project when absent.
        project_ref: Option<String>,
        #[serde(default)]
        mode: SimMode,
        /// Script name; the first available script when absent.
        script: Option<String>,
    },
    GetState {
        session_id: String,
    },
    /// Executes `event_id`, or the next event by tie-break when absent, or
    /// runs to quiescence when `auto` is set.
    Step {
        session_id: String,
        revision: u64,
        event_id: Option<String>,
        #[serde(default)]
        auto: bool,
    },
    Reset {
        session_id: String,
    },
    GetDiagram {
        session_id: String,
        #[serde(default)]
        diagram: DiagramKind,
    },
    CloseSession {
        session_id: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DiagramKind {
    #[default]
    Sequence,
    Component,
}

#[derive(Debug, Deserialize)]
struct Envelope {
    #[serde(default)]
    id: Option<Json>,
    #[serde(flatten)]
    request: Json,
}

struct Entry {
    session: SimSession,
    project: Arc<Project>,
}

/// Sessions shared by every connection.
pub struct SessionHub {
    default_project: Option<Arc<Project>>,
    sessions: Mutex<BTreeMap<String, Entry>>,
    next_id: Mutex<u64>,
}

impl SessionHub {
    pub fn new(default_project: Option<Project>) -> Self {
        SessionHub {
            default_project: default_project.map(Arc::new),
            sessions: Mutex::new(BTreeMap::new()),
            next_id: Mutex::new(1),
        }
    }

    /// One request line in, one response line out (without the newline).
    pub fn handle_line(&self, line: &str) -> String {
        let (id, result) = match serde_json::from_str::<Envelope>(line) {
            Err(e) => (None, Err(("BadRequest", e.to_string()))),
            Ok(env) => {
                let result = match serde_json::from_value::<Request>(env.request) {
                    Err(e) => Err(("BadRequest", e.to_string())),
                    Ok(req) => self.handle(req).map_err(|e| (e.code(), e.to_string())),
                };
                (env.id, result)
            }
        };
        let mut body = match result {
            Ok(Json::Object(mut m)) => {
                m.insert("ok".into(), Json::Bool(true));
                Json::Object(m)
            }
            Ok(other) => json!({ "ok": true, "result": other }),
            Err((code, message)) => json!({ "ok": false, "error": { "code": code, "message": message } }),
        };
        if let Some(id) = id {
            body["id"] = id;
        }
        body.to_string()
    }

    pub fn handle(&self, req: Request) -> Result<Json, SimError> {
        match req {
            Request::CreateSession {
                project_ref,
                mode,
                script,
            } => self.create(project_ref.as_deref(), mode, script.as_deref()),
            Request::GetState { session_id } => self.with(&session_id, |e| Ok(state(e))),
            Request::Step {
                session_id,
                revision,
                event_id,
                auto,
            } => self.with(&session_id, |e| {
                if auto {
                    if revision != e.session.revision() {
                        return Err(SimError::StaleRevision {
                            given: revision,
                            current: e.session.revision(),
                        });
                    }
                    let executed = e.session.auto_run()?;
                    let mut out = state(e);
                    out["executed"] = json!(executed);
                    return Ok(out);
                }
                let choice = event_id.map_or(Choice::NextByTieBreak, Choice::Event);
                let r = e.session.step(revision, &choice)?;
                let mut out = state(e);
                out["executed"] = json!([r.executed]);
                out["deltas"] = json!(r.deltas);
                Ok(out)
            }),
            Request::Reset { session_id } => self.with(&session_id, |e| {
                e.session.reset()?;
                Ok(state(e))
            }),
            Request::GetDiagram { session_id, diagram } => self.with(&session_id, |e| {
                let text = match diagram {
                    DiagramKind::Sequence => e.session.diagram(),
                    DiagramKind::Component => emit_component_graph(
                        &e.project.manifest.name,
                        &e.project.manifest.declarations,
                        &e.project.defs,
                    ),
                };
                Ok(json!({ "sessionId": e.session.id, "revision": e.session.revision(), "diagram": text }))
            }),
            Request::CloseSession { session_id } => {
                let removed = self.sessions.lock().unwrap().remove(&session_id);
                match removed {
                    Some(e) => Ok(json!({ "sessionId": session_id, "revision": e.session.revision() })),
                    None => Err(SimError::UnknownSession(session_id)),
                }
            }
        }
    }

    fn create(&self, project_ref: Option<&str>, mode: SimMode, script: Option<&str>) -> Result<Json, SimError> {
        let project = match project_ref {
            Some(p) => Arc::new(load_project(Path::new(p)).map_err(|e| SimError::InvalidProject(e.to_string()))?),
            None => self
                .default_project
                .clone()
                .ok_or_else(|| SimError::InvalidProject("no project given".into()))?,
        };
        let script = select_script(&project, script)?;
        let id = {
            let mut n = self.next_id.lock().unwrap();
            let id = format!("s{n}");
            *n += 1;
            id
        };
        let session = SimSession::new(id.clone(), &project.program, script, mode)?;
        let mut sessions = self.sessions.lock().unwrap();
        let entry = sessions.entry(id).or_insert(Entry { session, project });
        Ok(state(entry))
    }

    fn with<F>(&self, id: &str, f: F) -> Result<Json, SimError>
    where
        F: FnOnce(&mut Entry) -> Result<Json, SimError>,
    {
        let mut sessions = self.sessions.lock().unwrap();
        let entry = sessions
            .get_mut(id)
            .ok_or_else(|| SimError::UnknownSession(id.to_string()))?;
        f(entry)
    }

    /// Serves one connection until the peer closes it.
    pub fn serve_connection(&self, stream: TcpStream) -> std::io::Result<()> {
        let mut writer = stream.try_clone()?;
        for line in BufReader::new(stream).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut out = self.handle_line(&line);
            out.push('\n');
            writer.write_all(out.as_bytes())?;
            writer.flush()?;
        }
        Ok(())
    }
}

/// Picks a script by name, or the first one when no name is given.
pub fn select_script(project: &Project, name: Option<&str>) -> Result<Script, SimError> {
    let scripts = project_scripts(project).map_err(|e| SimError::InvalidProject(e.to_string()))?;
    match name {
        Some(n) => scripts
            .into_iter()
            .find(|s| s.name == n)
            .ok_or_else(|| SimError::UnknownScript(n.to_string())),
        None => Ok(scripts.into_iter().next().unwrap_or(Script {
            name: String::new(),
            events: Vec::new(),
        })),
    }
}

fn state(e: &Entry) -> Json {
    let s = &e.session;
    json!({
        "sessionId": s.id,
        "revision": s.revision(),
        "mode": s.mode,
        "script": s.script.name,
        "enabled": s.enabled_events(),
        "scenarios": s.scenario_states(),
        "trace": s.trace(),
        "quiescent": s.program().is_quiescent(),
    })
}

/// Binds `addr` and serves connections, one thread each, until the
/// listener fails.
pub fn serve(hub: Arc<SessionHub>, addr: &str) -> Result<(), SimError> {
    let listener = TcpListener::bind(addr).map_err(|e| SimError::BindFailure {
        addr: addr.to_string(),
        message: e.to_string(),
    })?;
    serve_listener(hub, listener);
    Ok(())
}

pub fn serve_listener(hub: Arc<SessionHub>, listener: TcpListener) {
    for stream in listener.incoming().flatten() {
        let hub = Arc::clone(&hub);
        std::thread::spawn(move || {
            if let Err(e) = hub.serve_connection(stream) {
                tracing::debug!("connection closed: {e}");
            }
        });
    }
}
