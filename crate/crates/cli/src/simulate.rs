//! Play-out front ends: terminal loop, protocol server, batch run and
//! diagram export.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use scenarioforge::project::Project;
use scenarioforge::sim::server::{select_script, serve as serve_hub, SessionHub};
use scenarioforge::sim::{emit_component_graph, Choice, SimMode, SimSession};

use crate::output::Out;

fn session(project: &Project, script: Option<&str>, mode: SimMode) -> anyhow::Result<SimSession> {
    let script = select_script(project, script)?;
    Ok(SimSession::new("cli", &project.program, script, mode)?)
}

fn finish(s: &SimSession, diagram: Option<&Path>, out: &Out) -> anyhow::Result<()> {
    let trace = scenarioforge::kernel::Trace {
        entries: s.trace().to_vec(),
    };
    out.write(Path::new("simulate.trace"), &trace.serialize())?;
    if let Some(d) = diagram {
        let p = out.write(d, &s.diagram())?;
        println!("diagram written to {}", p.display());
    }
    Ok(())
}

pub fn auto(project: &Project, script: Option<&str>, diagram: Option<&Path>, out: &Out) -> anyhow::Result<bool> {
    let s = session(project, script, SimMode::Auto)?;
    for e in s.trace() {
        println!("{e}");
    }
    finish(&s, diagram, out)?;
    Ok(true)
}

/// Reads choices from stdin: an index from the list, an empty line for the
/// next event by tie-break, `a` to run to the end, `r` to reset, `q` to quit.
pub fn repl(project: &Project, script: Option<&str>, diagram: Option<&Path>, out: &Out) -> anyhow::Result<bool> {
    let mut s = session(project, script, SimMode::Manual)?;
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut lines = stdin.lock().lines();
    loop {
        let enabled = s.enabled_events();
        if enabled.is_empty() {
            writeln!(stdout, "quiescent after {} events", s.trace().len())?;
            break;
        }
        writeln!(stdout, "revision {}", s.revision())?;
        for (i, e) in enabled.iter().enumerate() {
            let note = if e.external {
                " [external]".to_string()
            } else if !e.selectable() {
                format!(" [blocked by {}]", e.blocked_by.join(", "))
            } else {
                String::new()
            };
            writeln!(stdout, "  {}) {}{note}", i + 1, e.event)?;
        }
        write!(stdout, "> ")?;
        stdout.flush()?;
        let Some(line) = lines.next().transpose()? else { break };
        let choice = match line.trim() {
            "" => Choice::NextByTieBreak,
            "q" => break,
            "a" => {
                for e in s.auto_run()? {
                    writeln!(stdout, "{e}")?;
                }
                continue;
            }
            "r" => {
                s.reset()?;
                continue;
            }
            n => match n.parse::<usize>().ok().and_then(|i| enabled.get(i.wrapping_sub(1))) {
                Some(e) => Choice::Event(e.event_id.clone()),
                None => {
                    writeln!(stdout, "unknown choice `{n}`")?;
                    continue;
                }
            },
        };
        match s.step(s.revision(), &choice) {
            Ok(r) => writeln!(stdout, "{}", r.executed)?,
            Err(e) => writeln!(stdout, "{e}")?,
        }
    }
    drop(stdout);
    finish(&s, diagram, out)?;
    Ok(true)
}

pub fn serve(project: Project, addr: &str) -> anyhow::Result<bool> {
    let hub = Arc::new(SessionHub::new(Some(project)));
    eprintln!("serving on {addr}");
    serve_hub(hub, addr)?;
    Ok(true)
}

pub fn diagrams(
    project: &Project,
    script: Option<&str>,
    sequence: bool,
    component: bool,
    out: &Out,
) -> anyhow::Result<bool> {
    if sequence {
        let s = session(project, script, SimMode::Auto)?;
        let p = out.write(&PathBuf::from("sequence.puml"), &s.diagram())?;
        println!("{}", p.display());
    }
    if component {
        let g = emit_component_graph(&project.manifest.name, &project.manifest.declarations, &project.defs);
        let p = out.write(&PathBuf::from("components.dot"), &g)?;
        println!("{}", p.display());
    }
    Ok(true)
}
