//! Feature and test execution with per-test traces and a report.

use std::collections::BTreeSet;
use std::path::PathBuf;

use scenarioforge::gherkin::{compile_feature, generate_skeletons, GherkinError};
use scenarioforge::harness::{report_records, run_batch, summary, ReportRecord, TestCase, TestResult};
use scenarioforge::par::ExecMode;
use scenarioforge::project::Project;
use serde::Serialize;

use crate::output::{sanitize, Out};

#[derive(Serialize)]
struct Report {
    features: Vec<ReportRecord>,
    tests: Vec<ReportRecord>,
}

fn write_traces(out: &Out, dir: &str, results: &[(TestResult, f64)]) -> anyhow::Result<()> {
    let mut names = BTreeSet::new();
    for (r, _) in results {
        let name = sanitize(&r.test_id);
        if !names.insert(name.clone()) {
            anyhow::bail!(
                "tests `{}` and another test share the trace file name `{name}`",
                r.test_id
            );
        }
        out.write(
            &PathBuf::from(format!("traces/{dir}/{name}.trace")),
            &r.trace.serialize(),
        )?;
    }
    Ok(())
}

fn feature_cases(project: &Project, out: &Out) -> anyhow::Result<Vec<TestCase>> {
    let mut cases = Vec::new();
    for (path, doc) in &project.features {
        match compile_feature(doc, &project.bindings) {
            Ok(specs) => cases.extend(specs.into_iter().map(TestCase::Spec)),
            Err(e @ GherkinError::UnboundStep { .. }) => {
                let skeleton = generate_skeletons(doc, &project.bindings)?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let written = out.write(
                    &PathBuf::from(format!("skeletons/{}.steps", sanitize(&stem))),
                    &skeleton.to_string(),
                )?;
                anyhow::bail!(
                    "{}: {e}\n{} step skeleton(s) written to {}",
                    path.display(),
                    skeleton.stubs.len(),
                    written.display()
                );
            }
            Err(e) => anyhow::bail!("{}: {e}", path.display()),
        }
    }
    Ok(cases)
}

pub fn run(project: &Project, features: bool, tests: bool, timings: bool, out: &Out) -> anyhow::Result<bool> {
    let mode = ExecMode::default();
    let mut feature_results = Vec::new();
    let mut test_results = Vec::new();
    if features {
        let cases = feature_cases(project, out)?;
        feature_results = run_batch(&project.program, &cases, mode);
        write_traces(out, "features", &feature_results)?;
    }
    if tests {
        let cases: Vec<TestCase> = project
            .tests
            .iter()
            .cloned()
            .map(TestCase::Spec)
            .chain(project.test_defs.iter().cloned().map(TestCase::Scenario))
            .collect();
        test_results = run_batch(&project.program, &cases, mode);
        write_traces(out, "tests", &test_results)?;
    }

    let report = Report {
        features: report_records(&feature_results, timings),
        tests: report_records(&test_results, timings),
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    out.write(&PathBuf::from("report.json"), &json)?;

    let all: Vec<TestResult> = feature_results
        .iter()
        .chain(&test_results)
        .map(|(r, _)| r.clone())
        .collect();
    let text = if all.is_empty() {
        "0 tests\n".to_string()
    } else {
        summary(&all)
    };
    print!("{text}");
    out.write(&PathBuf::from("report.txt"), &text)?;
    Ok(all.iter().all(TestResult::passed))
}
