//! Requirements side: classification and test generation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use scenarioforge::ceg::{
    build_graph, derive_test_cases, emit_harness_stubs, export_suite, EventMap, ExportFormat, TestSuite,
};
use scenarioforge::project::{load_manifest, ProjectManifest};
use scenarioforge::reqs::{
    classify as classify_one, extract_causal, find_pattern, ingest_requirements, Category, InputFormat, Requirement,
};

use crate::output::Out;

fn manifest(path: &Path) -> anyhow::Result<ProjectManifest> {
    load_manifest(path).map_err(|e| anyhow::anyhow!("{e}"))
}

fn read_requirements(m: &ProjectManifest, override_file: Option<&Path>) -> anyhow::Result<Vec<Requirement>> {
    let files: Vec<std::path::PathBuf> = match override_file {
        Some(f) => vec![f.to_path_buf()],
        None => m.files.requirements.iter().map(|r| m.path(r)).collect(),
    };
    let mut out: Vec<Requirement> = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        let reqs = ingest_requirements(&text, InputFormat::from_path(&f)).with_context(|| f.display().to_string())?;
        for r in reqs {
            if out.iter().any(|o| o.id == r.id) {
                anyhow::bail!("{}: requirement id `{}` used twice", f.display(), r.id);
            }
            out.push(r);
        }
    }
    Ok(out)
}

fn classified(m: &ProjectManifest, reqs: &[Requirement]) -> Vec<(Category, Option<&'static str>)> {
    reqs.iter()
        .map(|r| {
            let c = classify_one(r, &m.classifier);
            let pattern = (c == Category::FunctionalCausal)
                .then(|| find_pattern(&r.text).map(|p| p.id))
                .flatten();
            (c, pattern)
        })
        .collect()
}

fn category_table(cats: &[(Category, Option<&str>)]) -> String {
    let mut out = format!("{:<22}{:>6}\n", "category", "count");
    for c in Category::ALL {
        let n = cats.iter().filter(|(k, _)| *k == c).count();
        writeln!(out, "{:<22}{:>6}", c.as_str(), n).unwrap();
    }
    writeln!(out, "{:<22}{:>6}", "total", cats.len()).unwrap();
    out
}

fn classification_csv(reqs: &[Requirement], cats: &[(Category, Option<&str>)]) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["id", "category", "hint", "pattern"])?;
    for (r, (c, p)) in reqs.iter().zip(cats) {
        w.write_record([
            r.id.as_str(),
            c.as_str(),
            r.hint.map(Category::as_str).unwrap_or(""),
            p.unwrap_or(""),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn classify(project: &Path, requirements: Option<&Path>, out: &Out) -> anyhow::Result<bool> {
    let m = manifest(project)?;
    let reqs = read_requirements(&m, requirements)?;
    let cats = classified(&m, &reqs);
    let table = category_table(&cats);
    print!("{table}");
    let mismatches: Vec<String> = reqs
        .iter()
        .zip(&cats)
        .filter(|(r, (c, _))| r.hint.is_some_and(|h| h != *c))
        .map(|(r, (c, _))| format!("{}: hint {} but classified {}", r.id, r.hint.unwrap(), c))
        .collect();
    for line in &mismatches {
        println!("{line}");
    }
    out.write(
        Path::new("requirements/classification.csv"),
        &classification_csv(&reqs, &cats)?,
    )?;
    out.write(Path::new("requirements/categories.txt"), &table)?;
    Ok(true)
}

pub fn gen_tests(
    project: &Path,
    requirements: Option<&Path>,
    formats: &[ExportFormat],
    out: &Out,
) -> anyhow::Result<bool> {
    let m = manifest(project)?;
    let reqs = read_requirements(&m, requirements)?;
    let map = match &m.files.event_map {
        Some(rel) => {
            let p = m.path(rel);
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            EventMap::parse(&text).with_context(|| p.display().to_string())?
        }
        None => EventMap::default(),
    };
    let cats = classified(&m, &reqs);

    let mut report = category_table(&cats);
    let mut suites = Vec::new();
    let mut problems = String::new();
    report.push('\n');
    for (r, (c, _)) in reqs.iter().zip(&cats) {
        if *c != Category::FunctionalCausal {
            continue;
        }
        let suite = extract_causal(r)
            .map_err(|e| e.to_string())
            .and_then(|x| derive_test_cases(&build_graph(&x)).map_err(|e| e.to_string()));
        match suite {
            Ok(s) => {
                writeln!(report, "{:<8}{:>3} cases", r.id, s.len()).unwrap();
                suites.push(s);
            }
            Err(e) => {
                writeln!(report, "{:<8}  - unparsable", r.id).unwrap();
                writeln!(problems, "{e}").unwrap();
            }
        }
    }
    let suite = TestSuite::merge(suites);
    writeln!(report, "{:<8}{:>3} cases", "total", suite.len()).unwrap();
    print!("{report}");
    if !problems.is_empty() {
        eprint!("{problems}");
    }

    if suite.is_empty() {
        println!("no test cases; suite files not written");
    }
    for f in formats.iter().filter(|_| !suite.is_empty()) {
        let name = match f {
            ExportFormat::Tabular => "requirements/suite.csv",
            ExportFormat::Structured => "requirements/suite.json",
        };
        out.write(Path::new(name), &export_suite(&suite, *f)?)?;
    }
    out.write(
        Path::new("requirements/generated.tests"),
        &emit_harness_stubs(&suite, &map),
    )?;
    out.write(Path::new("requirements/gen-tests.txt"), &report)?;
    out.write(Path::new("requirements/unparsable.txt"), &problems)?;
    Ok(true)
}
