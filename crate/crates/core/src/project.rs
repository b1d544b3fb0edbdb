//! Project manifests: declarations, file sets and execution settings in a
//! TOML file whose relative paths resolve against the manifest's directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::ceg::{CegError, EventMap};
use crate::dsl::{parse_scenario_source, unreachable_triggers, validate_program, DiagCode, Diagnostic, ScenarioDef};
use crate::event::{Declarations, ObjectKind, ParamKind};
use crate::gherkin::{parse_bindings, parse_feature, validate_bindings, FeatureDoc, GherkinError, StepBinding};
use crate::harness::{parse_tests, TestSpec};
use crate::kernel::{load_program, ExecutionConfig, KernelError, Program};
use crate::reqs::{ingest_requirements, ClassifierConfig, IngestError, InputFormat, Requirement};

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("{path}: {source}")]
    Feature { path: PathBuf, source: GherkinError },
    #[error("{path}: {source}")]
    Requirements { path: PathBuf, source: IngestError },
    #[error("{path}: {source}")]
    EventMap { path: PathBuf, source: CegError },
    #[error("{0}")]
    Kernel(KernelError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    name: String,
    #[serde(default)]
    objects: Vec<RawObject>,
    #[serde(default)]
    messages: Vec<RawMessage>,
    #[serde(default)]
    files: FileSets,
    #[serde(default)]
    config: ExecutionConfig,
    #[serde(default)]
    classifier: ClassifierConfig,
}

#[derive(Debug, Deserialize)]
struct RawObject {
    name: String,
    kind: ObjectKind,
}

#[derive(Debug, Deserialize)]
struct RawMessage {
    name: String,
    #[serde(default)]
    params: Vec<ParamKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileSets {
    pub scenarios: Vec<PathBuf>,
    pub test_scenarios: Vec<PathBuf>,
    pub tests: Vec<PathBuf>,
    pub features: Vec<PathBuf>,
    pub bindings: Vec<PathBuf>,
    pub requirements: Vec<PathBuf>,
    pub event_map: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ProjectManifest {
    pub name: String,
    /// Directory the manifest's relative paths resolve against.
    pub root: PathBuf,
    pub declarations: Declarations,
    pub files: FileSets,
    pub config: ExecutionConfig,
    pub classifier: ClassifierConfig,
}

impl ProjectManifest {
    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// A path as shown in diagnostics: relative to the project root.
    pub fn display(rel: &Path) -> String {
        rel.to_string_lossy().replace('\\', "/")
    }
}

fn read(path: &Path) -> Result<String, ProjectError> {
    fs::read_to_string(path).map_err(|source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_manifest(path: &Path) -> Result<ProjectManifest, ProjectError> {
    let text = read(path)?;
    let raw: RawManifest = toml::from_str(&text).map_err(|e| ProjectError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut decls = Declarations::new();
    let dup = |what: &str, name: &str| ProjectError::Manifest {
        path: path.to_path_buf(),
        message: format!("{what} `{name}` declared twice"),
    };
    for o in raw.objects {
        if decls.object(&o.name).is_some() {
            return Err(dup("object", &o.name));
        }
        decls.declare_object(o.name, o.kind);
    }
    for m in raw.messages {
        if decls.message(&m.name).is_some() {
            return Err(dup("message", &m.name));
        }
        decls.declare_message(m.name, m.params);
    }
    Ok(ProjectManifest {
        name: raw.name,
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        declarations: decls,
        files: raw.files,
        config: raw.config,
        classifier: raw.classifier,
    })
}

#[derive(Debug, Clone)]
pub struct Project {
    pub manifest: ProjectManifest,
    pub defs: Vec<ScenarioDef>,
    pub test_defs: Vec<ScenarioDef>,
    pub tests: Vec<TestSpec>,
    /// Feature files with their manifest-relative paths.
    pub features: Vec<(PathBuf, FeatureDoc)>,
    pub bindings: Vec<StepBinding>,
    pub program: Program,
    pub warnings: Vec<Diagnostic>,
}

/// Loads and validates everything the manifest names except requirements
/// and the event map, which only test generation needs.
pub fn load_project(path: &Path) -> Result<Project, ProjectError> {
    let manifest = load_manifest(path)?;
    let mut diags = Vec::new();

    let defs = load_scenarios(&manifest, &manifest.files.scenarios, &mut diags)?;
    let test_defs = load_scenarios(&manifest, &manifest.files.test_scenarios, &mut diags)?;
    let all: Vec<(String, ScenarioDef)> = defs.iter().chain(&test_defs).cloned().collect();
    duplicate_ids(&all, &mut diags);
    // Reachability spans files: a trigger may be requested by a scenario in another file.
    let all_defs: Vec<ScenarioDef> = all.iter().map(|(_, d)| d.clone()).collect();
    for (i, d) in unreachable_triggers(&all_defs, &manifest.declarations) {
        diags.push(d.in_file(&all[i].0));
    }
    let defs: Vec<ScenarioDef> = defs.into_iter().map(|(_, d)| d).collect();
    let test_defs: Vec<ScenarioDef> = test_defs.into_iter().map(|(_, d)| d).collect();

    let mut tests = Vec::new();
    let mut seen_tests: HashMap<String, String> = HashMap::new();
    for rel in &manifest.files.tests {
        let file = ProjectManifest::display(rel);
        match parse_tests(&read(&manifest.path(rel))?) {
            Ok(specs) => {
                for spec in specs {
                    if let Some(prev) = seen_tests.insert(spec.id.clone(), file.clone()) {
                        diags.push(
                            Diagnostic::error(
                                DiagCode::DuplicateScenario,
                                Default::default(),
                                format!("test `{}` also defined in {prev}", spec.id),
                            )
                            .in_file(&file),
                        );
                    }
                    tests.push(spec);
                }
            }
            Err(d) => diags.push(d.in_file(&file)),
        }
    }

    let mut features = Vec::new();
    for rel in &manifest.files.features {
        let doc = parse_feature(&read(&manifest.path(rel))?).map_err(|source| ProjectError::Feature {
            path: rel.clone(),
            source,
        })?;
        features.push((rel.clone(), doc));
    }

    let mut bindings = Vec::new();
    for rel in &manifest.files.bindings {
        let file = ProjectManifest::display(rel);
        match parse_bindings(&read(&manifest.path(rel))?) {
            Ok(bs) => {
                diags.extend(
                    validate_bindings(&bs, &manifest.declarations)
                        .into_iter()
                        .map(|d| d.in_file(&file)),
                );
                bindings.extend(bs);
            }
            Err(e) => diags.push(Diagnostic::error(DiagCode::SyntaxError, e.loc, e.message).in_file(&file)),
        }
    }

    let (errors, warnings): (Vec<_>, Vec<_>) = diags.into_iter().partition(Diagnostic::is_error);
    if !errors.is_empty() {
        return Err(ProjectError::Invalid(errors));
    }
    let program = load_program(defs.clone(), manifest.declarations.clone(), manifest.config.clone())
        .map_err(ProjectError::Kernel)?;
    Ok(Project {
        manifest,
        defs,
        test_defs,
        tests,
        features,
        bindings,
        program,
        warnings,
    })
}

fn load_scenarios(
    manifest: &ProjectManifest,
    files: &[PathBuf],
    diags: &mut Vec<Diagnostic>,
) -> Result<Vec<(String, ScenarioDef)>, ProjectError> {
    let mut out = Vec::new();
    for rel in files {
        let file = ProjectManifest::display(rel);
        match parse_scenario_source(&read(&manifest.path(rel))?) {
            Ok(defs) => {
                diags.extend(
                    validate_program(&defs, &manifest.declarations)
                        .into_iter()
                        .filter(|d| d.code != DiagCode::UnreachableTrigger)
                        .map(|d| d.in_file(&file)),
                );
                out.extend(defs.into_iter().map(|d| (file.clone(), d)));
            }
            Err(ds) => diags.extend(ds.into_iter().map(|d| d.in_file(&file))),
        }
    }
    Ok(out)
}

/// Duplicate ids across files; duplicates within a file are already
/// reported by validation.
fn duplicate_ids(defs: &[(String, ScenarioDef)], diags: &mut Vec<Diagnostic>) {
    let mut first_file: HashMap<&str, &str> = HashMap::new();
    for (file, d) in defs {
        match first_file.get(d.id.as_str()) {
            Some(prev) if prev != file => diags.push(
                Diagnostic::error(
                    DiagCode::DuplicateScenario,
                    d.loc,
                    format!("scenario `{}` is also defined in {prev}", d.id),
                )
                .in_file(file),
            ),
            Some(_) => {}
            None => {
                first_file.insert(&d.id, file);
            }
        }
    }
}

impl Project {
    pub fn requirements(&self) -> Result<Vec<Requirement>, ProjectError> {
        let mut out = Vec::new();
        for rel in &self.manifest.files.requirements {
            let text = read(&self.manifest.path(rel))?;
            let reqs = ingest_requirements(&text, InputFormat::from_path(rel)).map_err(|source| {
                ProjectError::Requirements {
                    path: rel.clone(),
                    source,
                }
            })?;
            out.extend(reqs);
        }
        let mut ids = std::collections::HashSet::new();
        for r in &out {
            if !ids.insert(r.id.clone()) {
                return Err(ProjectError::Requirements {
                    path: self.manifest.files.requirements.last().cloned().unwrap_or_default(),
                    source: IngestError::DuplicateId(r.id.clone()),
                });
            }
        }
        Ok(out)
    }

    pub fn event_map(&self) -> Result<EventMap, ProjectError> {
        let Some(rel) = &self.manifest.files.event_map else {
            return Ok(EventMap::default());
        };
        EventMap::parse(&read(&self.manifest.path(rel))?).map_err(|source| ProjectError::EventMap {
            path: rel.clone(),
            source,
        })
    }
}
