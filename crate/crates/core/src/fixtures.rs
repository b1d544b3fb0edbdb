//! Small hand-written programs shared by unit tests.

use crate::dsl::{parse_scenario_source, ScenarioDef};
use crate::event::{Declarations, ObjectKind, ParamKind};

pub const CP_INTERCOMPONENT: &str = r#"
scenario interComponentCp intercomponent on chargingSocket -> hardwareControl.cpSignalHW(*) {
    bind cpSignalValue = 0
    requestFlex hardwareControl -> controlPilot.cpSignalSW(*, cpSignalValue)
    requestFlex controlPilot -> application.cpSignalInformation(*)
}
"#;

pub const CP_COMPONENT: &str = r#"
scenario controlPilotComponent component on hardwareControl -> controlPilot.cpSignalSW(*, *) {
    bind status = 0
    bind value = 1
    when status == "RTE_E_OK" and value == 3.0 {
        request controlPilot -> controlPilot.setOutputValue("READY_WITH_VENT", value)
        request controlPilot -> application.cpSignalInformation("READY_WITH_VENT")
    }
}
"#;

/// Declarations for the control pilot fragments.
pub fn cp_decls() -> Declarations {
    let mut d = Declarations::new();
    d.declare_object("chargingSocket", ObjectKind::External)
        .declare_object("hardwareControl", ObjectKind::UnderSpecification)
        .declare_object("controlPilot", ObjectKind::UnderSpecification)
        .declare_object("application", ObjectKind::External)
        .declare_message("cpSignalHW", vec![ParamKind::Number])
        .declare_message("cpSignalSW", vec![ParamKind::Text, ParamKind::Number])
        .declare_message("cpSignalInformation", vec![ParamKind::Text])
        .declare_message("setOutputValue", vec![ParamKind::Text, ParamKind::Number]);
    d
}

pub fn parse(src: &str) -> Vec<ScenarioDef> {
    parse_scenario_source(src).unwrap_or_else(|e| panic!("fixture does not parse: {e:?}"))
}
