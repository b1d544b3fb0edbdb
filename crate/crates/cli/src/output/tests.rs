use super::*;

#[test]
fn sanitize_collapses_separators() {
    assert_eq!(
        sanitize("the user connects plug to socket A"),
        "the-user-connects-plug-to-socket-A"
    );
    assert_eq!(sanitize("  a//b.c "), "a-b-c");
    assert_eq!(sanitize("R01_2"), "R01_2");
    assert_eq!(sanitize("???"), "unnamed");
}

#[test]
fn writes_stay_inside_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = Out::new(dir.path());
    let p = out.write(Path::new("a/b.txt"), "x").unwrap();
    assert_eq!(fs::read_to_string(p).unwrap(), "x");
    assert!(out.write(Path::new("../escape.txt"), "x").is_err());
    assert!(out.write(Path::new("/tmp/escape.txt"), "x").is_err());
}
