use std::path::Path;
use std::process::Command;

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ergomesh.h");
    std::fs::read_to_string(path).expect("build script writes the header")
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    for item in ["typedef struct EmMesh EmMesh;", "EM_STATUS_OK = 0", "EM_STATUS_PANIC = 5"] {
        assert!(h.contains(item), "{item}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (compiler, file, body) in [
        ("cc", "probe.c", "#include \"ergomesh.h\"\nint main(void) { EmMesh *m = 0; return (int)em_mesh_vertex_count(m); }\n"),
        ("c++", "probe.cpp", "#include \"ergomesh.h\"\nint main() { EmMesh *m = nullptr; return (int)em_mesh_vertex_count(m); }\n"),
    ] {
        let src = dir.path().join(file);
        std::fs::write(&src, body).unwrap();
        let status = match Command::new(compiler)
            .arg("-fsyntax-only")
            .arg("-Wall")
            .arg("-Werror")
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .status()
        {
            Ok(s) => s,
            Err(e) => {
                eprintln!("skipping {compiler}: {e}");
                continue;
            }
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
