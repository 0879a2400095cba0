use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "halfline_ie.h"

int main(void) {
    const char *toml =
        "kernel = { family = \"gaussian\" }\n"
        "Q = { family = \"power\", p = 2.0 }\n"
        "omega = { name = \"O3\" }\n"
        "grid = { x_max = 12.0, n = 121 }\n";
    HlieConfig *cfg = NULL;
    if (hlie_config_from_toml(toml, &cfg) != HLIE_STATUS_OK) {
        fprintf(stderr, "config: %s\n", hlie_last_error());
        return 1;
    }
    HlieNonlinear *sol = NULL;
    if (hlie_solve_nonlinear(cfg, &sol) != HLIE_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", hlie_last_error());
        return 1;
    }
    size_t n = 0;
    hlie_nonlinear_len(sol, &n);
    double *b = malloc(n * sizeof(double));
    if (hlie_nonlinear_copy(sol, HLIE_NONLINEAR_FIELD_B, b, n) != HLIE_STATUS_OK) {
        return 1;
    }
    HlieConstants c;
    hlie_nonlinear_constants(sol, &c);
    printf("n=%zu xi=%.12f b0=%.3e bend=%.6f\n", n, c.xi, b[0], b[n - 1]);
    int status = hlie_nonlinear_copy(sol, HLIE_NONLINEAR_FIELD_B, b, n - 1) == HLIE_STATUS_BUFFER_TOO_SMALL ? 0 : 1;
    free(b);
    hlie_nonlinear_free(sol);
    hlie_config_free(cfg);
    return status;
}
"#;

fn static_library() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent()
        .and_then(Path::parent)
        .unwrap()
        .join("libhalfline_ie_ffi.a")
}

#[test]
fn c_program_links_against_static_library() {
    let lib = static_library();
    assert!(lib.exists(), "missing {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("main.c");
    std::fs::write(&source, PROGRAM).unwrap();
    let binary = dir.path().join("main");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    let build = Command::new(cc)
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&binary)
        .arg(&source)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&binary).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("n=121 xi=1.500000000000"), "{stdout}");
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/halfline_ie.h")).unwrap();
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "header lacks {name}");
    }
}
