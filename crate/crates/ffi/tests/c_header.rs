use std::path::Path;
use std::process::Command;

const PROGRAM: &str = r#"
#include "persemon.h"

int main(void) {
    PersemonModel *model = 0;
    PersemonStatus s = persemon_model_new("micro", 1, &model);
    if (s != PERSEMON_STATUS_OK) {
        return (int)s;
    }
    size_t dim = 0;
    s = persemon_model_feature_dim(model, &dim);
    persemon_model_free(model);
    const char *msg = persemon_last_error();
    (void)msg;
    double y[2] = {0.0, 1.0}, p[2] = {0.25, 0.75}, r2 = 0.0;
    s = persemon_r_squared(y, p, 2, &r2);
    return s == PERSEMON_STATUS_OK && dim > 0 ? 0 : 1;
}
"#;

#[test]
fn header_compiles_as_c_and_cpp() {
    let Ok(cc) = which("cc") else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = std::env::temp_dir().join(format!("persemon-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    for extra in [&["-std=c99"][..], &["-x", "c++"][..]] {
        let out = Command::new(&cc)
            .args(extra)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let _ = std::fs::remove_dir_all(dir);
}

fn which(name: &str) -> Result<std::path::PathBuf, ()> {
    let path = std::env::var_os("PATH").ok_or(())?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file()).ok_or(())
}
