use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let out_dir = PathBuf::from(env::var("OUT_DIR").unwrap());

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("read cbindgen.toml");
    let bindings = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("generate C header");

    let generated = out_dir.join("solarcast.h");
    bindings.write_to_file(&generated);

    // Keep a copy in include/ so C consumers can point -I at the repo.
    let include_dir = crate_dir.join("include");
    std::fs::create_dir_all(&include_dir).expect("create include dir");
    let published = include_dir.join("solarcast.h");
    let new_text = std::fs::read(&generated).expect("read generated header");
    let stale = std::fs::read(&published).map(|old| old != new_text).unwrap_or(true);
    if stale {
        std::fs::write(&published, new_text).expect("publish header");
    }
}
