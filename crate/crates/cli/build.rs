use std::process::Command;

fn main() {
    let hash = Command::new("git")
        .args(["rev-parse", "--short=10", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = match hash {
        Some(h) => format!("{}+g{}", env!("CARGO_PKG_VERSION"), h),
        None => format!("{}+unknown", env!("CARGO_PKG_VERSION")),
    };
    println!("cargo:rustc-env=QUADNET_VERSION={version}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/refs");
}
