use std::process::Command;

// Embeds the git description as the build identifier so plots carry their
// provenance; falls back to the package version outside a checkout.
fn main() {
    let described = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| env!("CARGO_PKG_VERSION").to_string());
    println!("cargo:rustc-env=BUILD_DESCRIBE={described}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
