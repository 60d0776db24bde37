//! Subprocess plumbing for external tools (enhancers, pretrained backends,
//! quality meters).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crate::error::{Error, Result};

/// Resolves `program` to an executable path: taken as-is when it contains a
/// path separator, searched on `PATH` otherwise.
pub(crate) fn resolve_tool(program: &Path) -> Result<PathBuf> {
    let found = if program.components().count() > 1 || program.is_absolute() {
        program.is_file().then(|| program.to_path_buf())
    } else {
        std::env::var_os("PATH").and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|dir| dir.join(program))
                .find(|candidate| candidate.is_file())
        })
    };
    found.ok_or_else(|| Error::Config(format!("external tool {} not found", program.display())))
}

/// Runs the tool and fails on a nonzero exit status.
pub(crate) fn run_tool(tool: &Path, args: &[&std::ffi::OsStr]) -> Result<Output> {
    let output = Command::new(tool)
        .args(args)
        .output()
        .map_err(|e| Error::External(format!("could not launch {}: {e}", tool.display())))?;
    if !output.status.success() {
        return Err(Error::External(format!(
            "{} exited with {}: {}",
            tool.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(output)
}
