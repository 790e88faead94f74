//! Config-file overrides.
//!
//! A TOML file whose top-level keys apply to every subcommand and whose
//! tables named after a subcommand (`[compose]`, `[eval]`, ...) apply to that
//! subcommand only. Keys mirror the job fields, so
//!
//! ```toml
//! seed = 7
//! [compose]
//! workers = 4
//! [compose.build.mock]
//! k = 5
//! ```
//!
//! sets the compose seed, worker count and mock sample count. Values in the
//! file win over command-line flags.

use std::path::Path;

use serde_json::Value as Json;

use crate::error::CliError;
use crate::jobs::Job;

fn merge(base: &mut Json, over: Json) {
    match (base, over) {
        (Json::Object(b), Json::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Returns `job` with the file's values laid over it.
pub fn apply(job: Job, path: &Path) -> Result<Job, CliError> {
    let config_err = |msg: String| CliError::Config { path: path.into(), msg };
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| config_err(e.to_string()))?;
    let file = serde_json::to_value(table).map_err(|e| config_err(e.to_string()))?;
    let Json::Object(mut file) = file else { unreachable!("a TOML document is a table") };

    let command = job.command();
    let section = file.remove(command);
    file.retain(|k, _| !Job::COMMANDS.contains(&k.as_str()));

    let mut merged = serde_json::to_value(&job).map_err(|e| config_err(e.to_string()))?;
    merge(&mut merged, Json::Object(file));
    match section {
        Some(s @ Json::Object(_)) => merge(&mut merged, s),
        Some(_) => return Err(config_err(format!("[{command}] must be a table"))),
        None => {}
    }
    if let Json::Object(m) = &mut merged {
        m.insert("command".into(), Json::String(command.into()));
    }
    serde_json::from_value(merged).map_err(|e| config_err(e.to_string()))
}
