//! Markdown flag reference rendered from the clap definition.

use std::fmt::Write;

use clap::CommandFactory;

use crate::args::Cli;

pub fn flag_reference() -> String {
    let root = Cli::command();
    let mut s = String::new();
    let _ = writeln!(s, "# vernqa flag reference\n");
    let _ = writeln!(s, "Generated from the command definitions; `cargo test -p vernqa-cli` fails when this file is stale.");
    let _ = writeln!(
        s,
        "Regenerate with `VERNQA_BLESS=1 cargo test -p vernqa-cli --test cli flag_reference`.\n"
    );
    let _ = writeln!(
        s,
        "Exit codes: 0 success, 1 usage error (message on stderr), 2 runtime error.\n"
    );
    for sub in root.get_subcommands() {
        let _ = writeln!(s, "## `vernqa {}`\n", sub.get_name());
        if let Some(about) = sub.get_about() {
            let _ = writeln!(s, "{about}\n");
        }
        let _ = writeln!(s, "| flag | value | default | env | description |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            if long == "help" {
                continue;
            }
            let takes_value = arg.get_action().takes_values();
            let value = if takes_value {
                arg.get_value_names()
                    .map(|v| {
                        v.iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .unwrap_or_else(|| long.to_uppercase().replace('-', "_"))
            } else {
                String::new()
            };
            let possible: Vec<String> = arg
                .get_possible_values()
                .iter()
                .map(|p| p.get_name().to_string())
                .collect();
            let value = if takes_value && !possible.is_empty() {
                possible.join(" \\| ")
            } else {
                value
            };
            let default = arg
                .get_default_values()
                .iter()
                .map(|v| v.to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join(",");
            let env = arg
                .get_env()
                .map(|e| e.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
            if arg.is_required_set() {
                help = if help.is_empty() {
                    "required".into()
                } else {
                    format!("required. {help}")
                };
            }
            if let Some(aliases) = arg.get_visible_aliases() {
                let _ = write!(
                    help,
                    " (alias: {})",
                    aliases
                        .iter()
                        .map(|a| format!("--{a}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                );
            }
            let code = |x: &str| {
                if x.is_empty() {
                    String::new()
                } else {
                    format!("`{x}`")
                }
            };
            let _ = writeln!(
                s,
                "| `--{long}` | {} | {} | {} | {} |",
                code(&value),
                code(&default),
                code(&env),
                help.trim()
            );
        }
        let _ = writeln!(s);
    }
    s
}
