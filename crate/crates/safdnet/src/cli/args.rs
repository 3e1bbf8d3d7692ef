//! Minimal declarative flag parsing for the subcommands.

use std::collections::{BTreeMap, BTreeSet};

use super::CliError;

#[derive(Clone, Copy)]
pub struct FlagSpec {
    pub name: &'static str,
    pub takes_value: bool,
    pub help: &'static str,
}

pub struct ParsedArgs {
    values: BTreeMap<String, String>,
    switches: BTreeSet<String>,
}

pub fn usage_text(command: &str, summary: &str, specs: &[FlagSpec]) -> String {
    let mut out = format!("usage: safdnet {} [flags]\n  {}\n\nflags:\n", command, summary);
    for s in specs {
        let arg = if s.takes_value {
            format!("--{} <value>", s.name)
        } else {
            format!("--{}", s.name)
        };
        out.push_str(&format!("  {:<24} {}\n", arg, s.help));
    }
    out
}

pub fn parse(args: &[String], specs: &[FlagSpec]) -> Result<ParsedArgs, CliError> {
    let mut values = BTreeMap::new();
    let mut switches = BTreeSet::new();
    let spec_for = |name: &str| specs.iter().find(|s| s.name == name);

    let mut i = 0;
    while i < args.len() {
        let token = &args[i];
        let stripped = token
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("unexpected argument {:?}", token)))?;
        let (name, inline) = match stripped.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (stripped, None),
        };
        let spec = spec_for(name)
            .ok_or_else(|| CliError::Usage(format!("unknown flag --{}", name)))?;
        if spec.takes_value {
            let value = match inline {
                Some(v) => v,
                None => {
                    i += 1;
                    args.get(i)
                        .cloned()
                        .ok_or_else(|| CliError::Usage(format!("--{} needs a value", name)))?
                }
            };
            values.insert(name.to_string(), value);
        } else {
            if inline.is_some() {
                return Err(CliError::Usage(format!("--{} takes no value", name)));
            }
            switches.insert(name.to_string());
        }
        i += 1;
    }
    Ok(ParsedArgs { values, switches })
}

impl ParsedArgs {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn has(&self, name: &str) -> bool {
        self.switches.contains(name)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, CliError> {
        match self.values.get(name) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("--{}: could not parse {:?}", name, raw))
            }),
        }
    }

    pub fn require(&self, name: &str) -> Result<&str, CliError> {
        self.get(name)
            .ok_or_else(|| CliError::Usage(format!("--{} is required", name)))
    }
}
