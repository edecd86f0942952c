use std::fmt::{self, Display, Write};
use std::time::{SystemTime, UNIX_EPOCH};

/// Everything needed to re-run an output file, written as `# key: value`
/// header lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: &[String]) -> Self {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut m = Self { entries: Vec::new() };
        m.push("subcommand", subcommand);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("timestamp_unix", stamp);
        m.push("argv", argv.join(" "));
        m
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

impl fmt::Display for RunManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for (k, v) in &self.entries {
            writeln!(s, "# {k}: {v}")?;
        }
        f.write_str(&s)
    }
}
