//! In-memory output files. Runs build every artifact first and the caller
//! writes them all at the end, from one thread.

use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    result: &'a T,
}

/// A JSON artifact wrapping `result` with the command, seed and full config.
pub fn json<T: Serialize>(
    name: impl Into<String>,
    command: &str,
    config: &ExperimentConfig,
    result: &T,
) -> Result<Artifact, CliError> {
    let env = Envelope {
        tool: "meshpon",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: config.seed,
        config,
        result,
    };
    let mut bytes = serde_json::to_vec_pretty(&env).map_err(anyhow::Error::from)?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.into(),
        bytes,
    })
}

/// A CSV artifact. Two `#` comment lines carry the command, seed and the
/// config as compact JSON; the header row follows.
pub fn csv<T: Serialize>(
    name: impl Into<String>,
    command: &str,
    config: &ExperimentConfig,
    rows: &[T],
) -> Result<Artifact, CliError> {
    let mut bytes = format!(
        "# meshpon {} {command} seed={}\n# config={}\n",
        env!("CARGO_PKG_VERSION"),
        config.seed,
        serde_json::to_string(config).map_err(anyhow::Error::from)?
    )
    .into_bytes();
    {
        let mut w = ::csv::Writer::from_writer(&mut bytes);
        for row in rows {
            w.serialize(row).map_err(anyhow::Error::from)?;
        }
        w.flush().map_err(anyhow::Error::from)?;
    }
    Ok(Artifact {
        name: name.into(),
        bytes,
    })
}

/// Rounds to 1e-9 so printed values do not carry float noise such as
/// `24.799999999999997`.
pub fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("out_dir: cannot create {}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn csv_carries_seed_and_config() {
        let cfg = ExperimentConfig::default();
        let a = csv("t.csv", "budget", &cfg, &[Row { a: 1, b: 2.5 }]).unwrap();
        let text = String::from_utf8(a.bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].ends_with("budget seed=1"));
        let embedded: ExperimentConfig = serde_json::from_str(lines[1].strip_prefix("# config=").unwrap()).unwrap();
        assert_eq!(embedded, cfg);
        assert_eq!(&lines[2..], ["a,b", "1,2.5"]);
    }

    #[test]
    fn json_round_trips_config() {
        let cfg = ExperimentConfig::default();
        let a = json("t.json", "simulate", &cfg, &vec![1, 2]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&a.bytes).unwrap();
        assert_eq!(v["seed"], 1);
        assert_eq!(v["result"], serde_json::json!([1, 2]));
        let embedded: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
        assert_eq!(embedded, cfg);
    }

    #[test]
    fn tidy_removes_float_noise() {
        assert_eq!(tidy(24.799999999999997).to_string(), "24.8");
    }
}
