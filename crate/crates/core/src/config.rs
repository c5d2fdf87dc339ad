//! Text inputs: scenario configs, history specs and sampled-history CSV files.
//!
//! A config holds one `key = value` pair per line. Blank lines and text after `#`
//! are ignored. Required keys are `beta0`, `n`, `delta`, `gamma` and `r`; the
//! optional `marginal_band` sets the half-width of the Marginal verdict band.

use std::path::PathBuf;

use crate::dde_sim::{History, SampledHistory};
use crate::error::{Error, Result};
use crate::hayes::DEFAULT_MARGINAL_BAND;
use crate::model::{EquilibriumTag, ParamName, Parameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub params: Parameters,
    pub marginal_band: f64,
}

/// Partially specified parameters; CLI flags fill or override entries before
/// [`ConfigDraft::finish`] validates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfigDraft {
    values: [Option<f64>; 5],
    pub marginal_band: Option<f64>,
}

const KEYS: [ParamName; 5] = [
    ParamName::Beta0,
    ParamName::N,
    ParamName::Delta,
    ParamName::Gamma,
    ParamName::R,
];

fn slot(name: ParamName) -> usize {
    KEYS.iter().position(|k| *k == name).expect("all names listed")
}

impl ConfigDraft {
    pub fn set(&mut self, name: ParamName, value: f64) {
        self.values[slot(name)] = Some(value);
    }

    pub fn get(&self, name: ParamName) -> Option<f64> {
        self.values[slot(name)]
    }

    pub fn finish(&self) -> Result<Config> {
        let missing: Vec<&str> = KEYS
            .iter()
            .filter(|k| self.get(**k).is_none())
            .map(|k| k.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config {
                line: 0,
                message: format!("missing keys: {}", missing.join(", ")),
            });
        }
        let v = |k| self.get(k).expect("checked");
        let params = Parameters::new(
            v(ParamName::Beta0),
            v(ParamName::N),
            v(ParamName::Delta),
            v(ParamName::Gamma),
            v(ParamName::R),
        )?;
        let marginal_band = self.marginal_band.unwrap_or(DEFAULT_MARGINAL_BAND);
        if !(marginal_band >= 0.0 && marginal_band.is_finite()) {
            return Err(Error::Config {
                line: 0,
                message: format!("marginal_band must be a finite nonnegative number, got {marginal_band}"),
            });
        }
        Ok(Config { params, marginal_band })
    }
}

fn parse_number(text: &str) -> std::result::Result<f64, String> {
    let value: f64 = text.parse().map_err(|_| format!("`{text}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(value)
}

/// Reads a config without requiring every key.
pub fn parse_config_draft(text: &str) -> Result<ConfigDraft> {
    let mut draft = ConfigDraft::default();
    let mut seen_band = false;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let err = |message: String| Error::Config { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(format!("expected `key = value`, got `{content}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        let number = parse_number(value).map_err(err)?;
        if key == "marginal_band" {
            if seen_band {
                return Err(err("duplicate key `marginal_band`".into()));
            }
            seen_band = true;
            draft.marginal_band = Some(number);
            continue;
        }
        let name: ParamName = key.parse().map_err(|_| err(format!("unknown key `{key}`")))?;
        if draft.get(name).is_some() {
            return Err(err(format!("duplicate key `{key}`")));
        }
        draft.set(name, number);
    }
    Ok(draft)
}

/// Reads and validates a complete config.
pub fn parse_config(text: &str) -> Result<Config> {
    parse_config_draft(text)?.finish()
}

/// A `--history` argument before any file it names has been read.
#[derive(Debug, Clone, PartialEq)]
pub enum HistorySpec {
    Constant(f64),
    Perturb { which: EquilibriumTag, amplitude: f64 },
    File(PathBuf),
}

impl HistorySpec {
    /// Loads the file for `file:` specs.
    pub fn load(&self) -> Result<History> {
        Ok(match self {
            HistorySpec::Constant(level) => History::Constant(*level),
            HistorySpec::Perturb { which, amplitude } => History::PerturbedEquilibrium {
                which: *which,
                amplitude: *amplitude,
            },
            HistorySpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Parse(format!("reading {}: {e}", path.display())))?;
                History::Sampled(parse_history_csv(&text)?)
            }
        })
    }
}

/// `const:LEVEL`, `perturb:x1:AMP`, `perturb:x2:AMP` or `file:PATH`.
pub fn parse_history_spec(spec: &str) -> Result<HistorySpec> {
    let bad = |why: &str| Error::Parse(format!("history spec `{spec}`: {why}"));
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad("expected const:LEVEL, perturb:{x1|x2}:AMP or file:PATH"))?;
    match kind {
        "const" => {
            let level = parse_number(rest.trim()).map_err(|e| bad(&e))?;
            if level < 0.0 {
                return Err(bad("a constant history must be nonnegative"));
            }
            Ok(HistorySpec::Constant(level))
        }
        "perturb" => {
            let (which, amp) = rest
                .split_once(':')
                .ok_or_else(|| bad("expected perturb:{x1|x2}:AMP"))?;
            let which: EquilibriumTag = which.trim().parse().map_err(|e: Error| bad(&e.to_string()))?;
            let amplitude = parse_number(amp.trim()).map_err(|e| bad(&e))?;
            Ok(HistorySpec::Perturb { which, amplitude })
        }
        "file" if !rest.is_empty() => Ok(HistorySpec::File(PathBuf::from(rest))),
        "file" => Err(bad("missing path")),
        other => Err(bad(&format!("unknown kind `{other}`"))),
    }
}

/// Sampled history from CSV with header `s,x`: strictly increasing times on
/// `[-r, 0]`, at least two rows, nonnegative values.
pub fn parse_history_csv(text: &str) -> Result<SampledHistory> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("history CSV header: {e}")))?
        .clone();
    if headers.len() != 2 || &headers[0] != "s" || &headers[1] != "x" {
        return Err(Error::Parse(format!(
            "history CSV header must be `s,x`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse(format!("history CSV row {line}: {e}")))?;
        if record.len() != 2 {
            return Err(Error::Parse(format!("history CSV row {line}: expected 2 fields")));
        }
        let s = parse_number(&record[0]).map_err(|e| Error::Parse(format!("history CSV row {line}: {e}")))?;
        let x = parse_number(&record[1]).map_err(|e| Error::Parse(format!("history CSV row {line}: {e}")))?;
        if s > 0.0 {
            return Err(Error::Parse(format!("history CSV row {line}: time {s} is after 0")));
        }
        if x < 0.0 {
            return Err(Error::Parse(format!("history CSV row {line}: negative value {x}")));
        }
        times.push(s);
        values.push(x);
    }
    SampledHistory::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "# family\nbeta0 = 3\nn=2\ndelta = 1.0 # death rate\ngamma=0.2\nr = 1e-1\n";

    #[test]
    fn parses_good_config() {
        let c = parse_config(GOOD).unwrap();
        assert_eq!(c.params, Parameters::new(3.0, 2.0, 1.0, 0.2, 0.1).unwrap());
        assert_eq!(c.marginal_band, DEFAULT_MARGINAL_BAND);
        let c = parse_config(&format!("{GOOD}marginal_band = 1e-6\n")).unwrap();
        assert_eq!(c.marginal_band, 1e-6);
    }

    #[test]
    fn config_errors_carry_lines() {
        let dup = format!("{GOOD}n = 3\n");
        assert_eq!(
            parse_config(&dup).unwrap_err(),
            Error::Config {
                line: 7,
                message: "duplicate key `n`".into()
            }
        );
        let unknown = "beta0=3\nk=2\n";
        assert!(matches!(parse_config(unknown), Err(Error::Config { line: 2, .. })));
        let junk = "beta0 3\n";
        assert!(matches!(parse_config(junk), Err(Error::Config { line: 1, .. })));
        let nan = "beta0 = nan\n";
        assert!(matches!(parse_config(nan), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("beta0=3\n"), Err(Error::Config { line: 0, .. })));
        let negative = GOOD.replace("delta = 1.0", "delta = -1");
        assert!(matches!(parse_config(&negative), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn history_specs() {
        assert_eq!(parse_history_spec("const:0.5").unwrap(), HistorySpec::Constant(0.5));
        assert_eq!(
            parse_history_spec("perturb:x2:-0.01").unwrap(),
            HistorySpec::Perturb {
                which: EquilibriumTag::X2,
                amplitude: -0.01
            }
        );
        assert_eq!(
            parse_history_spec("file:a.csv").unwrap(),
            HistorySpec::File("a.csv".into())
        );
        for bad in [
            "const:-1",
            "const",
            "perturb:x3:1",
            "perturb:x1",
            "file:",
            "spline:1",
            "",
        ] {
            assert!(parse_history_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn history_csv() {
        let h = parse_history_csv("s,x\n-1,0.5\n-0.5, 0.7\n0,0.6\n").unwrap();
        assert_eq!(h.times(), &[-1.0, -0.5, 0.0]);
        for bad in [
            "t,x\n-1,0\n0,1\n",
            "s,x\n0,1\n",
            "s,x\n-1,0.5\n-1,0.7\n",
            "s,x\n-1,-0.5\n0,1\n",
            "s,x\n-1,0.5\n1,1\n",
            "s,x\n-1,0.5,3\n0,1\n",
            "s,x\n-1,abc\n0,1\n",
        ] {
            assert!(parse_history_csv(bad).is_err(), "{bad:?}");
        }
    }
}
