//! Run configuration: INI file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use ini::Ini;
use monoamr::amr::IndicatorKind;
use monoamr::cases::{CaseDefinition, Scheme};
use monoamr::stabilization::Variant;
use monoamr::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Sharp,
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndicatorArg {
    Kelly,
    Graph,
}

/// Adaptive and uniform-refinement runs of the benchmark cases.
#[derive(Debug, Default, Parser)]
#[command(name = "monoamr", version, about)]
pub struct Cli {
    /// INI file with `key = value` pairs, optionally under a `[run]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Detector exponent.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_enum)]
    pub indicator: Option<IndicatorArg>,
    #[arg(long)]
    pub max_cells: Option<usize>,
    /// Uniform sweep `A..B` in cells per side instead of an adaptive run.
    #[arg(long, value_name = "A..B")]
    pub uniform: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Reserved for randomised tests; recorded but unused by the solvers.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: String,
    pub scheme: Scheme,
    pub variant: Option<Variant>,
    pub q: Option<f64>,
    pub indicator: Option<IndicatorKind>,
    pub max_cells: Option<usize>,
    pub uniform: Option<(usize, usize)>,
    pub out: PathBuf,
    pub seed: u64,
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value '{value}' for '{key}'"))
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T> {
    T::from_str(value, true).map_err(|_| bad(key, value))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once("..").ok_or_else(|| bad("uniform", s))?;
    let (a, b): (usize, usize) = (parse_num("uniform", a.trim())?, parse_num("uniform", b.trim())?);
    if a == 0 || b < a || !(b / a).is_power_of_two() || b % a != 0 {
        return Err(Error::Config(format!("uniform range {a}..{b} must be A..A·2^k")));
    }
    Ok((a, b))
}

impl Cli {
    /// Fills unset flags from an INI file. Flags win.
    pub fn merge_ini(&mut self, text: &str) -> Result<()> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (section, props) in ini.iter() {
            if !matches!(section, None | Some("run")) {
                return Err(Error::Config(format!("unknown section [{}]", section.unwrap_or_default())));
            }
            for (key, value) in props.iter() {
                let v = value.trim();
                match key.replace('-', "_").as_str() {
                    "case" => {
                        self.case.get_or_insert_with(|| v.to_owned());
                    }
                    "scheme" => {
                        if self.scheme.is_none() {
                            self.scheme = Some(parse_enum(key, v)?);
                        }
                    }
                    "variant" => {
                        if self.variant.is_none() {
                            self.variant = Some(parse_enum(key, v)?);
                        }
                    }
                    "q" => {
                        if self.q.is_none() {
                            self.q = Some(parse_num(key, v)?);
                        }
                    }
                    "indicator" => {
                        if self.indicator.is_none() {
                            self.indicator = Some(parse_enum(key, v)?);
                        }
                    }
                    "max_cells" => {
                        if self.max_cells.is_none() {
                            self.max_cells = Some(parse_num(key, v)?);
                        }
                    }
                    "uniform" => {
                        self.uniform.get_or_insert_with(|| v.to_owned());
                    }
                    "out" => {
                        self.out.get_or_insert_with(|| PathBuf::from(v));
                    }
                    "seed" => {
                        if self.seed.is_none() {
                            self.seed = Some(parse_num(key, v)?);
                        }
                    }
                    other => return Err(Error::Config(format!("unknown key '{other}'"))),
                }
            }
        }
        Ok(())
    }

    pub fn resolve(mut self) -> Result<RunConfig> {
        if let Some(path) = self.config.take() {
            let text = read(&path)?;
            self.merge_ini(&text)?;
        }
        let case = self.case.ok_or_else(|| Error::Config("no case given (--case or `case =` in the config)".into()))?;
        Ok(RunConfig {
            case,
            scheme: match self.scheme {
                Some(SchemeArg::Low) => Scheme::Low,
                _ => Scheme::High,
            },
            variant: self.variant.map(|v| match v {
                VariantArg::Sharp => Variant::Sharp,
                VariantArg::Smooth => Variant::Smooth,
            }),
            q: self.q,
            indicator: self.indicator.map(|i| match i {
                IndicatorArg::Kelly => IndicatorKind::Kelly,
                IndicatorArg::Graph => IndicatorKind::GraphLaplacian,
            }),
            max_cells: self.max_cells,
            uniform: self.uniform.as_deref().map(parse_range).transpose()?,
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            seed: self.seed.unwrap_or(0),
        })
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// The case with every override applied. The uniform range falls back to the case default.
    pub fn build_case(&self) -> Result<(CaseDefinition, Option<(usize, usize)>)> {
        let mut case = CaseDefinition::by_name(&self.case)?.with_scheme(self.scheme);
        if let Some(v) = self.variant {
            case.params.variant = v;
        }
        if let Some(q) = self.q {
            case.params.q = q;
        }
        if let Some(i) = self.indicator {
            case.amr.indicator = i;
        }
        if let Some(n) = self.max_cells {
            case.amr.max_cells = n;
        }
        case.params.validate()?;
        case.amr.validate()?;
        let uniform = self.uniform.or(case.uniform);
        if let Some((a, _)) = uniform {
            case.root = case.scaled_root(a);
        }
        Ok((case, uniform))
    }
}
