//! TOML model configuration with sections [mortality], [birth_rate] and
//! [birth_function]; structural problems map to usage errors, semantic ones
//! (a non-bistable f, a broken normalization) to the model's own errors.

use crate::error::{Error, Result};
use crate::model::{normalize_birth_rate, BirthFunction, BirthRate, ModelSpec, MortalityRate};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mortality: MortalitySection,
    pub birth_rate: BirthRateSection,
    pub birth_function: BirthFunctionSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MortalitySection {
    pub kind: String,
    pub value: Option<f64>,
    pub rates: Option<Vec<f64>>,
    pub breaks: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthRateSection {
    pub kind: String,
    #[serde(default)]
    pub pieces: Vec<[f64; 3]>,
    #[serde(default)]
    pub normalize: bool,
    pub a0: Option<f64>,
    pub beta_inf: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthFunctionSection {
    pub kind: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub xs: Option<Vec<f64>>,
    pub ys: Option<Vec<f64>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let mu = match self.mortality.kind.as_str() {
            "constant" => MortalityRate::constant(
                self.mortality
                    .value
                    .ok_or_else(|| Error::Config("constant mortality needs `value`".into()))?,
            )?,
            "piecewise" => MortalityRate::piecewise(
                self.mortality
                    .rates
                    .clone()
                    .ok_or_else(|| Error::Config("piecewise mortality needs `rates`".into()))?,
                self.mortality.breaks.clone().unwrap_or_default(),
            )?,
            other => return Err(Error::Config(format!("unknown mortality kind `{other}`"))),
        };
        let pieces: Vec<(f64, f64, f64)> =
            self.birth_rate.pieces.iter().map(|p| (p[0], p[1], p[2])).collect();
        let raw = match self.birth_rate.kind.as_str() {
            "compact" => BirthRate::compact(pieces)?,
            "eventually_constant" => BirthRate::eventually_constant(
                pieces,
                self.birth_rate
                    .a0
                    .ok_or_else(|| Error::Config("eventually_constant birth rate needs `a0`".into()))?,
                self.birth_rate.beta_inf.ok_or_else(|| {
                    Error::Config("eventually_constant birth rate needs `beta_inf`".into())
                })?,
            )?,
            other => return Err(Error::Config(format!("unknown birth rate kind `{other}`"))),
        };
        let beta = if self.birth_rate.normalize {
            normalize_birth_rate(&raw, &mu)?
        } else {
            raw
        };
        let f = match self.birth_function.kind.as_str() {
            "hill" => BirthFunction::hill(
                self.birth_function
                    .a
                    .ok_or_else(|| Error::Config("hill birth function needs `a`".into()))?,
                self.birth_function
                    .b
                    .ok_or_else(|| Error::Config("hill birth function needs `b`".into()))?,
            )?,
            "table" => BirthFunction::table(
                self.birth_function
                    .xs
                    .clone()
                    .ok_or_else(|| Error::Config("table birth function needs `xs`".into()))?,
                self.birth_function
                    .ys
                    .clone()
                    .ok_or_else(|| Error::Config("table birth function needs `ys`".into()))?,
            )?,
            other => return Err(Error::Config(format!("unknown birth function kind `{other}`"))),
        };
        ModelSpec::new(mu, beta, f)
    }
}

/// The reference scenario as config text, used by tests and docs.
pub const REFERENCE_CONFIG: &str = "\
[mortality]
kind = \"constant\"
value = 0.5

[birth_rate]
kind = \"compact\"
pieces = [[1.0, 3.0, 1.0]]
normalize = true

[birth_function]
kind = \"hill\"
a = 3.0
b = 2.0
";

/// The reference old-age (eventually-constant) scenario as config text.
pub const REFERENCE_NONCOMPACT_CONFIG: &str = "\
[mortality]
kind = \"constant\"
value = 0.5

[birth_rate]
kind = \"eventually_constant\"
a0 = 1.0
beta_inf = 0.8243606353500641

[birth_function]
kind = \"hill\"
a = 3.0
b = 2.0
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_round_trips() {
        let spec = Config::parse(REFERENCE_CONFIG).unwrap().build().unwrap();
        assert!((spec.normalization_integral() - 1.0).abs() < 1e-12);
        assert!((spec.kappa1() - 1.0).abs() < 1e-10);
        let spec = Config::parse(REFERENCE_NONCOMPACT_CONFIG).unwrap().build().unwrap();
        assert!(spec.beta.is_eventually_constant());
        assert!((spec.normalization_integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_text_is_a_config_error() {
        assert!(matches!(Config::parse("not toml ["), Err(Error::Config(_))));
        let text = REFERENCE_CONFIG.replace("kind = \"constant\"", "kind = \"weird\"");
        assert!(matches!(Config::parse(&text).unwrap().build(), Err(Error::Config(_))));
    }

    #[test]
    fn non_bistable_hill_fails_at_build() {
        let text = REFERENCE_CONFIG.replace("a = 3.0", "a = 2.0");
        assert!(matches!(
            Config::parse(&text).unwrap().build(),
            Err(Error::NotBistable(_))
        ));
    }
}
