use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diversity::{FeatureKind, Projection};
use crate::parser::Hyperparams;
use crate::quality::Strategy;
use crate::{Error, Result};

/// Everything a run depends on. A run is reproducible from this value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// CoNLL-U training corpus; a synthetic corpus is generated when absent.
    pub corpus_path: Option<PathBuf>,
    /// Held-out CoNLL-U corpus; defaults to the tail of the training corpus.
    pub test_path: Option<PathBuf>,
    /// Fraction of the corpus held out when no test corpus is given.
    pub test_fraction: f64,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    /// Training corpus duplication fold.
    pub fold: usize,
    pub strategy: Strategy,
    pub use_dpp: bool,
    pub diversity_kind: FeatureKind,
    pub n_seed_sentences: usize,
    pub sentence_stage_token_budget: usize,
    pub token_budget_per_round: usize,
    pub rounds: usize,
    pub k_bald: usize,
    pub p_drop: f64,
    pub seed: u64,
    pub repeats: usize,
    pub projection_dim: usize,
    pub projection_seed: u64,
    pub parser: Hyperparams,
    /// Write pool and model checkpoints after every round.
    pub checkpoints: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_path: None,
            test_path: None,
            test_fraction: 0.1,
            synthetic_train: 2000,
            synthetic_test: 500,
            fold: 1,
            strategy: Strategy::Amp,
            use_dpp: false,
            diversity_kind: FeatureKind::Subgraph,
            n_seed_sentences: 128,
            sentence_stage_token_budget: 2500,
            token_budget_per_round: 500,
            rounds: 32,
            k_bald: 5,
            p_drop: 0.33,
            seed: 1,
            repeats: 5,
            projection_dim: 64,
            projection_seed: 0x5eed,
            parser: Hyperparams::default(),
            checkpoints: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Toy,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Profile::Toy),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

impl RunConfig {
    /// Full-scale budgets: 128 seed sentences, 2500/500 tokens, 32 rounds.
    pub fn paper() -> Self {
        RunConfig::default()
    }

    /// Desk-scale budgets: 16 seed sentences, 250/50 tokens, 8 rounds.
    pub fn toy() -> Self {
        RunConfig { n_seed_sentences: 16, sentence_stage_token_budget: 250, token_budget_per_round: 50, rounds: 8, ..RunConfig::default() }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Toy => Self::toy(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Load from `.toml` or `.json`; unspecified fields take full-scale defaults.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_over(path, &RunConfig::default())
    }

    /// Load from `.toml` or `.json`, filling unspecified fields from `base`.
    pub fn load_over(path: &Path, base: &RunConfig) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let overlay: serde_json::Value = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            Some("toml") => {
                let v: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
                serde_json::to_value(v)?
            }
            _ => return Err(Error::Config(format!("{}: expected a .toml or .json file", path.display()))),
        };
        let mut merged = serde_json::to_value(base)?;
        merge(&mut merged, overlay);
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.fold == 0 {
            return bad("fold must be at least 1");
        }
        if self.n_seed_sentences == 0 {
            return bad("n_seed_sentences must be at least 1");
        }
        if self.token_budget_per_round > self.sentence_stage_token_budget {
            return bad("token_budget_per_round cannot exceed sentence_stage_token_budget");
        }
        if self.k_bald == 0 {
            return bad("k_bald must be at least 1");
        }
        if self.projection_dim == 0 {
            return bad("projection_dim must be at least 1");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must lie in [0, 1)");
        }
        self.parser_hyper().validate()
    }

    /// Parser hyperparameters with the run-level dropout rate applied.
    pub fn parser_hyper(&self) -> Hyperparams {
        Hyperparams { p_drop: self.p_drop, ..self.parser.clone() }
    }

    pub fn projection(&self) -> Projection {
        Projection { dim: self.projection_dim, seed: self.projection_seed }
    }

    /// Short label such as `amp+dpp`.
    pub fn arm(&self) -> String {
        format!("{}{}", self.strategy, if self.use_dpp { "+dpp" } else { "" })
    }
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let t = RunConfig::toy();
        assert_eq!((t.n_seed_sentences, t.sentence_stage_token_budget, t.token_budget_per_round, t.rounds), (16, 250, 50, 8));
        let p = RunConfig::paper();
        assert_eq!((p.n_seed_sentences, p.sentence_stage_token_budget, p.token_budget_per_round, p.rounds), (128, 2500, 500, 32));
        t.validate().unwrap();
    }

    #[test]
    fn budgets_are_checked() {
        let c = RunConfig { token_budget_per_round: 300, ..RunConfig::toy() };
        assert!(c.validate().is_err());
        assert!(RunConfig { rounds: 0, ..RunConfig::toy() }.validate().is_err());
    }

    #[test]
    fn toml_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { strategy: Strategy::Bald, use_dpp: true, ..RunConfig::toy() };
        let t = dir.path().join("c.toml");
        fs::write(&t, cfg.to_toml().unwrap()).unwrap();
        assert_eq!(RunConfig::load(&t).unwrap(), cfg);
        let j = dir.path().join("c.json");
        fs::write(&j, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(RunConfig::load(&j).unwrap(), cfg);
        let partial = dir.path().join("p.toml");
        fs::write(&partial, "strategy = \"id\"\nrounds = 3\n").unwrap();
        let loaded = RunConfig::load(&partial).unwrap();
        assert_eq!((loaded.strategy, loaded.rounds, loaded.n_seed_sentences), (Strategy::Id, 3, 128));
        let over_toy = RunConfig::load_over(&partial, &RunConfig::toy()).unwrap();
        assert_eq!((over_toy.rounds, over_toy.n_seed_sentences), (3, 16));
        fs::write(&partial, "[parser]\nepochs = 4\n").unwrap();
        let nested = RunConfig::load_over(&partial, &RunConfig::toy()).unwrap();
        assert_eq!((nested.parser.epochs, nested.parser.hash_bits), (4, 20));
        fs::write(&partial, "bogus = 1\n").unwrap();
        assert!(RunConfig::load(&partial).is_err());
    }
}
