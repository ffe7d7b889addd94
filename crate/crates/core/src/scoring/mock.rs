use std::collections::HashSet;
use std::str::FromStr;

use super::{parse_pair_id, Role, ScoreRequest, Scorer, WireResult};
use crate::baselines::tokenize;
use crate::error::ScorerError;
use crate::seed::unit_interval;

pub const EOS: &str = "</s>";

/// Model-free scorers for tests and calibration runs. Roles are read from
/// the pair ids, so these only make sense on probe-corpus requests.
///
/// Every mock emits the summary's whitespace tokens plus an end-of-sequence
/// token. Oracle and anti-oracle give one side log-probability 0 and the
/// other -1, which orders them the same way for every length penalty. The
/// noisy and uniform mocks use one log-probability per summary, so their
/// guarantees hold at the default penalty of 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockScorer {
    Oracle,
    AntiOracle,
    /// Each summary lands on the "correct" side of the score range with
    /// probability `p` (positives high, negatives low), with i.i.d. jitter
    /// inside each side. A given positive/negative pair is then ordered
    /// correctly with probability exactly `p`.
    Noisy { p: f64, seed: u64 },
    /// i.i.d. uniform log-probabilities in (-1, 0].
    Uniform { seed: u64 },
    /// ln 0.9 for tokens that occur in the dialogue, ln 0.1 otherwise.
    Lexical,
}

impl MockScorer {
    fn per_token(&self, req: &ScoreRequest) -> Result<Vec<(String, f64)>, String> {
        let tokens: Vec<String> = req
            .summary
            .split_whitespace()
            .map(str::to_string)
            .chain(std::iter::once(EOS.to_string()))
            .collect();
        if let MockScorer::Lexical = self {
            let vocab: HashSet<String> = tokenize(&req.dialogue).into_iter().collect();
            return Ok(tokens
                .into_iter()
                .map(|t| {
                    let key = tokenize(&t).join(" ");
                    let lp = if !key.is_empty() && vocab.contains(&key) {
                        0.9f64.ln()
                    } else {
                        0.1f64.ln()
                    };
                    (t, lp)
                })
                .collect());
        }
        let (_, role, _) =
            parse_pair_id(&req.id).ok_or_else(|| format!("mock scorer cannot read role from `{}`", req.id))?;
        let value = match *self {
            MockScorer::Oracle => match role {
                Role::Positive => 0.0,
                Role::Negative => -1.0,
            },
            MockScorer::AntiOracle => match role {
                Role::Positive => -1.0,
                Role::Negative => 0.0,
            },
            MockScorer::Noisy { p, seed } => {
                let placed_correctly = unit_interval(seed, &[&req.id, "side"]) < p;
                let jitter = unit_interval(seed, &[&req.id, "jitter"]);
                let high = matches!(
                    (role, placed_correctly),
                    (Role::Positive, true) | (Role::Negative, false)
                );
                if high {
                    -(0.1 + 0.4 * jitter)
                } else {
                    -(1.0 + 0.5 * jitter)
                }
            }
            MockScorer::Uniform { seed } => -unit_interval(seed, &[&req.id]),
            MockScorer::Lexical => unreachable!("handled above"),
        };
        Ok(tokens.into_iter().map(|t| (t, value)).collect())
    }
}

/// Parses `oracle`, `anti-oracle`, `noisy:<p>:<seed>`, `uniform:<seed>` or
/// `lexical`.
impl FromStr for MockScorer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let seed = |v: &str| v.parse::<u64>().map_err(|e| format!("bad seed `{v}`: {e}"));
        match parts.as_slice() {
            ["oracle"] => Ok(MockScorer::Oracle),
            ["anti-oracle"] => Ok(MockScorer::AntiOracle),
            ["lexical"] => Ok(MockScorer::Lexical),
            ["uniform", s] => Ok(MockScorer::Uniform { seed: seed(s)? }),
            ["noisy", p, s] => {
                let p: f64 = p.parse().map_err(|e| format!("bad probability `{p}`: {e}"))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("probability {p} is outside [0, 1]"));
                }
                Ok(MockScorer::Noisy { p, seed: seed(s)? })
            }
            _ => Err(format!(
                "unknown mock scorer `{s}` (expected oracle, anti-oracle, noisy:P:SEED, uniform:SEED or lexical)"
            )),
        }
    }
}

impl Scorer for MockScorer {
    fn score_batch(&self, batch: &[ScoreRequest]) -> Result<Vec<WireResult>, ScorerError> {
        Ok(batch
            .iter()
            .map(|req| match self.per_token(req) {
                Ok(pairs) => {
                    let (tokens, logprobs) = pairs.into_iter().unzip();
                    WireResult::Scored {
                        id: req.id.clone(),
                        tokens,
                        logprobs,
                    }
                }
                Err(msg) => WireResult::failed(req.id.clone(), msg),
            })
            .collect())
    }
}
