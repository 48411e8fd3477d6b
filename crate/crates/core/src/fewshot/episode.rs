//! N-way K-shot episode sampling.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FewShotError;
use crate::dataset::Representation;

/// How an episode's queries are divided between classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySplit {
    /// `q_query / n_way` per class; the remainder goes to the lowest classes.
    #[default]
    Balanced,
    /// `q_query` drawn uniformly from everything not in the support set.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    #[serde(default)]
    pub split: QuerySplit,
    pub representation: Representation,
}

impl EpisodeSpec {
    pub fn new(k_shot: usize, representation: Representation) -> Self {
        Self {
            n_way: 2,
            k_shot,
            q_query: 10,
            split: QuerySplit::Balanced,
            representation,
        }
    }

    pub fn validate(&self) -> Result<(), FewShotError> {
        if self.n_way < 2 {
            return Err(FewShotError::InvalidSpec(format!(
                "n_way {} < 2",
                self.n_way
            )));
        }
        if self.k_shot < 1 {
            return Err(FewShotError::InvalidSpec(
                "k_shot must be at least 1".into(),
            ));
        }
        if self.q_query < self.n_way {
            return Err(FewShotError::InvalidSpec(format!(
                "q_query {} < n_way {}",
                self.q_query, self.n_way
            )));
        }
        Ok(())
    }

    /// Queries required from class `c` under the balanced split.
    pub fn balanced_queries(&self, class: usize) -> usize {
        self.q_query / self.n_way + usize::from(class < self.q_query % self.n_way)
    }
}

/// Item indices into the sampled pool, each paired with its class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

impl Episode {
    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|&(_, c)| c).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|&(_, c)| c).collect()
    }
}

/// Draws one episode from a pool whose item `i` has class `labels[i]`.
pub fn sample_episode<R: Rng + ?Sized>(
    labels: &[usize],
    spec: &EpisodeSpec,
    rng: &mut R,
) -> Result<Episode, FewShotError> {
    spec.validate()?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.n_way];
    for (i, &c) in labels.iter().enumerate() {
        if c < spec.n_way {
            members[c].push(i);
        }
    }
    for (c, m) in members.iter().enumerate() {
        let need = spec.k_shot
            + match spec.split {
                QuerySplit::Balanced => spec.balanced_queries(c),
                QuerySplit::Pooled => 0,
            };
        if m.len() < need {
            return Err(FewShotError::InsufficientClassMembers {
                class: c,
                have: m.len(),
                need,
            });
        }
    }
    let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query = Vec::with_capacity(spec.q_query);
    match spec.split {
        QuerySplit::Balanced => {
            for (c, m) in members.iter().enumerate() {
                let picks = sample(rng, m.len(), spec.k_shot + spec.balanced_queries(c));
                for (j, p) in picks.into_iter().enumerate() {
                    if j < spec.k_shot {
                        support.push((m[p], c));
                    } else {
                        query.push((m[p], c));
                    }
                }
            }
        }
        QuerySplit::Pooled => {
            let mut rest = Vec::new();
            for (c, m) in members.iter().enumerate() {
                let picks = sample(rng, m.len(), m.len());
                for (j, p) in picks.into_iter().enumerate() {
                    if j < spec.k_shot {
                        support.push((m[p], c));
                    } else {
                        rest.push((m[p], c));
                    }
                }
            }
            rest.sort_unstable();
            if rest.len() < spec.q_query {
                return Err(FewShotError::InsufficientClassMembers {
                    class: 0,
                    have: rest.len(),
                    need: spec.q_query,
                });
            }
            query.extend(
                sample(rng, rest.len(), spec.q_query)
                    .into_iter()
                    .map(|p| rest[p]),
            );
        }
    }
    Ok(Episode { support, query })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::ImageKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(k: usize) -> EpisodeSpec {
        EpisodeSpec::new(
            k,
            Representation {
                kind: ImageKind::Rhythm,
                colored: true,
            },
        )
    }

    #[test]
    fn one_shot_shape() {
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ep = sample_episode(&labels, &spec(1), &mut rng).unwrap();
        assert_eq!(ep.support.len(), 2);
        assert_eq!(ep.query.len(), 10);
        assert!(ep.support.iter().all(|s| !ep.query.contains(s)));
        assert_eq!(ep.query_labels().iter().filter(|&&c| c == 1).count(), 5);
    }

    #[test]
    fn too_few_members_names_class() {
        let labels = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_episode(&labels, &spec(5), &mut rng).unwrap_err();
        assert!(matches!(
            err,
            FewShotError::InsufficientClassMembers {
                class: 1,
                have: 5,
                need: 10
            }
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(1);
        s.q_query = 1;
        assert!(s.validate().is_err());
        s.q_query = 10;
        s.k_shot = 0;
        assert!(s.validate().is_err());
    }
}
