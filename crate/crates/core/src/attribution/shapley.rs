use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AttributionError;

pub const MAX_EXACT_PLAYERS: usize = 20;

/// A cooperative game over at most 32 players. Coalitions are bitmasks;
/// bit `i` set means player `i` is present.
pub trait Game {
    fn players(&self) -> usize;
    fn values(&mut self, coalitions: &[u32]) -> Result<Vec<f64>, AttributionError>;
}

impl<F: FnMut(u32) -> f64> Game for (usize, F) {
    fn players(&self) -> usize {
        self.0
    }

    fn values(&mut self, coalitions: &[u32]) -> Result<Vec<f64>, AttributionError> {
        Ok(coalitions.iter().map(|&c| (self.1)(c)).collect())
    }
}

fn checked_values(game: &mut dyn Game, coalitions: &[u32]) -> Result<Vec<f64>, AttributionError> {
    let v = game.values(coalitions)?;
    if v.len() != coalitions.len() {
        return Err(AttributionError::ValueCount {
            expected: coalitions.len(),
            got: v.len(),
        });
    }
    Ok(v)
}

const BATCH: usize = 256;

/// Exact Shapley values by enumerating all `2^n` coalitions.
pub fn shapley_exact(game: &mut dyn Game) -> Result<Vec<f64>, AttributionError> {
    let n = game.players();
    if n > MAX_EXACT_PLAYERS {
        return Err(AttributionError::TooManyPlayers {
            n,
            max: MAX_EXACT_PLAYERS,
        });
    }
    let all: Vec<u32> = (0..1u32 << n).collect();
    let mut v = Vec::with_capacity(all.len());
    for block in all.chunks(BATCH) {
        v.extend(checked_values(game, block)?);
    }
    // w[s] = s! (n − s − 1)! / n! = 1 / (n · C(n − 1, s))
    let mut weights = vec![0.0; n.max(1)];
    let mut binom = 1.0;
    for (s, w) in weights.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    let mut phi = vec![0.0; n];
    for s in 0..all.len() {
        let size = (s as u32).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += weights[size] * (v[s | 1 << i] - v[s]);
            }
        }
    }
    Ok(phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledShapley {
    pub values: Vec<f64>,
    /// Standard error of each value across permutations; 0 with one permutation.
    pub std_errors: Vec<f64>,
    pub permutations: usize,
}

/// Mean marginal contribution over `permutations` uniformly random player
/// orderings. Every permutation's contributions sum to `v(N) − v(∅)`.
pub fn shapley_sampled(
    game: &mut dyn Game,
    permutations: usize,
    seed: u64,
) -> Result<SampledShapley, AttributionError> {
    let n = game.players();
    if permutations == 0 {
        return Err(AttributionError::NoPermutations);
    }
    if n > 32 {
        return Err(AttributionError::TooManyPlayers { n, max: 32 });
    }
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let ends = checked_values(game, &[0, full])?;
    let (v_empty, v_full) = (ends[0], ends[1]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let per_block = (BATCH / n.max(1)).max(1);
    let mut done = 0;
    while done < permutations {
        let count = per_block.min(permutations - done);
        let orders: Vec<Vec<usize>> = (0..count)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        // interior prefixes only; the empty and full coalitions are shared
        let mut coalitions = Vec::with_capacity(count * n.saturating_sub(1));
        for order in &orders {
            let mut c = 0u32;
            for &player in &order[..n.saturating_sub(1)] {
                c |= 1 << player;
                coalitions.push(c);
            }
        }
        let values = checked_values(game, &coalitions)?;
        for (k, order) in orders.iter().enumerate() {
            let mut prev = v_empty;
            for (j, &player) in order.iter().enumerate() {
                let cur = if j + 1 == n {
                    v_full
                } else {
                    values[k * (n - 1) + j]
                };
                let m = cur - prev;
                sum[player] += m;
                sum_sq[player] += m * m;
                prev = cur;
            }
        }
        done += count;
    }
    let k = permutations as f64;
    let values: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let std_errors = if permutations < 2 {
        vec![0.0; n]
    } else {
        sum_sq
            .iter()
            .zip(&values)
            .map(|(sq, mean)| ((sq - k * mean * mean).max(0.0) / (k - 1.0) / k).sqrt())
            .collect()
    };
    Ok(SampledShapley {
        values,
        std_errors,
        permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_game_splits_evenly() {
        let mut g = (3, |c: u32| f64::from(u8::from(c.count_ones() >= 2)));
        let phi = shapley_exact(&mut g).unwrap();
        for p in phi {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_many_players_points_to_sampling() {
        let mut g = (21, |_c: u32| 0.0);
        assert!(matches!(
            shapley_exact(&mut g),
            Err(AttributionError::TooManyPlayers { n: 21, .. })
        ));
        assert!(matches!(
            shapley_sampled(&mut g, 0, 0),
            Err(AttributionError::NoPermutations)
        ));
    }

    #[test]
    fn sampled_additive_game_is_exact_with_one_permutation() {
        let c = [0.5, -1.25, 3.0, 0.0, 2.0];
        let mut g = (5, |s: u32| {
            (0..5)
                .filter(|i| s >> i & 1 == 1)
                .map(|i| c[i])
                .sum::<f64>()
        });
        let out = shapley_sampled(&mut g, 1, 3).unwrap();
        for (a, b) in out.values.iter().zip(c) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
