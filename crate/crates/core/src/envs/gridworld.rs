use crate::error::{Error, Result};

/// Deterministic finite MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `next_state[s][a]`.
    pub next_state: Vec<Vec<usize>>,
    /// `reward[s][a]`, attached to the transition out of `s`.
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    pub initial_state: usize,
}

impl TabularMdp {
    pub fn new(
        next_state: Vec<Vec<usize>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        terminal: Vec<bool>,
        initial_state: usize,
    ) -> Result<Self> {
        let n_states = next_state.len();
        let n_actions = next_state.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Argument("MDP needs at least one state and action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Argument(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if reward.len() != n_states || terminal.len() != n_states || initial_state >= n_states {
            return Err(Error::Argument("MDP tables disagree on the number of states".into()));
        }
        for s in 0..n_states {
            if next_state[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(Error::Argument(format!("state {s} has a ragged action table")));
            }
            if next_state[s].iter().any(|&t| t >= n_states) {
                return Err(Error::Argument(format!("state {s} transitions out of range")));
            }
            if reward[s].iter().any(|r| !r.is_finite()) {
                return Err(Error::Argument(format!("state {s} has a non-finite reward")));
            }
            if terminal[s] && (next_state[s].iter().any(|&t| t != s) || reward[s].iter().any(|&r| r != 0.0)) {
                return Err(Error::Argument(format!(
                    "terminal state {s} must be absorbing with zero reward"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            next_state,
            reward,
            gamma,
            terminal,
            initial_state,
        })
    }

    /// Flat index of the pair `(s, a)` in `|S|·|A|`-length vectors.
    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Rewards as a flat `|S|·|A|` vector.
    pub fn reward_vector(&self) -> Vec<f64> {
        self.reward.iter().flatten().copied().collect()
    }

    /// Optimal action values by value iteration, iterated until the sup-norm
    /// change falls below `tol`.
    pub fn optimal_q(&self, tol: f64) -> Vec<Vec<f64>> {
        let mut v = vec![0.0; self.n_states];
        let mut q = vec![vec![0.0; self.n_actions]; self.n_states];
        loop {
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    q[s][a] = self.reward[s][a] + self.gamma * v[self.next_state[s][a]];
                }
            }
            for s in 0..self.n_states {
                let best = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < tol {
                return q;
            }
        }
    }

    /// Greedy (lowest index on ties) policy of a Q table.
    pub fn greedy_policy(q: &[Vec<f64>]) -> Vec<usize> {
        q.iter().map(|row| argmax(row)).collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// `side × side` 4-connected grid. State `row·side + col`; the start is the
/// top-left corner and the goal the bottom-right one. Entering the goal pays 1
/// and terminates; moves off the grid leave the state unchanged.
pub fn gridworld(side: usize, gamma: f64) -> Result<TabularMdp> {
    if side < 2 {
        return Err(Error::Argument(format!("gridworld side must be at least 2, got {side}")));
    }
    let n = side * side;
    let goal = n - 1;
    let mut next_state = vec![vec![0; 4]; n];
    let mut reward = vec![vec![0.0; 4]; n];
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    for s in 0..n {
        let (r, c) = (s / side, s % side);
        for a in 0..4 {
            let t = if s == goal {
                goal
            } else {
                match a {
                    UP if r > 0 => s - side,
                    DOWN if r + 1 < side => s + side,
                    LEFT if c > 0 => s - 1,
                    RIGHT if c + 1 < side => s + 1,
                    _ => s,
                }
            };
            next_state[s][a] = t;
            if s != goal && t == goal {
                reward[s][a] = 1.0;
            }
        }
    }
    TabularMdp::new(next_state, reward, gamma, terminal, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_shape() {
        let m = gridworld(2, 0.9).unwrap();
        assert_eq!((m.n_states, m.n_actions), (4, 4));
        assert!(gridworld(1, 0.9).is_err());
    }

    #[test]
    fn optimal_start_value() {
        let m = gridworld(4, 0.9).unwrap();
        let q = m.optimal_q(1e-14);
        let v0 = q[m.initial_state].iter().copied().fold(f64::MIN, f64::max);
        assert!((v0 - 0.9f64.powi(5)).abs() < 1e-12, "{v0}");
    }

    #[test]
    fn myopic_q_is_reward() {
        let m = gridworld(3, 0.0).unwrap();
        assert_eq!(m.optimal_q(1e-14), m.reward);
    }

    #[test]
    fn off_grid_moves_are_noops() {
        let m = gridworld(3, 0.5).unwrap();
        assert_eq!(m.next_state[0][UP], 0);
        assert_eq!(m.next_state[0][LEFT], 0);
        assert_eq!(m.next_state[0][RIGHT], 1);
        assert_eq!(m.next_state[5][DOWN], 8);
        assert_eq!(m.reward[5][DOWN], 1.0);
    }

    #[test]
    fn validation() {
        assert!(TabularMdp::new(vec![vec![1]], vec![vec![0.0]], 0.5, vec![false], 0).is_err());
        assert!(TabularMdp::new(vec![vec![0]], vec![vec![0.0]], 1.0, vec![false], 0).is_err());
        assert!(TabularMdp::new(vec![vec![0]], vec![vec![1.0]], 0.5, vec![true], 0).is_err());
    }
}
