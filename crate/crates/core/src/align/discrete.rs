//! Preference losses on finite outcome spaces: Bradley–Terry, the
//! KL-regularised optimal policy and the DPO loss.
//!
//! On a finite space the optimal policy can be computed exactly, so the
//! identity "DPO on the optimal policy equals Bradley–Terry on the reward"
//! (the partition function cancels in reward differences) is checkable to
//! round-off.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math::neg_log_sigmoid;
use crate::rng::SeededRng;

/// One labelled comparison: under `condition`, `winner` ≻ `loser`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub condition: usize,
    pub winner: usize,
    pub loser: usize,
}

/// Row-major `conditions × outcomes` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub conditions: usize,
    pub outcomes: usize,
    pub values: Vec<f64>,
}

impl Table {
    pub fn new(conditions: usize, outcomes: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), conditions * outcomes);
        Self {
            conditions,
            outcomes,
            values,
        }
    }

    pub fn get(&self, c: usize, y: usize) -> f64 {
        self.values[c * self.outcomes + y]
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.values[c * self.outcomes..(c + 1) * self.outcomes]
    }
}

/// Toy decision problem with a reference policy and a reward table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToyMdp {
    pub p_ref: Table,
    pub reward: Table,
}

impl DiscreteToyMdp {
    pub fn new(p_ref: Table, reward: Table) -> Result<Self> {
        if p_ref.conditions != reward.conditions || p_ref.outcomes != reward.outcomes {
            return Err(CoreError::InvalidConfig("p_ref and reward shapes differ".into()));
        }
        for c in 0..p_ref.conditions {
            let row = p_ref.row(c);
            if let Some(y) = row.iter().position(|p| *p <= 0.0) {
                return Err(CoreError::ZeroProbability { condition: c, outcome: y });
            }
            let s: f64 = row.iter().sum();
            if libm::fabs(s - 1.0) > 1e-9 {
                return Err(CoreError::InvalidConfig(alloc::format!("p_ref row {c} sums to {s}")));
            }
        }
        Ok(Self { p_ref, reward })
    }

    /// Random instance: Dirichlet(1)-like reference rows and rewards uniform
    /// in `[-reward_bound, reward_bound]`.
    pub fn random(conditions: usize, outcomes: usize, reward_bound: f64, rng: &mut SeededRng) -> Self {
        let mut p = Vec::with_capacity(conditions * outcomes);
        for _ in 0..conditions {
            let row: Vec<f64> = (0..outcomes).map(|_| -libm::log(1.0 - rng.uniform())).collect();
            let s: f64 = row.iter().sum();
            p.extend(row.iter().map(|x| (x / s).max(1e-300)));
        }
        let r = (0..conditions * outcomes)
            .map(|_| reward_bound * (2.0 * rng.uniform() - 1.0))
            .collect();
        Self {
            p_ref: Table::new(conditions, outcomes, p),
            reward: Table::new(conditions, outcomes, r),
        }
    }

    /// All ordered comparisons `(c, w, l)` with `r(c, w) > r(c, l)`.
    pub fn comparisons(&self) -> Vec<Comparison> {
        let mut out = Vec::new();
        for c in 0..self.reward.conditions {
            for w in 0..self.reward.outcomes {
                for l in 0..self.reward.outcomes {
                    if self.reward.get(c, w) > self.reward.get(c, l) {
                        out.push(Comparison {
                            condition: c,
                            winner: w,
                            loser: l,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Mean of `-log σ(r(c, y_w) - r(c, y_l))`.
pub fn bt_loss(reward: &Table, data: &[Comparison]) -> Result<f64> {
    if data.is_empty() {
        return Err(CoreError::Empty("comparisons"));
    }
    let mut total = 0.0;
    for d in data {
        let margin = reward.get(d.condition, d.winner) - reward.get(d.condition, d.loser);
        if !margin.is_finite() {
            return Err(CoreError::InvalidConfig("non-finite reward".into()));
        }
        total += neg_log_sigmoid(margin);
    }
    Ok(total / data.len() as f64)
}

/// `p*(y|c) = p_ref(y|c) exp(r(c,y)/β) / Z(c)`, with `Z` summed exactly
/// (in log space).
pub fn optimal_policy(mdp: &DiscreteToyMdp, beta: f64) -> Result<Table> {
    if !(beta > 0.0) {
        return Err(CoreError::InvalidConfig("beta must be positive".into()));
    }
    let (nc, ny) = (mdp.p_ref.conditions, mdp.p_ref.outcomes);
    let mut values = Vec::with_capacity(nc * ny);
    for c in 0..nc {
        let logits: Vec<f64> = (0..ny)
            .map(|y| libm::log(mdp.p_ref.get(c, y)) + mdp.reward.get(c, y) / beta)
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = m + libm::log(logits.iter().map(|l| libm::exp(l - m)).sum::<f64>());
        values.extend(logits.iter().map(|l| libm::exp(l - log_z)));
    }
    Ok(Table::new(nc, ny, values))
}

/// Mean of `-log σ(β [log p_θ(w)/p_ref(w) - log p_θ(l)/p_ref(l)])`.
pub fn dpo_loss_discrete(p_theta: &Table, p_ref: &Table, beta: f64, data: &[Comparison]) -> Result<f64> {
    if data.is_empty() {
        return Err(CoreError::Empty("comparisons"));
    }
    let log_ratio = |c: usize, y: usize| -> Result<f64> {
        let (pt, pr) = (p_theta.get(c, y), p_ref.get(c, y));
        if pt <= 0.0 || pr <= 0.0 {
            return Err(CoreError::ZeroProbability { condition: c, outcome: y });
        }
        Ok(libm::log(pt) - libm::log(pr))
    };
    let mut total = 0.0;
    for d in data {
        let margin = log_ratio(d.condition, d.winner)? - log_ratio(d.condition, d.loser)?;
        total += neg_log_sigmoid(beta * margin);
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::LN_2;

    fn data() -> Vec<Comparison> {
        vec![
            Comparison { condition: 0, winner: 0, loser: 1 },
            Comparison { condition: 1, winner: 2, loser: 0 },
        ]
    }

    #[test]
    fn bt_equal_rewards_is_ln2() {
        let r = Table::new(2, 3, vec![0.4; 6]);
        assert!((bt_loss(&r, &data()).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn bt_unit_margin() {
        let r = Table::new(1, 2, vec![1.0, 0.0]);
        let d = [Comparison { condition: 0, winner: 0, loser: 1 }];
        // -ln(1 / (1 + e^-1))
        let expected = libm::log(1.0 + libm::exp(-1.0));
        assert!((bt_loss(&r, &d).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.313_261_687_518_222_8).abs() < 1e-15);
    }

    #[test]
    fn bt_large_margin_tends_to_zero() {
        let r = Table::new(1, 2, vec![60.0, 0.0]);
        let d = [Comparison { condition: 0, winner: 0, loser: 1 }];
        assert!(bt_loss(&r, &d).unwrap() < 1e-25);
    }

    #[test]
    fn zero_reward_keeps_reference() {
        let mut rng = SeededRng::new(1);
        let mut mdp = DiscreteToyMdp::random(3, 8, 2.0, &mut rng);
        mdp.reward.values.iter_mut().for_each(|r| *r = 0.0);
        let p = optimal_policy(&mdp, 0.7).unwrap();
        for (a, b) in p.values.iter().zip(&mdp.p_ref.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_beta_approaches_reference() {
        let mut rng = SeededRng::new(2);
        let mdp = DiscreteToyMdp::random(3, 8, 2.0, &mut rng);
        let p = optimal_policy(&mdp, 1e6).unwrap();
        let dev = p
            .values
            .iter()
            .zip(&mdp.p_ref.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-5, "{dev}");
    }

    #[test]
    fn optimal_rows_normalised() {
        let mut rng = SeededRng::new(3);
        let mdp = DiscreteToyMdp::random(3, 8, 2.0, &mut rng);
        for beta in [0.1, 1.0, 10.0] {
            let p = optimal_policy(&mdp, beta).unwrap();
            for c in 0..3 {
                assert!((p.row(c).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(optimal_policy(&mdp, 0.0).is_err());
    }

    #[test]
    fn dpo_at_reference_is_ln2_and_rejects_zero() {
        let p = Table::new(1, 3, vec![0.2, 0.3, 0.5]);
        let d = [Comparison { condition: 0, winner: 2, loser: 0 }];
        assert!((dpo_loss_discrete(&p, &p, 2.0, &d).unwrap() - LN_2).abs() < 1e-15);
        let z = Table::new(1, 3, vec![0.0, 0.5, 0.5]);
        assert!(matches!(
            dpo_loss_discrete(&z, &p, 2.0, &d),
            Err(CoreError::ZeroProbability { .. })
        ));
    }

    #[test]
    fn dpo_on_optimal_policy_equals_bt_on_reward() {
        let mut rng = SeededRng::new(11);
        let mdp = DiscreteToyMdp::random(3, 8, 2.0, &mut rng);
        let d = mdp.comparisons();
        for beta in [0.1, 1.0, 10.0] {
            let p = optimal_policy(&mdp, beta).unwrap();
            let dpo = dpo_loss_discrete(&p, &mdp.p_ref, beta, &d).unwrap();
            let bt = bt_loss(&mdp.reward, &d).unwrap();
            assert!((dpo - bt).abs() < 1e-10, "β={beta}: {dpo} vs {bt}");
        }
    }

    #[test]
    fn raising_winner_probability_lowers_dpo_loss() {
        let p_ref = Table::new(1, 3, vec![0.2, 0.3, 0.5]);
        let d = [Comparison { condition: 0, winner: 0, loser: 1 }];
        let mut prev = f64::INFINITY;
        for w in [0.1, 0.2, 0.3, 0.4] {
            let p = Table::new(1, 3, vec![w, 0.3, 0.7 - w]);
            let l = dpo_loss_discrete(&p, &p_ref, 1.0, &d).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }
}
