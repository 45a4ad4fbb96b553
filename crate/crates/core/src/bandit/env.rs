use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::features::{ActionSet, FeatureMap};
use crate::linalg::{dot, norm};
use crate::rng::SeededRng;
use crate::ucb::{argmax_action_with_gradient, SearchOptions};

/// Reward noise of a synthetic environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// Uniform on `[-half_width, half_width]`, which is `half_width`-sub-Gaussian.
    Uniform { half_width: f64 },
    None,
}

impl Noise {
    /// Sub-Gaussian scale of the noise.
    pub fn scale(&self) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => sigma,
            Noise::Uniform { half_width } => half_width,
            Noise::None => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.scale();
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::invalid("noise", format!("scale must be finite and >= 0, got {s}")));
        }
        Ok(())
    }

    /// Draws one sample. Every variant consumes exactly two uniforms so that
    /// streams stay aligned across noise models.
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => sigma * rng.normal(),
            Noise::Uniform { half_width } => {
                let u = rng.uniform();
                rng.uniform();
                half_width * (2.0 * u - 1.0)
            }
            Noise::None => {
                rng.uniform();
                rng.uniform();
                0.0
            }
        }
    }
}

/// How the action set of each round is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSource {
    /// The same set every round.
    Fixed { set: ActionSet },
    /// `arms` fresh actions drawn uniformly from the box each round.
    RandomFinite { arms: usize, lower: Vec<f64>, upper: Vec<f64> },
}

impl ActionSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSource::Fixed { .. } => Ok(()),
            ActionSource::RandomFinite { arms, lower, upper } => {
                if *arms == 0 {
                    return Err(Error::invalid("arms", "must be positive"));
                }
                ActionSet::boxed(lower.clone(), upper.clone()).map(|_| ())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ActionSource::Fixed { set } => set.dim(),
            ActionSource::RandomFinite { lower, .. } => lower.len(),
        }
    }

    pub fn draw(&self, rng: &mut SeededRng) -> Result<ActionSet> {
        match self {
            ActionSource::Fixed { set } => Ok(set.clone()),
            ActionSource::RandomFinite { arms, lower, upper } => {
                let actions = (0..*arms)
                    .map(|_| lower.iter().zip(upper).map(|(l, u)| rng.uniform_in(*l, *u)).collect())
                    .collect();
                ActionSet::finite(actions)
            }
        }
    }
}

/// Outcome of playing an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pull {
    pub reward: f64,
    /// `phi(a)^T theta*` when the environment knows it.
    pub expected: Option<f64>,
}

/// Best expected reward available in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOptimum {
    pub value: f64,
    /// Found by local search rather than enumeration.
    pub approximate: bool,
}

pub trait Environment {
    fn feature_map(&self) -> &FeatureMap;

    /// The action set offered in the next round.
    fn next_action_set(&mut self) -> Result<ActionSet>;

    fn pull(&mut self, action: &[f64]) -> Result<Pull>;

    /// Best expected reward over `set`, when it can be computed. `opts` is
    /// the search budget for continuous sets.
    fn optimum(&mut self, set: &ActionSet, opts: &SearchOptions) -> Result<Option<RoundOptimum>>;

    fn theta_star(&self) -> Option<&[f64]> {
        None
    }

    /// Sub-Gaussian scale of the reward noise, when known.
    fn noise_scale(&self) -> Option<f64> {
        None
    }
}

/// Rewards `phi(a)^T theta* + noise` with separate streams for action sets
/// and noise, so that every policy run on the same seed sees the same action
/// sets and the same noise sequence.
#[derive(Debug, Clone)]
pub struct SyntheticLinear {
    map: FeatureMap,
    theta_star: Vec<f64>,
    noise: Noise,
    actions: ActionSource,
    action_rng: SeededRng,
    noise_rng: SeededRng,
}

impl SyntheticLinear {
    pub fn new(map: FeatureMap, theta_star: Vec<f64>, noise: Noise, actions: ActionSource, seed: u64) -> Result<Self> {
        check_len(map.feature_dim(), theta_star.len())?;
        check_finite("theta*", &theta_star)?;
        check_len(map.input_dim(), actions.dim())?;
        noise.validate()?;
        actions.validate()?;
        Ok(Self {
            map,
            theta_star,
            noise,
            actions,
            action_rng: SeededRng::derive(seed, 1),
            noise_rng: SeededRng::derive(seed, 2),
        })
    }

    pub fn expected_reward(&self, action: &[f64]) -> Result<f64> {
        Ok(dot(&self.map.featurize(action)?, &self.theta_star))
    }
}

impl Environment for SyntheticLinear {
    fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    fn next_action_set(&mut self) -> Result<ActionSet> {
        self.actions.draw(&mut self.action_rng)
    }

    fn pull(&mut self, action: &[f64]) -> Result<Pull> {
        let expected = self.expected_reward(action)?;
        Ok(Pull { reward: expected + self.noise.sample(&mut self.noise_rng), expected: Some(expected) })
    }

    fn optimum(&mut self, set: &ActionSet, opts: &SearchOptions) -> Result<Option<RoundOptimum>> {
        let approximate = matches!(set, ActionSet::Box { .. });
        let map = &self.map;
        let theta = &self.theta_star;
        let best = argmax_action_with_gradient(set, opts, |a| {
            let value = dot(&map.featurize(a)?, theta);
            let grad = map.jacobian(a)?.map(|j| j.tr_mul(&nalgebra::DVector::from_column_slice(theta)).as_slice().to_vec());
            Ok((value, grad))
        })?;
        Ok(Some(RoundOptimum { value: best.value, approximate }))
    }

    fn theta_star(&self) -> Option<&[f64]> {
        Some(&self.theta_star)
    }

    fn noise_scale(&self) -> Option<f64> {
        Some(self.noise.scale())
    }
}

/// Environment backed by a user callback, for reward functions that are not
/// a known linear model.
pub struct Blackbox<F> {
    map: FeatureMap,
    actions: ActionSource,
    action_rng: SeededRng,
    reward_rng: SeededRng,
    callback: F,
}

impl<F> Blackbox<F>
where
    F: FnMut(&[f64], &mut SeededRng) -> Result<Pull>,
{
    pub fn new(map: FeatureMap, actions: ActionSource, seed: u64, callback: F) -> Result<Self> {
        check_len(map.input_dim(), actions.dim())?;
        actions.validate()?;
        Ok(Self {
            map,
            actions,
            action_rng: SeededRng::derive(seed, 1),
            reward_rng: SeededRng::derive(seed, 2),
            callback,
        })
    }
}

impl<F> Environment for Blackbox<F>
where
    F: FnMut(&[f64], &mut SeededRng) -> Result<Pull>,
{
    fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    fn next_action_set(&mut self) -> Result<ActionSet> {
        self.actions.draw(&mut self.action_rng)
    }

    fn pull(&mut self, action: &[f64]) -> Result<Pull> {
        let pull = (self.callback)(action, &mut self.reward_rng)?;
        if !pull.reward.is_finite() {
            return Err(Error::Environment(format!("callback returned reward {}", pull.reward)));
        }
        Ok(pull)
    }

    fn optimum(&mut self, _set: &ActionSet, _opts: &SearchOptions) -> Result<Option<RoundOptimum>> {
        Ok(None)
    }
}

/// Recipe for a family of synthetic environments, one per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSetup {
    pub map: FeatureMap,
    pub actions: ActionSource,
    pub noise: Noise,
    /// `theta*` is drawn from `N(0, I)` and scaled down to this norm if longer.
    pub theta_bound: f64,
}

impl SyntheticSetup {
    pub fn build(&self, seed: u64) -> Result<SyntheticLinear> {
        let mut rng = SeededRng::derive(seed, 0);
        let theta = sample_theta_star(self.map.feature_dim(), self.theta_bound, &mut rng);
        SyntheticLinear::new(self.map.clone(), theta, self.noise, self.actions.clone(), seed)
    }
}

/// `theta ~ N(0, I)`, scaled down to norm `bound` when it is longer.
pub fn sample_theta_star(d: usize, bound: f64, rng: &mut SeededRng) -> Vec<f64> {
    let mut theta = rng.normal_vec(d);
    let n = norm(&theta);
    if n > bound {
        theta.iter_mut().for_each(|x| *x *= bound / n);
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_noise_is_bounded_and_centered() {
        let mut rng = SeededRng::new(5);
        let noise = Noise::Uniform { half_width: 0.3 };
        let xs: Vec<f64> = (0..50_000).map(|_| noise.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| x.abs() <= 0.3));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.005);
        // Uniform on [-w, w] has variance w^2 / 3.
        assert!((var - 0.03).abs() < 0.002, "{var}");
    }

    #[test]
    fn synthetic_validates_dimensions() {
        let map = FeatureMap::identity(2).unwrap();
        let set = ActionSet::finite(vec![vec![1.0, 0.0]]).unwrap();
        let src = ActionSource::Fixed { set };
        assert!(SyntheticLinear::new(map.clone(), vec![1.0], Noise::None, src.clone(), 0).is_err());
        assert!(SyntheticLinear::new(map, vec![1.0, 0.0], Noise::Gaussian { sigma: -1.0 }, src, 0).is_err());
    }

    #[test]
    fn streams_are_independent_of_actions_played() {
        let map = FeatureMap::identity(2).unwrap();
        let src = ActionSource::RandomFinite { arms: 3, lower: vec![0.0; 2], upper: vec![1.0; 2] };
        let mut a = SyntheticLinear::new(map.clone(), vec![1.0, -1.0], Noise::Gaussian { sigma: 0.1 }, src.clone(), 9).unwrap();
        let mut b = SyntheticLinear::new(map, vec![1.0, -1.0], Noise::Gaussian { sigma: 0.1 }, src, 9).unwrap();
        for _ in 0..10 {
            let sa = a.next_action_set().unwrap();
            let sb = b.next_action_set().unwrap();
            assert_eq!(sa, sb);
            let ActionSet::Finite { actions } = sa else { unreachable!() };
            let pa = a.pull(&actions[0]).unwrap();
            let pb = b.pull(&actions[2]).unwrap();
            let na = pa.reward - pa.expected.unwrap();
            let nb = pb.reward - pb.expected.unwrap();
            assert!((na - nb).abs() < 1e-12);
        }
    }

    #[test]
    fn optimum_on_finite_and_box() {
        let map = FeatureMap::identity(2).unwrap();
        let set = ActionSet::finite(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut env =
            SyntheticLinear::new(map.clone(), vec![0.2, 0.7], Noise::None, ActionSource::Fixed { set: set.clone() }, 0)
                .unwrap();
        let o = env.optimum(&set, &SearchOptions::default()).unwrap().unwrap();
        assert_eq!(o.value, 0.7);
        assert!(!o.approximate);
        let bx = ActionSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let o = env.optimum(&bx, &SearchOptions::default()).unwrap().unwrap();
        assert!((o.value - 0.9).abs() < 1e-9);
        assert!(o.approximate);
    }

    #[test]
    fn theta_star_is_bounded() {
        let mut rng = SeededRng::new(1);
        for _ in 0..100 {
            assert!(norm(&sample_theta_star(50, 3.0, &mut rng)) <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn blackbox_rejects_non_finite_rewards() {
        let map = FeatureMap::identity(1).unwrap();
        let src = ActionSource::Fixed { set: ActionSet::finite(vec![vec![0.0]]).unwrap() };
        let mut env = Blackbox::new(map, src, 0, |_a: &[f64], _r: &mut SeededRng| {
            Ok(Pull { reward: f64::NAN, expected: None })
        })
        .unwrap();
        assert!(matches!(env.pull(&[0.0]), Err(Error::Environment(_))));
    }
}
