use emac::env::{Env, Pendulum};
use emac::Error;

fn truncated_pendulum(seed: u64) -> Env {
    let mut env = Env::pendulum();
    env.reset(seed);
    for _ in 0..Pendulum::TIME_LIMIT {
        env.step(&[0.5]).unwrap();
    }
    env
}

#[test]
fn zero_horizon_extension_is_empty() {
    let env = truncated_pendulum(1);
    assert!(env
        .rollout_extension(|_| Ok(vec![0.0]), 0)
        .unwrap()
        .is_empty());
}

#[test]
fn extension_is_deterministic_and_leaves_env_alone() {
    let env = truncated_pendulum(2);
    let before = env.observation();
    let policy = |obs: &[f64]| Ok(vec![-obs[1] * 2.0]);
    let a = env.rollout_extension(policy, 50).unwrap();
    let b = env.rollout_extension(policy, 50).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 50);
    assert_eq!(env.observation(), before);
    assert!(matches!(
        env.clone().step(&[0.0]),
        Err(Error::EpisodeFinished)
    ));
}

#[test]
fn running_episode_cannot_be_extended() {
    let mut env = Env::pendulum();
    env.reset(0);
    assert!(matches!(
        env.rollout_extension(|_| Ok(vec![0.0]), 5),
        Err(Error::EpisodeRunning)
    ));
}

#[test]
fn policy_errors_propagate() {
    let env = truncated_pendulum(3);
    let r = env.rollout_extension(|_| Err(Error::NonFinite("policy")), 5);
    assert!(matches!(r, Err(Error::NonFinite(_))));
}
