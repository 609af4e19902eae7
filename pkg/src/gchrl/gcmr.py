"""Two regularizers that couple the levels through the learned model.

The gradient penalty keeps the low-level critic's action gradient under
a Lipschitz ceiling inferred from the dynamics ensemble: the reward's
action sensitivity is measured by differentiating the intrinsic reward
through a model step, turned into a bound on ||grad_a Q||, and excess
beyond the bound is squared and penalized. One-step rollout planning
pushes the low-level actor toward actions whose model-predicted
successor the high-level critic values: a pool of (state, goal) pairs
with perturbed subgoals is rolled one step through the model and the
negated high-level value becomes an extra actor loss. Gradients reach
only the low-level networks; the high level and the model act as fixed
evaluators.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets


@dataclass
class GcmrParams:
    lambda_gp: float = 1.0
    lambda_osrp: float = 5e-4
    gp_every: int = 5           # env steps between penalized critic updates
    gp_critic_iters: int = 5    # critic iterations per actor iteration then
    osrp_every: int = 10        # high-level update periods between osrp steps
    pool_replicas: int = 10     # goal-shuffled copies of the osrp pool
    sigma_sg_frac: float = 0.5  # subgoal sampling std as fraction of half-range
    l_pi_assumed: float | None = None
    use_conservative_bound: bool = True

    def __post_init__(self):
        if self.lambda_gp < 0.0 or self.lambda_osrp < 0.0:
            raise ValueError("penalty weights must be >= 0")
        if self.gp_every < 1 or self.osrp_every < 1:
            raise ValueError("application periods must be >= 1")


def bound(n_actions, l_r, gamma, l_pi=None):
    """Ceiling on ||grad_a Q|| for an L_r-Lipschitz reward.

    With a policy Lipschitz constant: sqrt(N) * L_r / (1 - gamma*L_pi);
    without one, the conservative form sqrt(N) * L_r / (1 - gamma).
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    if l_pi is None:
        return float(np.sqrt(n_actions) * l_r / (1.0 - gamma))
    if gamma * l_pi >= 1.0:
        raise ValueError("tight bound needs gamma * l_pi < 1")
    return float(np.sqrt(n_actions) * l_r / (1.0 - gamma * l_pi))


def _selector(state_dim, goal_indices):
    P = np.zeros((state_dim, len(goal_indices)))
    P[list(goal_indices), np.arange(len(goal_indices))] = 1.0
    return P


def lr_hat(batch, ensemble, low_agent, hp, rng):
    """Empirical action-Lipschitz constant of the intrinsic reward,
    measured through the model: max over the batch of
    ||grad_a -||sg + (1 - eta)*phi(s) - phi(next)|| ||  (the shifted
    subgoal minus eta*phi(next), with the shift expanded out).
    """
    s = batch["s"]
    sg = batch["sg"]
    a = low_agent.actor.forward(np.concatenate([s, sg], axis=1))
    av = ad.Var(a)
    member_idx = rng.integers(0, len(ensemble.members), size=len(s))
    s_next = ensemble.predict_next_tape(s, av, member_idx)
    P = _selector(s.shape[1], hp.goal_indices)
    fixed = sg + (1.0 - hp.eta) * (s @ P)
    diff = ad.add(ad.scale(ad.matmul(s_next, P), -1.0), fixed)
    r = ad.neg(ad.rownorm(diff))
    ad.backward(ad.sum_all(r))
    return float(np.max(np.linalg.norm(av.grad, axis=1)))


def gp_threshold(n_actions, l_r_hat, gamma):
    return bound(n_actions, l_r_hat, gamma)


def grad_norms(low_agent, s, sg):
    """||grad_a Q_i(s, sg, pi(s, sg))|| rows for both critics, (2B,)."""
    obs = np.concatenate([s, sg], axis=1)
    a = low_agent.actor.forward(obs)
    x = np.concatenate([obs, a], axis=1)
    span = (obs.shape[1], x.shape[1])
    return np.concatenate([
        np.linalg.norm(nets.input_gradient(low_agent.critic1, x, span), axis=1),
        np.linalg.norm(nets.input_gradient(low_agent.critic2, x, span), axis=1),
    ])


def gp_term(low_agent, s, sg, lam, threshold):
    """Critic-loss builder: lam * mean ReLU(||grad_a Q|| - threshold)^2,
    summed over the twin critics, at the current policy's actions."""
    obs = np.concatenate([s, sg], axis=1)
    a = low_agent.actor.forward(obs)
    x = np.concatenate([obs, a], axis=1)
    span = (obs.shape[1], x.shape[1])

    def extra(pv1, pv2):
        total = None
        for net, pv in ((low_agent.critic1, pv1), (low_agent.critic2, pv2)):
            g = nets.input_gradient_tape(net, x, pv, cols=span)
            excess = ad.relu(ad.sub(ad.rownorm(g), threshold))
            term = ad.mean_all(ad.square(excess))
            total = term if total is None else ad.add(total, term)
        return ad.scale(total, lam)
    return extra


def osrp_pool(s, g, replicas, rng):
    """(state, goal) evaluation pool: `replicas` goal-shuffled copies,
    then the whole thing duplicated once."""
    parts = [g[rng.permutation(len(g))] for _ in range(replicas)]
    s_pool = np.tile(s, (replicas, 1))
    g_pool = np.concatenate(parts, axis=0)
    return np.tile(s_pool, (2, 1)), np.tile(g_pool, (2, 1))


def osrp_term(low_agent, hi_agent, ensemble, hp, s_pool, g_pool, params, rng):
    """Low-actor loss builder: -(lambda/2) * mean of the high critic's
    value of the model-predicted successor, under both the transitioned
    subgoal and a fresh perturbed high-level action."""
    hi_obs = np.concatenate([s_pool, g_pool], axis=1)
    sg_mean = hi_agent.actor.forward(hi_obs)
    sigma = params.sigma_sg_frac * 0.5 * (hp.subgoal_high - hp.subgoal_low)
    sg = np.clip(sg_mean + rng.standard_normal(sg_mean.shape) * sigma,
                 hp.subgoal_low, hp.subgoal_high)
    member_idx = rng.integers(0, len(ensemble.members), size=len(s_pool))
    eps = rng.standard_normal(sg_mean.shape) * hi_agent.target_sigma
    eps = np.clip(eps, -hi_agent.noise_clip, hi_agent.noise_clip)
    P = _selector(s_pool.shape[1], hp.goal_indices)
    lam = params.lambda_osrp

    def build(pv, a_batch):
        a = low_agent.actor.forward_tape(
            np.concatenate([s_pool, sg], axis=1), pv)
        s_next = ensemble.predict_next_tape(s_pool, a, member_idx)
        if hp.eta == 1:
            sg_next = sg  # h passes an absolute subgoal through unchanged
        else:
            sg_next = ad.add(ad.scale(ad.matmul(s_next, P), -1.0),
                             sg + s_pool @ P)
        q1 = hi_agent.critic1.forward_tape(
            ad.concat_cols([s_next, g_pool, sg_next]))
        sg_fresh = ad.add(
            hi_agent.actor.forward_tape(ad.concat_cols([s_next, g_pool])), eps)
        q2 = hi_agent.critic1.forward_tape(
            ad.concat_cols([s_next, g_pool, sg_fresh]))
        return ad.scale(ad.mean_all(ad.add(q1, q2)), -0.5 * lam)
    return build
