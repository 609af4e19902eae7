"""Model-based off-policy relabeling of high-level transitions.

For every sampled high-level interval, candidate subgoals (Gaussian
draws around the achieved goal, plus the original subgoal and the
achieved goal itself) are scored by rolling the current low-level
policy through the dynamics model, blending each predicted state toward
the recorded one by rho^(i-t), and measuring how well the rollout
actions match the recorded ones. The best candidate replaces the stored
subgoal, shifted at most delta_sg from the original (soft relabel).

rho=1 blends everything to the recorded states, which is exactly the
classic action-matching correction and needs no model at all.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import project
from .dynamics import rollout


@dataclass
class CorrectionParams:
    k: int = 10
    rho: float = 0.95
    delta_sg: float = 20.0
    sigma_cand: float = 1.0
    exp_action_weight: bool = False  # weight step errors by rho^(i-t) instead

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("k must allow samples + original + achieved")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if self.delta_sg < 0.0:
            raise ValueError("delta_sg must be >= 0")


def candidates(batch, hp, params, rng):
    """Candidate subgoals, shape (B, k, G); the last two per row are the
    original subgoal and the achieved goal."""
    states = batch["states"]
    sg_orig = batch["subgoals"][:, 0]
    achieved = project(states[:, -1], hp.goal_indices)
    if hp.eta == 0:
        achieved = achieved - project(states[:, 0], hp.goal_indices)
    n_draw = params.k - 2
    draws = achieved[:, None, :] + rng.standard_normal(
        (len(states), n_draw, achieved.shape[1])) * params.sigma_cand
    draws = np.clip(draws, hp.subgoal_low, hp.subgoal_high)
    return np.concatenate([draws, sg_orig[:, None, :], achieved[:, None, :]], axis=1)


def score_candidates(batch, cands, predict, low_policy, hp, params):
    """Action-matching score per candidate, shape (B, k). Higher is a
    better explanation of the recorded actions."""
    states = batch["states"]
    actions = batch["actions"]
    B, k, G = cands.shape
    c = actions.shape[1]
    s0 = np.repeat(states[:, 0], k, axis=0)
    recorded = np.repeat(states[:, 1:], k, axis=0)
    _, _, a_hat = rollout(predict, low_policy, s0, cands.reshape(B * k, G), c,
                          eta=hp.eta, goal_indices=hp.goal_indices,
                          recorded_states=recorded, rho=params.rho)
    err = np.sum((np.repeat(actions, k, axis=0) - a_hat) ** 2, axis=2)
    if params.exp_action_weight:
        err = err * params.rho ** np.arange(c)
    return -err.sum(axis=1).reshape(B, k)


def soft_shift(sg_orig, sg_star, delta_sg):
    """Move sg_orig toward sg_star by at most delta_sg; delta_sg=0 is a
    hard relabel (return sg_star)."""
    if delta_sg == 0.0:
        return sg_star.copy()
    diff = sg_star - sg_orig
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    full = norm[..., 0] <= delta_sg
    stepped = sg_orig + delta_sg * diff / np.maximum(norm, 1e-12)
    return np.where(full[..., None], sg_star, stepped)


def relabel(batch, predict, low_policy, hp, params, rng):
    """Relabeled subgoals for a sampled high-level batch, shape (B, G).

    Also returns the candidate scores for diagnostics.
    """
    cands = candidates(batch, hp, params, rng)
    scores = score_candidates(batch, cands, predict, low_policy, hp, params)
    best = np.argmax(scores, axis=1)  # ties resolve to the lowest index
    sg_star = cands[np.arange(len(best)), best]
    return soft_shift(batch["subgoals"][:, 0], sg_star, params.delta_sg), scores
