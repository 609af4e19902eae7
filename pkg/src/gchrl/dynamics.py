"""Bootstrapped ensemble of Gaussian delta-state models.

Each member is an MLP with a Gaussian head predicting the change in
state for (s, a), trained by maximum likelihood on its own bootstrap
resample of the replay data. Inputs and targets are normalized by
statistics frozen at training time. The ensemble never predicts
rewards.

Predictions used downstream are member means: `sample_member` picks a
member uniformly per row from the ensemble's own rng, `mean_of_means`
averages all members.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nets
from .core import subgoal_transition


class DynamicsEnsemble:
    def __init__(self, state_dim, action_dim, rng, *, n_members=5,
                 hidden=(256, 256), lr=5e-3, batch_size=256,
                 logvar_min=-5.0, logvar_max=2.0):
        if n_members < 2:
            raise ValueError("ensemble needs at least 2 members")
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.batch_size = int(batch_size)
        self.rng = rng
        self.members = [
            nets.DenseNet(state_dim + action_dim, hidden, state_dim, rng,
                          act="swish", head="gaussian",
                          logvar_min=logvar_min, logvar_max=logvar_max)
            for _ in range(n_members)
        ]
        self.opts = [nets.Adam(m.params, lr) for m in self.members]
        self.in_mean = np.zeros(state_dim + action_dim)
        self.in_std = np.ones(state_dim + action_dim)
        self.out_mean = np.zeros(state_dim)
        self.out_std = np.ones(state_dim)
        self.trained = False
        self.last_initial_nll = None
        self.last_final_nll = None
        self.train_nll_curve = []

    # -- training ------------------------------------------------------------

    def _nll(self, member, x, y):
        mean, logvar = member.forward(x)
        inv = np.exp(-logvar)
        return float(np.mean(0.5 * (logvar + (y - mean) ** 2 * inv + np.log(2 * np.pi))))

    def holdout_nll(self, x, y):
        return float(np.mean([self._nll(m, x, y) for m in self.members]))

    def train(self, s, a, s_next, *, epochs=20, holdout_frac=0.1, max_samples=None):
        """Fit all members; returns mean held-out NLL (normalized space)."""
        s = np.asarray(s, dtype=np.float64)
        if len(s) < 2:
            raise ValueError("need at least 2 transitions to train")
        x = np.concatenate([s, np.asarray(a, dtype=np.float64)], axis=1)
        y = np.asarray(s_next, dtype=np.float64) - s
        if max_samples is not None and len(x) > max_samples:
            keep = self.rng.choice(len(x), size=max_samples, replace=False)
            x, y = x[keep], y[keep]
        perm = self.rng.permutation(len(x))
        n_hold = max(1, int(len(x) * holdout_frac))
        hold, fit = perm[:n_hold], perm[n_hold:]
        if len(fit) == 0:
            raise ValueError("not enough data for a train split")
        x_fit, y_fit = x[fit], y[fit]

        self.in_mean = x_fit.mean(axis=0)
        self.in_std = np.maximum(x_fit.std(axis=0), 1e-6)
        self.out_mean = y_fit.mean(axis=0)
        self.out_std = np.maximum(y_fit.std(axis=0), 1e-6)
        xn_fit = (x_fit - self.in_mean) / self.in_std
        yn_fit = (y_fit - self.out_mean) / self.out_std
        xn_hold = (x[hold] - self.in_mean) / self.in_std
        yn_hold = (y[hold] - self.out_mean) / self.out_std

        self.last_initial_nll = self.holdout_nll(xn_hold, yn_hold)
        self.train_nll_curve = []
        n = len(xn_fit)
        boots = [self.rng.integers(0, n, size=n) for _ in self.members]
        # epochs is a budget, not a target: each member keeps the params of
        # its best holdout epoch, so long fits cannot turn overconfident
        best = [(self._nll(m, xn_hold, yn_hold), [p.copy() for p in m.params])
                for m in self.members]
        for _ in range(epochs):
            for j, (member, opt, boot) in enumerate(
                    zip(self.members, self.opts, boots)):
                order = boot[self.rng.permutation(n)]
                for i0 in range(0, n, self.batch_size):
                    idx = order[i0:i0 + self.batch_size]
                    pv = member.param_vars()
                    mean, logvar = member.forward_tape(xn_fit[idx], pv)
                    loss = ad.mean_all(ad.gaussian_nll(mean, logvar, yn_fit[idx]))
                    ad.backward(loss)
                    opt.step([v.grad for v in pv])
                score = self._nll(member, xn_hold, yn_hold)
                if score < best[j][0]:
                    best[j] = (score, [p.copy() for p in member.params])
            self.train_nll_curve.append(
                float(np.mean([self._nll(m, xn_fit, yn_fit) for m in self.members])))
        for member, (_, params) in zip(self.members, best):
            for p, q in zip(member.params, params):
                p[...] = q
        self.trained = True
        self.last_final_nll = self.holdout_nll(xn_hold, yn_hold)
        return self.last_final_nll

    # -- prediction ------------------------------------------------------------

    def _require_trained(self):
        if not self.trained:
            raise RuntimeError("dynamics ensemble used before training")

    def _member_delta(self, member, s, a):
        x = (np.concatenate([s, a], axis=1) - self.in_mean) / self.in_std
        mean, _ = member.forward(x)
        return mean * self.out_std + self.out_mean

    def predict_next(self, s, a, mode="sample_member"):
        """Next-state prediction s + member mean delta; batched."""
        self._require_trained()
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        single = s.ndim == 1
        if single:
            s, a = s.reshape(1, -1), a.reshape(1, -1)
        if mode == "mean_of_means":
            delta = np.mean([self._member_delta(m, s, a) for m in self.members], axis=0)
        elif mode == "sample_member":
            which = self.rng.integers(0, len(self.members), size=len(s))
            delta = np.empty((len(s), self.state_dim))
            for b, member in enumerate(self.members):
                rows = which == b
                if np.any(rows):
                    delta[rows] = self._member_delta(member, s[rows], a[rows])
        else:
            raise ValueError(f"unknown mode {mode!r}")
        out = s + delta
        return out[0] if single else out

    def predict_next_tape(self, s_const, a_var, member_idx):
        """Tape version for losses that differentiate through the model.

        Model parameters stay constant; gradients flow through `a_var`
        (and anything upstream of it). member_idx assigns one member per
        row; the selection is a constant mask so each member runs on the
        full batch and rows are mixed back by 0/1 weights.
        """
        self._require_trained()
        s_const = np.asarray(s_const, dtype=np.float64)
        x = ad.concat_cols([s_const, a_var])
        xn = ad.mul(ad.sub(x, self.in_mean.reshape(1, -1)),
                    (1.0 / self.in_std).reshape(1, -1))
        total = None
        for b, member in enumerate(self.members):
            mask = (np.asarray(member_idx) == b).astype(np.float64).reshape(-1, 1)
            if not mask.any():
                continue
            mean, _ = member.forward_tape(xn)
            part = ad.mul(mean, mask)
            total = part if total is None else ad.add(total, part)
        delta = ad.add(ad.mul(total, self.out_std.reshape(1, -1)),
                       self.out_mean.reshape(1, -1))
        return ad.add(delta, s_const)

    # -- persistence ------------------------------------------------------------

    def save(self, path):
        ns = {f"member{i}": m for i, m in enumerate(self.members)}
        opts = {f"member{i}": o for i, o in enumerate(self.opts)}
        nets.save_nets(path, ns, opts, extra={
            "in_mean": self.in_mean, "in_std": self.in_std,
            "out_mean": self.out_mean, "out_std": self.out_std,
            "trained": np.array([1.0 if self.trained else 0.0]),
        })

    def load(self, path):
        ns = {f"member{i}": m for i, m in enumerate(self.members)}
        opts = {f"member{i}": o for i, o in enumerate(self.opts)}
        extra = nets.load_nets(path, ns, opts)
        self.in_mean = extra["in_mean"]
        self.in_std = extra["in_std"]
        self.out_mean = extra["out_mean"]
        self.out_std = extra["out_std"]
        self.trained = bool(extra["trained"][0])


def rollout(predict, policy, s0, sg0, horizon, *, eta, goal_indices,
            recorded_states=None, rho=1.0):
    """Model rollout with optional blending toward recorded states.

    predict(s, a) -> s_next and policy(s, sg) -> a operate on batches.
    With recorded_states (B, horizon, S) given, the i-th predicted state
    is mixed as (1 - rho^i) * model + rho^i * recorded, so the first
    step is always the recorded state and rho=1 reproduces the recorded
    sequence exactly. Returns (states, subgoals, actions) stacked along
    axis 1, with horizon+1 states/subgoals and horizon actions.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if predict is None and not (recorded_states is not None and rho == 1.0):
        raise ValueError("rollout without a model needs recorded states and rho=1")
    s = np.asarray(s0, dtype=np.float64)
    sg = np.asarray(sg0, dtype=np.float64)
    states = [s]
    subgoals = [sg]
    actions = []
    for i in range(horizon):
        a = policy(s, sg)
        actions.append(a)
        if recorded_states is not None:
            w = rho ** i
            # w == 1 needs no model call; keeps the rho=1 path model-free
            if w == 1.0:
                s_next = recorded_states[:, i]
            else:
                s_next = (1.0 - w) * predict(s, a) + w * recorded_states[:, i]
        else:
            s_next = predict(s, a)
        sg = subgoal_transition(sg, s, s_next, eta, goal_indices)
        states.append(s_next)
        subgoals.append(sg)
        s = s_next
    return np.stack(states, axis=1), np.stack(subgoals, axis=1), np.stack(actions, axis=1)
