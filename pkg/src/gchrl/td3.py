"""Twin-critic deterministic actor-critic (TD3) used at both levels.

Auxiliary losses plug into the updates: `extra_critic` receives the two
critics' parameter Vars and returns a scalar Var added to the TD loss
(the gradient penalty hooks in here); each entry of `extra_actor`
receives the actor parameter Vars plus the actor's output Var on the
batch and returns a scalar Var (adjacency, landmark and rollout-planning
terms hook in here). With no extras this is plain TD3.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nets


class TD3Agent:
    def __init__(self, obs_dim, action_low, action_high, rng, *, gamma,
                 hidden=(300, 300), actor_lr=1e-4, critic_lr=1e-3, tau=0.005,
                 target_noise_frac=0.2, noise_clip_frac=0.5, explore_sigma=1.0):
        self.obs_dim = int(obs_dim)
        self.a_low = np.asarray(action_low, dtype=np.float64).reshape(-1)
        self.a_high = np.asarray(action_high, dtype=np.float64).reshape(-1)
        self.act_dim = self.a_low.size
        self.gamma = float(gamma)
        self.tau = float(tau)
        self.explore_sigma = float(explore_sigma)
        half = 0.5 * (self.a_high - self.a_low)
        self.target_sigma = target_noise_frac * half
        self.noise_clip = noise_clip_frac * half
        self.rng = rng

        def actor_net(r):
            return nets.DenseNet(self.obs_dim, hidden, self.act_dim, r, act="relu",
                                 head="tanh", out_low=self.a_low, out_high=self.a_high)

        def critic_net(r):
            return nets.DenseNet(self.obs_dim + self.act_dim, hidden, 1, r, act="relu")

        self.actor = actor_net(rng)
        self.critic1 = critic_net(rng)
        self.critic2 = critic_net(rng)
        self.actor_t = self.actor.clone()
        self.critic1_t = self.critic1.clone()
        self.critic2_t = self.critic2.clone()
        self.opt_actor = nets.Adam(self.actor.params, actor_lr)
        self.opt_critic1 = nets.Adam(self.critic1.params, critic_lr)
        self.opt_critic2 = nets.Adam(self.critic2.params, critic_lr)

    # -- acting ------------------------------------------------------------

    def act(self, obs, explore=False):
        obs = np.asarray(obs, dtype=np.float64)
        single = obs.ndim == 1
        a = self.actor.forward(obs.reshape(1, -1) if single else obs)
        if explore:
            a = a + self.rng.standard_normal(a.shape) * self.explore_sigma
            a = np.clip(a, self.a_low, self.a_high)
        return a[0] if single else a

    # -- updates -----------------------------------------------------------

    def target_value(self, batch):
        """y = r + (1-done) * gamma * min_i Q_i'(o', pi'(o') + eps)."""
        o2 = batch["o2"]
        a2 = self.actor_t.forward(o2)
        eps = self.rng.standard_normal(a2.shape) * self.target_sigma
        eps = np.clip(eps, -self.noise_clip, self.noise_clip)
        a2 = np.clip(a2 + eps, self.a_low, self.a_high)
        x2 = np.concatenate([o2, a2], axis=1)
        q = np.minimum(self.critic1_t.forward(x2), self.critic2_t.forward(x2))
        r = batch["r"].reshape(-1, 1)
        done = batch["done"].reshape(-1, 1)
        return r + (1.0 - done) * self.gamma * q

    def critic_update(self, batch, extra_critic=None):
        y = self.target_value(batch)
        x = np.concatenate([batch["o"], batch["a"]], axis=1)
        pv1 = self.critic1.param_vars()
        pv2 = self.critic2.param_vars()
        td1 = ad.mean_all(ad.square(ad.sub(self.critic1.forward_tape(x, pv1), y)))
        td2 = ad.mean_all(ad.square(ad.sub(self.critic2.forward_tape(x, pv2), y)))
        loss = ad.add(td1, td2)
        extra_val = 0.0
        if extra_critic is not None:
            extra = extra_critic(pv1, pv2)
            extra_val = float(extra.data)
            loss = ad.add(loss, extra)
        ad.backward(loss)
        self.opt_critic1.step([v.grad for v in pv1])
        self.opt_critic2.step([v.grad for v in pv2])
        return {"td": float(td1.data) + float(td2.data), "extra": extra_val}

    def actor_update(self, batch, extra_actor=()):
        o = batch["o"]
        pv = self.actor.param_vars()
        a = self.actor.forward_tape(o, pv)
        q = self.critic1.forward_tape(ad.concat_cols([o, a]))  # critic params frozen
        loss = ad.neg(ad.mean_all(q))
        extra_vals = []
        for build in extra_actor:
            term = build(pv, a)
            extra_vals.append(float(term.data))
            loss = ad.add(loss, term)
        ad.backward(loss)
        self.opt_actor.step([v.grad for v in pv])
        nets.soft_update(self.actor_t, self.actor, self.tau)
        nets.soft_update(self.critic1_t, self.critic1, self.tau)
        nets.soft_update(self.critic2_t, self.critic2, self.tau)
        return {"actor": float(loss.data), "extras": extra_vals}

    # -- persistence ---------------------------------------------------------

    def _named(self):
        return ({"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
                 "actor_t": self.actor_t, "critic1_t": self.critic1_t,
                 "critic2_t": self.critic2_t},
                {"actor": self.opt_actor, "critic1": self.opt_critic1,
                 "critic2": self.opt_critic2})

    def save(self, path):
        ns, opts = self._named()
        nets.save_nets(path, ns, opts)

    def load(self, path):
        ns, opts = self._named()
        nets.load_nets(path, ns, opts)
