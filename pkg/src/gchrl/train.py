"""Training loop: two TD3 agents on the point maze, glued together by
subgoal relabeling, adjacency/landmark shaping, the critic gradient
penalty and one-step rollout planning, with periodic evaluation and
append-only CSV logging.

Cadences, with the env step counter t starting at 1:

  low-level update        every step
  high-level update       every c steps (t % c == 0)
  dynamics refit          every dyn_every steps once t >= t_dm
  gradient penalty        every gp_every steps once the model exists
  rollout planning        every osrp_every * c steps once the model exists
  adjacency training      every adj_train_every steps
  evaluation + CSV row    every eval_every steps

Everything that needs the learned model -- relabeling included -- stays
off until t_dm. Every stochastic component draws from its own stream
spawned from the run seed, so turning one component off cannot shift
another's randomness; that is what makes the algorithm switches
bit-for-bit comparable and runs byte-identical under the same config.

Wall-clock numbers never enter the main CSV (it must be reproducible
byte for byte); they go to the timings.csv sidecar instead.
"""
from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict

import numpy as np

from . import gcmr
from . import nets
from .adjacency import AdjacencyMemory, AdjacencyNet
from .config import algo_flags, config_hash, to_dict
from .core import (HierarchyParams, high_buffer, high_reward, intrinsic_reward,
                   low_buffer, project, subgoal_transition)
from .correction import CorrectionParams, relabel
from .dynamics import DynamicsEnsemble
from .envs import GOAL_INDICES, LAYOUTS, PointMazeEnv, load_layout
from .landmark import LandmarkPlanner, aclg_term, higl_term
from .td3 import TD3Agent

# one independent generator per stochastic component, spawned from the
# run seed in this fixed order
STREAMS = ("env", "eval", "low", "high", "dynamics", "relabel", "adjacency",
           "landmark", "osrp", "buffer_lo", "buffer_hi", "lr_hat", "warmup",
           "diagnostic")

MAIN_COLUMNS = ("step", "success_rate", "mean_return", "low_td", "high_td",
                "relabel_shift", "delta_sg", "adj_loss", "dyn_nll", "lr_hat",
                "gp_loss", "osrp_loss", "landmarks")
TIMING_COLUMNS = ("step", "wall_seconds", "env", "dynamics", "low", "high",
                  "relabel", "landmark", "adjacency", "eval")
GCMR_COLUMNS = ("step", "lr_hat", "bound", "grad_norm_mean", "grad_norm_max",
                "gp_loss", "osrp_loss")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.8g}"


@contextmanager
def _timed(acc, key):
    t0 = time.perf_counter()
    yield
    acc[key] += time.perf_counter() - t0


class Trainer:
    """One training run; construct with a validated config, call run()."""

    def __init__(self, cfg, out_dir):
        cfg.validate()
        self.cfg = cfg
        self.flags = algo_flags(cfg)
        self.out_dir = str(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)

        root = np.random.SeedSequence(cfg.seed)
        seqs = dict(zip(STREAMS, root.spawn(len(STREAMS))))
        self.rngs = {name: np.random.default_rng(seq) for name, seq in seqs.items()}

        layout = (load_layout(cfg.layout_file) if cfg.layout_file
                  else LAYOUTS[cfg.env]())
        env_kwargs = dict(action_noise_prob=cfg.action_noise_prob,
                          reward_kind=cfg.reward_kind)
        self.env = PointMazeEnv(layout, self.rngs["env"], **env_kwargs)
        self.eval_envs = [PointMazeEnv(layout, np.random.default_rng(seq), **env_kwargs)
                          for seq in seqs["eval"].spawn(cfg.eval_episodes)]

        x0, y0, x1, y1 = layout.bounds
        self.hp = HierarchyParams(
            c=cfg.c, eta=cfg.eta, goal_indices=GOAL_INDICES,
            subgoal_low=np.array([x0, y0]), subgoal_high=np.array([x1, y1]),
            reward_scale_lo=cfg.reward_scale_lo, reward_scale_hi=cfg.reward_scale_hi)
        self.state_dim = 4
        self.goal_dim = len(GOAL_INDICES)
        self.act_dim = 2
        self.a_max = self.env.a_max
        half = 0.5 * (self.hp.subgoal_high - self.hp.subgoal_low)
        self.sigma_cand = (cfg.sigma_cand if cfg.sigma_cand is not None
                           else 0.5 * float(np.mean(half)))
        self.delta_sg = float(cfg.delta_sg)

        agent_kwargs = dict(hidden=cfg.hidden, actor_lr=cfg.actor_lr,
                            critic_lr=cfg.critic_lr, tau=cfg.tau,
                            target_noise_frac=cfg.target_noise_frac,
                            noise_clip_frac=cfg.noise_clip_frac)
        self.lo = TD3Agent(self.state_dim + self.goal_dim,
                           [-self.a_max] * self.act_dim, [self.a_max] * self.act_dim,
                           self.rngs["low"], gamma=cfg.gamma_lo,
                           explore_sigma=cfg.explore_sigma_lo, **agent_kwargs)
        self.hi = TD3Agent(self.state_dim + self.goal_dim,
                           self.hp.subgoal_low, self.hp.subgoal_high,
                           self.rngs["high"], gamma=cfg.gamma_hi,
                           explore_sigma=cfg.explore_sigma_hi, **agent_kwargs)

        self.low_buf = low_buffer(cfg.buffer_size_lo, self.state_dim,
                                  self.goal_dim, self.act_dim, self.rngs["buffer_lo"])
        self.high_buf = high_buffer(cfg.buffer_size_hi, cfg.c, self.state_dim,
                                    self.goal_dim, self.act_dim, self.rngs["buffer_hi"])

        # constructed for every algorithm (keeps the init streams aligned
        # across switches); only trained when some component needs it
        self.ensemble = DynamicsEnsemble(self.state_dim, self.act_dim,
                                         self.rngs["dynamics"],
                                         n_members=cfg.n_members,
                                         hidden=cfg.dyn_hidden, lr=cfg.dyn_lr,
                                         batch_size=cfg.dyn_batch)
        self.gparams = gcmr.GcmrParams(
            lambda_gp=self.flags.lambda_gp, lambda_osrp=self.flags.lambda_osrp,
            gp_every=cfg.gp_every, gp_critic_iters=cfg.gp_critic_iters,
            osrp_every=cfg.osrp_every, pool_replicas=cfg.pool_replicas,
            sigma_sg_frac=cfg.sigma_sg_frac)

        self.adj_memory = self.adj_net = self.planner = None
        if self.flags.use_adjacency:
            self.adj_memory = AdjacencyMemory(cell_size=cfg.cell_size, c=cfg.c,
                                              capacity=cfg.adj_capacity,
                                              rng=self.rngs["adjacency"])
            self.adj_net = AdjacencyNet(self.goal_dim, cfg.c, self.rngs["adjacency"],
                                        embed_dim=cfg.embed_dim, hidden=cfg.adj_hidden,
                                        zeta=cfg.zeta, margin=cfg.margin_adj,
                                        lr=cfg.adj_lr)
        if self.flags.use_landmark:
            self.planner = LandmarkPlanner(GOAL_INDICES, self.hp.subgoal_low,
                                           self.hp.subgoal_high, self.rngs["landmark"],
                                           m_cov=cfg.n_landmark_cov,
                                           m_nov=cfg.n_landmark_nov, v_cut=cfg.v_cut,
                                           delta_pseudo=cfg.delta_pseudo,
                                           rnd_hidden=cfg.rnd_hidden,
                                           rnd_dim=cfg.rnd_dim, rnd_lr=cfg.rnd_lr)

        self.last = {k: None for k in ("low_td", "high_td", "relabel_shift",
                                       "adj_loss", "dyn_nll", "lr_hat",
                                       "gp_loss", "osrp_loss")}
        self.history = []
        self._hi_updates = 0
        self._acc = {k: 0.0 for k in TIMING_COLUMNS[2:]}
        self._wall0 = time.perf_counter()

        self._f_main = self._open_csv("progress.csv", MAIN_COLUMNS)
        self._f_time = self._open_csv("timings.csv", TIMING_COLUMNS)
        self._f_gcmr = self._open_csv("gcmr_log.csv", GCMR_COLUMNS)
        if cfg.dump_graph:
            os.makedirs(os.path.join(self.out_dir, "graphs"), exist_ok=True)

    # -- plumbing ------------------------------------------------------------

    def _open_csv(self, name, columns):
        fh = open(os.path.join(self.out_dir, name), "w", encoding="utf-8",
                  newline="\n")
        fh.write(",".join(columns) + "\n")
        return fh

    def _row(self, fh, values):
        fh.write(",".join(_fmt(v) for v in values) + "\n")
        fh.flush()

    def _t(self, key):
        return _timed(self._acc, key)

    def _low_policy(self, s, sg):
        return self.lo.actor.forward(np.concatenate([s, sg], axis=1))

    def _v_low(self, states, goals):
        """Low-level state value used for planning edge weights."""
        x = np.concatenate([states, goals], axis=1)
        a = self.lo.actor.forward(x)
        return self.lo.critic1.forward(np.concatenate([x, a], axis=1))[:, 0]

    def _low_td3(self, b):
        return {"o": np.concatenate([b["s"], b["sg"]], axis=1), "a": b["a"],
                "r": b["r"],
                "o2": np.concatenate([b["s_next"], b["sg_next"]], axis=1),
                "done": b["done"]}

    # -- acting ----------------------------------------------------------------

    def _pick_subgoal(self, obs, goal, steps_done):
        if steps_done < self.cfg.warmup_steps:
            return self.rngs["warmup"].uniform(self.hp.subgoal_low,
                                               self.hp.subgoal_high)
        return self.hi.act(np.concatenate([obs, goal]), explore=True)

    def _pick_action(self, obs, sg, steps_done):
        if steps_done < self.cfg.warmup_steps:
            return self.rngs["warmup"].uniform(-self.a_max, self.a_max,
                                               size=self.act_dim)
        return self.lo.act(np.concatenate([obs, sg]), explore=True)

    # -- storage ---------------------------------------------------------------

    def _push_high(self, states, goal, subgoals, actions, rewards, success):
        """Store one high-level interval, padding episodes that ended
        mid-interval (states repeat, actions zero, rewards contribute 0)."""
        c = self.cfg.c
        n = len(actions)
        states = np.asarray(states, dtype=np.float64)
        subgoals = np.asarray(subgoals, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        if n < c:
            states = np.concatenate([states, np.repeat(states[-1:], c - n, axis=0)])
            subgoals = np.concatenate([subgoals,
                                       np.repeat(subgoals[-1:], c - n, axis=0)])
            actions = np.concatenate([actions,
                                      np.zeros((c - n, self.act_dim))])
        self.high_buf.push({"states": states, "g": goal, "subgoals": subgoals,
                            "actions": actions,
                            "reward": high_reward(rewards, self.hp.reward_scale_hi),
                            "done": float(success)})

    # -- updates ---------------------------------------------------------------

    def _maybe_dynamics(self, t):
        cfg = self.cfg
        if (not self.flags.model_needed or t < cfg.t_dm
                or t % cfg.dyn_every != 0):
            return
        self.last["dyn_nll"] = self.ensemble.train(
            self.low_buf.column("s"), self.low_buf.column("a"),
            self.low_buf.column("s_next"), epochs=cfg.dyn_epochs,
            holdout_frac=cfg.dyn_holdout, max_samples=cfg.dyn_max_samples)

    def _low_update(self, t):
        cfg, flags = self.cfg, self.flags
        n = min(len(self.low_buf), cfg.batch_size)
        gp_on = (flags.lambda_gp > 0.0 and t >= cfg.t_dm
                 and t % cfg.gp_every == 0 and self.ensemble.trained)
        if gp_on:
            lb = self.low_buf.sample(n)
            l_r = gcmr.lr_hat(lb, self.ensemble, self.lo, self.hp,
                              self.rngs["lr_hat"])
            thr = gcmr.gp_threshold(self.act_dim, l_r, cfg.gamma_lo)
            for _ in range(cfg.gp_critic_iters):
                b = self.low_buf.sample(n)
                extra = gcmr.gp_term(self.lo, b["s"], b["sg"],
                                     flags.lambda_gp, thr)
                cres = self.lo.critic_update(self._low_td3(b), extra)
            norms = gcmr.grad_norms(self.lo, b["s"], b["sg"])
            self.last["lr_hat"] = l_r
            self.last["gp_loss"] = cres["extra"]
            self._row(self._f_gcmr, (t, l_r, thr, float(norms.mean()),
                                     float(norms.max()), cres["extra"], None))
        else:
            b = self.low_buf.sample(n)
            cres = self.lo.critic_update(self._low_td3(b))
        self.last["low_td"] = cres["td"]

        extras = []
        osrp_on = (flags.lambda_osrp > 0.0 and t >= cfg.t_dm
                   and t % (cfg.osrp_every * cfg.c) == 0
                   and self.ensemble.trained and len(self.high_buf) > 0)
        if osrp_on:
            base = min(len(self.high_buf), cfg.osrp_base or cfg.batch_size)
            hb = self.high_buf.sample(base)
            s_pool, g_pool = gcmr.osrp_pool(hb["states"][:, 0], hb["g"],
                                            cfg.pool_replicas, self.rngs["osrp"])
            extras.append(gcmr.osrp_term(self.lo, self.hi, self.ensemble, self.hp,
                                         s_pool, g_pool, self.gparams,
                                         self.rngs["osrp"]))
        ares = self.lo.actor_update(self._low_td3(b), extras)
        if osrp_on:
            self.last["osrp_loss"] = ares["extras"][-1]
            self._row(self._f_gcmr, (t, None, None, None, None, None,
                                     ares["extras"][-1]))

    def _refresh_landmarks(self):
        cfg = self.cfg
        n = min(cfg.landmark_subsample, len(self.low_buf))
        idx = self.rngs["landmark"].choice(len(self.low_buf), size=n, replace=False)
        self.planner.refresh(self.low_buf.column("s")[idx], self._v_low)

    def _high_update(self, t):
        cfg, flags, hp = self.cfg, self.flags, self.hp
        n = min(len(self.high_buf), cfg.batch_size)
        hb = self.high_buf.sample(n)
        sg_used = hb["subgoals"][:, 0]
        if t >= cfg.t_dm:
            with self._t("relabel"):
                rho = flags.rho
                predict = None
                if rho < 1.0 and self.ensemble.trained:
                    predict = self.ensemble.predict_next
                elif rho < 1.0:
                    rho = 1.0  # model scheduled but not fitted yet
                params = CorrectionParams(k=cfg.k_candidates, rho=rho,
                                          delta_sg=self.delta_sg,
                                          sigma_cand=self.sigma_cand)
                sg_used, _ = relabel(hb, predict, self._low_policy, hp, params,
                                     self.rngs["relabel"])
                self.last["relabel_shift"] = float(np.mean(
                    np.linalg.norm(sg_used - hb["subgoals"][:, 0], axis=1)))
        o = np.concatenate([hb["states"][:, 0], hb["g"]], axis=1)
        o2 = np.concatenate([hb["states"][:, -1], hb["g"]], axis=1)
        batch = {"o": o, "a": sg_used, "r": hb["reward"], "o2": o2,
                 "done": hb["done"]}
        cres = self.hi.critic_update(batch)
        self.last["high_td"] = cres["td"]

        extras = []
        if flags.use_landmark:
            with self._t("landmark"):
                if self._hi_updates % cfg.landmark_refresh_every == 0:
                    self._refresh_landmarks()
                sg_plan, _ = self.planner.plan(hb["states"][:, 0], hb["g"],
                                               self._v_low)
                phi0 = project(hb["states"][:, 0], GOAL_INDICES)
                sg_pseudo = self.planner.pseudo(sg_plan, phi0)
                if cfg.eta == 0:
                    sg_pseudo = sg_pseudo - phi0
                if flags.higl_actor_term:
                    extras.append(higl_term(self.adj_net, sg_pseudo,
                                            cfg.lambda_higl))
                else:
                    lam_adj = cfg.lambda_adj if flags.use_adjacency else 0.0
                    extras.append(aclg_term(self.adj_net, phi0, sg_pseudo,
                                            lam_adj, cfg.lambda_landmark))
        self.hi.actor_update(batch, extras)
        if flags.use_landmark:
            self.planner.rnd.update(project(hb["states"][:, 0], GOAL_INDICES))

        target = (cfg.delta_sg if cfg.delta_sg_target is None
                  else cfg.delta_sg_target)
        self.delta_sg += cfg.shift_update_rate * (target - self.delta_sg)
        self._hi_updates += 1

    # -- evaluation --------------------------------------------------------------

    def _evaluate(self):
        """Run eval_episodes noise-free episodes in lockstep; returns
        (success_rate, mean_return, first start obs, eval goal)."""
        hp = self.hp
        B = len(self.eval_envs)
        obs = np.zeros((B, self.state_dim))
        goals = np.zeros((B, self.goal_dim))
        for i, e in enumerate(self.eval_envs):
            o, g = e.reset(eval_mode=True)
            obs[i], goals[i] = o, g
        first_obs = obs[0].copy()
        sg = np.zeros((B, self.goal_dim))
        active = np.ones(B, dtype=bool)
        succ = np.zeros(B)
        rets = np.zeros(B)
        ep_t = 0
        while active.any():
            if ep_t % hp.c == 0:
                sg[active] = self.hi.act(
                    np.concatenate([obs, goals], axis=1)[active])
            a = self.lo.act(np.concatenate([obs, sg], axis=1)[active])
            prev = obs.copy()
            for j, i in enumerate(np.flatnonzero(active)):
                o2, r, done, sc = self.eval_envs[i].step(a[j])
                rets[i] += r
                obs[i] = o2
                if done:
                    active[i] = False
                    succ[i] = float(sc)
            sg = subgoal_transition(sg, prev, obs, hp.eta, hp.goal_indices)
            ep_t += 1
        return float(succ.mean()), float(rets.mean()), first_obs, goals[0]

    def _eval_row(self, t):
        success, mean_return, first_obs, goal = self._evaluate()
        self.history.append({"step": t, "success_rate": success,
                             "mean_return": mean_return})
        if (self.cfg.dump_graph and self.planner is not None
                and self.planner.n_landmarks > 0):
            graph = self.planner.query_graph(first_obs, goal, self._v_low)
            graph.dump(os.path.join(self.out_dir, "graphs", f"step_{t:08d}.json"))
        lm = self.planner.n_landmarks if self.planner is not None else None
        self._row(self._f_main, (t, success, mean_return, self.last["low_td"],
                                 self.last["high_td"], self.last["relabel_shift"],
                                 self.delta_sg, self.last["adj_loss"],
                                 self.last["dyn_nll"], self.last["lr_hat"],
                                 self.last["gp_loss"], self.last["osrp_loss"], lm))
        wall = time.perf_counter() - self._wall0
        self._row(self._f_time, (t, wall) + tuple(self._acc[k]
                                                  for k in TIMING_COLUMNS[2:]))

    # -- diagnostics / persistence ------------------------------------------------

    def _gp_diagnostic(self):
        """Fraction of freshly sampled replay (state, subgoal) pairs whose
        critic action-gradient exceeds 1.1x the model-inferred ceiling,
        with the ceiling's Lipschitz estimate taken on the same sample."""
        if not self.ensemble.trained or len(self.low_buf) < 2:
            return None
        rng = self.rngs["diagnostic"]
        hp = self.hp
        n = min(512, len(self.low_buf))
        idx = rng.choice(len(self.low_buf), size=n, replace=False)
        s = self.low_buf.column("s")[idx]
        sg = self.low_buf.column("sg")[idx]
        l_r = gcmr.lr_hat({"s": s, "sg": sg}, self.ensemble, self.lo, hp, rng)
        thr = gcmr.gp_threshold(self.act_dim, l_r, self.cfg.gamma_lo)
        norms = gcmr.grad_norms(self.lo, s, sg)
        return {"n": int(n), "lr_hat": l_r, "threshold": thr,
                "frac_above": float(np.mean(norms > 1.1 * thr)),
                "grad_norm_mean": float(norms.mean()),
                "grad_norm_max": float(norms.max())}

    def _save_checkpoints(self):
        ck = os.path.join(self.out_dir, "checkpoints")
        os.makedirs(ck, exist_ok=True)
        self.lo.save(os.path.join(ck, "low.npz"))
        self.hi.save(os.path.join(ck, "high.npz"))
        if self.ensemble.trained:
            self.ensemble.save(os.path.join(ck, "dynamics.npz"))
        if self.adj_net is not None:
            nets.save_nets(os.path.join(ck, "adjacency.npz"),
                           {"net": self.adj_net.net}, {"net": self.adj_net.opt})
        if self.planner is not None:
            nets.save_nets(os.path.join(ck, "rnd.npz"),
                           {"target": self.planner.rnd.target,
                            "pred": self.planner.rnd.pred},
                           {"pred": self.planner.rnd.opt})

    # -- main loop ------------------------------------------------------------------

    def run(self):
        cfg, hp = self.cfg, self.hp
        try:
            obs, goal = self.env.reset()
            ep_t = 0
            sg = np.zeros(self.goal_dim)
            int_states, int_sgs, int_acts, int_rews = [obs], [], [], []
            ep_goals = [project(obs, GOAL_INDICES)]
            for t in range(1, cfg.steps + 1):
                with self._t("env"):
                    if ep_t % cfg.c == 0:
                        sg = self._pick_subgoal(obs, goal, t - 1)
                        int_states, int_sgs, int_acts, int_rews = [obs], [], [], []
                    a = self._pick_action(obs, sg, t - 1)
                    obs2, r, done, success = self.env.step(a)
                    sg2 = subgoal_transition(sg, obs, obs2, hp.eta, hp.goal_indices)
                    r_lo = intrinsic_reward(sg2, obs2, hp.eta, hp.goal_indices,
                                            scale=hp.reward_scale_lo)
                    self.low_buf.push({"s": obs, "sg": sg, "a": a, "r": r_lo,
                                       "s_next": obs2, "sg_next": sg2,
                                       "done": float(success)})
                    int_sgs.append(sg)
                    int_acts.append(a)
                    int_rews.append(r)
                    int_states.append(obs2)
                    ep_goals.append(project(obs2, GOAL_INDICES))
                    ep_t += 1
                    obs, sg = obs2, sg2
                    if ep_t % cfg.c == 0 or done:
                        self._push_high(int_states, goal, int_sgs, int_acts,
                                        int_rews, success)
                    if done:
                        if self.adj_memory is not None:
                            self.adj_memory.record(np.asarray(ep_goals))
                        obs, goal = self.env.reset()
                        ep_t = 0
                        int_states, int_sgs, int_acts, int_rews = [obs], [], [], []
                        ep_goals = [project(obs, GOAL_INDICES)]
                with self._t("dynamics"):
                    self._maybe_dynamics(t)
                with self._t("low"):
                    self._low_update(t)
                if t % cfg.c == 0:
                    with self._t("high"):
                        self._high_update(t)
                if (self.adj_net is not None and t % cfg.adj_train_every == 0
                        and len(self.adj_memory) > 0):
                    with self._t("adjacency"):
                        self.last["adj_loss"] = self.adj_net.train(
                            self.adj_memory, epochs=cfg.adj_epochs,
                            batch_size=cfg.adj_batch, rng=self.rngs["adjacency"])
                if t % cfg.eval_every == 0:
                    with self._t("eval"):
                        self._eval_row(t)

            final = self.history[-1] if self.history else None
            best = max((h["success_rate"] for h in self.history), default=None)
            summary = {
                "config": to_dict(cfg), "config_hash": config_hash(cfg),
                "algo_flags": asdict(self.flags),
                "final": final, "best_success": best,
                "evals": len(self.history),
                "gp_diagnostic": self._gp_diagnostic(),
            }
            with open(os.path.join(self.out_dir, "run.json"), "w",
                      encoding="utf-8") as fh:
                json.dump(summary, fh, indent=1)
            self._save_checkpoints()
            summary["history"] = self.history
            summary["out_dir"] = self.out_dir
            return summary
        finally:
            self._f_main.close()
            self._f_time.close()
            self._f_gcmr.close()


def train(cfg, out_dir):
    """Run the full loop under `cfg`, writing progress.csv, timings.csv,
    gcmr_log.csv, run.json and checkpoints/ into out_dir."""
    return Trainer(cfg, out_dir).run()
