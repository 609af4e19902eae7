"""Landmark selection and value-weighted graph planning.

Landmarks are buffer states picked for coverage (farthest point
sampling in goal space) and novelty (random network distillation). A
directed graph over {current state} + landmarks + {goal} is weighted by
the low-level value of traveling between nodes; after dropping edges
whose value falls below a cut, values are turned into nonnegative costs
by subtracting from the max retained value, and the cheapest path's
first hop becomes the planned subgoal.

`plan` handles a whole batch at once: landmark-to-landmark distances
are shared through one Floyd-Warshall pass, and each element only adds
its own entry/exit edges. `query_graph` builds the explicit single
graph (Dijkstra) for dumps and cross-checks.
"""
from __future__ import annotations

import heapq
import json

import numpy as np

from . import autodiff as ad
from . import nets
from .core import project


def fps(points, m, start_index=0):
    """Greedy farthest point sampling; returns m indices.

    Starts at start_index, then repeatedly adds the point with the
    largest distance to the chosen set (ties to the lowest index).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if m > n:
        raise ValueError(f"asked for {m} points from a set of {n}")
    if m == 0:
        return np.empty(0, dtype=np.intp)
    chosen = [start_index]
    d = np.linalg.norm(pts - pts[start_index], axis=1)
    d[start_index] = -np.inf
    for _ in range(m - 1):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(pts - pts[nxt], axis=1))
        d[nxt] = -np.inf
    return np.asarray(chosen, dtype=np.intp)


class RndNovelty:
    """Random network distillation: squared prediction error against a
    frozen random target scores how rarely a goal region was visited."""

    def __init__(self, goal_dim, rng, *, embed_dim=32, hidden=(64, 64), lr=1e-3):
        self.target = nets.DenseNet(goal_dim, hidden, embed_dim, rng)
        self.pred = nets.DenseNet(goal_dim, hidden, embed_dim, rng)
        self.opt = nets.Adam(self.pred.params, lr)

    def update(self, goals):
        """Train the predictor one step on visited goals."""
        y = self.target.forward(goals)
        pv = self.pred.param_vars()
        loss = ad.mean_all(ad.square(ad.sub(self.pred.forward_tape(goals, pv), y)))
        ad.backward(loss)
        self.opt.step([v.grad for v in pv])
        return float(loss.data)

    def score(self, goals):
        diff = self.pred.forward(goals) - self.target.forward(goals)
        return np.sum(diff * diff, axis=1)

    def select(self, goals, m):
        """Indices of the top-m most novel goals (stable order on ties)."""
        if m == 0:
            return np.empty(0, dtype=np.intp)
        order = np.argsort(-self.score(goals), kind="stable")
        return order[:m]


def dijkstra(weights, src, dst):
    """Shortest path on a dense matrix of nonnegative weights (np.inf
    where no edge). Returns (cost, path-as-node-list) or (inf, None)."""
    n = len(weights)
    dist = np.full(n, np.inf)
    prev = np.full(n, -1, dtype=np.intp)
    done = np.zeros(n, dtype=bool)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == dst:
            break
        for v in range(n):
            w = weights[u, v]
            if v == u or not np.isfinite(w) or done[v]:
                continue
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if not np.isfinite(dist[dst]):
        return np.inf, None
    path = [dst]
    while path[-1] != src:
        path.append(int(prev[path[-1]]))
    return float(dist[dst]), path[::-1]


def pseudo_shift(sg_plan, phi_s, delta):
    """Imitation target: the planned landmark pushed delta further out
    along the agent-to-landmark line,
    sg_plan + delta * (sg_plan - phi(s)) / ||sg_plan - phi(s)||.
    Overshooting the landmark keeps the squared-error pull on the high
    actor strong and directional even once its output reaches the
    landmark's neighborhood; staying within c-step reach is the
    adjacency term's job, not this one's. Degenerate sg_plan == phi(s)
    stays put.
    """
    sg_plan = np.asarray(sg_plan, dtype=np.float64)
    phi_s = np.asarray(phi_s, dtype=np.float64)
    diff = sg_plan - phi_s
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    step = delta * diff / np.maximum(norm, 1e-12)
    return np.where(norm > 0.0, sg_plan + step, sg_plan)


class LandmarkGraph:
    """One explicit planning graph: node 0 is the current state, nodes
    1..L the landmarks, node L+1 the goal."""

    def __init__(self, landmark_goals, phi_s, goal, values, weights,
                 v_max, cost, path, sg_plan):
        self.landmark_goals = landmark_goals
        self.phi_s = phi_s
        self.goal = goal
        self.values = values      # raw V, nan where no edge exists
        self.weights = weights    # shifted costs, inf where cut/absent
        self.v_max = v_max
        self.cost = cost
        self.path = path
        self.sg_plan = sg_plan

    def dump(self, path):
        nodes = [{"kind": "current", "pos": np.asarray(self.phi_s, float).tolist()}]
        nodes += [{"kind": "landmark", "pos": np.asarray(g, float).tolist()}
                  for g in self.landmark_goals]
        nodes += [{"kind": "goal", "pos": np.asarray(self.goal, float).tolist()}]
        edges = []
        n = len(self.weights)
        for i in range(n):
            for j in range(n):
                if np.isfinite(self.weights[i, j]):
                    edges.append({"from": i, "to": j,
                                  "value": float(self.values[i, j]),
                                  "weight": float(self.weights[i, j])})
        doc = {"nodes": nodes, "edges": edges,
               "v_max": None if np.isnan(self.v_max) else float(self.v_max),
               "path": None if self.path is None else [int(p) for p in self.path],
               "cost": None if not np.isfinite(self.cost) else float(self.cost),
               "sg_plan": np.asarray(self.sg_plan, float).tolist()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)


class LandmarkPlanner:
    """Keeps the current landmark set and plans subgoals against it.

    refresh() reselects landmarks from a buffer subsample and caches
    the landmark-to-landmark values; plan() answers a batch of
    (state, goal) queries with the first hop of the cheapest path.
    v_fn(states, goals) -> per-row low-level value of pursuing each
    goal from each state.
    """

    def __init__(self, goal_indices, goal_low, goal_high, rng, *,
                 m_cov=60, m_nov=60, v_cut=-25.0, delta_pseudo=2.0,
                 rnd_hidden=(64, 64), rnd_dim=32, rnd_lr=1e-3):
        self.goal_indices = tuple(goal_indices)
        self.goal_low = np.asarray(goal_low, dtype=np.float64)
        self.goal_high = np.asarray(goal_high, dtype=np.float64)
        self.m_cov = int(m_cov)
        self.m_nov = int(m_nov)
        self.v_cut = float(v_cut)
        self.delta_pseudo = float(delta_pseudo)
        self.rnd = RndNovelty(len(self.goal_indices), rng,
                              embed_dim=rnd_dim, hidden=rnd_hidden, lr=rnd_lr)
        self.landmark_states = np.empty((0, 0))
        self.landmark_goals = np.empty((0, len(self.goal_indices)))
        self._v_ll = np.empty((0, 0))

    @property
    def n_landmarks(self):
        return len(self.landmark_states)

    def refresh(self, states, v_fn):
        """Reselect landmarks from a state subsample and cache their
        pairwise values."""
        states = np.asarray(states, dtype=np.float64)
        goals = project(states, self.goal_indices)
        cov = fps(goals, min(self.m_cov, len(states)))
        nov = self.rnd.select(goals, min(self.m_nov, len(states)))
        idx = np.unique(np.concatenate([cov, nov]))
        self.landmark_states = states[idx]
        self.landmark_goals = goals[idx]
        L = len(idx)
        if L:
            src = np.repeat(self.landmark_states, L, axis=0)
            tgt = np.tile(self.landmark_goals, (L, 1))
            self._v_ll = v_fn(src, tgt).reshape(L, L)
        else:
            self._v_ll = np.empty((0, 0))

    def _query_values(self, s, g, v_fn):
        """Entry/exit/direct values for a batch: (B,L), (B,L), (B,)."""
        B = len(s)
        L = self.n_landmarks
        lm_s, lm_g = self.landmark_states, self.landmark_goals
        src = np.concatenate([np.repeat(s, L, axis=0), np.tile(lm_s, (B, 1)), s])
        tgt = np.concatenate([np.tile(lm_g, (B, 1)), np.repeat(g, L, axis=0), g])
        v = v_fn(src, tgt)
        return (v[:B * L].reshape(B, L), v[B * L:2 * B * L].reshape(B, L),
                v[2 * B * L:])

    def plan(self, s, g, v_fn):
        """First-hop subgoals for a batch of (state, goal) queries.

        Unreachable goals fall back to the goal itself, clipped into
        the goal box. Returns (sg_plan (B, G), info dict).
        """
        s = np.asarray(s, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        B = len(s)
        goal_sg = np.clip(g, self.goal_low, self.goal_high)
        L = self.n_landmarks
        if L == 0:
            return goal_sg.copy(), {"direct": np.ones(B, bool),
                                    "unreachable": np.ones(B, bool)}
        v_sl, v_lg, v_sg = self._query_values(s, g, v_fn)
        cut = self.v_cut
        # per-query shift constant: max retained value over this query's
        # own edges plus the shared landmark-landmark edges (no self-edges)
        ll_off = self._v_ll[~np.eye(L, dtype=bool)]
        ll_max = np.max(ll_off[ll_off >= cut], initial=-np.inf)
        v_max = np.maximum.reduce([
            np.full(B, ll_max),
            np.max(np.where(v_sl >= cut, v_sl, -np.inf), axis=1),
            np.max(np.where(v_lg >= cut, v_lg, -np.inf), axis=1),
            np.where(v_sg >= cut, v_sg, -np.inf),
        ])
        reachable_any = np.isfinite(v_max)

        def costs(v, vmax):
            return np.where((v >= cut) & np.isfinite(vmax), vmax - v, np.inf)

        D = costs(self._v_ll[None, :, :], v_max[:, None, None])
        D[:, np.arange(L), np.arange(L)] = 0.0
        for k in range(L):
            D = np.minimum(D, D[:, :, k:k + 1] + D[:, k:k + 1, :])
        w_sl = costs(v_sl, v_max[:, None])
        w_lg = costs(v_lg, v_max[:, None])
        w_sg = costs(v_sg, v_max)
        through = w_sl[:, :, None] + D + w_lg[:, None, :]
        flat = through.reshape(B, -1)
        best = np.argmin(flat, axis=1)
        via_cost = flat[np.arange(B), best]
        first = best // L
        use_via = via_cost < w_sg
        unreachable = ~np.isfinite(np.minimum(via_cost, w_sg))
        sg_plan = np.where(use_via[:, None], self.landmark_goals[first], goal_sg)
        sg_plan = np.where(unreachable[:, None], goal_sg, sg_plan)
        return sg_plan, {"direct": ~use_via & ~unreachable,
                         "unreachable": unreachable, "v_max": v_max,
                         "cost": np.minimum(via_cost, w_sg),
                         "reachable_any": reachable_any}

    def query_graph(self, s_t, g, v_fn):
        """Explicit single-query graph, planned with Dijkstra; used for
        dumps and for cross-checking the batched planner."""
        s_t = np.asarray(s_t, dtype=np.float64).reshape(1, -1)
        g = np.asarray(g, dtype=np.float64).reshape(1, -1)
        L = self.n_landmarks
        n = L + 2
        values = np.full((n, n), np.nan)
        if L:
            v_sl, v_lg, v_sg = self._query_values(s_t, g, v_fn)
            values[0, 1:L + 1] = v_sl[0]
            values[1:L + 1, 1:L + 1] = self._v_ll
            values[np.arange(1, L + 1), np.arange(1, L + 1)] = np.nan
            values[1:L + 1, n - 1] = v_lg[0]
            values[0, n - 1] = v_sg[0]
        retained = values[np.isfinite(values) & (values >= self.v_cut)]
        v_max = float(retained.max()) if retained.size else np.nan
        weights = np.where(np.isfinite(values) & (values >= self.v_cut),
                           v_max - values, np.inf)
        cost, path = dijkstra(weights, 0, n - 1)
        goal_sg = np.clip(g[0], self.goal_low, self.goal_high)
        if path is None or path[1] == n - 1:
            sg_plan = goal_sg
        else:
            sg_plan = self.landmark_goals[path[1] - 1]
        return LandmarkGraph(self.landmark_goals.copy(), project(s_t[0], self.goal_indices),
                             g[0].copy(), values, weights, v_max, cost, path, sg_plan)

    def pseudo(self, sg_plan, phi_s):
        return pseudo_shift(sg_plan, phi_s, self.delta_pseudo)


def aclg_term(adj_net, phi_s, sg_pseudo, lam_adj, lam_landmark):
    """High-level actor loss: decoupled adjacency hinge (to the current
    state) plus squared imitation of the shifted planned landmark.

    lam_adj * mean ReLU(||psi(phi(s)) - psi(sg_pred)|| - zeta)
    + lam_landmark * mean ||sg_pseudo - sg_pred||^2
    """
    phi_s = np.asarray(phi_s, dtype=np.float64)
    sg_pseudo = np.asarray(sg_pseudo, dtype=np.float64)
    emb_s = adj_net.net.forward(phi_s) if lam_adj > 0.0 else None

    def build(pv, a):
        B = phi_s.shape[0]
        diff = ad.sub(a, sg_pseudo)
        term = ad.scale(ad.sum_all(ad.square(diff)), lam_landmark / B)
        if emb_s is not None:
            emb_sg = adj_net.net.forward_tape(a)
            d = ad.rownorm(ad.sub(emb_sg, emb_s))
            hinge = ad.mean_all(ad.relu(ad.sub(d, adj_net.zeta)))
            term = ad.add(term, ad.scale(hinge, lam_adj))
        return term
    return build


def higl_term(adj_net, sg_pseudo, lam):
    """Entangled variant: one hinge pulling sg_pred into the adjacent
    region of the shifted landmark."""
    emb_p = adj_net.net.forward(np.asarray(sg_pseudo, dtype=np.float64))

    def build(pv, a):
        emb_sg = adj_net.net.forward_tape(a)
        d = ad.rownorm(ad.sub(emb_sg, emb_p))
        return ad.scale(ad.mean_all(ad.relu(ad.sub(d, adj_net.zeta))), lam)
    return build
