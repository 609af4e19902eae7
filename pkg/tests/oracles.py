"""Independent reference implementations used to check the real code.

Everything here is deliberately slow and simple: plain python loops,
brute-force enumeration, finite differences. None of it imports from
gchrl internals beyond plain data, so a bug in the package cannot
cancel out against the same bug here.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def fd_gradient(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar f at ndarray x.

    Perturbs one coordinate at a time; f must treat x as read-only
    input (it is restored between calls).
    """
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_err(got, ref, floor=1e-8):
    """Max abs difference normalized by the reference tensor's own scale."""
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    scale = max(float(np.max(np.abs(ref))), floor)
    return float(np.max(np.abs(got - ref))) / scale


def dijkstra_by_enumeration(weights, src, dst):
    """Shortest src->dst cost by enumerating every simple path.

    weights: (n, n) matrix, np.inf where there is no edge. Returns
    (cost, path) with path a list of node indices, or (inf, None).
    Only sane for n <= ~8.
    """
    n = weights.shape[0]
    best = math.inf
    best_path = None
    others = [v for v in range(n) if v not in (src, dst)]
    if src == dst:
        return 0.0, [src]
    for r in range(len(others) + 1):
        for mid in itertools.permutations(others, r):
            path = [src, *mid, dst]
            cost = 0.0
            ok = True
            for a, b in zip(path[:-1], path[1:]):
                w = weights[a, b]
                if not np.isfinite(w):
                    ok = False
                    break
                cost += float(w)
            if ok and cost < best - 1e-12:
                best = cost
                best_path = path
    return best, best_path


def fps_greedy(points, m, start_index=0):
    """Farthest point sampling, literal O(n^2 m) version with loops.

    Ties broken toward the lowest index, matching the production rule.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    chosen = [start_index]
    while len(chosen) < min(m, n):
        best_i, best_d = None, -1.0
        for i in range(n):
            if i in chosen:
                continue
            d = min(float(np.linalg.norm(pts[i] - pts[j])) for j in chosen)
            if d > best_d + 1e-12:
                best_d = d
                best_i = i
        chosen.append(best_i)
    return chosen


def chain_step(s, a, n_states):
    """Tabular chain MDP transition: s' = clip(s + round(a), 0, n-1)."""
    return int(np.clip(s + int(round(float(a))), 0, n_states - 1))


def chain_rollout_score(candidate, states, actions, policy, n_states,
                        rho, eta, model=None):
    """Reference action-matching score for one relabel candidate.

    states: recorded s_t..s_{t+c} (ints), actions: recorded a_t..a_{t+c-1}
    (floats). policy(s, sg) -> float action. model(s, a) -> s' float, or
    None to use the exact chain dynamics. Blends model rollout with the
    recorded states by rho**(i-t) and sums -|a_i - a_hat_i|^2.
    """
    c = len(actions)
    s_hat = float(states[0])
    sg = float(candidate)
    total = 0.0
    for i in range(c):
        a_hat = float(policy(s_hat, sg))
        err = float(actions[i]) - a_hat
        total -= err * err  # multiply, not pow: libm pow can be 1 ulp off
        if model is None:
            nxt = float(chain_step(s_hat, a_hat, n_states))
        else:
            nxt = float(model(s_hat, a_hat))
        w = rho ** i  # rho^(i-t): the first predicted state is the recorded one
        s_next = (1.0 - w) * nxt + w * float(states[i + 1])
        if eta == 0:
            sg = sg + (s_hat - s_next)
        s_hat = s_next
    return total


def hiro_score(candidate, states, actions, policy, eta):
    """Off-policy correction score on recorded states only (no model)."""
    c = len(actions)
    sg = float(candidate)
    total = 0.0
    for i in range(c):
        a_hat = float(policy(float(states[i]), sg))
        err = float(actions[i]) - a_hat
        total -= err * err  # multiply, not pow: libm pow can be 1 ulp off
        if eta == 0:
            sg = sg + (float(states[i]) - float(states[i + 1]))
    return total


def maze_substep(state, action, walls, bounds, dt, v_max, a_max, n_sub=64):
    """Point-mass step integrated with n_sub micro-steps per axis.

    Used to sanity-check the closed-form collision step: with the same
    clipping rules, many tiny moves must land at (or extremely near) the
    same face. Returns (x, y, vx, vy).
    """
    x, y, vx, vy = (float(v) for v in state)
    ax = float(np.clip(action[0], -a_max, a_max))
    ay = float(np.clip(action[1], -a_max, a_max))
    vx = float(np.clip(vx + ax * dt, -v_max, v_max))
    vy = float(np.clip(vy + ay * dt, -v_max, v_max))

    def inside_any(px, py):
        for (x0, y0, x1, y1) in walls:
            if x0 < px < x1 and y0 < py < y1:
                return True
        return False

    h = dt / n_sub
    for _ in range(n_sub):
        nx = x + vx * h
        nx = float(np.clip(nx, bounds[0], bounds[2]))
        if inside_any(nx, y):
            vx = 0.0
        else:
            if nx != x + vx * h:  # hit outer bound
                vx = 0.0
            x = nx
        ny = y + vy * h
        ny = float(np.clip(ny, bounds[1], bounds[3]))
        if inside_any(x, ny):
            vy = 0.0
        else:
            if ny != y + vy * h:
                vy = 0.0
            y = ny
    return x, y, vx, vy
