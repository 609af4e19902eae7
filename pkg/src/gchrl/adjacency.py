"""Adjacency embedding: which goal cells are reachable within c steps.

Trajectories are discretized into goal-space cells; pairs of cells seen
within c steps of each other in any trajectory are labeled adjacent,
everything else non-adjacent (subsampled). A small embedding net is
trained so that adjacent cells sit within zeta_c of each other and
non-adjacent ones at least zeta_c + margin apart. The embedding then
gives a cheap reachability distance d_st and a hinge penalty that keeps
predicted subgoals near the current state.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nets


class AdjacencyMemory:
    """FIFO store of labeled goal-cell pairs mined from trajectories.

    A pair is labeled 1 if its cells co-occurred within c steps in any
    recorded trajectory; labels only ever upgrade from 0 to 1. Negative
    pairs are subsampled at neg_ratio per positive to keep the classes
    balanced.
    """

    def __init__(self, cell_size=1.0, c=10, capacity=200_000, neg_ratio=3,
                 rng=None):
        if cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.cell_size = float(cell_size)
        self.c = int(c)
        self.capacity = int(capacity)
        self.neg_ratio = int(neg_ratio)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._pairs: dict[tuple, int] = {}  # insertion order = age

    def _key(self, g):
        return tuple(int(k) for k in np.floor(np.asarray(g) / self.cell_size))

    def _pair(self, ka, kb):
        return (ka, kb) if ka <= kb else (kb, ka)

    def _insert(self, pair, label):
        old = self._pairs.get(pair)
        if old is None:
            self._pairs[pair] = label
            while len(self._pairs) > self.capacity:
                self._pairs.pop(next(iter(self._pairs)))
        elif label > old:
            self._pairs[pair] = label  # upgrade in place, age unchanged

    def record(self, goals):
        """Harvest labeled pairs from one goal-space trajectory (T, G)."""
        goals = np.asarray(goals, dtype=np.float64)
        keys = [self._key(g) for g in goals]
        T = len(keys)
        positives = set()
        for i in range(T):
            for j in range(i, min(i + self.c, T - 1) + 1):
                positives.add(self._pair(keys[i], keys[j]))
        for pair in positives:
            self._insert(pair, 1)
        n_neg = self.neg_ratio * len(positives)
        if T > self.c + 1 and n_neg > 0:
            i = self.rng.integers(0, T, size=4 * n_neg)
            j = self.rng.integers(0, T, size=4 * n_neg)
            taken = 0
            for a, b in zip(i, j):
                if taken >= n_neg:
                    break
                if abs(int(a) - int(b)) <= self.c:
                    continue
                pair = self._pair(keys[a], keys[b])
                if pair in positives or self._pairs.get(pair) == 1:
                    continue
                self._insert(pair, 0)
                taken += 1

    def __len__(self):
        return len(self._pairs)

    def arrays(self):
        """All stored pairs as cell-center coordinates: (gi, gj, label)."""
        if not self._pairs:
            dim = 0
            return (np.empty((0, dim)), np.empty((0, dim)), np.empty(0))
        ka = np.array([p[0] for p in self._pairs], dtype=np.float64)
        kb = np.array([p[1] for p in self._pairs], dtype=np.float64)
        lab = np.array(list(self._pairs.values()), dtype=np.float64)
        half = 0.5 * self.cell_size
        return (ka * self.cell_size + half, kb * self.cell_size + half, lab)


class AdjacencyNet:
    """Goal-space embedding trained with a contrastive hinge loss.

    Adjacent pairs are pulled inside zeta_c, non-adjacent pairs pushed
    beyond zeta_c + margin. c scales embedding distance back into step
    units for d_st.
    """

    def __init__(self, goal_dim, c, rng, *, embed_dim=32, hidden=(128, 128),
                 zeta=1.0, margin=0.2, lr=2e-4):
        self.c = int(c)
        self.zeta = float(zeta)
        self.margin = float(margin)
        self.net = nets.DenseNet(goal_dim, hidden, embed_dim, rng)
        self.opt = nets.Adam(self.net.params, lr)
        self.trained = False

    def embed(self, g):
        return self.net.forward(np.asarray(g, dtype=np.float64))

    def train_step(self, gi, gj, labels):
        """One gradient step on a batch of labeled pairs; returns the loss."""
        if len(gi) == 0:
            raise ValueError("empty adjacency batch")
        lab = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
        pv = self.net.param_vars()
        ei = self.net.forward_tape(np.asarray(gi, dtype=np.float64), pv)
        ej = self.net.forward_tape(np.asarray(gj, dtype=np.float64), pv)
        d = ad.rownorm(ad.sub(ei, ej))
        pull = ad.mul(ad.relu(ad.sub(d, self.zeta)), lab)
        push = ad.mul(ad.relu(ad.sub(self.zeta + self.margin, d)), 1.0 - lab)
        loss = ad.mean_all(ad.add(pull, push))
        ad.backward(loss)
        self.opt.step([v.grad for v in pv])
        return float(loss.data)

    def train(self, memory, *, epochs=25, batch_size=64, rng=None):
        """Epochs over the whole memory, shuffled; returns last epoch's
        mean loss (0.0 when the memory is empty)."""
        gi, gj, lab = memory.arrays()
        n = len(lab)
        if n == 0:
            return 0.0
        rng = rng if rng is not None else memory.rng
        mean_loss = 0.0
        for _ in range(epochs):
            order = rng.permutation(n)
            losses = []
            for i0 in range(0, n, batch_size):
                idx = order[i0:i0 + batch_size]
                losses.append(self.train_step(gi[idx], gj[idx], lab[idx]))
            mean_loss = float(np.mean(losses))
        self.trained = True
        return mean_loss

    def d_st(self, gi, gj):
        """(c / zeta_c) * embedding distance; callers pass phi(s)."""
        gi = np.atleast_2d(np.asarray(gi, dtype=np.float64))
        gj = np.atleast_2d(np.asarray(gj, dtype=np.float64))
        d = np.linalg.norm(self.embed(gi) - self.embed(gj), axis=1)
        out = (self.c / self.zeta) * d
        return float(out[0]) if out.size == 1 else out

    def penalty_term(self, phi_s, lam):
        """Actor-loss builder: lam * mean ReLU(||psi(phi(s)) - psi(sg)|| - zeta).

        Differentiates through the predicted subgoal only; the embedding
        weights stay fixed. Plugs into TD3Agent.actor_update extras.
        """
        emb_s = self.net.forward(np.asarray(phi_s, dtype=np.float64))

        def build(pv, a):
            emb_sg = self.net.forward_tape(a)
            d = ad.rownorm(ad.sub(emb_sg, emb_s))
            return ad.scale(ad.mean_all(ad.relu(ad.sub(d, self.zeta))), lam)
        return build
