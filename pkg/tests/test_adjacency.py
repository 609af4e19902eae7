import numpy as np
import pytest

from gchrl import autodiff as ad
from gchrl.adjacency import AdjacencyMemory, AdjacencyNet

from oracles import fd_gradient, rel_err


def line_goals(n, cell=1.0):
    """n points, one per cell, marching along x."""
    return np.stack([np.arange(n) * cell + 0.5 * cell, np.zeros(n)], axis=1)


def key_of(mem, g):
    return mem._key(g)


class TestMemory:
    def test_boundary_pair_is_adjacent(self):
        mem = AdjacencyMemory(c=10, rng=np.random.default_rng(0))
        goals = line_goals(11)  # indices 0..10, |0-10| == c
        mem.record(goals)
        pair = mem._pair(key_of(mem, goals[0]), key_of(mem, goals[10]))
        assert mem._pairs[pair] == 1

    def test_beyond_boundary_never_positive(self):
        mem = AdjacencyMemory(c=10, rng=np.random.default_rng(0))
        goals = line_goals(12)  # |0-11| == c+1
        for _ in range(20):
            mem.record(goals)
        pair = mem._pair(key_of(mem, goals[0]), key_of(mem, goals[11]))
        assert mem._pairs.get(pair) != 1
        labels = list(mem._pairs.values())
        assert 0 in labels  # negatives did get subsampled in

    def test_same_cell_twice_single_self_pair(self):
        mem = AdjacencyMemory(c=10, rng=np.random.default_rng(0))
        g = np.array([[0.3, 0.3], [0.4, 0.4]])  # same cell
        mem.record(g)
        assert len(mem) == 1
        ((pair, label),) = mem._pairs.items()
        assert pair[0] == pair[1] and label == 1

    def test_label_upgrades_when_pair_later_adjacent(self):
        mem = AdjacencyMemory(c=3, rng=np.random.default_rng(1))
        goals = line_goals(40)
        for _ in range(10):
            mem.record(goals)
        negatives = [p for p, l in mem._pairs.items() if l == 0]
        assert negatives
        ka, kb = negatives[0]
        cell = mem.cell_size
        revisit = np.array([[(ka[0] + 0.5) * cell, (ka[1] + 0.5) * cell],
                            [(kb[0] + 0.5) * cell, (kb[1] + 0.5) * cell]])
        mem.record(revisit)  # two steps apart < c
        assert mem._pairs[(ka, kb)] == 1

    def test_fifo_capacity(self):
        mem = AdjacencyMemory(c=2, capacity=5, rng=np.random.default_rng(0))
        goals = line_goals(6)
        mem.record(goals)
        assert len(mem) == 5
        first = mem._pair(key_of(mem, goals[0]), key_of(mem, goals[0]))
        assert first not in mem._pairs  # oldest pair evicted

    def test_arrays_are_cell_centers(self):
        mem = AdjacencyMemory(cell_size=2.0, c=5, rng=np.random.default_rng(0))
        mem.record(np.array([[0.1, 0.1], [2.3, 0.2]]))
        gi, gj, lab = mem.arrays()
        assert np.all(lab == 1)
        centers = {tuple(r) for r in np.concatenate([gi, gj])}
        assert centers <= {(1.0, 1.0), (3.0, 1.0)}

    def test_short_trajectory_has_no_negatives(self):
        mem = AdjacencyMemory(c=10, rng=np.random.default_rng(0))
        mem.record(line_goals(11))  # T == c+1, no |i-j| > c exists
        assert all(l == 1 for l in mem._pairs.values())


class TestNet:
    def test_identical_embeddings_nonadjacent_loss_is_margin_sum(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(0), zeta=1.0, margin=0.2)
        g = np.random.default_rng(1).normal(size=(8, 2))
        loss = net.train_step(g, g.copy(), np.zeros(8))
        assert loss == pytest.approx(1.2)

    def test_identical_embeddings_adjacent_loss_zero(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(0))
        g = np.random.default_rng(1).normal(size=(8, 2))
        assert net.train_step(g, g.copy(), np.ones(8)) == 0.0

    def test_separated_nonadjacent_loss_zero(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(0), zeta=1e-9, margin=0.0)
        rng = np.random.default_rng(2)
        gi, gj = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
        assert net.train_step(gi, gj, np.zeros(6)) == 0.0

    def test_train_step_gradient_matches_fd(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(3), hidden=(16,),
                           embed_dim=4, zeta=0.1, margin=0.3)
        rng = np.random.default_rng(4)
        gi, gj = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        lab = np.array([1.0, 0.0, 1.0, 0.0, 0.0])

        def loss_at(w0):
            saved = net.net.params[0].copy()
            net.net.params[0][...] = w0
            ei, ej = net.embed(gi), net.embed(gj)
            d = np.linalg.norm(ei - ej, axis=1)
            val = np.mean(lab * np.maximum(d - net.zeta, 0.0)
                          + (1 - lab) * np.maximum(net.zeta + net.margin - d, 0.0))
            net.net.params[0][...] = saved
            return val

        pv = net.net.param_vars()
        ei = net.net.forward_tape(gi, pv)
        ej = net.net.forward_tape(gj, pv)
        d = ad.rownorm(ad.sub(ei, ej))
        lab_col = lab.reshape(-1, 1)
        loss = ad.mean_all(ad.add(
            ad.mul(ad.relu(ad.sub(d, net.zeta)), lab_col),
            ad.mul(ad.relu(ad.sub(net.zeta + net.margin, d)), 1.0 - lab_col)))
        ad.backward(loss)
        ref = fd_gradient(loss_at, net.net.params[0])
        assert rel_err(pv[0].grad, ref) < 1e-6

    def test_d_st_zero_and_symmetric(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(5))
        rng = np.random.default_rng(6)
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert net.d_st(a, a) == 0.0
        assert net.d_st(a, b) == net.d_st(b, a)

    def test_d_st_scaling(self):
        net = AdjacencyNet(2, c=7, rng=np.random.default_rng(7), zeta=2.0)
        a, b = np.array([0.0, 0.0]), np.array([3.0, 1.0])
        emb = np.linalg.norm(net.embed(a.reshape(1, -1))
                             - net.embed(b.reshape(1, -1)))
        assert net.d_st(a, b) == pytest.approx(7 / 2.0 * emb, rel=1e-12)

    def test_training_separates_adjacent_from_far(self):
        rng = np.random.default_rng(8)
        mem = AdjacencyMemory(c=5, rng=np.random.default_rng(9))
        for _ in range(15):
            pos = rng.uniform(0, 12, size=2)
            traj = [pos.copy()]
            for _ in range(60):
                pos = np.clip(pos + rng.uniform(-0.7, 0.7, size=2), 0, 12)
                traj.append(pos.copy())
            mem.record(np.array(traj))
        net = AdjacencyNet(2, 5, np.random.default_rng(10), hidden=(64, 64))
        net.train(mem, epochs=25, batch_size=64, rng=np.random.default_rng(11))
        gi, gj, lab = mem.arrays()
        d = np.linalg.norm(net.embed(gi) - net.embed(gj), axis=1)
        assert d[lab == 1].mean() < d[lab == 0].mean()
        assert net.trained

    def test_train_on_empty_memory_is_noop(self):
        mem = AdjacencyMemory(rng=np.random.default_rng(0))
        net = AdjacencyNet(2, 10, np.random.default_rng(0))
        assert net.train(mem) == 0.0
        assert not net.trained


class TestPenalty:
    def test_zero_when_within_zeta(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(12))
        g = np.random.default_rng(13).normal(size=(4, 2))
        build = net.penalty_term(g, lam=20.0)
        a = ad.Var(g.copy())  # subgoal == current goal -> distance 0
        term = build(None, a)
        assert float(term.data) == 0.0
        ad.backward(term)
        assert np.all(a.grad == 0.0)

    def test_active_penalty_gradient_matches_fd(self):
        net = AdjacencyNet(2, 10, np.random.default_rng(14), hidden=(16,),
                           embed_dim=4, zeta=1e-4)
        rng = np.random.default_rng(15)
        phi_s = rng.normal(size=(5, 2))
        sg = rng.normal(size=(5, 2))
        lam = 3.0
        build = net.penalty_term(phi_s, lam)
        a = ad.Var(sg.copy())
        term = build(None, a)
        assert float(term.data) > 0.0
        ad.backward(term)

        emb_s = net.embed(phi_s)

        def f(x):
            d = np.linalg.norm(net.embed(x) - emb_s, axis=1)
            return lam * np.mean(np.maximum(d - net.zeta, 0.0))

        assert rel_err(a.grad, fd_gradient(f, sg)) < 1e-6
