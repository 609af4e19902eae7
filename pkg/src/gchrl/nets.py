"""Fully-connected networks, Adam, soft target updates, checkpoints.

Three head types cover every network in the system:
  identity  -- critics, RND nets
  tanh      -- actors; tanh scaled into a [low, high] box
  gaussian  -- dynamics members; final layer emits (mean, logvar) with the
               log-variance clamped to a fixed interval

`forward` is a plain numpy fast path. `forward_tape` builds the same
computation on autodiff Vars; pass `param_vars()` to get gradients
w.r.t. the weights, or leave params constant to differentiate w.r.t.
the input only.
"""
from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad


def _act_np(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "swish":
        return x / (1.0 + np.exp(-x))
    raise ValueError(f"unknown activation {name!r}")


def _act_tape(name, x):
    return ad.relu(x) if name == "relu" else ad.swish(x)


class DenseNet:
    """MLP with uniform fan-in init and one of the three heads above."""

    def __init__(self, in_dim, hidden, out_dim, rng, *, act="relu",
                 head="identity", out_low=None, out_high=None,
                 logvar_min=-5.0, logvar_max=2.0):
        if act not in ("relu", "swish"):
            raise ValueError(f"unknown activation {act!r}")
        if head not in ("identity", "tanh", "gaussian"):
            raise ValueError(f"unknown head {head!r}")
        self.in_dim = int(in_dim)
        self.hidden = [int(h) for h in hidden]
        self.out_dim = int(out_dim)
        self.act = act
        self.head = head
        self.logvar_min = float(logvar_min)
        self.logvar_max = float(logvar_max)
        if head == "tanh":
            if out_low is None or out_high is None:
                raise ValueError("tanh head needs out_low/out_high")
            self.out_low = np.asarray(out_low, dtype=np.float64).reshape(-1)
            self.out_high = np.asarray(out_high, dtype=np.float64).reshape(-1)
            if self.out_low.shape != (self.out_dim,) or np.any(self.out_high <= self.out_low):
                raise ValueError("bad output box")
        else:
            self.out_low = None
            self.out_high = None

        final = 2 * self.out_dim if head == "gaussian" else self.out_dim
        sizes = [self.in_dim, *self.hidden, final]
        self.params: list[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            bound = 3e-3 if (last and head == "tanh") else 1.0 / np.sqrt(n_in)
            self.params.append(rng.uniform(-bound, bound, (n_in, n_out)))
            self.params.append(rng.uniform(-bound, bound, n_out))

    # -- forward ---------------------------------------------------------

    def _trunk_np(self, x):
        h = np.asarray(x, dtype=np.float64)
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n_layers - 1:
                h = _act_np(self.act, h)
        return h

    def forward(self, x):
        """Returns (B, out) for identity/tanh heads, (mean, logvar) for gaussian."""
        z = self._trunk_np(x)
        if self.head == "identity":
            return z
        if self.head == "tanh":
            mid = 0.5 * (self.out_low + self.out_high)
            half = 0.5 * (self.out_high - self.out_low)
            return mid + half * np.tanh(z)
        mean, logvar = z[:, :self.out_dim], z[:, self.out_dim:]
        return mean, np.clip(logvar, self.logvar_min, self.logvar_max)

    def forward_tape(self, x, pvars=None):
        """Same computation on Vars. pvars=None treats weights as constants."""
        p = pvars if pvars is not None else self.params
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = ad.affine(h, p[2 * i], p[2 * i + 1])
            if i < n_layers - 1:
                h = _act_tape(self.act, h)
        if self.head == "identity":
            return h
        if self.head == "tanh":
            mid = 0.5 * (self.out_low + self.out_high)
            half = 0.5 * (self.out_high - self.out_low)
            return ad.add(ad.mul(ad.tanh(h), half.reshape(1, -1)), mid.reshape(1, -1))
        mean = ad.slice_cols(h, 0, self.out_dim)
        logvar = ad.clip(ad.slice_cols(h, self.out_dim, 2 * self.out_dim),
                         self.logvar_min, self.logvar_max)
        return mean, logvar

    # -- parameter plumbing ------------------------------------------------

    def param_vars(self):
        return [ad.Var(p) for p in self.params]

    def copy_from(self, other):
        for p, q in zip(self.params, other.params):
            p[...] = q

    def clone(self):
        out = object.__new__(DenseNet)
        out.__dict__.update({k: v for k, v in self.__dict__.items() if k != "params"})
        out.params = [p.copy() for p in self.params]
        return out

    def manifest(self):
        return {
            "in_dim": self.in_dim, "hidden": self.hidden, "out_dim": self.out_dim,
            "act": self.act, "head": self.head,
            "out_low": None if self.out_low is None else self.out_low.tolist(),
            "out_high": None if self.out_high is None else self.out_high.tolist(),
            "logvar_min": self.logvar_min, "logvar_max": self.logvar_max,
            "shapes": [list(p.shape) for p in self.params],
        }


def input_gradient(net, x, cols=None):
    """d(sum of outputs)/dx, rows independent, so this is the per-row
    gradient for nets with a single output column. cols picks a slice
    of input coordinates (e.g. the action part of a critic input)."""
    v = ad.Var(np.asarray(x, dtype=np.float64))
    out = net.forward_tape(v)
    if isinstance(out, tuple):
        raise ValueError("input_gradient expects a deterministic head")
    ad.backward(ad.sum_all(out))
    g = v.grad
    return g if cols is None else g[:, cols[0]:cols[1]]


def input_gradient_tape(net, x, pvars=None, cols=None):
    """input_gradient as a tape expression, shape (B, in_dim or slice).

    For a relu network the per-row input gradient is a product of the
    weight matrices with the relu activity patterns in between. The
    patterns are computed here in plain numpy and frozen as constants,
    so the expression stays linear in the parameter Vars and a loss on
    the gradient (e.g. a Lipschitz penalty) can be differentiated
    w.r.t. the weights. Exact wherever no pre-activation sits at zero.
    """
    if net.head != "identity" or net.act != "relu":
        raise ValueError("input_gradient_tape needs a relu net with identity head")
    p = pvars if pvars is not None else net.params
    h = np.asarray(x, dtype=np.float64)
    masks = []
    n_layers = len(net.params) // 2
    for i in range(n_layers - 1):
        h = h @ net.params[2 * i] + net.params[2 * i + 1]
        masks.append((h > 0.0).astype(np.float64))
        h *= masks[-1]
    g = np.ones((len(h), net.out_dim))
    for i in reversed(range(n_layers)):
        g = ad.matmul(g, ad.transpose(p[2 * i]))
        if i > 0:
            g = ad.mul(g, masks[i - 1])
    return g if cols is None else ad.slice_cols(g, cols[0], cols[1])


def soft_update(target, online, tau):
    """target <- (1 - tau) * target + tau * online, in place."""
    for tp, p in zip(target.params, online.params):
        tp *= 1.0 - tau
        tp += tau * p


class Adam:
    """Standard Adam with bias correction; updates params in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state(self):
        return {"m": self.m, "v": self.v, "t": self.t}

    def load_state(self, state):
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src
        self.t = int(state["t"])


def save_nets(path, nets, optimizers=None, extra=None):
    """Checkpoint named nets (+ optimizer moments) to one .npz file.

    A JSON manifest key records architectures and array shapes so that
    load_nets can verify an exact round-trip.
    """
    arrays = {}
    manifest = {"nets": {}, "extra": sorted((extra or {}).keys())}
    for name, net in nets.items():
        manifest["nets"][name] = net.manifest()
        for i, p in enumerate(net.params):
            arrays[f"{name}.p{i}"] = p
    if optimizers:
        manifest["opts"] = {}
        for name, opt in optimizers.items():
            manifest["opts"][name] = {"t": opt.t}
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"opt.{name}.m{i}"] = m
                arrays[f"opt.{name}.v{i}"] = v
    for key, arr in (extra or {}).items():
        arrays[f"extra.{key}"] = np.asarray(arr)
    arrays["manifest"] = np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_nets(path, nets, optimizers=None):
    """Restore params (and optimizer moments) saved by save_nets.

    Shapes are checked against the manifest; mismatches raise.
    Returns the dict of extra arrays stored alongside.
    """
    with np.load(path) as data:
        manifest = json.loads(bytes(data["manifest"]).decode())
        for name, net in nets.items():
            want = manifest["nets"].get(name)
            if want is None:
                raise ValueError(f"checkpoint has no net named {name!r}")
            if want["shapes"] != [list(p.shape) for p in net.params]:
                raise ValueError(f"shape mismatch for net {name!r}")
            for i, p in enumerate(net.params):
                p[...] = data[f"{name}.p{i}"]
        if optimizers:
            for name, opt in optimizers.items():
                opt.t = int(manifest["opts"][name]["t"])
                for i in range(len(opt.m)):
                    opt.m[i][...] = data[f"opt.{name}.m{i}"]
                    opt.v[i][...] = data[f"opt.{name}.v{i}"]
        return {key: data[f"extra.{key}"] for key in manifest["extra"]}
