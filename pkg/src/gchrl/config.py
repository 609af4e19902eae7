"""Run configuration for the training harness.

Every knob lives in one flat dataclass so a run is fully described by
its JSON dump. Defaults are the published point-maze settings; the
algorithm switch decides which components are active without touching
the stored numbers (so the serialized config stays what the user
asked for). DESK_OVERRIDES shrinks the networks and the bookkeeping
cadences to something a single laptop core finishes in well under an
hour at 200k steps.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace

from .envs import LAYOUTS

ALGOS = ("aclg", "aclg+gcmr", "gcmr-only", "higl-baseline",
         "hiro-correction-baseline")


class ConfigError(ValueError):
    """Raised for any invalid configuration, before a single env step."""


@dataclass
class RunConfig:
    # run identity
    env: str = "point_maze_u"
    layout_file: str | None = None   # custom maze file; overrides env geometry
    algo: str = "aclg+gcmr"
    seed: int = 0
    steps: int = 200_000

    # hierarchy
    c: int = 10                      # env steps per high-level decision
    eta: int = 1                     # 1 absolute subgoals, 0 relative
    reward_scale_hi: float = 0.1
    reward_scale_lo: float = 1.0

    # environment
    reward_kind: str = "sparse"
    action_noise_prob: float = 0.0
    warmup_steps: int = 2500         # uniform random actions at both levels

    # TD3 agents (both levels)
    hidden: tuple = (300, 300)
    batch_size: int = 128
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    gamma_hi: float = 0.99
    gamma_lo: float = 0.95
    explore_sigma_hi: float = 1.0
    explore_sigma_lo: float = 1.0
    target_noise_frac: float = 0.2
    noise_clip_frac: float = 0.5
    buffer_size_lo: int = 200_000
    buffer_size_hi: int = 20_000

    # off-policy correction
    k_candidates: int = 10
    rho: float = 0.95
    delta_sg: float = 20.0
    delta_sg_target: float | None = None  # None: keep delta_sg (update inert)
    shift_update_rate: float = 0.01
    sigma_cand: float | None = None  # None: half the mean subgoal half-range

    # adjacency
    lambda_adj: float = 20.0
    zeta: float = 1.0
    margin_adj: float = 0.2
    cell_size: float = 1.0
    embed_dim: int = 32
    adj_hidden: tuple = (128, 128)
    adj_lr: float = 2e-4
    adj_train_every: int = 50_000
    adj_epochs: int = 25
    adj_batch: int = 64
    adj_capacity: int = 200_000

    # landmarks
    n_landmark_cov: int = 60
    n_landmark_nov: int = 60
    lambda_landmark: float = 1.0
    lambda_higl: float = 20.0        # hinge weight of the entangled variant
    delta_pseudo: float = 2.0
    v_cut: float = -25.0             # drop edges below c * success radius cost
    landmark_subsample: int = 2000
    landmark_refresh_every: int = 1  # high-level updates between reselects
    rnd_hidden: tuple = (64, 64)
    rnd_dim: int = 32
    rnd_lr: float = 1e-3

    # gradient penalty / one-step rollout planning
    lambda_gp: float = 1.0
    lambda_osrp: float = 5e-4
    gp_every: int = 5                # env steps between penalized updates
    gp_critic_iters: int = 5         # critic iterations per penalized step
    osrp_every: int = 10             # high-level periods between applications
    pool_replicas: int = 10
    sigma_sg_frac: float = 0.5
    osrp_base: int | None = None     # pool seed rows; None: batch_size

    # dynamics ensemble
    n_members: int = 5
    dyn_hidden: tuple = (256, 256)
    dyn_lr: float = 5e-3
    dyn_batch: int = 256
    dyn_epochs: int = 20
    dyn_holdout: float = 0.1
    dyn_max_samples: int | None = None
    dyn_every: int = 2000            # env steps between refits
    t_dm: int = 20_000               # model-free warmup before any model use

    # evaluation / logging
    eval_every: int = 5000
    eval_episodes: int = 10
    dump_graph: bool = False

    def __post_init__(self):
        for f in ("hidden", "adj_hidden", "rnd_hidden", "dyn_hidden"):
            setattr(self, f, tuple(int(u) for u in getattr(self, f)))

    def validate(self):
        if self.env not in LAYOUTS and self.layout_file is None:
            raise ConfigError(f"unknown env {self.env!r}; choices: "
                              f"{', '.join(sorted(LAYOUTS))}")
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; choices: "
                              f"{', '.join(ALGOS)}")
        if self.reward_kind not in ("sparse", "dense"):
            raise ConfigError(f"unknown reward kind {self.reward_kind!r}")
        positive_int = ("steps", "c", "batch_size", "buffer_size_lo",
                        "buffer_size_hi", "k_candidates", "embed_dim",
                        "adj_batch", "adj_capacity", "adj_epochs",
                        "adj_train_every", "landmark_subsample",
                        "landmark_refresh_every", "rnd_dim", "gp_every",
                        "gp_critic_iters", "osrp_every", "pool_replicas",
                        "n_members", "dyn_batch", "dyn_epochs", "dyn_every",
                        "eval_every", "eval_episodes")
        for name in positive_int:
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        nonneg_int = ("seed", "warmup_steps", "t_dm", "n_landmark_cov",
                      "n_landmark_nov")
        for name in nonneg_int:
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a nonnegative integer, got {v!r}")
        positive = ("reward_scale_lo", "actor_lr", "critic_lr", "adj_lr",
                    "rnd_lr", "dyn_lr", "zeta", "cell_size")
        for name in positive:
            v = getattr(self, name)
            if not v > 0.0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        nonneg = ("reward_scale_hi", "explore_sigma_hi", "explore_sigma_lo",
                  "target_noise_frac", "noise_clip_frac", "delta_sg",
                  "lambda_adj", "margin_adj", "lambda_landmark", "lambda_higl",
                  "delta_pseudo", "lambda_gp", "lambda_osrp", "sigma_sg_frac",
                  "action_noise_prob")
        for name in nonneg:
            v = getattr(self, name)
            if not v >= 0.0:
                raise ConfigError(f"{name} must be nonnegative, got {v!r}")
        if self.eta not in (0, 1):
            raise ConfigError(f"eta must be 0 or 1, got {self.eta!r}")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho!r}")
        for name in ("gamma_hi", "gamma_lo"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v!r}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau!r}")
        if not 0.0 <= self.shift_update_rate <= 1.0:
            raise ConfigError("shift_update_rate must be in [0, 1], "
                              f"got {self.shift_update_rate!r}")
        if not 0.0 < self.dyn_holdout < 1.0:
            raise ConfigError(f"dyn_holdout must be in (0, 1), got {self.dyn_holdout!r}")
        if self.k_candidates < 3:
            raise ConfigError("k_candidates must be >= 3 (draws + original + achieved)")
        if self.n_members < 2:
            raise ConfigError("n_members must be >= 2")
        if self.sigma_cand is not None and not self.sigma_cand > 0.0:
            raise ConfigError(f"sigma_cand must be positive, got {self.sigma_cand!r}")
        if self.delta_sg_target is not None and not self.delta_sg_target >= 0.0:
            raise ConfigError("delta_sg_target must be nonnegative, "
                              f"got {self.delta_sg_target!r}")
        if self.dyn_max_samples is not None and self.dyn_max_samples < 2:
            raise ConfigError("dyn_max_samples must be >= 2 when set")
        if self.osrp_base is not None and self.osrp_base < 1:
            raise ConfigError(f"osrp_base must be >= 1 when set, got {self.osrp_base!r}")
        if not self.action_noise_prob <= 1.0:
            raise ConfigError("action_noise_prob must be in [0, 1], "
                              f"got {self.action_noise_prob!r}")
        return self


# Shrunk to what one laptop core trains at ~200k steps well inside an
# hour; everything else keeps the published values. Length-like knobs
# scale with the maze: the desk mazes span half the reference ones, so
# the relabel shift cap halves too.
DESK_OVERRIDES = {
    "hidden": (64, 64),
    "batch_size": 64,
    "explore_sigma_lo": 0.2,
    "delta_sg": 10.0,
    "adj_hidden": (64, 64),
    "adj_epochs": 10,
    "adj_train_every": 25_000,
    "adj_capacity": 30_000,
    "n_landmark_cov": 10,
    "n_landmark_nov": 10,
    "landmark_subsample": 500,
    "landmark_refresh_every": 5,
    "dyn_hidden": (64, 64),
    "dyn_epochs": 5,
    "dyn_max_samples": 5000,
    "dyn_every": 10_000,
}

PRESETS = {"desk": DESK_OVERRIDES}

_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def from_dict(overrides, base=None):
    """Build a validated config from a dict of overrides."""
    unknown = set(overrides) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
    cfg = replace(base, **overrides) if base is not None else RunConfig(**overrides)
    return cfg.validate()


def to_dict(cfg):
    d = asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def config_hash(cfg):
    """Stable short hash of the full configuration (run-cache key)."""
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AlgoFlags:
    """Which components the algorithm switch turns on.

    The relabeling path always runs (every variant corrects its stored
    subgoals); rho=1 makes it the classic recorded-state correction.
    """
    rho: float
    lambda_gp: float
    lambda_osrp: float
    use_adjacency: bool
    use_landmark: bool
    higl_actor_term: bool

    @property
    def model_needed(self):
        return self.rho < 1.0 or self.lambda_gp > 0.0 or self.lambda_osrp > 0.0


def algo_flags(cfg):
    a = cfg.algo
    if a == "aclg":
        return AlgoFlags(1.0, 0.0, 0.0, True, True, False)
    if a == "aclg+gcmr":
        return AlgoFlags(cfg.rho, cfg.lambda_gp, cfg.lambda_osrp, True, True, False)
    if a == "gcmr-only":
        return AlgoFlags(cfg.rho, cfg.lambda_gp, cfg.lambda_osrp, False, False, False)
    if a == "higl-baseline":
        return AlgoFlags(1.0, 0.0, 0.0, True, True, True)
    if a == "hiro-correction-baseline":
        return AlgoFlags(1.0, 0.0, 0.0, False, False, False)
    raise ConfigError(f"unknown algo {a!r}")
