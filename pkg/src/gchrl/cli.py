"""Command-line front end: one training run per invocation.

    gchrl --env point_maze_u --algo aclg+gcmr --seed 0 --steps 200000 \
          --out runs/u0

Field precedence: dataclass defaults < --preset < --config JSON file <
explicit flags. Exit status 0 on completion, 2 on configuration or
usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import ALGOS, PRESETS, ConfigError, from_dict
from .envs import LAYOUTS
from .train import train


def build_parser():
    p = argparse.ArgumentParser(
        prog="gchrl",
        description="Train a goal-conditioned hierarchical agent on a "
                    "point-mass maze and log reproducible learning curves.")
    p.add_argument("--env", required=True,
                   help=f"maze name ({', '.join(sorted(LAYOUTS))}) or any "
                        "name when --config sets layout_file")
    p.add_argument("--algo", choices=ALGOS, default=None,
                   help="algorithm switch (default aclg+gcmr)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="runs",
                   help="output directory for CSVs, run.json, checkpoints")
    p.add_argument("--config", metavar="FILE",
                   help="JSON file with config field overrides")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named override bundle applied before --config")
    p.add_argument("--dump-graph", action="store_const", const=True,
                   default=None, help="write the planning graph as JSON at "
                                      "every evaluation")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.preset:
        overrides.update(PRESETS[args.preset])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            print(f"gchrl: cannot read --config {args.config}: {e}",
                  file=sys.stderr)
            return 2
        if not isinstance(file_overrides, dict):
            print(f"gchrl: --config {args.config} must hold a JSON object",
                  file=sys.stderr)
            return 2
        overrides.update(file_overrides)
    overrides["env"] = args.env
    for name in ("algo", "seed", "steps"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.dump_graph is not None:
        overrides["dump_graph"] = args.dump_graph
    try:
        cfg = from_dict(overrides)
    except ConfigError as e:
        print(f"gchrl: invalid config: {e}", file=sys.stderr)
        return 2
    summary = train(cfg, args.out)
    final = summary["final"]
    if final is None:
        print(f"done: {cfg.steps} steps, no evaluation reached; "
              f"logs in {args.out}")
    else:
        print(f"done: {cfg.steps} steps, final success rate "
              f"{final['success_rate']:.2f}, logs in {args.out}")
    return 0
