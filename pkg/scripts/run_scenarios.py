#!/usr/bin/env python3
"""Reproduce the bundled demo scenarios in one go.

Writes, under out/scenarios/:
  equilibrium/      steady profiles and summary
  open_loop_fq/     uncontrolled orbits (both solvers)
  control_a_fq/     gradient feedback, prey-surplus start
  control_a_sq/     gradient feedback, predator-surplus start (u dips negative)
  control_b_fq/     saturated feedback, prey-surplus start
  control_b_sq/     saturated feedback, predator-surplus start (u stays positive)
  roa_gradient/         region and level set for the gradient feedback
  roa_saturated/         region and level set for the saturated feedback

Pass --fast for a quick look at n_cells = 100.
"""
import argparse
import sys
from pathlib import Path

from predprey.cli import main as cli_main

SCENARIOS = [
    ("equilibrium", ["equilibrium"], {}),
    ("open_loop_fq", ["simulate"], {"controller": {"kind": "open_loop"},
                                    "simulation": {"ic": "FQ", "solver": "both"}}),
    ("control_a_fq", ["simulate"], {"simulation": {"ic": "FQ"}}),
    ("control_a_sq", ["simulate"], {"simulation": {"ic": "SQ"}}),
    ("control_b_fq", ["simulate"], {"controller": {"kind": "control_b", "eps": "0.01", "beta": "0.13", "delta": "0.2"},
                                    "simulation": {"ic": "FQ"}}),
    ("control_b_sq", ["simulate"], {"controller": {"kind": "control_b", "eps": "0.01", "beta": "0.13", "delta": "0.2"},
                                    "simulation": {"ic": "SQ"}}),
    ("roa_gradient", ["roa"], {}),
    ("roa_saturated", ["roa"], {"controller": {"kind": "control_b", "eps": "0.01", "beta": "0.13", "delta": "0.2"}}),
]


def build_ini(overrides: dict, n_cells: int) -> str:
    sections = {"model": {"n_cells": str(n_cells)}}
    for section, kv in overrides.items():
        sections.setdefault(section, {}).update(kv)
    lines = []
    for section, kv in sections.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in kv.items())
        lines.append("")
    return "\n".join(lines)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/scenarios")
    parser.add_argument("--fast", action="store_true", help="run at n_cells = 100")
    args = parser.parse_args()
    n_cells = 100 if args.fast else 400
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)

    for name, command, overrides in SCENARIOS:
        cfg_path = root / f"_{name}.ini"
        cfg_path.write_text(build_ini(overrides, n_cells))
        print(f"== {name} ==")
        rc = cli_main(command + ["--config", str(cfg_path), "--out",
                                 str(root / name), "--plot"])
        if rc != 0:
            print(f"scenario {name} failed with exit code {rc}", file=sys.stderr)
            return rc
    print(f"all scenarios written under {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
