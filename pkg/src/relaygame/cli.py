"""Command-line experiment runner.

Subcommands bind a scenario document to the solvers and the network
simulator and write their results as CSV plus YAML records:

    solve-co      equilibrium of the completely observable game, one family
    solve-po      equilibrium of the partially observable game, one variant
    solve-coop    cooperative frontier over a weight grid
    eval-simple   cost pair of the myopic single-agent threshold policies
    onehop-sweep  all point families across a forwarder-separation sweep
    netsim        end-to-end network simulation over a packet-rate grid
    verify        solve one family and certify it by best-response attack

Every command accepts an optional scenario YAML (built-in defaults make
the reproduction runs argument-free), ``--override section.key=value``
patches type-checked against the schema, and writes a ``manifest.yaml``
echoing the fully resolved configuration.  All file writes go through a
temp-file rename so partially written outputs never appear under the
final name.  Exit codes: 0 full success, 2 partial results recorded
(non-convergence or failed replications), 1 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import math
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import __version__
from .cogame import (
    FAMILIES,
    NonConvergenceError,
    PolicyPairCO,
    evaluate_policy_pair,
    solve_nepp,
    verify_nepp,
)
from .coop import coop_value_iteration
from .netsim import NetSimConfig, build_network, simulate
from .pogame import PO_VARIANTS, solve_po_nepp
from .rewards import GeoScenario, build_reward_model
from .stopping import GameConfig, solve_threshold

__all__ = [
    "ConfigError",
    "DEFAULT_SPEC",
    "ExperimentSpec",
    "main",
    "resolve_spec",
    "run_netsim",
    "run_onehop_sweep",
]


class ConfigError(Exception):
    """Scenario or override rejected before any computation started."""


# Built-in defaults: a TelosB-class radio with a 5 m candidate grid, so
# the reproduction commands run without arguments.
DEFAULT_SPEC: Dict[str, dict] = {
    "scenario": {
        "theta_m": 0.0,
        "sink": [1000.0, 0.0],
        "range_m": 80.0,
        "grid_spacing_m": 5.0,
        "pathloss_exponent": 2.5,
        "reference_distance_m": 5.0,
        "receiver_sensitivity_mw": 1.0e-9,
        "max_power_mw": 1.0,
        "tradeoff_a": 0.5,
        "gain_table": [
            [0.4e-3, 0.25],
            [0.6e-3, 0.25],
            [0.8e-3, 0.25],
            [1.0e-3, 0.25],
        ],
    },
    "game": {
        "mean_interarrival_s": 0.01,
        "tradeoff_1": 100.0,
        "tradeoff_2": 100.0,
        "win_prob_1": 0.5,
    },
    "solve": {
        "family": "SC",
        "variant": "NABLA",
        "gamma_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "tol": 1.0e-10,
        "max_iters": 100000,
        "merge_tolerance": 0.0,
    },
    "sweep": {
        "theta_values": [0.0, 5.0, 10.0],
    },
    "netsim": {
        "rng_seed": 1,
        "seed_count": 10,
        "lambda_grid": [0.0, 10.0, 20.0, 30.0, 40.0],
        "node_count": 1000,
        "area_m": 1000.0,
        "source_position": [0.0, 1000.0],
        "sink_position": [1000.0, 0.0],
        "duty_period_s": 0.1,
        "source_packet_count": 100,
        "max_hold_periods": 10,
        "literal_interwake": False,
        "safety_horizon_s": 3600.0,
    },
}

# Value tables are written into the solution record only up to this many
# reward indices; the geometric models run to n > 1500 and their tables
# would dominate the output for no inspection value.
_VALUES_LIMIT = 200


@dataclass(frozen=True)
class ExperimentSpec:
    """One CLI invocation: command, scenario source, patches, output dir."""

    command: str
    scenario_path: Optional[str] = None
    overrides: Tuple[str, ...] = ()
    out_dir: Optional[str] = None
    seed: Optional[int] = None
    theta: Optional[float] = None
    family: Optional[str] = None
    variant: Optional[str] = None
    gamma: Optional[float] = None
    full_values: bool = False


def _coerce(default, value, path: str):
    """Coerce a user-supplied value to the schema type at ``path``."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                raise ConfigError(f"{path}: expected an integer, got {value!r}") from None
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{path}: expected a number, got {value!r}") from None
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        if not default:
            return list(value)
        template = default[0]
        return [_coerce(template, v, f"{path}[{k}]") for k, v in enumerate(value)]
    raise ConfigError(f"{path}: unsupported schema type {type(default).__name__}")


def _deep_merge(base: dict, update: dict, path: str = "") -> None:
    for key, value in update.items():
        here = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown configuration key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected a mapping")
            _deep_merge(base[key], value, here)
        else:
            base[key] = _coerce(base[key], value, here)


def _apply_override(spec: dict, expr: str) -> None:
    if "=" not in expr:
        raise ConfigError(f"override must look like section.key=value: {expr!r}")
    key_path, raw = expr.split("=", 1)
    parts = key_path.strip().split(".")
    if len(parts) < 2:
        raise ConfigError(f"override key must be section.key: {key_path!r}")
    node = spec
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown configuration key: {key_path}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown configuration key: {key_path}")
    if isinstance(node[leaf], dict):
        raise ConfigError(f"{key_path}: cannot override a whole section")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    node[leaf] = _coerce(node[leaf], value, key_path)


def resolve_spec(experiment: ExperimentSpec) -> dict:
    """Defaults, then the scenario file, then overrides and flags."""
    spec = copy.deepcopy(DEFAULT_SPEC)
    if experiment.scenario_path is not None:
        if not os.path.exists(experiment.scenario_path):
            raise ConfigError(f"scenario file not found: {experiment.scenario_path}")
        with open(experiment.scenario_path, "r", encoding="utf-8") as fh:
            try:
                doc = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(
                    f"scenario file {experiment.scenario_path} is not valid YAML: {exc}"
                ) from None
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigError(
                f"scenario file {experiment.scenario_path} must be a mapping of sections"
            )
        _deep_merge(spec, doc)
    for expr in experiment.overrides:
        _apply_override(spec, expr)
    if experiment.seed is not None:
        spec["netsim"]["rng_seed"] = int(experiment.seed)
    if experiment.theta is not None:
        spec["scenario"]["theta_m"] = float(experiment.theta)
    if experiment.family is not None:
        spec["solve"]["family"] = experiment.family
    if experiment.variant is not None:
        spec["solve"]["variant"] = experiment.variant
    if experiment.gamma is not None:
        spec["solve"]["gamma_grid"] = [float(experiment.gamma)]

    solve = spec["solve"]
    if solve["family"] not in FAMILIES:
        raise ConfigError(f"solve.family must be one of {FAMILIES}")
    if solve["variant"] not in PO_VARIANTS:
        raise ConfigError(f"solve.variant must be one of {PO_VARIANTS}")
    if not solve["gamma_grid"]:
        raise ConfigError("solve.gamma_grid must be nonempty")
    if any(not 0.0 < g < 1.0 for g in solve["gamma_grid"]):
        raise ConfigError("solve.gamma_grid entries must lie strictly inside (0, 1)")
    netsim = spec["netsim"]
    if netsim["seed_count"] < 1:
        raise ConfigError("netsim.seed_count must be at least 1")
    if not netsim["lambda_grid"]:
        raise ConfigError("netsim.lambda_grid must be nonempty")
    if any(lam < 0 for lam in netsim["lambda_grid"]):
        raise ConfigError("netsim.lambda_grid entries must be nonnegative")
    return spec


def geo_scenario(spec: dict, theta: Optional[float] = None) -> GeoScenario:
    """Forwarders at (0, +/- theta/2) facing the configured sink."""
    sc = spec["scenario"]
    t = sc["theta_m"] if theta is None else float(theta)
    try:
        return GeoScenario(
            forwarder_1=(0.0, t / 2.0),
            forwarder_2=(0.0, -t / 2.0),
            sink=tuple(sc["sink"]),
            range_m=sc["range_m"],
            grid_spacing_m=sc["grid_spacing_m"],
            pathloss_exponent=sc["pathloss_exponent"],
            reference_distance_m=sc["reference_distance_m"],
            receiver_sensitivity_mw=sc["receiver_sensitivity_mw"],
            max_power_mw=sc["max_power_mw"],
            tradeoff_a=sc["tradeoff_a"],
            gain_table=tuple((g, p) for g, p in sc["gain_table"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


def game_config(spec: dict) -> GameConfig:
    gm = spec["game"]
    try:
        return GameConfig(
            mean_interarrival_s=gm["mean_interarrival_s"],
            tradeoff_1=gm["tradeoff_1"],
            tradeoff_2=gm["tradeoff_2"],
            win_prob_1=gm["win_prob_1"],
        )
    except ValueError as exc:
        raise ConfigError(f"invalid game section: {exc}") from None


def netsim_cell_config(spec: dict, packet_rate_hz: float, seed: int) -> NetSimConfig:
    sc = spec["scenario"]
    ns = spec["netsim"]
    try:
        return NetSimConfig(
            rng_seed=int(seed),
            area_m=ns["area_m"],
            node_count=ns["node_count"],
            source_position=tuple(ns["source_position"]),
            sink_position=tuple(ns["sink_position"]),
            duty_period_s=ns["duty_period_s"],
            packet_rate_hz=float(packet_rate_hz),
            source_packet_count=ns["source_packet_count"],
            eta=spec["game"]["tradeoff_1"],
            range_m=sc["range_m"],
            pathloss_exponent=sc["pathloss_exponent"],
            reference_distance_m=sc["reference_distance_m"],
            receiver_sensitivity_mw=sc["receiver_sensitivity_mw"],
            max_power_mw=sc["max_power_mw"],
            tradeoff_a=sc["tradeoff_a"],
            gain_table=tuple((g, p) for g, p in sc["gain_table"]),
            max_hold_periods=ns["max_hold_periods"],
            literal_interwake=ns["literal_interwake"],
            safety_horizon_s=ns["safety_horizon_s"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid netsim section: {exc}") from None


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(cell) for cell in row])
    _atomic_write(path, buf.getvalue())


def write_yaml(path: str, doc: dict) -> None:
    _atomic_write(path, yaml.safe_dump(doc, sort_keys=False, default_flow_style=False))


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {key: _plain(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(value) for value in obj]
    return obj


def write_manifest(out_dir: str, command: str, spec: dict, outputs: List[str],
                   status: str, extra: Optional[dict] = None) -> None:
    doc = {
        "command": command,
        "package_version": __version__,
        "status": status,
        "seed": spec["netsim"]["rng_seed"],
        "outputs": sorted(outputs),
        "spec": _plain(spec),
    }
    if extra:
        doc.update(_plain(extra))
    write_yaml(os.path.join(out_dir, "manifest.yaml"), doc)


def simple_policy(model, config: GameConfig):
    """Both forwarders play their single-agent threshold rule throughout."""
    sol_1 = solve_threshold(model.marginal_pmf(1), config, 1)
    sol_2 = solve_threshold(model.marginal_pmf(2), config, 2)
    n = model.n
    stop_1 = np.concatenate(
        ([0.0], (model.feasible_values >= sol_1.alpha).astype(float))
    )
    stop_2 = np.concatenate(
        ([0.0], (model.feasible_values >= sol_2.alpha).astype(float))
    )
    policy = PolicyPairCO(
        stop_prob_1=np.broadcast_to(stop_1[:, None], (n, n)),
        stop_prob_2=np.broadcast_to(stop_2[None, :], (n, n)),
        lone_stop_1=stop_1,
        lone_stop_2=stop_2,
    )
    values = evaluate_policy_pair(policy, model, config)
    return policy, values, (sol_1, sol_2)


def _build_model(spec: dict, theta: Optional[float] = None):
    scenario = geo_scenario(spec, theta)
    try:
        return build_reward_model(scenario, merge_tolerance=spec["solve"]["merge_tolerance"])
    except ValueError as exc:
        raise ConfigError(f"scenario produces no usable reward model: {exc}") from None


def _co_record(solution, theta: float, include_values: bool) -> dict:
    record = {
        "kind": "co-nepp",
        "theta_m": float(theta),
        "family": solution.family,
        "cost_pair": [float(c) for c in solution.cost_pair],
        "d_costs": [float(d) for d in solution.d_costs],
        "thresholds": {
            "zeta_1": float(solution.zeta_1),
            "alpha_1": float(solution.alpha_1),
            "zeta_2": float(solution.zeta_2),
            "alpha_2": float(solution.alpha_2),
        },
        "iterations": int(solution.iterations),
        "residual": float(solution.residual),
    }
    if include_values:
        record["values"] = {
            "two_1": _plain(solution.value_two_1),
            "two_2": _plain(solution.value_two_2),
            "lone_1": _plain(solution.value_lone_1),
            "lone_2": _plain(solution.value_lone_2),
        }
        record["policy"] = {
            "stop_prob_1": _plain(solution.policy.stop_prob_1),
            "stop_prob_2": _plain(solution.policy.stop_prob_2),
            "lone_stop_1": _plain(solution.policy.lone_stop_1),
            "lone_stop_2": _plain(solution.policy.lone_stop_2),
        }
    else:
        record["values_omitted"] = (
            "value tables exceed the serialization size limit; recompute with "
            "solve_nepp or pass --full-values"
        )
    return record


def _po_record(solution, theta: float, include_values: bool) -> dict:
    record = {
        "kind": "po-nepp",
        "theta_m": float(theta),
        "variant": solution.variant,
        "cost_pair": [float(c) for c in solution.cost_pair],
        "d_costs": [float(d) for d in solution.d_costs],
        "thresholds": [
            {"location": loc, "phi": phi, "psi": psi}
            for loc, phi, psi in solution.ne_pairs
        ],
        "iterations": int(solution.iterations),
        "residual": float(solution.residual),
    }
    if include_values:
        record["values"] = {
            "value_1": _plain(solution.value_1),
            "value_2": _plain(solution.value_2),
        }
    else:
        record["values_omitted"] = (
            "value tables exceed the serialization size limit; recompute with "
            "solve_po_nepp or pass --full-values"
        )
    return record


def _ensure_out(experiment: ExperimentSpec) -> str:
    out = experiment.out_dir or os.path.join("relaygame-out", experiment.command)
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_solve_co(experiment: ExperimentSpec) -> int:
    spec = resolve_spec(experiment)
    out = _ensure_out(experiment)
    model = _build_model(spec)
    config = game_config(spec)
    family = spec["solve"]["family"]
    theta = spec["scenario"]["theta_m"]
    include = experiment.full_values or model.n <= _VALUES_LIMIT
    status = "complete"
    try:
        solution = solve_nepp(
            model, config, family,
            tol=spec["solve"]["tol"], max_iters=spec["solve"]["max_iters"],
        )
    except NonConvergenceError as exc:
        write_csv(
            os.path.join(out, "nepp.csv"),
            ("theta", "family", "C1", "C2"),
            [(theta, family, math.nan, math.nan)],
        )
        write_manifest(out, experiment.command, spec, ["nepp.csv"], "partial",
                       {"error": str(exc)})
        return 2
    write_csv(
        os.path.join(out, "nepp.csv"),
        ("theta", "family", "C1", "C2"),
        [(theta, family, solution.cost_pair[0], solution.cost_pair[1])],
    )
    write_yaml(os.path.join(out, "solution.yaml"), _co_record(solution, theta, include))
    write_manifest(out, experiment.command, spec, ["nepp.csv", "solution.yaml"], status)
    return 0


def _cmd_solve_po(experiment: ExperimentSpec) -> int:
    spec = resolve_spec(experiment)
    out = _ensure_out(experiment)
    model = _build_model(spec)
    config = game_config(spec)
    variant = spec["solve"]["variant"]
    theta = spec["scenario"]["theta_m"]
    include = experiment.full_values or model.n <= _VALUES_LIMIT
    try:
        solution = solve_po_nepp(
            model, config, variant,
            tol=spec["solve"]["tol"], max_iters=spec["solve"]["max_iters"],
        )
    except NonConvergenceError as exc:
        write_csv(
            os.path.join(out, "nepp.csv"),
            ("theta", "family", "C1", "C2"),
            [(theta, variant, math.nan, math.nan)],
        )
        write_manifest(out, experiment.command, spec, ["nepp.csv"], "partial",
                       {"error": str(exc)})
        return 2
    write_csv(
        os.path.join(out, "nepp.csv"),
        ("theta", "family", "C1", "C2"),
        [(theta, variant, solution.cost_pair[0], solution.cost_pair[1])],
    )
    write_csv(
        os.path.join(out, "thresholds.csv"),
        ("location", "phi", "psi"),
        solution.ne_pairs,
    )
    write_yaml(os.path.join(out, "solution.yaml"), _po_record(solution, theta, include))
    write_manifest(
        out, experiment.command, spec,
        ["nepp.csv", "thresholds.csv", "solution.yaml"], "complete",
    )
    return 0


def _cmd_solve_coop(experiment: ExperimentSpec) -> int:
    spec = resolve_spec(experiment)
    out = _ensure_out(experiment)
    model = _build_model(spec)
    config = game_config(spec)
    theta = spec["scenario"]["theta_m"]
    include = experiment.full_values or model.n <= _VALUES_LIMIT
    rows = []
    records = []
    seen = set()
    failed = False
    for gamma in sorted(float(g) for g in spec["solve"]["gamma_grid"]):
        try:
            solution = coop_value_iteration(
                model, config, gamma, tol=spec["solve"]["tol"]
            )
        except NonConvergenceError as exc:
            records.append({"gamma": gamma, "error": str(exc)})
            failed = True
            continue
        if solution.cost_pair in seen:
            continue
        seen.add(solution.cost_pair)
        rows.append((gamma, solution.cost_pair[0], solution.cost_pair[1]))
        record = {
            "gamma": gamma,
            "cost_pair": [float(c) for c in solution.cost_pair],
            "e_joint": float(solution.e_joint),
            "iterations": int(solution.iterations),
            "residual": float(solution.residual),
        }
        if include:
            record["action"] = _plain(solution.action)
        records.append(record)
    write_csv(os.path.join(out, "frontier.csv"), ("gamma", "C1", "C2"), rows)
    write_yaml(
        os.path.join(out, "solution.yaml"),
        {"kind": "coop-frontier", "theta_m": float(theta), "points": records},
    )
    write_manifest(
        out, experiment.command, spec, ["frontier.csv", "solution.yaml"],
        "partial" if failed else "complete",
    )
    return 2 if failed else 0


def _cmd_eval_simple(experiment: ExperimentSpec) -> int:
    spec = resolve_spec(experiment)
    out = _ensure_out(experiment)
    model = _build_model(spec)
    config = game_config(spec)
    theta = spec["scenario"]["theta_m"]
    _, values, (sol_1, sol_2) = simple_policy(model, config)
    write_csv(
        os.path.join(out, "nepp.csv"),
        ("theta", "family", "C1", "C2"),
        [(theta, "simple", values.cost_pair[0], values.cost_pair[1])],
    )
    write_yaml(
        os.path.join(out, "solution.yaml"),
        {
            "kind": "simple-policy",
            "theta_m": float(theta),
            "cost_pair": [float(c) for c in values.cost_pair],
            "alpha_1": float(sol_1.alpha),
            "alpha_2": float(sol_2.alpha),
            "d_costs": [float(sol_1.d_cost), float(sol_2.d_cost)],
        },
    )
    write_manifest(
        out, experiment.command, spec, ["nepp.csv", "solution.yaml"], "complete"
    )
    return 0


def sweep_points(model, config: GameConfig, solve_cfg: dict):
    """All one-hop benchmark points of one reward model.

    Returns (point name, C1, C2, converged, iterations) tuples; solver
    non-convergence and fixed-point assertion failures mark the row as
    not converged instead of aborting the sweep.
    """
    rows = []

    def attempt(name, fn):
        try:
            c1, c2, iters = fn()
        except (NonConvergenceError, RuntimeError):
            rows.append((name, math.nan, math.nan, False, solve_cfg["max_iters"]))
        else:
            rows.append((name, c1, c2, True, iters))

    for family in FAMILIES:
        def solve_family(family=family):
            sol = solve_nepp(model, config, family,
                             tol=solve_cfg["tol"], max_iters=solve_cfg["max_iters"])
            return sol.cost_pair[0], sol.cost_pair[1], sol.iterations
        attempt(f"co_{family.lower()}", solve_family)
    for variant in PO_VARIANTS:
        def solve_variant(variant=variant):
            sol = solve_po_nepp(model, config, variant,
                                tol=solve_cfg["tol"], max_iters=solve_cfg["max_iters"])
            return sol.cost_pair[0], sol.cost_pair[1], sol.iterations
        attempt(f"po_{variant.lower()}", solve_variant)

    def eval_simple():
        _, values, _ = simple_policy(model, config)
        return values.cost_pair[0], values.cost_pair[1], 0
    attempt("simple", eval_simple)

    seen = set()
    for gamma in sorted(float(g) for g in solve_cfg["gamma_grid"]):
        def solve_gamma(gamma=gamma):
            sol = coop_value_iteration(model, config, gamma, tol=solve_cfg["tol"])
            return sol.cost_pair[0], sol.cost_pair[1], sol.iterations
        before = len(rows)
        attempt(f"coop_{gamma!r}", solve_gamma)
        row = rows[-1]
        if len(rows) > before and row[3]:
            pair = (row[1], row[2])
            if pair in seen:
                rows.pop()
            else:
                seen.add(pair)
    return rows


def run_onehop_sweep(experiment: ExperimentSpec) -> int:
    """Solve every point family at each forwarder separation; write CSV."""
    spec = resolve_spec(experiment)
    thetas = [float(t) for t in spec["sweep"]["theta_values"]]
    if not thetas:
        raise ConfigError("sweep.theta_values must be nonempty")
    out = _ensure_out(experiment)
    config = game_config(spec)
    csv_rows = []
    cells = []
    all_converged = True
    for theta in thetas:
        model = _build_model(spec, theta)
        points = sweep_points(model, config, spec["solve"])
        del model
        for name, c1, c2, converged, iters in points:
            csv_rows.append((theta, name, c1, c2, converged, iters))
            all_converged &= converged
        cells.append({
            "theta_m": theta,
            "points": {name: bool(conv) for name, _, _, conv, _ in points},
        })
    write_csv(
        os.path.join(out, "points.csv"),
        ("theta", "point", "C1", "C2", "converged", "iterations"),
        csv_rows,
    )
    write_manifest(
        out, experiment.command, spec, ["points.csv"],
        "complete" if all_converged else "partial",
        {"cells": cells},
    )
    return 0 if all_converged else 2


def run_netsim(experiment: ExperimentSpec) -> int:
    """Simulate the packet-rate x seed grid; write per-packet and aggregate CSVs."""
    spec = resolve_spec(experiment)
    out = _ensure_out(experiment)
    ns = spec["netsim"]
    lambdas = [float(lam) for lam in ns["lambda_grid"]]
    seeds = [int(ns["rng_seed"]) + k for k in range(int(ns["seed_count"]))]
    packet_rows = []
    aggregate_rows = []
    cells = []
    degraded = False
    for lam in lambdas:
        run_delays = []
        run_powers = []
        for seed in seeds:
            config = netsim_cell_config(spec, lam, seed)
            try:
                network = build_network(config)
                result = simulate(network, config)
            except Exception as exc:
                # One bad replication must not take down the grid; the
                # failure is reported through the manifest and exit code.
                cells.append({"lambda": lam, "seed": seed, "error": repr(exc)})
                degraded = True
                continue
            for record in result.records:
                if record.delivered:
                    packet_rows.append((
                        lam, seed, record.packet_id, record.delay_s,
                        record.power_mw, record.hops, record.contentions,
                    ))
            cells.append({
                "lambda": lam,
                "seed": seed,
                "delivered": result.delivered_count,
                "dropped": result.dropped_count,
                "background_packets": result.background_count,
                "partial": bool(result.partial),
            })
            if result.partial:
                degraded = True
            if result.delivered_count > 0:
                run_delays.append(result.mean_delay)
                run_powers.append(result.mean_power)

        def mean_se(samples):
            if not samples:
                return math.nan, math.nan
            arr = np.asarray(samples)
            if arr.size < 2:
                return float(arr.mean()), 0.0
            return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))

        mean_delay, se_delay = mean_se(run_delays)
        mean_power, se_power = mean_se(run_powers)
        aggregate_rows.append((lam, mean_delay, se_delay, mean_power, se_power))
    write_csv(
        os.path.join(out, "packets.csv"),
        ("lambda", "seed", "packet_id", "delay_s", "power_mw", "hops", "contentions"),
        packet_rows,
    )
    write_csv(
        os.path.join(out, "aggregate.csv"),
        ("lambda", "mean_delay", "se_delay", "mean_power", "se_power"),
        aggregate_rows,
    )
    write_manifest(
        out, experiment.command, spec, ["packets.csv", "aggregate.csv"],
        "partial" if degraded else "complete",
        {"cells": cells},
    )
    return 2 if degraded else 0


def _cmd_verify(experiment: ExperimentSpec) -> int:
    spec = resolve_spec(experiment)
    out = _ensure_out(experiment)
    model = _build_model(spec)
    config = game_config(spec)
    family = spec["solve"]["family"]
    try:
        solution = solve_nepp(
            model, config, family,
            tol=spec["solve"]["tol"], max_iters=spec["solve"]["max_iters"],
        )
    except NonConvergenceError as exc:
        write_yaml(
            os.path.join(out, "verify.yaml"),
            {"family": family, "passed": False, "error": str(exc)},
        )
        write_manifest(out, experiment.command, spec, ["verify.yaml"], "partial")
        return 2
    report = verify_nepp(solution, model, config)
    write_yaml(
        os.path.join(out, "verify.yaml"),
        {
            "family": family,
            "passed": bool(report.passed),
            "cost_pair": [float(c) for c in solution.cost_pair],
            "d_costs": [float(d) for d in solution.d_costs],
            "max_deviation_1": float(report.max_deviation_1),
            "max_deviation_2": float(report.max_deviation_2),
            "worst_state_1": _plain(list(report.worst_state_1)),
            "worst_state_2": _plain(list(report.worst_state_2)),
            "best_response_costs": [float(report.br_cost_1), float(report.br_cost_2)],
            "stage_failures": len(report.stage_failures),
            "checked_states": int(report.checked_states),
        },
    )
    write_manifest(
        out, experiment.command, spec, ["verify.yaml"],
        "complete" if report.passed else "partial",
    )
    return 0 if report.passed else 2


_COMMANDS = {
    "solve-co": _cmd_solve_co,
    "solve-po": _cmd_solve_po,
    "solve-coop": _cmd_solve_coop,
    "eval-simple": _cmd_eval_simple,
    "onehop-sweep": run_onehop_sweep,
    "netsim": run_netsim,
    "verify": _cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    """Parser whose argument errors surface as configuration errors.

    argparse exits with status 2 on bad arguments, but 2 is reserved here
    for partial results; rerouting through ConfigError keeps every
    configuration problem on exit code 1.
    """

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="relaygame",
        description="Solvers and simulation for the two-forwarder relay game.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "scenario", nargs="?", default=None,
        help="scenario YAML file; omit to use the built-in defaults",
    )
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument(
        "--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="patch one configuration value (repeatable)",
    )
    common.add_argument("--seed", type=int, default=None,
                        help="base RNG seed for the simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve-co", parents=[common],
                        help="equilibrium of the completely observable game")
    sp.add_argument("--family", choices=FAMILIES, default=None)
    sp.add_argument("--theta", type=float, default=None,
                    help="forwarder separation in meters")
    sp.add_argument("--full-values", action="store_true")

    sp = sub.add_parser("solve-po", parents=[common],
                        help="equilibrium of the partially observable game")
    sp.add_argument("--variant", choices=PO_VARIANTS, default=None)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--full-values", action="store_true")

    sp = sub.add_parser("solve-coop", parents=[common],
                        help="cooperative frontier over a weight grid")
    sp.add_argument("--gamma", type=float, default=None,
                    help="solve a single weight instead of the grid")
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--full-values", action="store_true")

    sp = sub.add_parser("eval-simple", parents=[common],
                        help="cost pair of the myopic threshold policies")
    sp.add_argument("--theta", type=float, default=None)

    sub.add_parser("onehop-sweep", parents=[common],
                   help="all point families across the separation sweep")
    sub.add_parser("netsim", parents=[common],
                   help="end-to-end simulation over the packet-rate grid")

    sp = sub.add_parser("verify", parents=[common],
                        help="solve one family and certify the equilibrium")
    sp.add_argument("--family", choices=FAMILIES, default=None)
    sp.add_argument("--theta", type=float, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        experiment = ExperimentSpec(
            command=args.command,
            scenario_path=args.scenario,
            overrides=tuple(args.override),
            out_dir=args.out,
            seed=args.seed,
            theta=getattr(args, "theta", None),
            family=getattr(args, "family", None),
            variant=getattr(args, "variant", None),
            gamma=getattr(args, "gamma", None),
            full_values=getattr(args, "full_values", False),
        )
        return _COMMANDS[args.command](experiment)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
