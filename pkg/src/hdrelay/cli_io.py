"""JSON configuration, report serialization and the ``hdrelay`` command line.

Precedence: command-line flags override fields of the ``--config`` file,
which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import fading_awgn as fa
from .capacity_solver import (
    CapacityReport,
    Decision,
    LinkSelectionPolicy,
    PerStateCapacities,
    oracle_check,
    solve_capacity,
    solve_from_capacities,
)
from .channel_model import RelayChannelSpec, make_spec, StateChannel, validate_spec
from .mutual_information import DEFAULT_MAX_ITER, DEFAULT_TOL
from .protocol_simulator import SimConfig, baseline_alternating, simulate, simulate_fading

SCHEMA_VERSION = 1
MODES = ("capacity", "simulate", "fading", "oracle-check", "example")


class ConfigError(ValueError):
    pass


_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}

SPEC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["joint_pmf", "sr_channels", "rd_channels"],
    "properties": {
        "name": {"type": "string"},
        "states": {
            "type": "object",
            "additionalProperties": False,
            "required": ["s1", "s2"],
            "properties": {
                "s1": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                "s2": {"type": "array", "minItems": 1, "items": {"type": "string"}},
            },
        },
        "joint_pmf": _matrix,
        "sr_channels": {"type": "array", "minItems": 1, "items": _matrix},
        "rd_channels": {"type": "array", "minItems": 1, "items": _matrix},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mode"],
    "properties": {
        "mode": {"enum": list(MODES)},
        "spec": SPEC_SCHEMA,
        "spec_path": {"type": "string"},
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "simulation": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "blocks": {"type": "integer", "minimum": 0},
                "epsilon": {"type": "number", "minimum": 0},
                "epsilon_fraction": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "state_process": {"enum": ["iid", "markov"]},
                "transition": _matrix,
                "block_length": {"type": "integer", "minimum": 1},
                "decimation": {"type": "integer", "minimum": 1},
                "baseline": {"type": "boolean"},
            },
        },
        "fading": {
            "type": "object", "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["rayleigh", "point_mass", "grid"]},
                "mean_snr": {"type": "array", "minItems": 2, "maxItems": 2,
                             "items": {"type": "number", "exclusiveMinimum": 0}},
                "snr": {"type": "array", "minItems": 2, "maxItems": 2,
                        "items": {"type": "number", "minimum": 0}},
                "path": {"type": "string"},
                "nodes": {"type": "integer", "minimum": 8},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "oracle": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "trials": {"type": "integer", "minimum": 1},
                "grid_steps": {"type": "integer", "minimum": 2},
                "atol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "example": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "name": {"enum": ["all", "fixed", "onoff", "rayleigh"]},
                "A": {"type": "number", "exclusiveMinimum": 0},
                "B": {"type": "number", "exclusiveMinimum": 0},
                "case": {"enum": [1, 2, 3]},
                "joint": _matrix,
                "mean_snr": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"report": {"type": "string"}, "trace": {"type": "string"}},
        },
    },
}


@dataclass
class RunConfig:
    mode: str
    spec: RelayChannelSpec | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    simulation: dict[str, Any] = field(default_factory=dict)
    fading: dict[str, Any] | None = None
    oracle: dict[str, Any] = field(default_factory=dict)
    example: dict[str, Any] = field(default_factory=dict)
    report_path: str | None = None
    trace_path: str | None = None


def _json_path(parts) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts)


def _describe(error: jsonschema.ValidationError) -> str:
    where = list(error.absolute_path)
    if error.validator == "required":
        missing = [k for k in error.validator_value if k not in error.instance]
        return f"{_json_path(where + missing[:1])}: required field missing"
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        return f"{_json_path(where + extra[:1])}: unknown field"
    name = where[-1] if where and isinstance(where[-1], str) else _json_path(where)
    if error.validator == "minimum":
        return f"{_json_path(where)}: {name} must be ≥ {error.validator_value}"
    if error.validator == "exclusiveMinimum":
        return f"{_json_path(where)}: {name} must be > {error.validator_value}"
    return f"{_json_path(where) or '.'}: {error.message}"


def _validate(doc, schema) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("; ".join(_describe(e) for e in errors))


def spec_from_dict(doc: dict, where: str = ".spec") -> RelayChannelSpec:
    joint = np.asarray(doc["joint_pmf"], dtype=float)
    if joint.ndim != 2:
        raise ConfigError(f"{where}.joint_pmf: must be a rectangular matrix")
    states = doc.get("states", {})
    spec = make_spec(
        joint,
        [StateChannel(np.asarray(m, float)) for m in doc["sr_channels"]],
        [StateChannel(np.asarray(m, float)) for m in doc["rd_channels"]],
        labels_s1=states.get("s1"),
        labels_s2=states.get("s2"),
        name=doc.get("name", ""),
    )
    problems = validate_spec(spec)
    if problems:
        raise ConfigError(f"{where}: " + "; ".join(problems))
    return spec


def spec_to_dict(spec: RelayChannelSpec) -> dict:
    return {
        "name": spec.name,
        "states": {"s1": list(spec.states.labels_s1), "s2": list(spec.states.labels_s2)},
        "joint_pmf": spec.joint_pmf.probs.tolist(),
        "sr_channels": [ch.transition.tolist() for ch in spec.sr_channels],
        "rd_channels": [ch.transition.tolist() for ch in spec.rd_channels],
    }


def parse_config(document: str, base_dir: str | Path | None = None) -> RunConfig:
    """Schema-check a JSON config document and build a RunConfig."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(".: config must be a JSON object")
    _validate(doc, CONFIG_SCHEMA)
    base = Path(base_dir) if base_dir else Path.cwd()

    spec = None
    if "spec" in doc:
        spec = spec_from_dict(doc["spec"])
    elif "spec_path" in doc:
        path = base / doc["spec_path"]
        if not path.exists():
            raise ConfigError(f".spec_path: file not found: {path}")
        sdoc = json.loads(path.read_text())
        _validate(sdoc, SPEC_SCHEMA)
        spec = spec_from_dict(sdoc, where=".spec_path")

    fading = doc.get("fading")
    if fading is not None:
        fading = dict(fading)
        fam = fading["family"]
        need = {"rayleigh": "mean_snr", "point_mass": "snr", "grid": "path"}[fam]
        if need not in fading:
            raise ConfigError(f".fading.{need}: required field missing for family {fam!r}")
        if fam == "grid":
            path = base / fading["path"]
            if not path.exists():
                raise ConfigError(f".fading.path: file not found: {path}")
            fading["path"] = str(path)

    mode = doc["mode"]
    if mode == "capacity" and spec is None:
        raise ConfigError(".spec: required field missing for mode 'capacity'")
    if mode == "simulate" and spec is None and fading is None:
        raise ConfigError(".spec: required field missing for mode 'simulate'")
    if mode == "fading" and fading is None:
        raise ConfigError(".fading: required field missing for mode 'fading'")
    sim = doc.get("simulation", {})
    if sim.get("state_process") == "markov" and "transition" not in sim:
        raise ConfigError(".simulation.transition: required field missing for markov state process")

    solver = doc.get("solver", {})
    out = doc.get("output", {})
    return RunConfig(
        mode=mode,
        spec=spec,
        tol=solver.get("tol", DEFAULT_TOL),
        max_iter=solver.get("max_iter", DEFAULT_MAX_ITER),
        simulation=dict(sim),
        fading=fading,
        oracle=dict(doc.get("oracle", {})),
        example=dict(doc.get("example", {})),
        report_path=out.get("report"),
        trace_path=out.get("trace"),
    )


# -- reports ----------------------------------------------------------------

def _rho_to_json(rho: float) -> dict:
    if math.isinf(rho):
        return {"tag": "inf", "value": None}
    return {"tag": "finite", "value": float(rho)}


def _rho_from_json(obj: dict) -> float:
    return math.inf if obj["tag"] == "inf" else float(obj["value"])


def report_to_dict(report: CapacityReport, joint, labels=None) -> dict:
    n1, n2 = report.per_state.shape
    lab1, lab2 = labels or ([str(i) for i in range(n1)], [str(j) for j in range(n2)])
    ps = report.per_state
    checks = report.checks(joint)
    return {
        "rho_opt": _rho_to_json(report.rho_opt),
        "coin_prob_opt": float(report.coin_prob_opt),
        "c1_bits": float(report.c1_bits),
        "c2_bits": float(report.c2_bits),
        "capacity_bits": float(report.capacity_bits),
        "policy": {
            "labels_s1": list(lab1),
            "labels_s2": list(lab2),
            "decision": report.policy.table(),
            "coin_prob": report.policy.coin_prob,
        },
        "per_state": {
            "a": [float(x) for x in ps.a],
            "b": [float(x) for x in ps.b],
            "argmax_inputs_sr": [np.asarray(p).tolist() for p in ps.argmax_inputs_sr],
            "argmax_inputs_rd": [np.asarray(p).tolist() for p in ps.argmax_inputs_rd],
            "gaps_sr": [float(g) for g in ps.gaps_sr],
            "gaps_rd": [float(g) for g in ps.gaps_rd],
        },
        "boundary": report.boundary,
        "degenerate": report.degenerate,
        "notes": list(report.notes),
        "checks": checks,
    }


def report_from_dict(doc: dict) -> CapacityReport:
    ps = doc["per_state"]
    caps = PerStateCapacities(
        np.array(ps["a"], float), np.array(ps["b"], float),
        tuple(np.array(p) for p in ps.get("argmax_inputs_sr", [])),
        tuple(np.array(p) for p in ps.get("argmax_inputs_rd", [])),
        tuple(ps.get("gaps_sr", [])), tuple(ps.get("gaps_rd", [])),
    )
    pol = doc["policy"]
    policy = LinkSelectionPolicy(
        tuple(tuple(Decision(v) for v in row) for row in pol["decision"]),
        pol["coin_prob"],
    )
    return CapacityReport(
        rho_opt=_rho_from_json(doc["rho_opt"]),
        coin_prob_opt=doc["coin_prob_opt"],
        c1_bits=doc["c1_bits"],
        c2_bits=doc["c2_bits"],
        capacity_bits=doc["capacity_bits"],
        policy=policy,
        per_state=caps,
        boundary=doc.get("boundary", False),
        degenerate=doc.get("degenerate", False),
        notes=tuple(doc.get("notes", ())),
    )


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False, default=_json_default) + "\n"


def _fmt_tol(x: float) -> str:
    mant, exp = f"{x:.0e}".split("e")
    return f"{mant}e{int(exp)}"


# -- runners ----------------------------------------------------------------

def _labels(spec: RelayChannelSpec):
    return spec.states.labels_s1, spec.states.labels_s2


def _run_capacity(cfg: RunConfig) -> tuple[dict, bool]:
    report = solve_capacity(cfg.spec, tol=cfg.tol, max_iter=cfg.max_iter)
    doc = report_to_dict(report, cfg.spec.joint_pmf.probs, _labels(cfg.spec))
    doc["spec_name"] = cfg.spec.name
    return doc, all(doc["checks"].values())


def _fading_model(fcfg: dict):
    fam = fcfg["family"]
    if fam == "rayleigh":
        m1, m2 = fcfg["mean_snr"]
        return fa.RayleighFading(m1, m2, nodes=fcfg.get("nodes", fa.DEFAULT_NODES))
    if fam == "point_mass":
        return fa.DiscreteFading.point_mass(*fcfg["snr"])
    return fa.DiscreteFading.from_file(fcfg["path"])


def _fading_doc(rep: fa.FadingCapacityReport, model) -> tuple[dict, bool]:
    e1, e2 = model.mean_capacities()
    scale = max(rep.c1_bits, rep.c2_bits, 1e-300)
    checks = {
        "balance": abs(rep.c1_bits - rep.c2_bits) <= 1e-6 * scale
        if rep.method != "discrete" else abs(rep.c1_bits - rep.c2_bits) <= 1e-9,
        "capacity_below_hop_averages": rep.capacity_bits <= min(e1, e2) * (1 + 1e-9),
    }
    doc = {
        "family": model.family,
        "rho_opt": _rho_to_json(rep.rho_opt),
        "coin_prob": rep.coin_prob,
        "c1_bits": rep.c1_bits,
        "c2_bits": rep.c2_bits,
        "capacity_bits": rep.capacity_bits,
        "method": rep.method,
        "boundary": rep.boundary,
        "mean_hop_capacities": [e1, e2],
        "diagnostics": rep.diagnostics,
        "checks": checks,
    }
    return doc, all(checks.values())


def _run_fading(cfg: RunConfig) -> tuple[dict, bool]:
    model = _fading_model(cfg.fading)
    rep = fa.solve_rho(model, tol=cfg.fading.get("tol", 1e-9))
    return _fading_doc(rep, model)


def _sim_params(cfg: RunConfig, capacity: float) -> dict:
    sim = cfg.simulation
    eps = sim.get("epsilon")
    if eps is None:
        eps = sim.get("epsilon_fraction", 0.0) * capacity
    return {
        "blocks": sim.get("blocks", 100_000),
        "epsilon": float(eps),
        "seed": sim.get("seed", 0),
        "block_length": sim.get("block_length", 2 ** 40),
        "decimation": sim.get("decimation", 1000),
    }


def _run_simulate(cfg: RunConfig) -> tuple[dict, bool, Any]:
    if cfg.spec is None:
        model = _fading_model(cfg.fading)
        rep = fa.solve_rho(model)
        par = _sim_params(cfg, rep.capacity_bits)
        if isinstance(model, fa.DiscreteFading):
            caps, joint = model.capacities(), model.probs
            policy = solve_from_capacities(caps, joint).policy
            trace = simulate(SimConfig(caps, joint, policy, **par))
        else:
            trace = simulate_fading(model, rep.rho_opt, **par)
        capacity, rho = rep.capacity_bits, rep.rho_opt
        baseline = None
    else:
        report = solve_capacity(cfg.spec, tol=cfg.tol, max_iter=cfg.max_iter)
        par = _sim_params(cfg, report.capacity_bits)
        sim = cfg.simulation
        scfg = SimConfig(
            report.per_state, cfg.spec.joint_pmf.probs, report.policy,
            state_process=sim.get("state_process", "iid"),
            transition=None if "transition" not in sim else np.asarray(sim["transition"], float),
            labels_s1=cfg.spec.states.labels_s1, labels_s2=cfg.spec.states.labels_s2,
            **par,
        )
        trace = simulate(scfg)
        capacity, rho = report.capacity_bits, report.rho_opt
        baseline = None
        if sim.get("baseline", False):
            baseline = baseline_alternating(report.per_state, cfg.spec.joint_pmf.probs, par["blocks"],
                                            seed=par["seed"], epsilon=par["epsilon"],
                                            block_length=par["block_length"])
    summary = trace.summary()
    checks = {
        "queue_nonnegative": summary["queue_nonnegative"],
        "conservation": summary["conservation_holds"],
    }
    doc = {
        "capacity_bits": capacity,
        "rho_opt": _rho_to_json(rho),
        "parameters": par,
        "trace": summary,
        "queue_samples": trace.queue_samples,
        "checks": checks,
    }
    if baseline is not None:
        doc["baseline_alternating"] = baseline.summary()
    return doc, all(checks.values()), trace


def _run_oracle(cfg: RunConfig) -> tuple[dict, bool]:
    o = cfg.oracle
    res = oracle_check(seed=o.get("seed", 7), trials=o.get("trials", 200),
                       grid_steps=o.get("grid_steps", 2001), atol=o.get("atol", 2e-3))
    res["summary"] = f"{res['passed']}/{res['trials']} within {_fmt_tol(res['atol'])}"
    res["checks"] = {"all_within_tolerance": res["passed"] == res["trials"]}
    return res, res["passed"] == res["trials"]


# -- built-in worked examples ----------------------------------------------

ONOFF_JOINTS = {
    1: [[0.3, 0.1], [0.5, 0.1]],
    2: [[0.3, 0.5], [0.1, 0.1]],
    3: [[0.25, 0.25], [0.25, 0.25]],
}


def onoff_closed_form(A: float, B: float, joint) -> tuple[int, float]:
    """Case number and capacity of the two-state ON-OFF channel."""
    p = np.asarray(joint, float)
    p_s1_on = p[1, :].sum()
    p_s2_on = p[:, 1].sum()
    if p_s2_on * B < p[1, 0] * A:
        return 1, p_s2_on * B
    if p_s1_on * A < p[0, 1] * B:
        return 2, p_s1_on * A
    return 3, A * B / (A + B) * (1.0 - p[0, 0])


def _close(x, y, rtol=1e-9):
    return abs(x - y) <= rtol * max(abs(y), 1e-300)


def _example_fixed(A: float, B: float) -> dict:
    rep = solve_from_capacities(PerStateCapacities([A], [B]), [[1.0]])
    exp = {"rho_opt": B / A, "coin_prob_opt": A / (A + B), "capacity_bits": A * B / (A + B)}
    got = {"rho_opt": rep.rho_opt, "coin_prob_opt": rep.coin_prob_opt, "capacity_bits": rep.capacity_bits}
    return {"name": "fixed", "A": A, "B": B, "expected": exp, "computed": got,
            "ok": all(_close(got[k], exp[k]) for k in exp)}


def _example_onoff(A: float, B: float, joint) -> dict:
    case, cap = onoff_closed_form(A, B, joint)
    rep = solve_from_capacities(PerStateCapacities([0.0, A], [0.0, B]), joint)
    exp = {"case": case, "capacity_bits": cap}
    got = {"capacity_bits": rep.capacity_bits, "rho_opt": _rho_to_json(rep.rho_opt),
           "coin_prob_opt": rep.coin_prob_opt, "decision": rep.policy.table()}
    return {"name": "onoff", "A": A, "B": B, "joint": np.asarray(joint, float).tolist(),
            "expected": exp, "computed": got, "ok": _close(rep.capacity_bits, cap)}


def _example_rayleigh(mean_snr: float) -> dict:
    model = fa.RayleighFading(mean_snr, mean_snr)
    rep = fa.solve_rho(model)
    A = B = math.log2(1 + mean_snr)
    point = fa.solve_rho(fa.DiscreteFading.point_mass(mean_snr, mean_snr))
    exp = {"rho_opt": 1.0, "point_mass_capacity_bits": A * B / (A + B)}
    got = {"rho_opt": rep.rho_opt, "capacity_bits": rep.capacity_bits,
           "point_mass_capacity_bits": point.capacity_bits}
    ok = abs(rep.rho_opt - 1.0) <= 1e-3 and _close(point.capacity_bits, A * B / (A + B), 1e-6)
    return {"name": "rayleigh", "mean_snr": [mean_snr, mean_snr], "expected": exp, "computed": got, "ok": ok}


def _run_example(cfg: RunConfig) -> tuple[dict, bool]:
    ex = cfg.example
    name = ex.get("name", "all")
    results = []
    if name in ("all", "fixed"):
        results.append(_example_fixed(ex.get("A", 2.0), ex.get("B", 1.0)))
    if name in ("all", "onoff"):
        joint = ex.get("joint") or ONOFF_JOINTS[ex.get("case", 3)]
        results.append(_example_onoff(ex.get("A", 1.0), ex.get("B", 1.0), joint))
    if name in ("all", "rayleigh"):
        results.append(_example_rayleigh(ex.get("mean_snr", 10.0)))
    ok = all(r["ok"] for r in results)
    return {"examples": results, "checks": {"all_examples_match": ok}}, ok


def _example_lines(doc: dict) -> list[str]:
    lines = []
    for r in doc["examples"]:
        for key, exp in r["expected"].items():
            if key == "case":
                lines.append(f"[{r['name']}] case {exp}")
                continue
            got = r["computed"].get(key)
            lines.append(f"[{r['name']}] {key}: expected {exp:.6f} computed {got:.6f}")
        lines.append(f"[{r['name']}] {'ok' if r['ok'] else 'MISMATCH'}")
    return lines


def _atomic_write(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-", suffix=target.suffix)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg``; returns the process exit status (0 iff all checks pass)."""
    stdout = stdout or sys.stdout
    written: list[str] = []
    try:
        trace = None
        if cfg.mode == "capacity":
            doc, ok = _run_capacity(cfg)
        elif cfg.mode == "fading":
            doc, ok = _run_fading(cfg)
        elif cfg.mode == "simulate":
            doc, ok, trace = _run_simulate(cfg)
        elif cfg.mode == "oracle-check":
            doc, ok = _run_oracle(cfg)
        elif cfg.mode == "example":
            doc, ok = _run_example(cfg)
        else:
            raise ConfigError(f"unknown mode {cfg.mode!r}")
        report = {"schema": SCHEMA_VERSION, "mode": cfg.mode, **doc, "ok": bool(ok)}
        text = dumps(report)

        if trace is not None and cfg.trace_path:
            trace.write_csv(cfg.trace_path)
            written.append(cfg.trace_path)
        if cfg.report_path:
            _atomic_write(cfg.report_path, text)
            written.append(cfg.report_path)

        if cfg.mode == "example":
            print("\n".join(_example_lines(report)), file=stdout)
        elif cfg.mode == "oracle-check":
            print(report["summary"], file=stdout)
        elif not cfg.report_path:
            stdout.write(text)
        if cfg.report_path and cfg.mode not in ("example", "oracle-check"):
            print(f"report written to {cfg.report_path} ({'ok' if ok else 'CHECKS FAILED'})", file=stdout)
        return 0 if ok else 1
    except Exception as exc:
        for path in written:
            if os.path.exists(path):
                os.unlink(path)
        print(f"error: {exc}", file=sys.stderr)
        return 2


# -- command line -----------------------------------------------------------

def _parse_assignments(tokens: list[str]) -> tuple[str, dict]:
    name = "all"
    params: dict[str, Any] = {}
    for tok in tokens:
        if "=" in tok:
            key, val = tok.split("=", 1)
            key = key.strip()
            if key == "case":
                params["case"] = int(val)
            elif key in ("A", "B", "mean_snr"):
                params[key] = float(val)
            elif key in ("p11", "p12", "p21", "p22"):
                params.setdefault("_p", {})[key] = float(val)
            else:
                raise ConfigError(f"unknown example parameter {key!r}")
        elif tok == "uniform":
            params["joint"] = ONOFF_JOINTS[3]
        elif tok in ("all", "fixed", "onoff", "rayleigh"):
            name = tok
        else:
            raise ConfigError(f"unexpected example argument {tok!r}")
    if "_p" in params:
        p = params.pop("_p")
        params["joint"] = [[p.get("p11", 0.0), p.get("p12", 0.0)], [p.get("p21", 0.0), p.get("p22", 0.0)]]
    return name, params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdrelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--seed", type=int)
        p.add_argument("--tol", type=float)
        return p

    c = common(sub.add_parser("capacity", help="capacity of a discrete channel spec"))
    c.add_argument("--spec", help="JSON channel-spec document")
    s = common(sub.add_parser("simulate", help="buffer-aided protocol simulation"))
    s.add_argument("--spec", help="JSON channel-spec document")
    s.add_argument("--blocks", type=int)
    s.add_argument("--epsilon", type=float, help="rate back-off in bits per channel use")
    s.add_argument("--trace", help="write the decimated CSV trace here")
    s.add_argument("--baseline", action="store_true", help="also run the alternating baseline")
    f = common(sub.add_parser("fading", help="capacity of a fading AWGN relay channel"))
    f.add_argument("--mean-snr", type=float, nargs=2, metavar=("SNR1", "SNR2"))
    o = common(sub.add_parser("oracle-check", help="compare solver and brute-force oracle"))
    o.add_argument("--trials", type=int)
    o.add_argument("--grid-steps", type=int)
    o.add_argument("params", nargs="*", help="seed=N trials=N")
    e = common(sub.add_parser("example", help="built-in worked examples"))
    e.add_argument("params", nargs="*", help="fixed A=2 B=1 | onoff case=3 uniform | rayleigh")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    mode = args.command
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict):
            raise ConfigError(".: config must be a JSON object")
        base = path.parent
    else:
        doc = {}
        base = Path.cwd()
    doc["mode"] = mode

    if getattr(args, "spec", None):
        doc.pop("spec", None)
        doc["spec_path"] = str(Path(args.spec).resolve())
    if args.tol is not None:
        if mode == "fading":
            doc.setdefault("fading", {"family": "rayleigh", "mean_snr": [10.0, 10.0]})["tol"] = args.tol
        else:
            doc.setdefault("solver", {})["tol"] = args.tol
    if args.out:
        doc.setdefault("output", {})["report"] = args.out

    if mode == "simulate":
        sim = doc.setdefault("simulation", {})
        for key in ("blocks", "epsilon", "seed"):
            val = getattr(args, key)
            if val is not None:
                sim[key] = val
        if args.epsilon is not None:
            sim.pop("epsilon_fraction", None)
        if args.baseline:
            sim["baseline"] = True
        if args.trace:
            doc.setdefault("output", {})["trace"] = args.trace
    elif mode == "fading":
        if args.mean_snr:
            doc["fading"] = {**doc.get("fading", {}), "family": "rayleigh", "mean_snr": list(args.mean_snr)}
        doc.setdefault("fading", {"family": "rayleigh", "mean_snr": [10.0, 10.0]})
    elif mode == "oracle-check":
        orc = doc.setdefault("oracle", {})
        for tok in args.params:
            key, _, val = tok.partition("=")
            if key not in ("seed", "trials", "grid_steps", "atol") or not val:
                raise ConfigError(f"unexpected oracle-check argument {tok!r}")
            orc[key] = float(val) if key == "atol" else int(val)
        if args.seed is not None:
            orc["seed"] = args.seed
        if args.trials is not None:
            orc["trials"] = args.trials
        if args.grid_steps is not None:
            orc["grid_steps"] = args.grid_steps
    elif mode == "example":
        name, params = _parse_assignments(args.params)
        ex = doc.setdefault("example", {})
        ex.update(params)
        if args.params or "name" not in ex:
            ex["name"] = name

    return parse_config(json.dumps(doc), base_dir=base)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
