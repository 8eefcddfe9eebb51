"""Command-line front end: ``qdynent <experiment> --config run.json --out DIR``.

Every run writes tidy CSV files (12 significant digits, ``#`` legend lines
above the header) and a ``manifest.json`` holding the resolved configuration,
its SHA-256, library versions and all scalar results. Nothing in the output
depends on wall-clock time, so identical configurations give identical bytes.

Exit codes: 0 success, 2 invalid configuration, 3 outcome-tree budget
exceeded, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .gaussian import (
    MAX_STEPS,
    BosonModel,
    GaussianError,
    entropy_ledger_gaussian,
)
from .ledger import fmt, legend_lines
from .monitor import (
    DEFAULT_BUDGET,
    FIG2,
    BudgetError,
    ConsistencyError,
    decay_fit,
    fig2_run,
    oscillator_ledger,
)
from .operators import OperatorError
from .spectral import (
    CONVENTIONS,
    REFERENCE_TIGHT,
    REFERENCE_UNTIGHT,
    QuadratureError,
    fdt_complete,
    load_spectrum,
    maximize_fdt,
    purification_bound,
    purification_rate_resummed,
    scnt_rate,
    spectral_from_function,
    untight_bound_constant,
)

EXPERIMENTS = ("fig2a", "fig2b", "fig2c", "fig2d", "fig3", "bounds", "converge", "oracle")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    """The configuration document violates a precondition."""


# --------------------------------------------------------------------------
# configuration schemas and defaults
# --------------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}


def _int(lo=None, hi=None):
    s = {"type": "integer"}
    if lo is not None:
        s["minimum"] = lo
    if hi is not None:
        s["maximum"] = hi
    return s


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


def _fig2_schema(micro: bool):
    gamma = {"type": "number", "minimum": -1, "maximum": 1} if micro else _num
    return _obj({
        "L": {"type": "array", "items": _int(2, 12), "minItems": 1, "uniqueItems": True},
        "n": _int(1), "h": _num, "J": _num, "gamma": gamma, "beta": _nonneg, "dt": _pos,
        "budget": _int(1),
    })


_MAXIMIZER = _obj({
    "beta": _pos,
    "convention": {"enum": list(CONVENTIONS)},
    "fdt": {"type": "boolean"},
    "y_min": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-4},
    "y_max": {"type": "number", "minimum": 30},
    "n_geo": _int(10),
    "dy": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "max_iter": _int(1),
    "starts": {"type": "array", "items": {"enum": ["flat", "inverse", "untight"]},
               "minItems": 1, "uniqueItems": True},
})

_CONVERGE = _obj({
    "shape": _obj({"kind": {"enum": ["gaussian", "lorentzian"]},
                   "amplitude": _nonneg, "width": _pos}),
    "spectrum": {"type": "string"},
    "beta": _pos, "n_modes": _int(1, 5000), "omega_max": _pos, "dt": _pos,
    "n": _int(1, MAX_STEPS), "spectral_points": _int(9), "spectral_omega_max": _pos,
    "convention": {"enum": list(CONVENTIONS)}, "tolerance": _pos,
})

_ORACLE_CASE = _obj({
    "omega": _pos, "lam": _num, "beta": _pos, "dt": _pos, "n": _int(1),
    "n_max": _int(20), "nodes": _int(4), "margin": _pos,
})

_ORACLE = _obj({
    "cases": {"type": "array", "items": _ORACLE_CASE, "minItems": 1},
    "tolerance": _pos, "budget": _int(1),
})

_FIG2_COMMON = dict(n=8, h=FIG2["h"], J=FIG2["J"], gamma=FIG2["gamma"], beta=FIG2["beta"],
                    dt=FIG2["dt"], budget=DEFAULT_BUDGET)
_MAX_DEFAULTS = dict(beta=1.0, convention="mode_sum", fdt=True, y_min=1e-4, y_max=30.0,
                     n_geo=80, dy=0.1, max_iter=20000, starts=["flat", "inverse", "untight"])
_ORACLE_CASE_DEFAULTS = dict(omega=1.0, lam=0.3, beta=1.0, dt=0.25, n=4, n_max=60, nodes=20,
                             margin=6.0)

SCHEMAS = {
    "fig2a": _fig2_schema(True), "fig2c": _fig2_schema(True),
    "fig2b": _fig2_schema(False), "fig2d": _fig2_schema(False),
    "fig3": _MAXIMIZER, "bounds": _MAXIMIZER, "converge": _CONVERGE, "oracle": _ORACLE,
}

DEFAULTS = {
    "fig2a": dict(L=[6, 8], **_FIG2_COMMON),
    "fig2c": dict(L=[6, 8], **_FIG2_COMMON),
    "fig2b": dict(L=[4, 6, 8], **_FIG2_COMMON),
    "fig2d": dict(L=[4, 6, 8], **_FIG2_COMMON),
    "fig3": _MAX_DEFAULTS,
    "bounds": _MAX_DEFAULTS,
    "converge": dict(shape=dict(kind="gaussian", amplitude=1.0, width=2.0), beta=1.0,
                     n_modes=200, omega_max=10.0, dt=0.05, n=2000, spectral_points=8001,
                     spectral_omega_max=40.0, convention="mode_sum", tolerance=0.02),
    "oracle": dict(cases=[_ORACLE_CASE_DEFAULTS], tolerance=1e-3, budget=DEFAULT_BUDGET),
}

_DOCUMENT = _obj({
    "experiment": {"enum": list(EXPERIMENTS)},
    "seed": _int(0),
    "params": {"type": "object"},
})


def _first_error(schema, doc, where: str):
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(doc))
    if err is not None:
        path = "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(f"{where}{'/' + path if path else ''}: {err.message}")


def resolve_config(experiment: str, document: dict | None) -> dict:
    """Validate ``document`` and merge it over the experiment defaults."""
    document = {} if document is None else document
    _first_error(_DOCUMENT, document, "config")
    if document.get("experiment", experiment) != experiment:
        raise ConfigError(
            f"config is for experiment {document['experiment']!r}, not {experiment!r}")
    params = document.get("params", {})
    _first_error(SCHEMAS[experiment], params, "params")
    merged = copy.deepcopy(DEFAULTS[experiment])
    for key, value in params.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    if experiment == "oracle":
        merged["cases"] = [{**_ORACLE_CASE_DEFAULTS, **c} for c in merged["cases"]]
    _check_semantics(experiment, merged)
    return {"experiment": experiment, "seed": int(document.get("seed", 0)), "params": merged}


def _check_semantics(experiment: str, p: dict):
    """Preconditions that a schema cannot express, checked before any work starts."""
    if experiment.startswith("fig2"):
        leaves = 2 ** p["n"]
        if leaves > p["budget"]:
            raise BudgetError(leaves, p["budget"])
    elif experiment == "oracle":
        for c in p["cases"]:
            leaves = c["nodes"] ** c["n"]
            if leaves > p["budget"]:
                raise BudgetError(leaves, p["budget"])
    elif experiment == "converge":
        if "spectrum" in p and not Path(p["spectrum"]).is_file():
            raise ConfigError(f"params/spectrum: file {p['spectrum']!r} not found")
        if p["spectral_points"] % 2 == 0:
            raise ConfigError("params/spectral_points: must be odd (grid must contain 0)")


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def write_table(path: Path, legend: dict, rows) -> None:
    """CSV with ``# column: meaning`` legend lines, a header and 12-digit values."""
    lines = [legend_lines(legend), ",".join(legend) + "\n"]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    path.write_text("".join(lines))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(fmt(x))
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _pmap(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def _fig2(kind: str, per_step: bool, p: dict, out: Path, threads: int, name: str) -> dict:
    def one(L):
        return fig2_run(L, kind, p["n"], h=p["h"], J=p["J"], gamma=p["gamma"],
                        beta=p["beta"], dt=p["dt"], budget=p["budget"])

    Ls = sorted(p["L"])
    ledgers = _pmap(one, Ls, threads)
    results = {}
    rows = []
    for L, led in zip(Ls, ledgers):
        led.to_csv(out / f"{name}_ledger_L{L}.csv")
        t = np.arange(1, led.n + 1) * led.dt
        if per_step:
            rows += [(L, s, js) for s, js in enumerate(led.J_s, 1)]
            if led.n >= 3:
                rate, r2 = decay_fit(led.J_s)
                results[f"L{L}_decay_rate"] = rate
                results[f"L{L}_decay_r2"] = r2
        else:
            rows += [(L, s, ts, jt, jt / ts) for s, (ts, jt) in enumerate(zip(t, led.J_t), 1)]
        results[f"L{L}_J_over_t"] = led.J / led.t
        results[f"L{L}_S_CNT"] = led.S_CNT
    if per_step:
        legend = {"L": "chain length", "s": "monitoring step",
                  "J_s": "single-step purification (nats)"}
    else:
        legend = {"L": "chain length", "s": "number of steps", "t": "elapsed time s*dt",
                  "J_t": "purification after s steps (nats)", "J_over_t": "J_t / t"}
    write_table(out / f"{name}.csv", legend, rows)
    jt = [results[f"L{L}_J_over_t"] for L in Ls]
    results["J_over_t_range"] = max(jt) - min(jt)
    return results


def _maximize(p: dict, threads: int):
    return maximize_fdt(beta=p["beta"], fdt=p["fdt"], convention=p["convention"],
                        y_min=p["y_min"], y_max=p["y_max"], n_geo=p["n_geo"], dy=p["dy"],
                        max_iter=p["max_iter"], starts=tuple(p["starts"]), threads=threads)


def _fig3(p: dict, out: Path, threads: int) -> dict:
    res = _maximize(p, threads)
    write_table(out / "fig3.csv",
                {"y": "beta * omega (y > 0; G_K is even)", "G_K": "maximizing Keldysh spectrum"},
                zip(res.y, res.G_K))
    summary = res.summary()
    _write_json(out / "fig3.json", {**summary, "reference_value": REFERENCE_TIGHT})
    return {"beta_s_CNT": res.value, "alpha": res.alpha, "prefactor": res.prefactor,
            "converged": res.converged, "reference_value": REFERENCE_TIGHT}


def _bounds(p: dict, out: Path, threads: int) -> dict:
    res = _maximize({**p, "fdt": True}, threads)
    data = {
        "untight": untight_bound_constant(),
        "tight": res.value,
        "tight_alpha": res.alpha,
        "purification": purification_bound(),
        "pi_over_8": np.pi / 8,
        "convention": p["convention"],
        "reference_untight": REFERENCE_UNTIGHT,
        "reference_tight": REFERENCE_TIGHT,
    }
    _write_json(out / "bounds.json", data)
    return {k: v for k, v in data.items() if k != "convention"}


def _target_spectrum(p: dict):
    """Return ``(gk(omega >= 0), SpectralData)`` for the converge experiment."""
    if "spectrum" in p:
        omega, g = load_spectrum(p["spectrum"])
        pos = omega >= 0

        def gk(w):
            return np.interp(w, omega[pos], g[pos], right=0.0)

        return gk, fdt_complete(omega, g, p["beta"], p["convention"])
    shape = p["shape"]
    a, w0 = shape["amplitude"], shape["width"]
    if shape["kind"] == "gaussian":
        def gk(w):
            return a * np.exp(-np.asarray(w) ** 2 / (2 * w0**2))
    else:
        def gk(w):
            return a / (1 + (np.asarray(w) / w0) ** 2)
    sd = spectral_from_function(gk, p["beta"], p["spectral_omega_max"], p["spectral_points"],
                                p["convention"])
    return gk, sd


def _converge(p: dict, out: Path, threads: int) -> dict:
    gk, sd = _target_spectrum(p)
    model = BosonModel.from_keldysh(gk, p["beta"], p["n_modes"], p["omega_max"])
    led = entropy_ledger_gaussian(model, p["dt"], p["n"])
    led.to_csv(out / "converge_ledger.csv")
    rates = scnt_rate(sd)
    resummed = purification_rate_resummed(sd)
    pairs = [
        ("S_CNT_per_t", led.S_CNT / led.t, rates.s_CNT),
        ("J_per_t", led.J / led.t, rates.purification),
        ("J_per_t_resummed", led.J / led.t, resummed),
        ("S_joint_per_t", led.S_cl_joint / led.t, rates.joint),
    ]
    rows = [(name, e, s, abs(e - s) / abs(s)) for name, e, s in pairs]
    write_table(out / "converge.csv",
                {"quantity": "rate compared", "engine": "finite-N, finite-t Gaussian engine",
                 "spectral": "asymptotic spectral formula", "rel_diff": "|engine/spectral - 1|"},
                rows)
    _write_json(out / "rates.json", {**rates.as_dict(), "purification_resummed": resummed})
    results = {f"{name}_{col}": v for name, e, s, r in rows
               for col, v in (("engine", e), ("spectral", s), ("rel_diff", r))}
    results["within_tolerance"] = {name: r <= p["tolerance"] for name, _, _, r in rows}
    return results


def _oracle(p: dict, out: Path, threads: int) -> dict:
    def one(c):
        exact = oscillator_ledger(c["omega"], c["lam"], c["beta"], c["dt"], c["n"],
                                  n_max=c["n_max"], nodes=c["nodes"], margin=c["margin"],
                                  budget=p["budget"])
        gauss = entropy_ledger_gaussian(BosonModel.single(c["omega"], c["lam"], c["beta"]),
                                        c["dt"], c["n"])
        return exact, gauss

    pairs = _pmap(one, p["cases"], threads)
    rows = []
    tol = p["tolerance"]
    for i, (exact, gauss) in enumerate(pairs):
        items = [("J", exact.J, gauss.J)]
        items += [(f"J_s[{s}]", a, b) for s, (a, b) in enumerate(zip(exact.J_s, gauss.J_s), 1)]
        for q, a, b in items:
            rel = abs(a - b) / max(abs(b), 1e-300)
            rows.append((i, q, a, b, rel, "pass" if rel <= tol else "fail"))
    write_table(out / "oracle.csv",
                {"case": "index into params.cases", "quantity": "compared quantity",
                 "exact": "truncated-oscillator brute force", "gaussian": "Gaussian engine",
                 "rel_err": "relative difference", "status": f"pass if rel_err <= {fmt(tol)}"},
                rows)
    return {"checks": len(rows), "failures": sum(r[-1] == "fail" for r in rows),
            "max_rel_err": max(r[4] for r in rows), "all_passed": all(r[-1] == "pass" for r in rows)}


def run(experiment: str, config: dict, out: Path, threads: int = 1) -> dict:
    """Run a resolved configuration; returns the manifest that was written."""
    out.mkdir(parents=True, exist_ok=True)
    p = config["params"]
    if experiment in ("fig2a", "fig2b", "fig2c", "fig2d"):
        kind = "micro" if experiment in ("fig2a", "fig2c") else "meso"
        results = _fig2(kind, experiment in ("fig2a", "fig2b"), p, out, threads, experiment)
    elif experiment == "fig3":
        results = _fig3(p, out, threads)
    elif experiment == "bounds":
        results = _bounds(p, out, threads)
    elif experiment == "converge":
        results = _converge(p, out, threads)
    elif experiment == "oracle":
        results = _oracle(p, out, threads)
    else:  # pragma: no cover - guarded by argparse
        raise ConfigError(f"unknown experiment {experiment!r}")
    manifest = {
        "experiment": experiment,
        "config": config,
        "config_sha256": config_hash(config),
        "versions": {"qdynent": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "results": results,
        "files": sorted(f.name for f in out.iterdir() if f.name != "manifest.json"),
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdynent", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON run document")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (>= 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        document = None
        if args.config is not None:
            try:
                document = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {str(args.config)!r}: {exc}") from exc
        config = resolve_config(args.experiment, document)
        manifest = run(args.experiment, config, args.out, args.threads)
    except BudgetError as exc:
        print(f"budget error: {exc} (required {exc.required})", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, OperatorError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConsistencyError, GaussianError, QuadratureError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_plain(manifest["results"]), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
