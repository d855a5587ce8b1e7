"""Command-line runner: ``taufix <subcommand> [--config FILE] [--out DIR]``.

Each subcommand starts from its packaged default configuration, deep-merges
the user file over it, validates the result against the shipped JSON schema
and writes ``report.json`` and ``residuals.csv`` into the output directory.

Exit status: 0 when every certificate passes, 2 when a certificate or a
model invariant fails, 1 for usage and configuration errors.
"""

import argparse
import copy
import csv
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import blcert, contraction, dynamics, fock, picard
from .errors import TaufixError
from .seminorm import Panel

log = logging.getLogger("taufix")

SCHEMA_VERSION = 1
REPORT_VERSION = 1
SUBCOMMANDS = ("fixedpoint", "ode", "heisenberg", "cutoff", "blcert", "panel")
CSV_HEADER = ["n", "index_id", "residual", "rate"]


class ConfigError(Exception):
    pass


def _data(name):
    return resources.files("taufix").joinpath("data", name)


def load_schema():
    return json.loads(_data("config.schema.json").read_text())


def load_default(subcommand):
    return json.loads(_data(f"defaults/{subcommand}.json").read_text())


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def build_config(subcommand, path=None, seed=None):
    cfg = load_default(subcommand)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        # A panel given as explicit indices replaces the product form entirely.
        if "panel" in user and "indices" in user["panel"]:
            cfg["panel"] = {}
        cfg = deep_merge(cfg, user)
    if seed is not None:
        cfg["seed"] = seed
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return cfg


# -- operators named in configs ---------------------------------------------

def random_operator(rng, D, hermitian=False):
    """Entries uniform in the complex unit disk; optionally Hermitian-symmetrized."""
    r = np.sqrt(rng.random((D, D)))
    theta = 2 * np.pi * rng.random((D, D))
    x = r * np.exp(1j * theta)
    if hermitian:
        x = (x + x.conj().T) / 2
    return x


def make_operator(spec, D, rng):
    kind = spec["kind"]
    a, ad = fock.ladder_ops(D)
    if kind == "zero":
        x = np.zeros((D, D), dtype=np.complex128)
    elif kind == "identity":
        x = fock.identity(D)
    elif kind == "number":
        x = fock.number_op(D)
    elif kind == "annihilation":
        x = a
    elif kind == "creation":
        x = ad
    elif kind == "ladder_sum":
        x = a + ad
    elif kind == "projector":
        x = fock.spectral_projector(fock.number_op(D), spec.get("index", 0))
    else:
        x = random_operator(rng, D, spec.get("hermitian", False))
    return spec.get("scale", 1.0) * np.asarray(x, dtype=np.complex128)


# -- report plumbing --------------------------------------------------------

def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return {"re": clean(obj.real), "im": clean(obj.imag)}
    return obj


def write_outputs(out, report, rows):
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(clean(report), sort_keys=True, indent=2) + "\n"
    (out / "report.json").write_text(text)
    with open(out / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for n, label, res, rate in rows:
            w.writerow([n, label, repr(float(res)), "" if rate == "" else repr(float(rate))])


def _panel(cfg):
    return Panel.from_json(cfg["panel"], cfg["dimension"])


def _hamiltonian(cfg):
    if cfg["panel"]["generator"] != "H":
        raise ConfigError("dynamics subcommands need a panel generator 'H' (shift + N)")
    return _panel(cfg).generator


# -- subcommands ------------------------------------------------------------

def run_fixedpoint(cfg, rng):
    block = cfg["fixedpoint"]
    panel = _panel(cfg)
    D = cfg["dimension"]
    spec = block["map"]
    if spec["kind"] == "sandwich":
        T = contraction.sandwich_map(spec.get("alpha", 0.5), spec.get("i", 0), spec.get("j", 0),
                                     panel.generator)
    else:
        T = contraction.commutator_map(spec.get("l", 1), panel.generator)
    x0 = make_operator(block["start"], D, rng)
    x, rep = contraction.iterate_fixed_point(T, x0, panel, tol=block["tol"],
                                             max_iter=block["max_iter"])
    report = {
        "map": {"name": T.name, "c": T.c, "transport": [T.transport.power, T.transport.grade],
                "strict": T.is_strict},
        "convergence": rep.to_json(),
        "fixed_point_seminorms": panel.evaluate(x),
        "fixed_point_sup": panel.sup(x),
        "certified": rep.certified,
    }
    return report, list(rep.csv_rows()), rep.certified


def _rhs(block, D, rng, panel):
    spec = block["rhs"]
    delta = block["delta"]
    kind = spec["kind"]
    phi_value = spec.get("phi", 1.0 if kind == "f1" else 1 / (2 * delta))
    phi = lambda t: phi_value  # noqa: E731
    X = make_operator(spec.get("X", {"kind": "identity"}), D, rng)
    gen = panel.generator
    if kind == "f1":
        return picard.f_identity(phi, gen, delta)
    if kind == "f2":
        return picard.f_constant(phi, X, gen, delta)
    if kind == "f3":
        return picard.f_power(phi, X, gen, spec.get("l", 1), delta)
    return None


def run_ode(cfg, rng):
    block = cfg["ode"]
    panel = _panel(cfg)
    D = cfg["dimension"]
    grid = picard.TimeGrid(block["delta"], block["n_nodes"])
    x0 = make_operator(block["x0"], D, rng)
    if block["rhs"]["kind"] == "heisenberg":
        H = _hamiltonian(cfg)
        rhs = dynamics.heisenberg_rhs(H, block["delta"], x0)
        z, rep = dynamics.solve_heisenberg(H, x0, grid, panel, tol=block["tol"],
                                           max_iter=block["max_iter"])
    else:
        rhs = _rhs(block, D, rng, panel)
        z, rep = picard.solve_ivp(rhs, x0, grid, panel, tol=block["tol"],
                                  max_iter=block["max_iter"])
    start = picard.start_certificate(rhs, x0, grid, panel)
    check = picard.verify_rhs(rhs, grid, [picard.OpTrajectory.constant(grid, x0), z], panel, x0)
    ok = rep.certified and check.certified
    report = {
        "rhs": rhs.name,
        "M": rhs.M,
        "c": rhs.M * grid.delta,
        "grid": {"delta": grid.delta, "n_nodes": grid.n_nodes, "dt": grid.dt},
        "start_certificate": start.to_json(),
        "rhs_check": check.to_json(),
        "convergence": rep.to_json(),
        "trajectory_seminorms": panel.evaluate(z),
        "final_value_seminorms": panel.evaluate(z.final),
        "certified": ok,
    }
    return report, list(rep.csv_rows()), ok


def run_heisenberg(cfg, rng):
    block = cfg["heisenberg"]
    panel = _panel(cfg)
    H = _hamiltonian(cfg)
    x0 = make_operator(block["x0"], cfg["dimension"], rng)
    grid = picard.TimeGrid(block["delta"], block["n_nodes"])
    m, L = dynamics.heisenberg_start(x0, H, panel, grid.delta)
    z, rep = dynamics.solve_heisenberg(H, x0, grid, panel, tol=block["tol"],
                                       max_iter=block["max_iter"])
    err = panel.sup(z - dynamics.exact_trajectory(H, x0, grid))
    bound = panel.sup(dynamics.cn_error_bound(H, x0, grid))
    cn_gap = panel.sup(z - dynamics.crank_nicolson_trajectory(H, x0, grid))
    report = {
        "grid": {"delta": grid.delta, "n_nodes": grid.n_nodes, "dt": grid.dt},
        "start": {"m": m, "L": L},
        "convergence": rep.to_json(),
        "oracle_error": err,
        "oracle_error_bound": bound,
        "discrete_fixed_point_gap": cn_gap,
    }
    ok = rep.certified and err <= bound + block["tol"]
    if block["refine"]:
        fine = grid.refine()
        zf, _ = dynamics.solve_heisenberg(H, x0, fine, panel, tol=block["tol"],
                                          max_iter=block["max_iter"])
        err_f = panel.sup(zf - dynamics.exact_trajectory(H, x0, fine))
        report["refined"] = {"n_nodes": fine.n_nodes, "oracle_error": err_f,
                             "ratio": err / err_f if err_f > 0 else None}
    report["certified"] = ok
    return report, list(rep.csv_rows()), ok


def run_cutoff(cfg, rng):
    block = cfg["cutoff"]
    panel = _panel(cfg)
    H = _hamiltonian(cfg)
    D = cfg["dimension"]
    shift = float(np.real(H[0, 0]))
    model = dynamics.free_boson_model(D, tuple(block["cutoffs"]), block["delta"], shift)
    x = make_operator(block["probe"], D, rng)
    grid = picard.TimeGrid(block["delta"], block["n_nodes"])
    rep = dynamics.remove_cutoff(model, x, grid, panel, tol=block["tol"],
                                 max_iter=block["max_iter"])
    rows = []
    for L, member in zip(model.cutoffs, rep.net.member_reports):
        for n, label, res, rate in member.csv_rows():
            rows.append((n, f"L={L}:{label}", res, rate))
    report = rep.to_json()
    return report, rows, rep.certified


def run_blcert(cfg, rng):
    block = cfg["blcert"]
    panel = _panel(cfg)
    gen = panel.generator
    if block["coeffs"] == "uniform":
        recipe = blcert.uniform_recipe(gen, block["m"], block["L"])
    else:
        recipe = blcert.BlRecipe(gen, block["coeffs"], block["m"], block["L"])
    cert = blcert.certify(recipe, panel)
    T = contraction.sandwich_map(block["alpha"], 0, 0, gen)
    start = blcert.certify_start_point(cert.X, T, panel)
    ok = cert.certified and start.certified and start.direct_ok
    report = {"certificate": cert.to_json(recipe), "start_point": start.to_json(),
              "map": T.name, "certified": ok}
    return report, [], ok


def run_panel(cfg, rng):
    panel = _panel(cfg)
    threshold = cfg["panel_report"]["threshold"]
    margins = panel.margins()
    entries = [{"index": idx.label, "weight": idx.weight.to_json(), "k": idx.k,
                "margin": m, "adequate": bool(m < threshold)}
               for idx, m in zip(panel.indices, margins)]
    ok = all(e["adequate"] for e in entries)
    report = {"dimension": panel.dim, "threshold": threshold, "indices": entries,
              "spectrum_head": panel.spectrum[:4], "certified": ok}
    return report, [], ok


RUNNERS = {
    "fixedpoint": run_fixedpoint,
    "ode": run_ode,
    "heisenberg": run_heisenberg,
    "cutoff": run_cutoff,
    "blcert": run_blcert,
    "panel": run_panel,
}


def parser():
    p = argparse.ArgumentParser(prog="taufix", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=RUNNERS[name].__name__.replace("run_", ""))
        s.add_argument("--config", type=Path, help="JSON config merged over the defaults")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        s.add_argument("--verbose", action="store_true", help="debug logging")
    return p


def main(argv=None):
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args.subcommand, args.config, args.seed)
        rng = np.random.default_rng(cfg["seed"])
        report, rows, ok = RUNNERS[args.subcommand](cfg, rng)
    except ConfigError as exc:
        print(f"taufix: config error: {exc}", file=sys.stderr)
        return 1
    except TaufixError as exc:
        return _fail(args, exc)
    except ValueError as exc:
        print(f"taufix: invalid parameter: {exc}", file=sys.stderr)
        return 1
    report = {"schema_version": REPORT_VERSION, "subcommand": args.subcommand,
              "config": cfg, "result": report, "certified": bool(ok)}
    write_outputs(args.out, report, rows)
    if not ok:
        print(f"taufix: {args.subcommand}: certificate failed (see report.json)",
              file=sys.stderr)
        return 2
    return 0


def _fail(args, exc):
    print(f"taufix: [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
    failure = {"schema_version": REPORT_VERSION, "subcommand": args.subcommand,
               "certified": False,
               "error": {"module": exc.module, "type": type(exc).__name__,
                         "message": str(exc)}}
    partial = getattr(exc, "report", None)
    rows = list(partial.csv_rows()) if hasattr(partial, "csv_rows") else []
    write_outputs(args.out, failure, rows)
    return 2


if __name__ == "__main__":
    sys.exit(main())
