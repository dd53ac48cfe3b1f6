"""Command line interface: ``activescalar <subcommand> [options]``.

Every subcommand accepts a JSON config (``--config``; a path or an inline JSON
object) whose keys mirror the long options.  Results go to ``--out`` (a
directory) or to stdout.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io as aio


def _write(args, name, text):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / name, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_config(args):
    cfg = aio.read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise SystemExit("config must be a JSON object")
    return cfg


def _get(args, cfg, key, default=None):
    """Command-line option wins over the config file, which wins over the default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    return cfg.get(key.replace("-", "_"), cfg.get(key, default))


def _quad_cfg(cfg):
    from .dissipation import QuadratureConfig, fractional_laplacian_constant

    q = dict(cfg.get("quadrature", {}))
    if q.get("c_alpha") == "exact":
        q["c_alpha"] = fractional_laplacian_constant(cfg["_alpha"], cfg.get("_dim", 1))
    return QuadratureConfig(**q)


def _grid(cfg):
    from .criterion import GridSpec

    return GridSpec(**cfg.get("grid", {}))


def _json_arg(obj):
    return aio.read_json(obj) if isinstance(obj, str) else obj


def _modulus(obj):
    from .moduli import load_modulus

    if obj is None:
        raise SystemExit("a modulus is required (--modulus or config key 'modulus')")
    return load_modulus(_json_arg(obj))


# ---------------------------------------------------------------------------
# subcommands


def cmd_dalpha_table(args, cfg):
    from .dissipation import d_alpha, d_alpha_tail_bound

    m = _modulus(_get(args, cfg, "modulus"))
    alpha = float(_get(args, cfg, "alpha"))
    cfg["_alpha"] = alpha
    q = _quad_cfg(cfg)
    xi = np.geomspace(float(_get(args, cfg, "xi_min", 1e-3)), float(_get(args, cfg, "xi_max", 10.0)),
                      int(_get(args, cfg, "n", 50)))
    D = np.atleast_1d(d_alpha(m, alpha, xi, q))
    tails = [d_alpha_tail_bound(m, alpha, x, q) for x in xi]
    _write(args, "dalpha.csv", aio.csv_text(["xi", "D_alpha", "tail_bound"],
                                            ((x, d, tb.value) for x, d, tb in zip(xi, D, tails))))


def cmd_omega_bound(args, cfg):
    from .velocity import EquationParams, omega_bound_burgers, omega_bound_msqg, omega_bound_sqg

    m = _modulus(_get(args, cfg, "modulus"))
    eq = EquationParams.from_json(_json_arg(_get(args, cfg, "equation")))
    xi = np.geomspace(float(_get(args, cfg, "xi_min", 1e-3)), float(_get(args, cfg, "xi_max", 10.0)),
                      int(_get(args, cfg, "n", 50)))
    if eq.kind == "burgers":
        om = omega_bound_burgers(m, xi)
    elif eq.kind == "modified_sqg":
        om = omega_bound_msqg(m, eq.gamma, xi, eq.A)
    else:
        om = [omega_bound_sqg(m, eq.alpha, x, A=eq.A).value for x in xi]
    header = ["xi", "Omega"]
    if eq.kind == "sqg":
        # no field supplied: the perpendicular dissipation is taken as 0
        header.append("d_perp_coupled")
        rows = ((x, o, "false") for x, o in zip(xi, om))
    else:
        rows = zip(xi, om)
    _write(args, "omega.csv", aio.csv_text(header, rows))


def cmd_verify_lemmas(args, cfg):
    from .moduli import ModulusParams
    from .velocity import verify_lemma43, verify_ll23

    n_xi = int(cfg.get("n_xi", 100))
    n_xi0 = int(cfg.get("n_xi0", 20))
    xi0 = np.geomspace(1e-3, 1.0, n_xi0)
    out = {"lemma_far_average": [], "lemma_msqg_bound": []}
    for beta in cfg.get("betas", [0.3, 0.6]):
        rep = verify_ll23(ModulusParams(1.0, 1.0, beta), np.geomspace(1e-4, 10.0, n_xi), xi0)
        out["lemma_far_average"].append({"beta": beta, "ok": rep.ok, "worst_excess": rep.worst_excess,
                                         "max_ratio_by_regime": [float(rep.ratio[rep.regime == k].max())
                                                                 for k in range(3)]})
    for gamma, beta in cfg.get("pairs", [[0.6, 0.3], [0.6, 0.6], [0.75, 0.3]]):
        rep = verify_lemma43(ModulusParams(1.0, 1.0, beta), gamma, np.geomspace(1e-4, 1.0, n_xi), xi0)
        out["lemma_msqg_bound"].append({"gamma": gamma, "beta": beta, "ok": rep.ok,
                                        "max_ratio": float(rep.ratio.max()), "constant": float(rep.bound.flat[0])})
    out["ok"] = all(r["ok"] for v in out.values() for r in v)
    _write(args, "lemmas.json", aio.dumps_json(out))
    return 0 if out["ok"] else 1


def _criterion_inputs(cfg):
    from .velocity import EquationParams

    eq = EquationParams.from_json(_json_arg(cfg["equation"]))
    cfg["_alpha"] = eq.alpha
    cfg["_dim"] = eq.dimension
    return eq, _quad_cfg(cfg), _grid(cfg)


def cmd_check_criterion(args, cfg):
    from .criterion import CriterionConstants, check_keyineq

    eq, q, grid = _criterion_inputs(cfg)
    m = _modulus(cfg["modulus"])
    consts = CriterionConstants.from_json(cfg.get("constants", {"C1": 1.0, "C2": 1.0}))
    rep = check_keyineq(eq, m, consts, grid, float(cfg.get("theta_sup", "inf")), bool(cfg.get("ignore_eps", False)),
                        q, bool(cfg.get("stationary", "constants" not in cfg)))
    _write(args, "criterion.json", aio.dumps_json(rep.summary()))
    if args.out and cfg.get("margins_csv", True):
        cols, rows = rep.rows()
        aio.write_csv(Path(args.out) / "margins.csv", cols, rows)
    return 0 if rep.ok else 1


def cmd_find_constants(args, cfg):
    from .criterion import SearchConfig, find_constants

    eq, q, grid = _criterion_inputs(cfg)
    search = SearchConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg.get("search", {}).items()})
    res = find_constants(eq, float(cfg["beta"]), grid, search, q, float(cfg.get("theta_sup", "inf")))
    _write(args, "constants.json", aio.dumps_json(res.to_json()))
    return 0 if res.ok else 1


def _initial(cfg, sim, seed):
    from .solver import random_band_limited, rough_field, single_mode

    init = dict(cfg.get("initial", {"type": "single_mode"}))
    kind = init.pop("type")
    d = sim.eq.dimension
    rng = np.random.default_rng(seed)
    if kind == "single_mode":
        return single_mode(sim.N, d, init.get("k", 1), init.get("amplitude", 1.0))
    if kind == "band_limited":
        return random_band_limited(sim.N, d, init.get("kmax", 8), init.get("sup_norm", 1.0), rng)
    if kind == "rough":
        return rough_field(sim.N, d, init.get("s", 0.05), init.get("sup_norm", 1.0), rng)
    if kind == "snapshot":
        return aio.read_snapshot(init["path"])[0]
    raise SystemExit(f"unknown initial data type {kind!r}")


def _sim_config(args, cfg):
    from dataclasses import replace

    from .solver import SimConfig

    sim = SimConfig.from_json(cfg["sim"])
    if args.seed is not None:
        sim = replace(sim, seed=args.seed)
    return sim


def cmd_simulate(args, cfg):
    from .solver import run

    sim = _sim_config(args, cfg)
    theta0 = _initial(cfg, sim, sim.seed)
    snap_every = int(cfg.get("snapshot_every", 0))
    records = []
    for k, (rec, f) in enumerate(run(theta0, sim)):
        records.append(rec)
        if args.out and snap_every and k % snap_every == 0:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            aio.write_snapshot(Path(args.out) / f"snap_{k:05d}.bin", f, sim.eq)
    if args.out:
        aio.write_snapshot(Path(args.out) / "final.bin", f, sim.eq)
    _write(args, "records.csv", aio.records_csv(records))


def cmd_measure(args, cfg):
    from .analysis import empirical_modulus, holder_seminorm, pair_scan

    theta, _ = aio.read_snapshot(_get(args, cfg, "snapshot"))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    samples = int(cfg.get("samples", 100_000))
    em = empirical_modulus(theta, cfg.get("bins"), samples, seed)
    scan = pair_scan(theta, samples=samples, seed=seed)
    betas = [float(b) for b in (args.betas or cfg.get("betas", [0.6]))]
    _write(args, "modulus.csv", aio.csv_text(["xi", "max_increment", "envelope"],
                                             zip(em.xi, em.increment, em.envelope())))
    summary = {"t": theta.t, "sup_norm": theta.sup_norm,
               "holder": {str(b): holder_seminorm(theta, b, 1, samples, seed, scan) for b in betas}}
    if args.out:
        aio.write_json(Path(args.out) / "measure.json", summary)


def cmd_experiment(args, cfg):
    from .analysis import regularization_experiment
    from .criterion import CriterionConstants, find_constants

    sim = _sim_config(args, cfg)
    cfg["_alpha"] = sim.eq.alpha
    cfg["_dim"] = sim.eq.dimension
    m = _modulus(cfg["modulus"])
    if "constants" in cfg:
        consts = CriterionConstants.from_json(cfg["constants"])
    else:
        res = find_constants(sim.eq, m.beta, _grid(cfg), cfg=_quad_cfg(cfg))
        if not res.ok:
            _write(args, "experiment.json", aio.dumps_json({"verdict": "INCONCLUSIVE", "message": res.message}))
            return 1
        consts = res.constants
    theta0 = _initial(cfg, sim, sim.seed) if "initial" in cfg else None
    res = regularization_experiment(sim, m, consts, theta0, cfg.get("family", "moving"), cfg.get("tol", 0.05))
    out = res.to_json()
    out["constants"] = consts.to_json()
    _write(args, "experiment.json", aio.dumps_json(out))
    if args.out:
        with open(Path(args.out) / "records.csv", "w", newline="") as fh:
            fh.write(aio.records_csv(res.records))
    return 0 if res.verdict == "PASS" else 1


COMMANDS = {
    "simulate": (cmd_simulate, "run the solver; CSV record stream and snapshots"),
    "measure": (cmd_measure, "snapshot -> empirical modulus CSV and Holder seminorms"),
    "experiment": (cmd_experiment, "full regularization pipeline with a JSON verdict"),
    "verify-lemmas": (cmd_verify_lemmas, "far-average and modified-SQG velocity bound suites"),
    "dalpha-table": (cmd_dalpha_table, "CSV of xi, D_alpha, tail_bound for a modulus"),
    "omega-bound": (cmd_omega_bound, "CSV of xi, Omega for a modulus and equation"),
    "check-criterion": (cmd_check_criterion, "margins of the key inequality"),
    "find-constants": (cmd_find_constants, "search for admissible C1, C2"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="activescalar", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or inline JSON object")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--threads", type=int, help="FFT worker threads")
    common.add_argument("--seed", type=int, help="RNG seed override")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, parents=[common])
        if name in ("dalpha-table", "omega-bound"):
            sp.add_argument("--modulus", help="modulus JSON (file or inline)")
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--xi-min", type=float)
            sp.add_argument("--xi-max", type=float)
            sp.add_argument("-n", type=int)
        if name == "omega-bound":
            sp.add_argument("--equation", help="equation JSON (file or inline)")
        if name == "measure":
            sp.add_argument("snapshot", nargs="?")
            sp.add_argument("--betas", type=float, nargs="+")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads:
        os.environ["ACTIVESCALAR_THREADS"] = str(args.threads)
    cfg = _load_config(args)
    func = COMMANDS[args.command][0]
    try:
        return int(func(args, cfg) or 0)
    except (ValueError, ArithmeticError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
