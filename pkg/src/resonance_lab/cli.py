"""Command-line entry point.

Subcommands wire JSON configs to the pipeline:

  simulate <config>            one trajectory -> CSV
  average <config>             averaged-coefficient grids (+ closed-form check)
  analyze <config>             fixed points, drift circles, classification
  campaign <config>            ensemble run + summary
  reproduce-figure <id> --out  canned runs for the six reference figures

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import analysis, averaging, bench, campaign, report
from ._backend import backend_name
from .integrate import IntegratorConfig, StiffnessError, integrate
from .model import NoResonance

THREADS_ENV = "RESONANCE_LAB_THREADS"


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _canonical(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _build_family(cfg: dict) -> bench.BenchFamily:
    sys_cfg = cfg.get("system")
    if not isinstance(sys_cfg, dict) or "family" not in sys_cfg:
        raise ConfigError('config needs {"system": {"family": ..., "params": {...}}}')
    try:
        return bench.build(sys_cfg["family"], sys_cfg.get("params", {}))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _integrator(cfg: dict, args) -> IntegratorConfig:
    params = dict(cfg.get("integrator", {}))
    if args.t_end is not None:
        params["t_end"] = args.t_end
    if args.tol is not None:
        params["rel_tol"] = args.tol
        params.setdefault("abs_tol", args.tol * 1e-2)
    try:
        return IntegratorConfig(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad integrator config: {exc}") from exc


def _effective_config(cfg: dict, args) -> dict:
    out = json.loads(json.dumps(cfg))  # deep copy with JSON semantics
    integ = out.setdefault("integrator", {})
    if args.t_end is not None:
        integ["t_end"] = args.t_end
    if args.tol is not None:
        integ["rel_tol"] = args.tol
        integ.setdefault("abs_tol", args.tol * 1e-2)
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    out["threads"] = _threads(args)
    return out


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV, "").strip()
    if env.isdigit() and int(env) > 0:
        return int(env)
    return 1


def _maybe_dump(args, cfg: dict) -> bool:
    if args.dump_config:
        sys.stdout.write(_canonical(cfg))
        return True
    return False


def _averaged_pipeline(fam: bench.BenchFamily, n_s: int = 128):
    sysspec = fam.system
    if isinstance(sysspec.resonance, NoResonance):
        raise ConfigError(
            f"family {fam.name} with these parameters is off resonance; "
            "averaging is undefined"
        )
    rf = averaging.rotate(sysspec)
    grid = averaging.QuadratureSpec(n_s=n_s)
    avg = averaging.average_order1(rf, grid)
    hom = averaging.solve_homological_order1(rf, avg, grid)
    avg = averaging.average_order2(
        rf, hom, avg, sysspec.drive, grid, probe_accuracy=False
    )
    return rf, avg


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    fam = _build_family(cfg)
    integ = _integrator(cfg, args)
    init_cfg = cfg.get("initial", {})
    eff = _effective_config(cfg, args)
    if _maybe_dump(args, eff):
        return 0
    if "x1" in init_cfg:
        from .model import CartesianState

        st = CartesianState(
            x1=float(init_cfg["x1"]), x2=float(init_cfg["x2"]), t=integ.t_start
        )
    else:
        st = campaign.initial_cartesian(
            fam.system,
            float(init_cfg.get("rho", 1.0)),
            float(init_cfg.get("theta", 0.0)),
            integ.t_start,
        )
    rec = integrate(fam.system, st, integ)
    out = args.out or "trajectory.csv"
    rec.to_csv(out)
    print(f"wrote {out} ({len(rec)} samples, backend={rec.metadata['backend']})")
    return 0


def cmd_average(args) -> int:
    cfg = _load_config(args.config)
    fam = _build_family(cfg)
    eff = _effective_config(cfg, args)
    if _maybe_dump(args, eff):
        return 0
    n_s = int(cfg.get("quadrature", {}).get("n_s", 128))
    _, avg = _averaged_pipeline(fam, n_s)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    r_grid = np.linspace(0.1 * fam.system.r_max, 0.9 * fam.system.r_max, 20)
    psi_grid = np.linspace(-math.pi, math.pi, 20, endpoint=False)
    closed = fam.closed_field()
    rr, pp = np.meshgrid(r_grid, psi_grid, indexing="ij")
    for k in sorted(avg.entries):
        path = os.path.join(out_dir, f"averaged_order{k}.csv")
        averaging.export_grid_csv(avg, k, r_grid, psi_grid, path)
        msg = f"wrote {path}"
        if k in closed.entries:
            da = float(np.max(np.abs(avg.amp(k, rr, pp) - closed.amp(k, rr, pp))))
            dp = float(np.max(np.abs(avg.phase(k, rr, pp) - closed.phase(k, rr, pp))))
            msg += f" (closed-form max|diff|: amplitude {da:.3e}, phase {dp:.3e})"
        print(msg)
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    fam = _build_family(cfg)
    eff = _effective_config(cfg, args)
    if _maybe_dump(args, eff):
        return 0
    _, avg = _averaged_pipeline(fam, int(cfg.get("quadrature", {}).get("n_s", 128)))
    n, m = averaging.detect_leading_indices(avg)
    fps = analysis.find_fixed_points(avg, n, m)
    drifts = analysis.detect_drift(avg, n, m)
    doc = {
        "system": {"family": fam.name, "params": fam.params},
        "leading_orders": {"n": n, "m": m, "q": fam.q},
        "validity": fam.validity,
        "fixed_points": [
            dict(fp.to_dict(), classification=analysis.classify(fp, fam.q).to_dict())
            for fp in fps
        ],
        "drift_circles": [d.to_dict() for d in drifts],
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_campaign(args) -> int:
    cfg = _load_config(args.config)
    eff = _effective_config(cfg, args)
    if _maybe_dump(args, eff):
        return 0
    try:
        camp = _campaign_config(cfg, args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad campaign config: {exc}") from exc
    result = campaign.run_campaign(camp, out_dir=args.out)
    sys.stdout.write(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    return 0


def _campaign_config(cfg: dict, args) -> campaign.CampaignConfig:
    sys_cfg = cfg.get("system", {})
    if "family" not in sys_cfg:
        raise ConfigError("campaign config needs system.family")
    integ = _integrator(cfg, args)
    det = campaign.DetectorConfig(**cfg.get("detector", {}))
    ens = cfg.get("ensemble", {})
    seed = args.seed if args.seed is not None else int(ens.get("seed", 0))
    return campaign.CampaignConfig(
        family=sys_cfg["family"],
        params=dict(sys_cfg.get("params", {})),
        inits=tuple(tuple(map(float, p)) for p in ens.get("inits", [])),
        ball_center=tuple(ens["ball_center"]) if "ball_center" in ens else None,
        ball_radius=float(ens.get("ball_radius", 0.0)),
        ball_count=int(ens.get("ball_count", 0)),
        seed=seed,
        integrator=integ,
        detector=det,
        t_containment=float(cfg.get("t_containment", 10.0)),
        epsilon=float(cfg.get("epsilon", 0.3)),
        compare_theory=bool(cfg.get("compare_theory", True)),
    )


SQ3 = math.sqrt(3.0)

FIGURES = {
    "1a": {
        "family": "ex1",
        "params": {"a": 1.0, "b": 2.0, "c": 0.0, "s0": 1.0, "s1": 0.0},
        "inits": [(0.25, 0.0), (0.75, 0.0), (1.5, 0.0)],
        "panels": ("rho",),
        "rho_refs": [("0.5 log t", "half_log")],
        "theta_refs": [],
    },
    "1b": {
        "family": "ex1",
        "params": {"a": 1.0, "b": 2.0, "c": 0.0, "s0": math.sqrt(2.0), "s1": 0.0},
        "inits": [(0.5, 0.0), (1.0, 0.0), (1.5, 0.0), (2.0, 0.0)],
        "panels": ("rho",),
        "rho_refs": [],
        "theta_refs": [],
    },
    "1c": {
        "family": "ex1",
        "params": {"a": 1.0, "b": 2.0, "c": -1.0, "s0": 1.0, "s1": 0.0},
        "inits": [(0.5, 0.0), (1.0, 1.5), (1.6, -2.0), (2.2, 0.5)],
        "panels": ("rho",),
        "rho_refs": [("0.5 log t", "half_log")],
        "theta_refs": [],
    },
    "2": {
        "family": "ex1",
        "params": {"a": 1.0, "b": 2.0, "c": -1.0, "s0": 1.0, "s1": 0.0},
        "inits": [
            (2 / SQ3 + 0.25, -math.pi),
            (2 / SQ3 - 0.25, -math.pi),
            (2 / SQ3, -math.pi + 0.28),
            (2 / SQ3, -math.pi - 0.28),
            (2 / SQ3 + 0.15, -math.pi + 0.15),
        ],
        "panels": ("rho", "theta"),
        "rho_refs": [("rho*", 2 / SQ3)],
        "theta_refs": [("-pi", -math.pi)],
    },
    "3": {
        "family": "ex2",
        "params": {"b0": 1.5, "b1": 1.0, "c0": -2.0, "c1": -1.0, "s1": 0.5},
        "inits": [(0.8, 0.5), (1.2, -0.5), (1.0, 1.2)],
        "panels": ("rho", "theta"),
        "rho_refs": [("rho*", 1.0)],
        "theta_refs": [],
    },
    "4": {
        "family": "ex2",
        "params": {"b0": 1.5, "b1": 1.0, "c0": -2.0, "c1": -1.0, "s1": 0.0},
        "inits": [
            (1.15, math.pi / 4 - math.pi),
            (0.85, math.pi / 4 - math.pi + 0.2),
            (1.0, math.pi / 4 - math.pi - 0.25),
        ],
        "panels": ("rho", "theta"),
        "rho_refs": [("rho*", 1.0)],
        "theta_refs": [("theta* - pi", math.pi / 4 - math.pi)],
    },
    "5": {
        "family": "ex3",
        "params": {"b0": 1.0, "b1": 1.0, "c0": -1.0, "s2": -0.125},
        "inits": [
            (2 / SQ3 + 0.2, math.pi / 4 - math.pi),
            (2 / SQ3 - 0.2, math.pi / 4 - math.pi + 0.2),
            (2 / SQ3, math.pi / 4 - math.pi - 0.2),
        ],
        "panels": ("rho", "theta"),
        "rho_refs": [("rho*", 2 / SQ3)],
        "theta_refs": [("theta* - pi", math.pi / 4 - math.pi)],
    },
    "6": {
        "family": "ex3",
        "params": {"b0": 1.0, "b1": 1.0, "c0": -1.0, "s2": 2.0},
        "inits": [(1.0, 0.0), (1.35, 1.0), (0.9, -1.0)],
        "panels": ("rho", "theta"),
        "rho_refs": [("rho*", 2 / SQ3)],
        "theta_refs": [],
    },
}


def reproduce_figure(
    fig_id: str, out_dir: str, t_end: float = 1e5, tol: float | None = None
) -> dict:
    """Run the canned configuration for one reference figure."""
    if fig_id not in FIGURES:
        raise ConfigError(
            f"unknown figure {fig_id!r}; choose from {sorted(FIGURES)}"
        )
    spec = FIGURES[fig_id]
    fam = bench.build(spec["family"], spec["params"])
    integ = IntegratorConfig(
        rel_tol=tol if tol is not None else 1e-9,
        abs_tol=(tol * 1e-2) if tol is not None else 1e-11,
        t_end=t_end,
        record_stride=8,
    )
    cfg_doc = {
        "figure": fig_id,
        "system": {"family": spec["family"], "params": spec["params"]},
        "inits": [list(p) for p in spec["inits"]],
        "integrator": {
            "rel_tol": integ.rel_tol,
            "abs_tol": integ.abs_tol,
            "t_start": integ.t_start,
            "t_end": integ.t_end,
            "record_stride": integ.record_stride,
        },
    }
    h = _config_hash(cfg_doc)
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i, (rho0, th0) in enumerate(spec["inits"]):
        st = campaign.initial_cartesian(fam.system, rho0, th0, integ.t_start)
        rec = integrate(fam.system, st, integ)
        rec.to_csv(os.path.join(out_dir, f"fig{fig_id}_run{i}.csv"))
        records.append(rec)

    t_ref = np.geomspace(integ.t_start, integ.t_end, 400)
    paths = []
    if "rho" in spec["panels"]:
        curves = [
            report.Curve(label=f"run {i}", x=r.t, y=r.rho)
            for i, r in enumerate(records)
        ]
        refs = []
        for label, val in spec["rho_refs"]:
            y = 0.5 * np.log(t_ref) if val == "half_log" else np.full_like(t_ref, val)
            refs.append(report.Curve(label=label, x=t_ref, y=y, dashed=True))
        path = os.path.join(out_dir, f"fig{fig_id}_rho.svg")
        report.emit_svg(
            curves,
            refs,
            report.AxesSpec(
                x_label="t",
                y_label="amplitude",
                x_scale="log",
                title=f"figure {fig_id}: amplitude",
                config_hash=h,
            ),
            path,
        )
        paths.append(path)
    if "theta" in spec["panels"]:
        curves = [
            report.Curve(label=f"run {i}", x=r.t, y=r.theta)
            for i, r in enumerate(records)
        ]
        refs = [
            report.Curve(
                label=label, x=t_ref, y=np.full_like(t_ref, val), dashed=True
            )
            for label, val in spec["theta_refs"]
        ]
        path = os.path.join(out_dir, f"fig{fig_id}_theta.svg")
        report.emit_svg(
            curves,
            refs,
            report.AxesSpec(
                x_label="t",
                y_label="phase shift",
                x_scale="log",
                title=f"figure {fig_id}: phase shift",
                config_hash=h,
            ),
            path,
        )
        paths.append(path)
    with open(os.path.join(out_dir, f"fig{fig_id}_config.json"), "w") as fh:
        fh.write(_canonical(cfg_doc))
    return {"hash": h, "paths": paths, "records": len(records)}


def cmd_reproduce_figure(args) -> int:
    if args.dump_config:
        spec = FIGURES.get(args.figure)
        if spec is None:
            raise ConfigError(f"unknown figure {args.figure!r}")
        doc = {k: v for k, v in spec.items() if k != "panels"}
        doc["figure"] = args.figure
        sys.stdout.write(_canonical(json.loads(json.dumps(doc))))
        return 0
    out = reproduce_figure(
        args.figure,
        args.out or ".",
        t_end=args.t_end if args.t_end is not None else 1e5,
        tol=args.tol,
    )
    print(f"figure {args.figure}: {out['records']} runs, hash {out['hash']}")
    for p in out["paths"]:
        print(f"wrote {p}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--tol", type=float, help="override integrator relative tolerance")
    p.add_argument("--t-end", dest="t_end", type=float, help="override end time")
    p.add_argument("--seed", type=int, help="override ensemble seed")
    p.add_argument(
        "--threads",
        type=int,
        help=f"worker threads (fallback: ${THREADS_ENV})",
    )
    p.add_argument(
        "--dump-config",
        action="store_true",
        help="print the effective canonical config and exit",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="resonance-lab",
        description="Resonant dynamics laboratory for decaying-drive "
        "isochronous systems",
    )
    ap.add_argument(
        "--backend-info",
        action="store_true",
        help="print the selected integrator backend and exit",
    )
    sub = ap.add_subparsers(dest="command")
    for name, fn, needs_config in (
        ("simulate", cmd_simulate, True),
        ("average", cmd_average, True),
        ("analyze", cmd_analyze, True),
        ("campaign", cmd_campaign, True),
    ):
        p = sub.add_parser(name, help=f"{name} from a JSON config")
        p.add_argument("config", help="path to JSON config")
        _add_common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser(
        "reproduce-figure", help="rerun a canned reference-figure configuration"
    )
    p.add_argument("figure", help=f"one of {sorted(FIGURES)}")
    _add_common(p)
    p.set_defaults(func=cmd_reproduce_figure)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "backend_info", False) and args.command is None:
        print(f"integrator backend: {backend_name()}")
        return 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (StiffnessError, averaging.InconsistentAveragingError,
            averaging.IndeterminateOrderError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
