"""Command line front end: ``morse-cuplength <command> --problem FILE --out DIR``.

Exit codes: 0 verified, 1 usage/IO/parse error, 2 hypothesis violated,
3 bound violated. ``report.json`` is written with sorted keys and no
timestamps so that equal inputs give byte-identical files; wall-clock time
goes to ``timing.json`` next to it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import catalog
from .critical import BOUND_VIOLATED, HYPOTHESIS_VIOLATED, PASS, verify_cuplength_bound
from .fields.analysis import morse_bott_verify, oscillation, spectral_gap
from .fields.field import fd_check
from .flow import (BumpFamily, NoDecayError, action_energy_constant, energy,
                   energy_identity_residual, exponential_rate, integrate, integrate_batch,
                   tail_horizon,
                   window_diagnostics, write_csv)
from .moduli import breaking_analysis, constrained_count, shoot, solve_moduli
from .problem import ProblemDef, ProblemError, parse_problem
from .search import NonTransverseError
from .topology import (Constraint, betti, build_complex, catalog_betti, cuplength,
                       random_morse_functions, random_pairing)

log = logging.getLogger("morse_cuplength")

COMMANDS = ("verify", "spectrum", "flow", "moduli", "chain", "homology", "pairing")
EXIT = {PASS: 0, HYPOTHESIS_VIOLATED: 2, BOUND_VIOLATED: 3}

# --set keys consumed by the commands themselves; everything else goes to the problem
RUN_KEYS = {"r": float, "k": int, "seeds": int, "x0": str, "r_sequence": str,
            "dump": int, "tube_radius": float, "offset": float, "attempts": int}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem_file: str
    command: str
    output_dir: str
    overrides: dict = field(default_factory=dict)
    rng_seed: int = 0


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "infinite" if v > 0 else "-infinite"
        return v
    return obj


def _parse_sets(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        if not k:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[k.strip()] = v.strip()
    return out


def _split_run_keys(overrides: dict) -> tuple[dict, dict]:
    run, prob = {}, {}
    for k, v in overrides.items():
        if k in RUN_KEYS:
            try:
                run[k] = RUN_KEYS[k](v)
            except ValueError as exc:
                raise UsageError(f"--set {k}={v!r}: {exc}") from exc
        else:
            prob[k] = v
    return run, prob


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma separated list of numbers, got {text!r}") from exc


def load_problem(path: str, overrides: dict) -> tuple[ProblemDef, str]:
    """Read a problem file; a bare catalog name such as ``P1`` also works."""
    fp = Path(path)
    if fp.is_file():
        text = fp.read_text()
    elif path in catalog.NAMES:
        text = catalog.document(path)
    else:
        raise UsageError(f"cannot read problem file {path!r}")
    return parse_problem(text, overrides), text


def _plot_setup():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "morse-cuplength"
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt
    plt.close(fig)


def plot_beta(b: BumpFamily, path: Path) -> None:
    plt = _plot_setup()
    s = np.linspace(-2.0, b.window_end + 1.0, 801)
    v, dv = b(s)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(s, v, label="beta_r")
    ax.plot(s, dv, "--", label="beta_r'")
    for t in b.evaluation_times():
        ax.axvline(t, color="0.7", lw=0.8)
    ax.set_xlabel("s")
    ax.set_title(f"bump family, k = {b.k}, r = {b.r:g}")
    ax.legend()
    _save(fig, path)


def plot_trajectories(trajs, path: Path, title: str) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(5, 5))
    for t in trajs:
        P = t.points
        ax.plot(P[:, 0], P[:, -1], ".", ms=1.5)
    ax.set_xlabel("x0")
    ax.set_ylabel(f"x{trajs[0].manifold.dim - 1}" if trajs else "")
    ax.set_title(title)
    _save(fig, path)


def plot_chain(chain, path: Path) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for c in chain.chains:
        ax.plot(range(len(c.points)), [q.h_value for q in c.points], "o-", label=f"r = {c.r:g}")
    if chain.chains:
        ax.set_xticks(range(len(chain.chains[0].points)))
        ax.set_xticklabels([q.label for q in chain.chains[0].points])
    ax.set_ylabel("h")
    ax.set_title("critical values along the breaking chain")
    ax.legend()
    _save(fig, path)


def _lemma_sample(p: ProblemDef, norm: float, r: float, seeds: int, k: int) -> dict:
    b = BumpFamily(k, r)
    zs = p.Z.grid(p.manifold, max(1, round(seeds ** (1.0 / max(1, p.Z.dim(p.manifold))))))
    els = solve_moduli(p, b, zs, norm=norm, keep_rejected=True)
    acc = [e for e in els if e.accepted]
    return {
        "r": r, "k": k, "seeds": len(els), "accepted": len(acc),
        "max_abs_G": max((e.diagnostics.max_abs_G for e in els), default=0.0),
        "max_abs_F": max((e.diagnostics.max_abs_F for e in els), default=0.0),
        "max_energy": max((e.diagnostics.energy for e in els), default=0.0),
        "max_energy_identity_residual": max((e.energy_residual for e in els), default=0.0),
        "violations": sum(len(e.diagnostics.violations) for e in els),
        "rejections": sorted({e.rejection for e in els if e.rejection}),
    }


def _stable_constraints(p: ProblemDef, fs, k: int) -> list[Constraint]:
    d = p.Z.dim(p.manifold)
    sel = [tuple(i == (j % d) for i in range(d)) for j in range(k)]
    return [Constraint(f, S) for f, S in zip(fs, sel)]


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit code. Errors map to code 1."""
    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}")
    t_start = time.perf_counter()
    runp, probp = _split_run_keys(cfg.overrides)
    p, text = load_problem(cfg.problem_file, probp)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.rng_seed)
    tol = p.tolerances
    mb = morse_bott_verify(p)
    theorem = verify_cuplength_bound(p)
    cup = theorem.cuplength
    k = runp.get("k", cup)
    r = runp.get("r", 1.0)
    diag: dict = {"morse_bott": mb.to_dict()}
    files: list[str] = []

    def csv_out(name, t):
        with open(out / name, "w", newline="") as fh:
            write_csv(t, fh)
        files.append(name)

    if cfg.command == "verify":
        if mb.passed:
            diag["lemmas"] = _lemma_sample(p, theorem.norm_hF, r, runp.get("seeds", 16), k)
    elif cfg.command == "spectrum":
        gap = spectral_gap(p)
        diag["spectral_gap"] = {
            "value": gap.value, "note": gap.note, "seeds": gap.n_seeds,
            "failed_seeds": gap.n_failed,
            "critical_F": [{"location": c.representative, "value": c.value,
                            "continuum": c.continuum, "members": len(c.points),
                            "on_Z": i in gap.z_clusters}
                           for i, c in enumerate(gap.clusters)]}
        osc = oscillation(p.difference, tol.oscillation_grid, tol.euclidean_half_width)
        diag["oscillation"] = {"value": osc.value, "sup": osc.sup, "inf": osc.inf,
                               "certified": osc.certified, "notes": osc.notes}
        diag["fd_check"] = {"F": fd_check(p.F, 1000), "h": fd_check(p.h, 1000)}
    elif cfg.command == "flow":
        b = BumpFamily(k, r)
        T = tail_horizon(p)
        if "x0" in runp:
            x0 = np.array(_floats(runp["x0"]))
            trajs = [integrate(p, b, x0, -1.0, b.window_end + T,
                               extra_breakpoints=b.evaluation_times())]
        else:
            # start off Z so the tail shows the normal decay
            n = runp.get("seeds", 4)
            X0 = p.Z.grid(p.manifold, n, offset=0.5)[:n]
            normal = [i for i in range(p.manifold.dim) if i not in p.Z.free_indices(p.manifold)]
            X0[:, normal] += runp.get("offset", 0.5)
            trajs = integrate_batch(p, b, X0, -1.0, b.window_end + T,
                                    extra_breakpoints=b.evaluation_times())
        tube = runp.get("tube_radius", 1.0)
        C = action_energy_constant(p, tube)
        items = []
        for i, t in enumerate(trajs):
            wd = window_diagnostics(p, t, theorem.norm_hF)
            item = {"start": t.start, "end": t.end, "converged": t.converged,
                    "samples": len(t), "energy": energy(t),
                    "energy_identity_residual": energy_identity_residual(t),
                    "window": wd.to_dict()}
            try:
                item["rate"] = exponential_rate(p, t, tube, C).to_dict()
            except NoDecayError as exc:
                item["rate"] = {"error": str(exc)}
            items.append(item)
            csv_out(f"flow_{i:03d}.csv", t)
        diag["flow"] = {"r": r, "k": k, "horizon": T, "action_energy_constant": C,
                        "tube_radius": tube, "trajectories": items,
                        "note": "window bounds hold for moduli elements; these start off Z"}
        plot_beta(b, out / "beta.svg")
        plot_trajectories(trajs, out / "trajectories.svg", f"flow lines, r = {r:g}")
        files += ["beta.svg", "trajectories.svg"]
    elif cfg.command == "moduli":
        b = BumpFamily(k, r)
        n = runp.get("seeds", 64)
        per_axis = max(1, round(n ** (1.0 / p.Z.dim(p.manifold))))
        zs = p.Z.grid(p.manifold, per_axis)
        els = solve_moduli(p, b, zs, norm=theorem.norm_hF, keep_rejected=True)
        acc = [e for e in els if e.accepted]
        diag["moduli"] = {
            "r": r, "k": k, "seeds": len(els), "accepted": len(acc),
            "max_abs_G": max(e.diagnostics.max_abs_G for e in els),
            "max_abs_F": max(e.diagnostics.max_abs_F for e in els),
            "max_energy": max(e.diagnostics.energy for e in els),
            "max_energy_identity_residual": max(e.energy_residual for e in els),
            "violations": sum(len(e.diagnostics.violations) for e in els),
            "bound": theorem.norm_hF,
            "elements": [e.to_dict() for e in els]}
        for i, e in enumerate(els[:runp.get("dump", 8)]):
            csv_out(f"moduli_{i:03d}.csv", e.trajectory)
        plot_beta(b, out / "beta.svg")
        plot_trajectories([e.trajectory for e in els], out / "moduli.svg",
                          f"moduli elements, r = {r:g}")
        files += ["beta.svg", "moduli.svg"]
    elif cfg.command == "chain":
        rs = _floats(runp.get("r_sequence", "4,8,16,32"))
        fs = random_morse_functions(p, k + 1, rng)
        cons = _stable_constraints(p, fs[:-1], k)
        chain = breaking_analysis(p, k, rs, cons, fs[-1])
        diag["chain"] = chain.to_dict()
        diag["chain"]["constraints"] = [c.to_dict() for c in cons]
        diag["chain"]["f_star"] = fs[-1].to_dict()
        for c in chain.chains:
            csv_out(f"chain_r{c.r:g}.csv", c.element.trajectory)
        plot_chain(chain, out / "chain.svg")
        files.append("chain.svg")
    elif cfg.command == "homology":
        attempts = runp.get("attempts", 5)
        for _ in range(attempts):
            f = random_morse_functions(p, 1, rng)[0]
            try:
                cx = build_complex(f, p, rng=rng)
                break
            except NonTransverseError as exc:
                log.info("re-randomizing: %s", exc)
        else:
            raise NonTransverseError("no transverse Morse function found")
        (out / "complex.txt").write_text(cx.dump())
        files.append("complex.txt")
        d = p.Z.dim(p.manifold)
        diag["homology"] = {"phases": f.phases, "betti": betti(cx),
                            "expected_betti": catalog_betti(d),
                            "d_squared_zero": cx.squares_to_zero(),
                            "generators": len(cx.generators),
                            "orbit_counts": {f"{a}->{b}": n
                                             for (a, b), n in sorted(cx.orbit_counts.items())}}
    elif cfg.command == "pairing":
        d = p.Z.dim(p.manifold)
        res = {}
        for kk in (cup, cup + 1):
            sel = [tuple(i == (j % d) for i in range(d)) for j in range(kk)]
            pr = random_pairing(p, sel, rng, attempts=runp.get("attempts", 8))
            res[f"k={kk}"] = pr.to_dict()
        diag["pairing"] = res
        if "r" in runp:
            fs = random_morse_functions(p, cup + 1, rng)
            cnt = constrained_count(p, BumpFamily(cup, r), _stable_constraints(p, fs[:-1], cup),
                                    fs[-1])
            diag["pairing"]["constrained_count"] = cnt.to_dict()

    report = {
        "problem": {**p.to_dict(), "file": Path(cfg.problem_file).name,
                    "sha256": hashlib.sha256(text.encode()).hexdigest()},
        "command": cfg.command,
        "verdict": theorem.verdict,
        "theorem": theorem.to_dict(),
        "diagnostics": diag,
        "provenance": {
            "package": "morse_cuplength",
            "version": _version(),
            "rng_seed": cfg.rng_seed,
            "overrides": dict(sorted(cfg.overrides.items())),
            "tolerances": tol.to_dict(),
            "grids": {"seed_grid": list(p.seed_grid), "oscillation_grid": tol.oscillation_grid,
                      "search_grid": tol.search_grid},
            "lemma_maxima": diag.get("lemmas") or diag.get("moduli") and {
                key: diag["moduli"][key] for key in
                ("max_abs_G", "max_abs_F", "max_energy", "max_energy_identity_residual")},
            "wall_clock": "timing.json",
            "files": sorted(files),
        },
    }
    text_out = json.dumps(_json_safe(report), sort_keys=True, indent=2, allow_nan=False)
    (out / "report.json").write_text(text_out + "\n")
    (out / "timing.json").write_text(json.dumps(
        {"wall_clock_seconds": round(time.perf_counter() - t_start, 3)}) + "\n")
    return EXIT[theorem.verdict]


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="morse-cuplength",
        description="Check the cuplength lower bound for perturbed Morse-Bott functions.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--problem", required=True,
                    help="problem JSON file (or a catalog name: P1, P2, P3)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a tolerance, parameter or run setting; repeatable")
    ap.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(args.problem, args.command, args.out, _parse_sets(args.set), args.seed)
        return run(cfg)
    except (UsageError, ProblemError, OSError, ValueError, NonTransverseError) as exc:
        print(f"morse-cuplength: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
