"""Command-line front end.

    chordix measure SCENE
    chordix hist SCENE --kind eta|radii|chords|gamma|lambda [--pair i,j]
    chordix transfer SCENE --route all|direct|eta|gamma|radii|chords|lambda
    chordix verify SCENE --suite identities|oracles|all

Exit status: 0 on success, 1 when a verification entry fails, 2 on bad input.
Floating output uses 9 significant digits.  Wall times go to stderr so that
identical command lines give byte-identical stdout and files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import estimators as est
from . import transfer as tr
from . import verify as vf
from .errors import ChordixError, SingularDiagonal, UnsupportedGeometry
from .kernels import parse_kernel
from .scene import Scene, load_scene
from .signed_hist import to_csv
from .streams import RandomStream

DEFAULT_SAMPLES = 1 << 20
HIST_KINDS = {"eta": "eta", "radii": "iota", "chords": "mu", "gamma": "gamma", "lambda": "lambda"}
SUITES = ("identities", "oracles", "all")


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    scene_path: str
    command: str
    samples: int = DEFAULT_SAMPLES
    bins: int = est.DEFAULT_BINS
    l_max: float | None = None
    seed: int = 42
    pair: tuple[int, int] | None = None
    kernel: str = "exp:sigma=1"
    route: str = "all"
    kind: str = "eta"
    suite: str = "all"
    out: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise InputError("--samples must be >= 1")
        if self.bins < 10:
            raise InputError("--bins must be >= 10")
        if self.l_max is not None and not self.l_max > 0:
            raise InputError("--l-max must be positive")
        if self.threads is not None and self.threads < 1:
            raise InputError("--threads must be >= 1")


def _pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j but got {text!r}") from None
    return i, j


def _g(x: float) -> str:
    return f"{x:.9g}"


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _stream(cfg: RunConfig, *tags: int) -> RandomStream:
    return RandomStream(cfg.seed).derive(*tags)


def _check_pair(scene: Scene, pair: tuple[int, int]):
    n = len(scene)
    if not all(0 <= k < n for k in pair):
        raise InputError(f"pair {pair} out of range for {n} bodies")


# --------------------------------------------------------------------------
# commands


def cmd_measure(cfg: RunConfig, scene: Scene) -> int:
    bodies = [
        {"id": bid, "volume": m.volume, "volume_err": m.volume_err,
         "surface": m.surface, "surface_err": m.surface_err,
         "mass": m.mass, "mass_err": m.mass_err}
        for bid, m in zip(scene.ids, scene.measures)
    ]
    doc = {"bodies": bodies, "v_union": scene.v_union, "s_union": scene.s_union,
           "seed": cfg.seed}
    _emit(json.dumps(_round(doc), indent=1) + "\n", cfg.out)
    return 0


def _round(obj):
    if isinstance(obj, float):
        return float(_g(obj))
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round(v) for v in obj]
    return obj


def _hist_matrix(cfg: RunConfig, scene: Scene):
    n, l_max, rng = cfg.samples, cfg.l_max, _stream(cfg, 1)
    if cfg.kind in ("eta", "gamma"):
        m, _ = est.estimate_eta(scene, n, rng, cfg.bins, l_max, cfg.threads)
        return est.gamma_from_eta(m, scene) if cfg.kind == "gamma" else m
    if cfg.kind == "radii":
        return est.estimate_radii(scene, n, rng, cfg.bins, l_max, cfg.threads)[0]
    m, _ = est.estimate_chords(scene, n, rng, cfg.bins, l_max, cfg.threads)
    return est.lambda_from_mu(m, scene) if cfg.kind == "lambda" else m


def cmd_hist(cfg: RunConfig, scene: Scene) -> int:
    if cfg.pair is not None:
        _check_pair(scene, cfg.pair)
    m = _hist_matrix(cfg, scene)
    kind = HIST_KINDS[cfg.kind]
    pairs = [tuple(sorted(cfg.pair))] if cfg.pair else list(m.pairs())
    texts = {p: to_csv(m[p], kind, p, cfg.seed) for p in pairs}
    if cfg.out is None or cfg.pair is not None:
        _emit("".join(texts.values()), cfg.out)
        return 0
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for (i, j), text in texts.items():
        (out / f"{kind}_{i}_{j}.csv").write_text(text, encoding="utf-8")
    return 0


def _route(cfg: RunConfig, scene: Scene, route: str, i: int, j: int, kernel, cache: dict):
    n, bins, l_max, th = cfg.samples, cfg.bins, cfg.l_max, cfg.threads
    if route == "direct":
        return tr.transfer_direct(scene, i, j, kernel, n, _stream(cfg, 2), th)
    if route == "gamma":
        return tr.transfer_via_gamma(scene, i, j, kernel)
    if route == "radii":
        return tr.transfer_via_radii(scene, i, j, kernel, n, _stream(cfg, 3), bins, l_max, th)
    if route == "chords":
        return tr.transfer_via_chords(scene, i, j, kernel, n, _stream(cfg, 4), bins, l_max, th)
    if route == "eta":
        if "eta" not in cache:
            cache["eta"] = est.estimate_eta(scene, n, _stream(cfg, 5), bins, l_max, th)[0]
        return tr.transfer_via_eta(scene, i, j, kernel, cache["eta"])
    if "lambda" not in cache:
        mu, _ = est.estimate_chords(scene, n, _stream(cfg, 6), bins, l_max, th)
        cache["lambda"] = est.lambda_from_mu(mu, scene)
    return tr.transfer_via_lambda(scene, i, j, kernel, cache["lambda"])


def cmd_transfer(cfg: RunConfig, scene: Scene) -> int:
    kernel = parse_kernel(cfg.kernel)
    pair = cfg.pair or ((0, 1) if len(scene) > 1 else (0, 0))
    _check_pair(scene, pair)
    routes = tr.ROUTES if cfg.route == "all" else (cfg.route,)
    results, cache = [], {}
    for route in routes:
        try:
            res = _route(cfg, scene, route, *pair, kernel, cache)
        except (UnsupportedGeometry, SingularDiagonal) as exc:
            if cfg.route != "all":
                raise
            print(f"skipping route {route}: {exc}", file=sys.stderr)
            continue
        print(f"{route}: {res.wall_time:.3f} s", file=sys.stderr)
        results.append(res)
    if cfg.out is not None:
        doc = {"pair": list(pair), "kernel": kernel.spec, "seed": cfg.seed,
               "results": [{"route": r.route, "value": r.value, "stderr": r.stderr,
                            "n_samples": r.n_samples} for r in results]}
        _emit(json.dumps(_round(doc), indent=1) + "\n", cfg.out)
    rows = [f"# pair={pair[0]},{pair[1]} kernel={kernel.spec} seed={cfg.seed}",
            f"{'route':<8} {'value':>16} {'stderr':>16} {'n_samples':>10}"]
    rows += [f"{r.route:<8} {_g(r.value):>16} {_g(r.stderr):>16} {r.n_samples:>10}" for r in results]
    sys.stdout.write("\n".join(rows) + "\n")
    return 0


def cmd_verify(cfg: RunConfig, scene: Scene) -> int:
    budgets = vf.Budgets.uniform(cfg.samples, cfg.bins, cfg.l_max)
    rng = RandomStream(cfg.seed)
    kernel = parse_kernel(cfg.kernel)
    if cfg.suite == "identities":
        report = vf.verify_identities(scene, budgets, rng, kernel, cfg.threads)
    elif cfg.suite == "oracles":
        report = vf.verify_oracles(scene, budgets, rng, cfg.threads)
    else:
        report = vf.verify_all(scene, budgets, rng, kernel, cfg.threads)
    print(report.table())
    if cfg.out is not None:
        _emit(report.to_json() + "\n", cfg.out)
    return 0 if report.passed else 1


COMMANDS = {"measure": cmd_measure, "hist": cmd_hist, "transfer": cmd_transfer, "verify": cmd_verify}


def run(cfg: RunConfig) -> int:
    try:
        parse_kernel(cfg.kernel)
        scene = load_scene(cfg.scene_path, RandomStream(cfg.seed, 0, (101,)))
        return COMMANDS[cfg.command](cfg, scene)
    except (InputError, ChordixError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chordix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scene", help="scene JSON file")
    common.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                        help="pairs, rays or lines per estimator")
    common.add_argument("--bins", type=int, default=est.DEFAULT_BINS)
    common.add_argument("--l-max", type=float, default=None,
                        help="histogram range (default 1.05 x scene diameter)")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--pair", type=_pair, default=None, help="body indices i,j")
    common.add_argument("--kernel", default="exp:sigma=1", help="ball, const or exp:sigma=<x>")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: CHORDIX_THREADS or CPU count)")
    common.add_argument("--out", default=None, help="output file (directory for hist without --pair)")
    sub.add_parser("measure", parents=[common], help="volumes, surfaces and masses")
    p = sub.add_parser("hist", parents=[common], help="matrix distributions as CSV")
    p.add_argument("--kind", choices=sorted(HIST_KINDS), default="eta")
    p = sub.add_parser("transfer", parents=[common], help="transfer integral by each route")
    p.add_argument("--route", choices=("all", *tr.ROUTES), default="all")
    p = sub.add_parser("verify", parents=[common], help="identity and oracle report")
    p.add_argument("--suite", choices=SUITES, default="all")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            scene_path=args.scene, command=args.command, samples=args.samples,
            bins=args.bins, l_max=args.l_max, seed=args.seed, pair=args.pair,
            kernel=args.kernel, route=getattr(args, "route", "all"),
            kind=getattr(args, "kind", "eta"), suite=getattr(args, "suite", "all"),
            out=args.out, threads=args.threads,
        )
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
