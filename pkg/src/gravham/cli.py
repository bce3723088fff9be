"""Command-line front end: verification suites, analyzers, lattice lab and quantum solver.

Every subcommand returns a :class:`Report`.  Exit status is 0 when all checks
pass, 1 on a failed check, 2 on a configuration error and 3 on a numeric
degeneracy.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .canonical.brackets import (
    bracket_pi_with_Bg,
    bracket_pi_with_Bg_direct,
    g as g_sym,
    pi as pi_sym,
    poisson_bracket,
    random_expr,
)
from .canonical.lattice import (
    front_diagnostics,
    gauss_energy,
    hamilton_evolve,
    load_lattice_json,
    preset,
)
from .canonical.point import (
    FieldPoint,
    dof_count,
    lagrangian_b_form,
    lagrangian_christoffel,
    lagrangian_split,
    momentum_from_velocity,
    velocity_from_momentum,
)
from .errors import ConfigInvalid, DimensionTooSmall, GravhamError
from .grav_tensors import (
    check_IE_inverse,
    e_array,
    inject_fault,
    tensor_B,
    tensor_B_dsym,
    tensor_B_pair,
    tensor_B_sym,
    tensor_e,
    tensor_E,
    tensor_I,
)
from .nonlinearity import classify_S_terms
from .quantum import ConfigGrid, WaveFunction, build_hamiltonian_operator, evolve_schrodinger, parse_variable
from .sampling import random_field_point, random_metric
from .tensor_core import load_metric_json, minkowski, tensor_to_csv

FAULTS = ("B-sign", "I-sign")


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": "pass" if self.passed else "fail",
            "measured": self.measured,
            "tolerance": self.tolerance,
            "note": self.note,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        s = f"[{status}] {self.name}: measured={self.measured:.3e} tol={self.tolerance:.1e}"
        return f"{s}  ({self.note})" if self.note else s


@dataclass
class Report:
    subcommand: str
    seed: int
    config: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    info: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def check(self, name, measured, tol, note="", passed=None):
        measured = float(measured)
        if passed is None:
            passed = bool(np.isfinite(measured) and measured <= tol)
        self.checks.append(Check(name, passed, measured, float(tol), note))

    def error(self, exc: GravhamError, context: str = ""):
        self.errors.append({"code": exc.code, "exit_status": exc.exit_status,
                            "message": str(exc), "context": context})

    @property
    def exit_code(self) -> int:
        if self.errors:
            return max(e["exit_status"] for e in self.errors)
        return 0 if all(c.passed for c in self.checks) else 1

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "info": self.info,
            "errors": self.errors,
            "files": self.files,
            "exit_code": self.exit_code,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def text(self) -> str:
        out = [f"gravham {self.subcommand}  seed={self.seed}"]
        out += [f"  {k} = {v}" for k, v in sorted(self.config.items())]
        out += [c.line() for c in self.checks]
        out += list(self.info)
        out += [f"[ERROR] {e['code']}: {e['message']}" for e in self.errors]
        out += [f"wrote {f}" for f in self.files]
        out.append(f"exit {self.exit_code}")
        return "\n".join(out)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRAVHAM_THREADS", "1")))
    except ValueError:
        raise ConfigInvalid("GRAVHAM_THREADS must be an integer")


def _run_parallel(jobs):
    """Run zero-arg callables concurrently; results come back in submission order."""
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(lambda f: f(), jobs))


def _outdir(args):
    if args.out is None:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(report: Report, outdir, name: str, text: str):
    if outdir is None:
        return
    (outdir / name).write_text(text)
    report.files.append(name)


def _tol(args, default):
    tol = default if args.tol is None else args.tol
    if not tol > 0:
        raise ConfigInvalid("tolerances must be positive")
    return tol


# -- verify -------------------------------------------------------------------

def _verify_jobs(d, seed, samples, tol):
    children = np.random.SeedSequence(seed).spawn(6)
    rngs = [np.random.default_rng(s) for s in children]

    def ie():
        r = max(check_IE_inverse(random_metric(rngs[0], d)) for _ in range(samples))
        return [("I.E identity", r, tol, f"{samples} random Lorentzian metrics")]

    def bsym():
        worst_pair = worst_dsym = worst_sym = 0.0
        for _ in range(samples // 4 or 1):
            m = random_metric(rngs[1], d)
            bp = tensor_B_pair(m).data
            worst_pair = max(worst_pair, np.max(np.abs(bp - bp.transpose(3, 4, 5, 0, 1, 2))))
            bd = tensor_B_dsym(m).data
            worst_dsym = max(worst_dsym, np.max(np.abs(bd - bd.transpose(1, 0, 2, 3, 4, 5))))
            bs = tensor_B_sym(m).data
            worst_sym = max(worst_sym, np.max(np.abs(bs - bs.transpose(0, 1, 5, 3, 4, 2))))
        return [
            ("B pair exchange symmetry", worst_pair, tol, "(abc) <-> (mnr)"),
            ("B four-term a<->b symmetry", worst_dsym, tol, ""),
            ("B c<->r symmetry", worst_sym, tol, ""),
        ]

    def einv():
        worst = 0.0
        for _ in range(samples):
            m = random_metric(rngs[2], d)
            e = e_array(m.upper)[1:, 1:]
            worst = max(worst, np.max(np.abs(e @ m.spatial_lower - np.eye(d - 1))))
        return [("e inverse of spatial block", worst, tol, "e^mn g_nk = delta^m_k")]

    def lagr():
        rel = split = 0.0
        for _ in range(samples):
            p = random_field_point(rngs[3], d)
            lc, lb = lagrangian_christoffel(p), lagrangian_b_form(p)
            rel = max(rel, abs(lc - lb) / max(abs(lc), 1e-300))
            split = max(split, abs(sum(lagrangian_split(p)) - lb) / max(abs(lb), 1.0))
        return [
            ("Lagrangian Gamma-Gamma vs B form", rel, 1e-9, "relative"),
            ("Lagrangian split sum", split, tol, ""),
        ]

    def legendre():
        worst = 0.0
        for _ in range(samples):
            p = random_field_point(rngs[4], d)
            v = velocity_from_momentum(p.with_momentum(momentum_from_velocity(p)))
            ref = p.velocity[1:, 1:]
            worst = max(worst, np.max(np.abs(v - ref)) / max(np.max(np.abs(ref)), 1e-300))
        return [("Legendre round trip", worst, 1e-8, "spatial velocities, relative")]

    def brackets():
        rng = rngs[5]
        anti = leib = jac = 0.0
        for _ in range(max(samples // 4, 2)):
            A, B, C = (random_expr(rng, d) for _ in range(3))
            gl = random_metric(rng, d)
            mom = rng.standard_normal((d, d))
            mom = 0.5 * (mom + mom.T)

            def ev(x):
                return x.evaluate(gl.lower, g_upper=gl.upper, momentum=mom)

            anti = max(anti, abs(ev(poisson_bracket(A, B) + poisson_bracket(B, A))))
            leib = max(leib, abs(ev(poisson_bracket(A, B * C)
                                    - poisson_bracket(A, B) * C - B * poisson_bracket(A, C))))
            jac = max(jac, abs(ev(poisson_bracket(A, poisson_bracket(B, C))
                                  + poisson_bracket(B, poisson_bracket(C, A))
                                  + poisson_bracket(C, poisson_bracket(A, B)))))
        half = poisson_bracket(g_sym(1, 2), pi_sym(1, 2)).evaluate(np.eye(d))
        p = random_field_point(rng, d)
        engine = np.max(np.abs(bracket_pi_with_Bg(p) - bracket_pi_with_Bg_direct(p)))
        return [
            ("bracket antisymmetry", anti, 1e-11, ""),
            ("bracket Leibniz rule", leib, 1e-11, ""),
            ("bracket Jacobi identity", jac, 1e-11, ""),
            ("{g_12, pi^12} = 1/2", abs(half - 0.5), 1e-15, ""),
            ("{pi, B dg} engine vs expansion", engine, 1e-11, ""),
        ]

    return [ie, bsym, einv, lagr, legendre, brackets]


def cmd_verify(args) -> Report:
    rep = Report("verify", args.seed, {"d": args.d, "samples": args.samples})
    tol = _tol(args, 1e-10)
    rep.config["tol"] = tol
    if args.inject_fault:
        rep.config["inject_fault"] = args.inject_fault
    if args.d < 3:
        rep.error(DimensionTooSmall(f"verification needs d >= 3, got d={args.d}"), "verify")
        return rep
    jobs = _verify_jobs(args.d, args.seed, args.samples, tol)
    if args.inject_fault:
        with inject_fault(args.inject_fault):
            results = _run_parallel(jobs)
    else:
        results = _run_parallel(jobs)
    for group in results:
        for name, measured, t, note in group:
            rep.check(name, measured, t, note)
    return rep


# -- tensors ------------------------------------------------------------------

_TENSORS = {"I": tensor_I, "B": tensor_B, "BS": tensor_B_sym, "BS1": tensor_B_dsym, "e": tensor_e, "E": tensor_E}


def _metric(args, rng=None):
    if args.metric:
        return load_metric_json(Path(args.metric))
    if rng is not None:
        return random_metric(rng, args.d)
    return minkowski(args.d)


def cmd_tensors(args) -> Report:
    m = _metric(args)
    rep = Report("tensors", args.seed, {"d": m.d, "which": args.which,
                                        "metric": args.metric or "minkowski"})
    if args.which == "check-IE":
        rep.check("I.E identity", check_IE_inverse(m), _tol(args, 1e-10))
        return rep
    t = _TENSORS[args.which](m)
    rep.info.append(f"{args.which}: rank {t.rank}, {t.data.size} entries, max |entry| {np.max(np.abs(t.data)):.6g}")
    outdir = _outdir(args)
    if outdir is None:
        rep.info.append(tensor_to_csv(t).rstrip())
    else:
        _write(rep, outdir, f"tensor_{args.which}.csv", tensor_to_csv(t))
    return rep


# -- legendre / dof / degrees -------------------------------------------------

def cmd_legendre(args) -> Report:
    rng = np.random.default_rng(args.seed)
    rep = Report("legendre", args.seed, {"d": args.d, "samples": args.samples})
    # flat worked case: g_11,0 = 1 gives pi = diag(0, -1/2, -1/2) at d = 4
    flat_v = np.zeros((args.d, args.d))
    flat_v[1, 1] = 1.0
    flat = FieldPoint.from_arrays(minkowski(args.d).lower, velocity=flat_v)
    pi_flat = momentum_from_velocity(flat)
    expect = np.zeros((args.d - 1, args.d - 1))
    expect[1:, 1:] = -0.5 * np.eye(args.d - 2)
    rep.check("flat worked case pi", np.max(np.abs(pi_flat[1:, 1:] - expect)), 1e-14,
              "pi = diag(0, -1/2, ...) for g_11,0 = 1")
    worst = 0.0
    for _ in range(args.samples):
        p = random_field_point(rng, args.d) if not args.metric else FieldPoint.from_arrays(
            _metric(args).lower, velocity=0.5 * (lambda v: v + v.T)(rng.standard_normal((args.d, args.d))))
        v = velocity_from_momentum(p.with_momentum(momentum_from_velocity(p)))
        ref = p.velocity[1:, 1:]
        worst = max(worst, np.max(np.abs(v - ref)) / max(np.max(np.abs(ref)), 1e-300))
    rep.check("Legendre round trip", worst, _tol(args, 1e-8), "spatial velocities, relative")
    return rep


def cmd_dof(args) -> Report:
    rep = Report("dof", args.seed, {"d": args.d})
    f = dof_count(args.d)
    rep.info.append(f"f({args.d}) = {f}")
    known = {3: 0, 4: 2}
    if args.d in known:
        rep.check(f"f({args.d}) = {known[args.d]}", abs(f - known[args.d]), 0.5, "exact integer")
    return rep


def cmd_degrees(args) -> Report:
    rep = Report("degrees", args.seed, {"d": args.d})
    sr = classify_S_terms(args.d, seed=args.seed)
    rep.info.extend(sr.text().splitlines())
    rep.check("not reducible to quadratic", 0.0 if not sr.reducible_to_quadratic else 1.0, 0.5,
              sr.conclusion)
    _write(rep, _outdir(args), "degrees.json", json.dumps(sr.to_dict(), indent=2, sort_keys=True))
    return rep


# -- lattice ------------------------------------------------------------------

def _lattice(args):
    if args.lattice:
        return load_lattice_json(Path(args.lattice))
    return preset(args.preset, n=args.n, spacing=args.spacing, d=args.d, boundary=args.boundary,
                  amplitude=args.amplitude)


def cmd_evolve(args) -> Report:
    lat = _lattice(args)
    rep = Report("evolve", args.seed, {"preset": args.preset if not args.lattice else args.lattice,
                                       "n": lat.n, "spacing": lat.spacing, "boundary": lat.boundary,
                                       "dt": args.dt, "steps": args.steps})
    traj = hamilton_evolve(lat, args.dt, args.steps, store_every=args.store_every)
    rep.check("energy drift", traj.relative_drift, _tol(args, 1e-6), "relative, implicit midpoint")
    if args.reverse:
        back = hamilton_evolve(traj.final.with_momentum(-traj.final.pi), args.dt, args.steps,
                               store_every=args.steps)
        err = max(np.max(np.abs(back.final.g - lat.g)), np.max(np.abs(back.final.pi + lat.pi)))
        rep.check("time-reversal closure", err, 1e-6, "")
    try:
        fr = front_diagnostics(traj)
        rep.info.append(f"front: x {fr.front_position[0]:.4g} -> {fr.front_position[-1]:.4g}, "
                        f"final energy share {fr.front_energy_fraction[-1]:.4g}, "
                        f"behind-front variance {fr.behind_front_variance[-1]:.3e}")
        outdir_rows = ["step,front_x,energy_fraction,behind_variance"] + [
            f"{s},{x!r},{f!r},{v!r}" for s, x, f, v in zip(fr.steps, fr.front_position,
                                                         fr.front_energy_fraction, fr.behind_front_variance)]
        _write(rep, _outdir(args), "fronts.csv", "\n".join(outdir_rows) + "\n")
    except GravhamError as exc:
        rep.info.append(f"front: not reported ({exc.code})")
    outdir = _outdir(args)
    _write(rep, outdir, "trajectory.csv", traj.to_csv())
    _write(rep, outdir, "summary.json", json.dumps(
        {"initial_energy": float(traj.energy[0]), "final_energy": float(traj.energy[-1]),
         "relative_drift": traj.relative_drift}, indent=2, sort_keys=True))
    return rep


def cmd_gauss(args) -> Report:
    lat = _lattice(args)
    if args.steps:
        lat = hamilton_evolve(lat, args.dt, args.steps, store_every=args.steps).final
    volume, surface = gauss_energy(lat)
    scale = max(1.0, abs(surface))
    rep = Report("gauss", args.seed, {"boundary": lat.boundary, "n": lat.n, "steps": args.steps})
    rep.check("discrete Gauss identity", abs(volume - surface) / scale, _tol(args, 1e-12),
              f"volume {volume:.6e}, surface {surface:.6e}")
    return rep


# -- quantize -----------------------------------------------------------------

def _parse_ranges(text, n):
    if text is None:
        return None
    parts = [p for p in text.split(",") if p]
    if len(parts) != n:
        raise ConfigInvalid(f"--range needs {n} lo:hi entries, got {len(parts)}")
    out = []
    for p in parts:
        try:
            lo, hi = (float(x) for x in p.split(":"))
        except ValueError:
            raise ConfigInvalid(f"bad range {p!r}, expected lo:hi")
        out.append((lo, hi))
    return out


def cmd_quantize(args) -> Report:
    names = [v for v in args.vars.split(",") if v]
    variables = [parse_variable(v) for v in names]
    grid = ConfigGrid.build(variables, _parse_ranges(args.range, len(names)), points=args.points)
    context = FieldPoint.from_arrays(_metric(args).lower)
    H = build_hamiltonian_operator(grid, context, hbar=args.hbar)
    centers = [0.5 * (a[0] + a[-1]) for a in grid.axes()]
    widths = [0.08 * (a[-1] - a[0]) for a in grid.axes()]

    def gaussian(*xs):
        return np.exp(-sum((x - c) ** 2 / (4 * w**2) for x, c, w in zip(xs, centers, widths)))

    psi0 = WaveFunction.from_function(grid, gaussian).normalized()
    res = evolve_schrodinger(psi0, H, args.dtau, args.steps, hbar=args.hbar, max_drift=None)
    rep = Report("quantize", args.seed, {"vars": ",".join(names), "points": args.points,
                                         "steps": args.steps, "dtau": args.dtau, "hbar": args.hbar})
    rep.check("norm drift", res.drift, _tol(args, 1e-7), res.scheme)
    rep.info.append(f"Hermiticity error {H.adjoint_error():.3e}; ordering term {H.meta['ordering_term']}")
    outdir = _outdir(args)
    _write(rep, outdir, "wavefunction.csv", res.final.to_csv())
    _write(rep, outdir, "metadata.json", json.dumps(
        {"hbar": args.hbar, "dtau": args.dtau, "steps": args.steps, "scheme": res.scheme,
         "drift": res.drift, "lhs_factor": H.lhs_factor, **H.meta}, indent=2, sort_keys=True))
    return rep


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--d", type=int, default=4, help="space-time dimension")
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--tol", type=float, default=None, help="override the check tolerance")
    common.add_argument("--out", default=None, help="directory for report and data files")
    common.add_argument("--metric", default=None, help="metric JSON file")
    common.add_argument("--format", choices=("text", "json"), default="text")

    lattice = argparse.ArgumentParser(add_help=False)
    lattice.add_argument("--preset", choices=("flat", "kick"), default="kick")
    lattice.add_argument("--lattice", default=None, help="lattice JSON file")
    lattice.add_argument("--n", type=int, default=64)
    lattice.add_argument("--spacing", type=float, default=0.1)
    lattice.add_argument("--boundary", choices=("periodic", "fixed"), default="periodic")
    lattice.add_argument("--amplitude", type=float, default=1e-3)
    lattice.add_argument("--dt", type=float, default=0.01)

    parser = argparse.ArgumentParser(prog="gravham", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="run the identity suites")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tensors", parents=[common], help="build and export a tensor")
    p.add_argument("--which", choices=(*_TENSORS, "check-IE"), default="check-IE")
    p.set_defaults(func=cmd_tensors)

    p = sub.add_parser("legendre", parents=[common], help="Legendre map round trip")
    p.add_argument("--samples", type=int, default=50)
    p.set_defaults(func=cmd_legendre)

    p = sub.add_parser("dof", parents=[common], help="degrees of freedom count")
    p.set_defaults(func=cmd_dof)

    p = sub.add_parser("degrees", parents=[common], help="polynomial degree report")
    p.set_defaults(func=cmd_degrees)

    p = sub.add_parser("evolve", parents=[common, lattice], help="1+1D lattice evolution")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--store-every", type=int, default=10)
    p.add_argument("--reverse", action="store_true", help="also check time-reversal closure")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("gauss", parents=[common, lattice], help="discrete Gauss identity")
    p.add_argument("--steps", type=int, default=0, help="evolve this many steps first")
    p.set_defaults(func=cmd_gauss)

    p = sub.add_parser("quantize", parents=[common], help="minisuperspace Schroedinger evolution")
    p.add_argument("--vars", default="g11")
    p.add_argument("--range", default=None, help="lo:hi per variable, comma separated")
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--dtau", type=float, default=1e-3)
    p.add_argument("--hbar", type=float, default=1.0)
    p.set_defaults(func=cmd_quantize)
    return parser


def run(argv=None) -> tuple[Report, argparse.Namespace]:
    args = build_parser().parse_args(argv)
    try:
        rep = args.func(args)
    except GravhamError as exc:
        rep = Report(args.command, args.seed)
        rep.error(exc, args.command)
    return rep, args


def main(argv=None) -> int:
    rep, args = run(argv)
    body = rep.to_json() if args.format == "json" else rep.text()
    print(body)
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(rep.to_json() + "\n")
        (outdir / "report.txt").write_text(rep.text() + "\n")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
