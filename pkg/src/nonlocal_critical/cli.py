"""Command line front end.

Every subcommand reads one JSON run configuration::

    {"N": 3, "alpha": 1.0, "lambda": "2*lambda1",
     "domain": {"shape": "ball", "radius": 1.0},
     "radial": {"nodes": 400, "grading": "uniform"},
     "tol": {"eig": 1e-9, "ground": 1e-8}, "seed": 0}

``lambda`` may be a number or a multiple of the principal eigenvalue of the
chosen discretization, written ``"k*lambda1"``. Exit status is 0 on
success, 1 when a solver fails and 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .constants import (
    DomainError,
    DomainSpec,
    ProblemConfig,
    critical_exponent,
    hls_sharp_constant,
    riesz_constant,
    sobolev_constant,
)
from .forms import AssemblyError, SolverError

log = logging.getLogger("nonlocal_critical")

DEFAULT_TOL = {"eig": 1e-9, "ground": 1e-8, "linear": 1e-12, "pohozaev": 0.05}
TOP_KEYS = {"N", "alpha", "lambda", "domain", "radial", "grid", "tol", "seed"}
_LAMBDA1 = re.compile(r"^\s*(?:([-+]?[0-9.]+(?:[eE][-+]?\d+)?)\s*\*\s*)?lambda1\s*$")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: ProblemConfig
    lam_spec: object
    radial: dict | None = None
    grid: dict | None = None
    tol: dict = field(default_factory=lambda: dict(DEFAULT_TOL))
    seed: int = 0
    raw: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "radial" if self.radial is not None else "grid"


def _need(data: dict, key: str, where: str = ""):
    if key not in data:
        raise ConfigError(f"missing key '{where}{key}'")
    return data[key]


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key '{key}' must be a number, got {value!r}")
    return float(value)


def parse_lambda(value, key: str = "lambda"):
    """A float, or a factor k for the string form ``k*lambda1`` (returned as a tuple)."""
    if isinstance(value, str):
        with contextlib.suppress(ValueError):
            return float(value)
        m = _LAMBDA1.match(value)
        if not m:
            raise ConfigError(f"key '{key}': expected a number or 'k*lambda1', got {value!r}")
        return ("lambda1", float(m.group(1)) if m.group(1) else 1.0)
    return _number(value, key)


def parse_run_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}; allowed: {sorted(TOP_KEYS)}")
    N = _need(data, "N")
    if isinstance(N, bool) or not isinstance(N, int):
        raise ConfigError(f"key 'N' must be an integer, got {N!r}")
    alpha = _number(_need(data, "alpha"), "alpha")
    lam_spec = parse_lambda(data.get("lambda", 0.0))
    dom = data.get("domain", {"shape": "ball", "radius": 1.0})
    try:
        domain = DomainSpec.from_json(dom)
        problem = ProblemConfig(N, alpha, lam_spec if isinstance(lam_spec, float) else 0.0, domain)
    except (DomainError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc
    if ("radial" in data) == ("grid" in data):
        raise ConfigError("select exactly one discretization: 'radial' or 'grid'")
    radial = grid = None
    if "radial" in data:
        radial = dict(data["radial"])
        nodes = _need(radial, "nodes", "radial.")
        if isinstance(nodes, bool) or not isinstance(nodes, int) or nodes < 4:
            raise ConfigError(f"key 'radial.nodes' must be an integer >= 4, got {nodes!r}")
        grading = radial.setdefault("grading", "uniform")
        if grading not in ("uniform", "graded"):
            raise ConfigError(f"key 'radial.grading' must be 'uniform' or 'graded', got {grading!r}")
        if grading == "graded":
            _number(_need(radial, "inner", "radial."), "radial.inner")
        if domain.shape != "ball":
            raise ConfigError("radial discretization needs a ball domain")
    else:
        grid = dict(data["grid"])
        n = _need(grid, "n", "grid.")
        if isinstance(n, bool) or not isinstance(n, int) or n < 3:
            raise ConfigError(f"key 'grid.n' must be an integer >= 3, got {n!r}")
        if N != 3:
            raise ConfigError("grid discretization requires N = 3")
    tol = dict(DEFAULT_TOL)
    for k, v in dict(data.get("tol", {})).items():
        if k not in DEFAULT_TOL:
            raise ConfigError(f"unknown key 'tol.{k}'; allowed: {sorted(DEFAULT_TOL)}")
        tol[k] = _number(v, f"tol.{k}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"key 'seed' must be an integer, got {seed!r}")
    raw = {"N": N, "alpha": alpha, "lambda": data.get("lambda", 0.0), "domain": domain.to_json(),
           "tol": tol, "seed": seed}
    raw["radial" if radial is not None else "grid"] = radial if radial is not None else grid
    return RunConfig(problem, lam_spec, radial, grid, tol, seed, raw)


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_run_config(data)


def build_bundle(run: RunConfig):
    p = run.problem
    if run.radial is not None:
        from .radial import RadialMesh, assemble_radial_bundle
        R, n = p.domain.radius, run.radial["nodes"]
        if run.radial["grading"] == "graded":
            mesh = RadialMesh.graded(p.N, R, n, float(run.radial["inner"]))
        else:
            mesh = RadialMesh.uniform(p.N, R, n)
        return assemble_radial_bundle(mesh, p.alpha)
    from .grid3d import assemble_grid_bundle, make_grid
    return assemble_grid_bundle(make_grid(p.domain, run.grid["n"]), p.alpha,
                                tol=run.tol["linear"])


class _Session:
    """Lazily assembled bundle and principal eigenvalue shared by one command."""

    def __init__(self, run: RunConfig):
        self.run = run
        self._bundle = None
        self._lambda1 = None

    @property
    def bundle(self):
        if self._bundle is None:
            self._bundle = build_bundle(self.run)
        return self._bundle

    @property
    def lambda1(self) -> float:
        if self._lambda1 is None:
            from .spectral import solve_spectrum
            spec = solve_spectrum(self.bundle, 1, tol=self.run.tol["eig"], seed=self.run.seed)
            self._lambda1 = float(spec.eigenvalues[0])
        return self._lambda1

    def resolve(self, lam_spec) -> float:
        if isinstance(lam_spec, tuple):
            return lam_spec[1] * self.lambda1
        return float(lam_spec)

    def problem(self, lam_spec=None) -> ProblemConfig:
        lam = self.resolve(self.run.lam_spec if lam_spec is None else lam_spec)
        return self.run.problem.with_lambda(lam)


def _emit(out: Path | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _json_text(payload: dict, run: RunConfig) -> str:
    doc = {"version": __version__, "config": run.raw, **payload}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _csv(run: RunConfig, columns, rows, extra=()) -> str:
    from .fieldio import csv_text, provenance_lines
    return csv_text(columns, rows, provenance_lines(run.raw, __version__) + list(extra))


# subcommands


def cmd_constants(run: RunConfig, args) -> int:
    from .verifier import multiplicity_upsilon
    p = run.problem
    report = {
        "C_N_alpha": riesz_constant(p.N, p.alpha),
        "critical_exponent": str(critical_exponent(p.N)),
        "critical_exponent_value": float(critical_exponent(p.N)),
        "sobolev_S": sobolev_constant(p.N),
        "C_HLS": hls_sharp_constant(p.N, p.alpha),
        "regime": p.regime.name,
        "upsilon": multiplicity_upsilon(p),
        "domain_volume": p.volume,
    }
    _emit(args.out, "constants.json", _json_text(report, run))
    return 0


def cmd_eigs(run: RunConfig, args) -> int:
    from .spectral import solve_spectrum, validate_spectrum
    sess = _Session(run)
    bundle = sess.bundle
    if not 1 <= args.count <= bundle.size:
        raise ConfigError(f"--count must lie in [1, {bundle.size}] for this discretization")
    spec = solve_spectrum(bundle, args.count, tol=run.tol["eig"], seed=run.seed)
    rep = validate_spectrum(bundle, spec)
    rows = [{"k": k, "lambda_k": p.lam, "residual": p.residual, "cluster_id": c}
            for k, (p, c) in enumerate(zip(spec.pairs, spec.clusters()), start=1)]
    _emit(args.out, "spectrum.csv", _csv(run, ["k", "lambda_k", "residual", "cluster_id"], rows))
    payload = {"validation": rep.to_json(), "tolerances": {"eig": run.tol["eig"], "positivity": 1e-8}}
    _emit(args.out, "validation.json", _json_text(payload, run))
    return 0


def _write_ground_field(bundle, u, out: Path):
    from .fieldio import slice_rows, write_field
    if bundle.kind == "radial":
        mesh = bundle.mesh
        write_field(out / "field.bin", u, float(mesh.widths[0]), (float(mesh.nodes[0]),))
        return ["r", "u"], [{"r": float(r), "u": float(v)} for r, v in zip(mesh.nodes, u)]
    g = bundle.grid
    f3 = bundle.embed(u)
    write_field(out / "field.bin", f3, g.h, g.origin)
    return slice_rows(f3, g.h, g.origin)


def cmd_ground(run: RunConfig, args) -> int:
    from .groundstate import MinimizeOptions, default_init, minimize_m, minimize_m_plus
    from .verifier import pde_residual, pohozaev_residual
    sess = _Session(run)
    bundle = sess.bundle
    prob = sess.problem()
    opts = MinimizeOptions(tol=run.tol["ground"])
    init = default_init(bundle)
    if args.noise > 0:
        rng = np.random.default_rng(run.seed)
        init = init * (1.0 + args.noise * rng.standard_normal(init.shape))
    solver = minimize_m_plus if args.positive else minimize_m
    res = solver(bundle, prob.lam, init, opts)
    poho = pohozaev_residual(bundle, prob, res.u, multiplier=res.m_value)
    payload = {
        "lambda": prob.lam,
        "result": res.summary(),
        "sobolev_S": sobolev_constant(prob.N),
        "below_S": bool(res.m_value < sobolev_constant(prob.N)),
        "pohozaev": poho.to_json(),
        "pde_residual": pde_residual(bundle, prob, res.u, res.m_value),
        "tolerances": {"ground": opts.tol, "pohozaev": run.tol["pohozaev"]},
    }
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    cols, rows = _write_ground_field(bundle, res.u, out)
    _emit(out, "profile.csv", _csv(run, cols, rows))
    _emit(out, "ground.json", _json_text(payload, run))
    if not res.converged:
        log.warning("minimizer did not converge (concentrated=%s)", res.concentrated)
    return 0


def cmd_scan(run: RunConfig, args) -> int:
    from .groundstate import SCAN_COLUMNS, MinimizeOptions, lambda_scan
    sess = _Session(run)
    lams = [sess.resolve(parse_lambda(tok, "--lambdas")) for tok in args.lambdas]
    rows = lambda_scan(sess.bundle, run.problem, lams, MinimizeOptions(tol=run.tol["ground"]),
                       pohozaev_tol=run.tol["pohozaev"])
    _emit(args.out, "scan.csv", _csv(run, SCAN_COLUMNS, [r.as_dict() for r in rows]))
    return 0


def cmd_pohozaev(run: RunConfig, args) -> int:
    from .fieldio import read_field
    from .verifier import pde_residual, pohozaev_residual
    sess = _Session(run)
    bundle = sess.bundle
    prob = sess.problem()
    stored = read_field(args.field)
    if bundle.kind == "radial":
        if stored.values.shape != (bundle.size,):
            raise ConfigError(f"field has shape {stored.values.shape}, mesh has {bundle.size} cells")
        u = stored.values
    else:
        if stored.values.shape != bundle.grid.dims:
            raise ConfigError(f"field has shape {stored.values.shape}, grid is {bundle.grid.dims}")
        u = bundle.restrict(stored.values)
    if args.multiplier is not None:
        mult = args.multiplier
    else:
        # testing the equation against u itself fixes the multiplier
        crit = bundle.integral(np.abs(u) ** prob.p_crit)
        mult = (bundle.dirichlet_energy(u) - prob.lam * bundle.dalpha_form(u)) / crit
    poho = pohozaev_residual(bundle, prob, u, multiplier=mult)
    payload = {"lambda": prob.lam, "multiplier": mult, "pohozaev": poho.to_json(),
               "pde_residual": pde_residual(bundle, prob, u, mult),
               "tolerances": {"pohozaev": run.tol["pohozaev"]}}
    _emit(args.out, "pohozaev.json", _json_text(payload, run))
    return 0


def cmd_instanton(run: RunConfig, args) -> int:
    from .instanton import PROBE_COLUMNS, d_r_curve, t_sign_probe
    p = run.problem
    if args.mode == "dr":
        curve = d_r_curve(p.N, p.alpha, args.R)
        cols = ["R", "D_R", "increment", "increment_ratio", "tail_exponent"]
        extra = [f"# tail_exponent: {curve.tail_exponent!r}",
                 f"# expected_exponent: {4 + p.alpha - p.N!r}"]
        _emit(args.out, "d_r.csv", _csv(run, cols, curve.rows(), extra))
        return 0
    sess = _Session(run)
    prob = sess.problem() if isinstance(run.lam_spec, tuple) else p
    table = t_sign_probe(prob, args.mu, delta=args.delta, nodes=args.nodes)
    extra = [f"# regime: {table.regime}", f"# any_below_S: {str(table.any_below_S).lower()}"]
    _emit(args.out, "probe.csv", _csv(run, PROBE_COLUMNS, [r.as_dict() for r in table.rows], extra))
    return 0


COMMANDS = {
    "constants": cmd_constants,
    "eigs": cmd_eigs,
    "ground": cmd_ground,
    "scan": cmd_scan,
    "pohozaev": cmd_pohozaev,
    "instanton": cmd_instanton,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=None,
                        help="output directory (stdout for single-file reports if omitted)")
    common.add_argument("--threads", type=int, default=None, help="BLAS/FFT thread limit")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded reductions for byte-identical output")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="nonlocal-critical", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="analytic constants for N, alpha")
    p = sub.add_parser("eigs", parents=[common], help="nonlocal eigenvalues")
    p.add_argument("--count", type=int, default=5)
    p = sub.add_parser("ground", parents=[common], help="constrained minimizer")
    p.add_argument("--positive", action="store_true", help="constrain the positive part")
    p.add_argument("--noise", type=float, default=0.0,
                   help="relative random perturbation of the initial profile (seeded)")
    p = sub.add_parser("scan", parents=[common], help="minimizers over a list of lambdas")
    p.add_argument("--lambdas", nargs="+", required=True,
                   help="numbers or multiples of the principal eigenvalue, e.g. 0.5*lambda1")
    p = sub.add_parser("pohozaev", parents=[common], help="identity residual of a stored field")
    p.add_argument("--field", type=Path, required=True)
    p.add_argument("--multiplier", type=float, default=None)
    p = sub.add_parser("instanton", parents=[common], help="test-function probes")
    p.add_argument("--mode", choices=["probe", "dr"], default="probe")
    p.add_argument("--mu", type=float, nargs="+", default=[1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--nodes", type=int, default=400)
    p.add_argument("--R", type=float, nargs="+", default=[2, 4, 8, 16, 32])
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = 1 if args.deterministic else args.threads
    if threads is not None and threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    try:
        run = load_run_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    limiter = contextlib.nullcontext()
    if threads is not None:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=threads)
    try:
        with limiter:
            return COMMANDS[args.command](run, args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, AssemblyError, ArithmeticError, RuntimeError, ValueError) as exc:
        residual = getattr(exc, "residual", math.nan)
        print(f"solver failure: {exc} (residual {residual})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
