"""Command line runner for the experiments.

One subcommand per experiment; configs come from flags or a TOML file and
results land as CSV/JSON next to a manifest, ready for ``compare-golden``.

Every run writes ``manifest.json`` last (atomically); CSV files end with a
``# manifest: manifest.json`` comment line.  Exit codes: 0 all gates
passed, 1 a gate failed, 2 bad configuration, 3 a numerical error.
"""
import argparse
import csv
import hashlib
import json
import logging
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, EmptyFamily, MissingArtifact, ZlabError

log = logging.getLogger("zlab")

COMMANDS = ("whitney", "seminorm", "extend", "apply", "lemma-suite", "tp-check")
MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    command: str
    domain: object = "unit_square"
    kernel: str = "beurling_re"
    modulus: object = "power:1"
    n: int = None
    grid_coarse: int = 16
    grid_fine: int = 32
    family: dict = field(default_factory=lambda: {"k_min": 2, "k_max": 4})
    tolerances: dict = field(default_factory=lambda: {"stability": 0.2})
    out: str = "zlab-run"
    seed: int = 0
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        grid = data.pop("grid", {})
        if "coarse" in grid:
            data["grid_coarse"] = grid["coarse"]
        if "fine" in grid:
            data["grid_fine"] = grid["fine"]
        known = set(cls.__dataclass_fields__)
        opts = dict(data.pop("options", {}))
        for k in list(data):
            if k not in known:
                opts[k] = data.pop(k)
        if "command" not in data:
            raise ConfigError("config needs a 'command'")
        cfg = cls(options=opts, **data)
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path):
        try:
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def validate(self):
        from .czop import kernel_builtin
        from .geometry import make_domain
        from .moduli import from_spec
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        try:
            kernel_builtin(self.kernel)
            make_domain(self.domain)
            omega = from_spec(self.modulus)
        except ZlabError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n is None:
            self.n = omega.order_n
        if not (0 < self.grid_coarse < self.grid_fine):
            raise ConfigError("grid resolutions need 0 < coarse < fine")
        if any(not (float(v) > 0) for v in self.tolerances.values()):
            raise ConfigError("tolerances must be positive")
        return self

    def canonical(self):
        d = asdict(self)
        d.pop("out")
        return d

    def hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    config_hash: str
    version: str
    command: str
    stages: dict = field(default_factory=dict)
    gates: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    status: str = "running"
    error: str = None

    @property
    def passed(self):
        return self.status == "ok" and all(self.gates.values())

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def write_atomic(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        fh.write(f"# manifest: {MANIFEST}\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    write_atomic(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# test functions and polynomials from strings


def parse_poly(text, center=(0.0, 0.0)):
    """``"2*x^2*y - 0.5*y + 1"`` -> Polynomial (about ``center``)."""
    from .polyapprox import Polynomial
    terms = {}
    src = re.sub(r"(?<![eE])-", "+-", text.replace(" ", ""))
    for raw in filter(None, src.split("+")):
        sign = -1.0 if raw.startswith("-") else 1.0
        raw = raw.lstrip("-")
        coef = 1.0
        k = [0, 0]
        for fac in raw.split("*"):
            if not fac:
                continue
            m = re.fullmatch(r"([xy])(?:\^(\d+))?", fac)
            if m:
                k["xy".index(m.group(1))] += int(m.group(2) or 1)
                continue
            try:
                coef *= float(fac)
            except ValueError as exc:
                raise ConfigError(f"cannot parse polynomial term {raw!r}") from exc
        terms[tuple(k)] = terms.get(tuple(k), 0.0) + sign * coef
    if not terms:
        raise ConfigError(f"empty polynomial {text!r}")
    deg = max(sum(k) for k in terms)
    return Polynomial.from_terms(2, deg, terms, center=center)


def make_function(cfg, omega):
    """Test function from ``options.function``: phi, cusp or poly:<expr>."""
    from .tpcheck import extremal
    spec = str(cfg.options.get("function", "phi"))
    x0 = np.asarray(cfg.options.get("x0", _default_center(cfg)), dtype=float)
    ang = float(cfg.options.get("angle", 0.0))
    e = np.array([math.cos(ang), math.sin(ang)])
    if spec == "phi":
        return extremal(omega, e, x0)
    if spec == "cusp":
        alpha = float(cfg.options.get("alpha", 0.5))
        return lambda x: np.abs((np.atleast_2d(x) - x0) @ e) ** alpha
    if spec.startswith("poly:"):
        return parse_poly(spec[5:], center=x0)
    raise ConfigError(f"unknown function {spec!r}")


def _default_center(cfg):
    from .geometry import make_domain
    return list(make_domain(cfg.domain).bounding_box.center)


# ---------------------------------------------------------------------------
# pipelines; each returns {gate: bool} and writes into out


def _whitney(cfg, out, man):
    from .geometry import check_axioms, make_domain, vertical_profile, whitney
    D = make_domain(cfg.domain)
    depth = int(cfg.options.get("depth", 12))
    W = whitney(D, k_max=depth)
    W.to_csv(out / "covering.csv", manifest_ref=MANIFEST)
    ax = check_axioms(W, seed=cfg.seed)
    prof = vertical_profile(W)
    write_csv(out / "vertical.csv", ["level", "max_count"], sorted(prof.items()))
    write_json(out / "axioms.json", {"axioms": ax, "cubes": len(W), "uncovered": W.uncovered})
    viol = sum(int(ax[k]) for k in ("dyadic", "disjoint", "union", "dist_ratio", "neighbour"))
    return {"axioms": viol == 0,
            "uncovered": W.uncovered < float(cfg.tolerances.get("uncovered", 1e-6))}


def _family(cfg, D, mode="all_inside"):
    from .campanato import dyadic_family
    f = cfg.family
    return dyadic_family(D, int(f.get("k_min", 2)), int(f.get("k_max", 5)), f.get("mode", mode),
                         shifts=bool(f.get("shifts", True)),
                         max_per_level=int(f.get("max_per_level", 1024)), seed=cfg.seed)


def _seminorm(cfg, out, man):
    from .campanato import p_equivalence_experiment, seminorm
    from .geometry import make_domain
    from .moduli import from_spec
    D = make_domain(cfg.domain)
    omega = from_spec(cfg.modulus)
    f = make_function(cfg, omega)
    fam = _family(cfg, D)
    p = cfg.options.get("p", 1)
    p = "inf" if str(p) == "inf" else float(p)
    rep = seminorm(f, D, omega, cfg.n, p, fam)
    rep.to_csv(out / "oscillation.csv", manifest_ref=MANIFEST)
    eq = p_equivalence_experiment(f, D, omega, cfg.n, fam)
    write_json(out / "seminorm.json", {"summary": rep.summary(), "p_equivalence": eq})
    return {"finite": math.isfinite(rep.sup), "monotone": eq["monotone"]}


def _extend(cfg, out, man):
    from .extension import extend
    from .geometry import make_domain
    from .moduli import from_spec
    D = make_domain(cfg.domain)
    omega = from_spec(cfg.modulus)
    f = make_function(cfg, omega)
    ext = extend(f, D, omega, cfg.n, k_max=int(cfg.options.get("depth", 9)))
    res = int(cfg.options.get("dump_grid", cfg.grid_coarse))
    box = D.bounding_box.dilate(1.5)
    ax = np.linspace(0.0, 1.0, res)
    g = box.lo + box.side * np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    v = ext(g)
    write_csv(out / "extension_grid.csv", ["x", "y", "value"], [(p[0], p[1], q) for p, q in zip(g, v)])
    inside = D.contains(g)
    exact = bool(np.array_equal(v[inside], np.asarray(f(g[inside]), dtype=float).reshape(-1)))
    write_json(out / "extension.json", {"support_radius": ext.support_radius(), "R": ext.R,
                                        "gaps": ext.gaps, "points": len(g)})
    return {"restriction": exact, "finite": bool(np.all(np.isfinite(v)))}


def _apply(cfg, out, man):
    from .czop import kernel_builtin, td_poly_field
    from .geometry import make_domain
    D = make_domain(cfg.domain)
    K = kernel_builtin(cfg.kernel)
    P = parse_poly(str(cfg.options.get("poly", "1")), center=_default_center(cfg))
    res = int(cfg.options.get("grid_res", cfg.grid_coarse))
    frac = float(cfg.options.get("rsafe_frac", 0.5))
    box = D.bounding_box
    ax = (np.arange(res) + 0.5) / res
    g = box.lo + box.side * np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    g = g[D.contains(g) & (D.boundary_dist(g) > 1e-9)]
    vals, errs = td_poly_field(K, D, P, g, rsafe_frac=frac)
    write_csv(out / "field.csv", ["x", "y", "value", "err_estimate"],
              [(p[0], p[1], v, e) for p, v, e in zip(g, vals, errs)])
    return {"finite": bool(np.all(np.isfinite(vals)))}


def _lemma_suite(cfg, out, man):
    from .czop import kernel_builtin
    from .geometry import make_domain
    from .moduli import from_spec
    from .tpcheck import extremal, coeff_growth_experiment, lemma11_sweep, near_best_experiment
    D = make_domain(cfg.domain)
    K = kernel_builtin(cfg.kernel)
    omega = from_spec(cfg.modulus)
    x0 = np.asarray(cfg.options.get("x0", _default_center(cfg)), dtype=float)
    levels = tuple(cfg.options.get("levels", (3, 4, 5, 6)))
    t0 = time.perf_counter()
    nb = near_best_experiment(omega)
    man.stages["near_best"] = time.perf_counter() - t0
    write_csv(out / "near_best.csv", ["e1", "e2", "side", "offset", "gamma", "branch", "ratio", "top", "top_err"],
              [(r["e"][0], r["e"][1], r["side"], r["offset"], r["gamma"], r["branch"], r["ratio"],
                r["top"], r["top_err"]) for r in nb["rows"]])
    t0 = time.perf_counter()
    cg = coeff_growth_experiment(extremal(omega, (1.0, 0.0), x0), D, omega, x0, 2.0 ** -max(levels),
                                 len(levels) - 1)
    man.stages["coeff_growth"] = time.perf_counter() - t0
    write_csv(out / "coeff_growth.csv", ["side"] + [f"A_{k[0]}{k[1]}" for k in cg["indices"]],
              [(s, *a) for s, a in zip(cg["sides"], cg["coeffs"])])
    t0 = time.perf_counter()
    sw = lemma11_sweep(K, D, omega, x0=x0, levels=levels)
    man.stages["lemma11"] = time.perf_counter() - t0
    write_csv(out / "lemma11.csv", ["side", "I2", "I3", "P3_consistency"],
              [(r["side"], r["I2"], r["I3"], r["P3_consistency"]) for r in sw["rows"]])
    bound = float(cfg.tolerances.get("lemma11_bound", 1e3))
    return {"top_identity": nb["top_err"] < 1e-7, "both_branches": len(nb["branches"]) == 2,
            "lemma11_bounded": max(sw["I2_max"], sw["I3_max"]) < bound}


def _tp_check(cfg, out, man):
    from .campanato import dyadic_family
    from .czop import kernel_builtin
    from .geometry import make_domain
    from .moduli import from_spec
    from .tpcheck import check_conditions
    D = make_domain(cfg.domain)
    K = kernel_builtin(cfg.kernel)
    omega = from_spec(cfg.modulus)
    cond = str(cfg.options.get("condition", "both"))
    conds = ("i", "ii") if cond == "both" else (cond,)
    if any(c not in ("i", "ii") for c in conds):
        raise ConfigError(f"condition must be i, ii or both, got {cond!r}")
    depth = int(cfg.options.get("depth", cfg.family.get("k_max", 4)))
    fam = dyadic_family(D, int(cfg.family.get("k_min", 2)), depth, "interior", shifts=False)
    if len(fam) == 0:
        raise EmptyFamily(f"no interior cube of levels {cfg.family.get('k_min', 2)}..{depth}")
    # spacing no coarser than half the smallest cube, refined by fine/coarse
    h = min(D.bounding_box.side / cfg.grid_coarse, 0.5 * float(np.min(fam.sides)))
    reps = check_conditions(K, D, omega, cfg.n, fam, h=h, h_fine=h * cfg.grid_coarse / cfg.grid_fine,
                            conditions=conds)
    gates = {}
    for c, rep in reps.items():
        write_json(out / f"tp_{c}.json", {k: v for k, v in rep.to_json().items() if k != "records"})
        write_csv(out / f"tp_{c}.csv", ["cx", "cy", "side", "basis", "residual"],
                  [(r["center"][0], r["center"][1], r["side"], "".join(map(str, r["basis"])), r["residual"])
                   for r in rep.records])
        gates[f"stable_{c}"] = rep.refinement["rel_change"] < float(cfg.tolerances.get("stability", 0.2))
        gates[f"finite_{c}"] = math.isfinite(rep.sup)
    return gates


PIPELINES = {"whitney": _whitney, "seminorm": _seminorm, "extend": _extend, "apply": _apply,
             "lemma-suite": _lemma_suite, "tp-check": _tp_check}


def run(cfg):
    """Execute the configured pipeline; always leaves a manifest behind."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfg.hash(), __version__, cfg.command)
    write_json(out / "config.json", cfg.canonical())
    t0 = time.perf_counter()
    try:
        man.gates = PIPELINES[cfg.command](cfg, out, man)
        man.status = "ok"
    except Exception as exc:
        man.status = "failed"
        man.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        man.stages["total"] = time.perf_counter() - t0
        man.files = sorted(p.name for p in out.iterdir() if p.name != MANIFEST)
        write_atomic(out / MANIFEST, man.to_json())
    return man


# ---------------------------------------------------------------------------
# golden comparison


@dataclass
class DiffReport:
    passed: bool
    failures: list
    compared: int


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def _close(a, b, rtol, atol):
    try:
        x, y = float(a), float(b)
    except ValueError:
        return a == b
    if math.isnan(x) or math.isnan(y):
        return math.isnan(x) and math.isnan(y)
    return abs(x - y) <= atol + rtol * abs(y)


def compare_golden(run_dir, golden_dir=None, tolerances=None, rtol=1e-6, atol=1e-12):
    """Compare every CSV of the golden directory against the run.

    ``tolerances`` maps column names to (rtol, atol).
    """
    golden_dir = golden_dir or os.environ.get("ZLAB_GOLDEN")
    if golden_dir is None:
        raise MissingArtifact("no golden directory (set ZLAB_GOLDEN)")
    run_dir, golden_dir = Path(run_dir), Path(golden_dir)
    for d in (run_dir, golden_dir):
        if not (d / MANIFEST).is_file():
            raise MissingArtifact(f"{d / MANIFEST} not found")
    tolerances = tolerances or {}
    failures = []
    compared = 0
    for g in sorted(golden_dir.glob("*.csv")):
        r = run_dir / g.name
        if not r.is_file():
            raise MissingArtifact(f"{r} not found")
        gh, grows = _read_csv(g)
        rh, rrows = _read_csv(r)
        if gh != rh or len(grows) != len(rrows):
            failures.append({"file": g.name, "row": None, "column": None, "reason": "shape"})
            continue
        for i, (a, b) in enumerate(zip(rrows, grows)):
            for col, x, y in zip(gh, a, b):
                rt, at = tolerances.get(col, (rtol, atol))
                compared += 1
                if not _close(x, y, rt, at):
                    failures.append({"file": g.name, "row": i, "column": col, "run": x, "golden": y})
    return DiffReport(not failures, failures, compared)


# ---------------------------------------------------------------------------
# argument parsing


def _common(p):
    p.add_argument("--domain", default=None)
    p.add_argument("--kernel", default=None)
    p.add_argument("--modulus", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="zlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("whitney", help="Whitney covering and axiom check")
    _common(p)
    p.add_argument("--depth", type=int, default=None)
    p = sub.add_parser("seminorm", help="Campanato seminorm of a test function")
    _common(p)
    p.add_argument("--function", default=None)
    p.add_argument("--p", default=None)
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p = sub.add_parser("extend", help="Whitney extension dumped on a grid")
    _common(p)
    p.add_argument("--function", default=None)
    p.add_argument("--dump-grid", type=int, default=None)
    p = sub.add_parser("apply", help="T_D applied to a polynomial on a grid")
    _common(p)
    p.add_argument("--poly", default=None)
    p.add_argument("--grid-res", type=int, default=None)
    p.add_argument("--rsafe-frac", type=float, default=None)
    p = sub.add_parser("lemma-suite", help="extremal polynomials, coefficient ladder, f1/f2/f3 split")
    _common(p)
    p = sub.add_parser("tp-check", help="polynomial conditions with refinement gate")
    _common(p)
    p.add_argument("--condition", choices=("i", "ii", "both"), default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--res", type=int, default=None)
    p = sub.add_parser("run", help="run a TOML config")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p = sub.add_parser("compare-golden", help="diff a run directory against goldens")
    p.add_argument("run_dir")
    p.add_argument("--golden", default=None)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-12)
    return ap


_OPTION_FLAGS = ("depth", "function", "p", "dump_grid", "poly", "grid_res", "rsafe_frac", "condition")


def config_from_args(args):
    if args.command == "run":
        cfg = ExperimentConfig.from_toml(args.config)
    else:
        data = {"command": args.command}
        for k in ("domain", "kernel", "modulus", "n", "out", "seed"):
            v = getattr(args, k, None)
            if v is not None:
                data[k] = v
        fam = {}
        if getattr(args, "k_min", None) is not None:
            fam["k_min"] = args.k_min
        if getattr(args, "k_max", None) is not None:
            fam["k_max"] = args.k_max
        if fam:
            data["family"] = {"k_min": 2, "k_max": 5, **fam}
        if getattr(args, "res", None) is not None:
            data["grid"] = {"coarse": args.res, "fine": 2 * args.res}
        for k in _OPTION_FLAGS:
            v = getattr(args, k, None)
            if v is not None:
                data[k] = v
        cfg = ExperimentConfig.from_dict(data)
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _set_threads(k):
    if not k:
        return
    try:
        import numba
        numba.set_num_threads(min(k, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "compare-golden":
        try:
            rep = compare_golden(args.run_dir, args.golden, rtol=args.rtol, atol=args.atol)
        except MissingArtifact as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        for f in rep.failures[:20]:
            print(f"mismatch {f}")
        print(f"{'PASS' if rep.passed else 'FAIL'}: {rep.compared} cells compared")
        return 0 if rep.passed else 1
    _set_threads(getattr(args, "threads", None))
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        man = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ZlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for g, ok in sorted(man.gates.items()):
        print(f"{'PASS' if ok else 'FAIL'} {g}")
    return 0 if man.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
