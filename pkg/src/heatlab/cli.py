"""Command line front end: ``heatlab {verify,qp,atoms,embed,gen} --config FILE``.

Exit status: 0 when every asserted invariant holds, 2 when one fails,
1 for configuration errors.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import atoms as at
from . import io as fio
from . import reports as rp
from .config import ConfigError, LabConfig, load_config
from .field_grid import (Field, PointMeasure, check_boundary_decay, gen_bump, gen_divfree_field, gen_gradient_field,
                         gen_near_delta)
from .heat_flow import build_ladder, heat_weight, semigroup_defect
from .monotonicity import (QpSolver, bct_identity_defect, monotonicity_scan)
from .norms import lorentz_norm, lp_norm
from .weights import PolyDecay, Unit

log = logging.getLogger("heatlab")

COMMANDS = ("verify", "qp", "atoms", "embed", "gen")
SHIPPED = ("bct_check.cfg", "delta_divergence.cfg", "divfree_bounded.cfg")


# --- inputs --------------------------------------------------------------------

def _vec(cfg: LabConfig, section, key, d):
    if not cfg.has(section, key):
        return None
    v = cfg.get(section, key, list)
    if len(v) != d:
        raise ConfigError(f"'{key}' needs {d} components", cfg._line(section, key), cfg.source)
    return np.array(v)


def make_input(cfg: LabConfig) -> Field:
    """Field named by ``[input] generator``, checked for decay at the box edge."""
    f = _generate(cfg)
    tol = cfg.get("tolerances", "boundary", float, 1e-10)
    try:
        check_boundary_decay(f, tol * max(1.0, rp.l1(f)))
    except ValueError as exc:
        raise ConfigError(str(exc), cfg._line("input", "generator"), cfg.source) from None
    return f


def _generate(cfg: LabConfig) -> Field:
    grid = cfg.grid()
    name = cfg.get("input", "generator", str, "bump")
    width = cfg.positive("input", "width", 1.0)
    amp = cfg.get("input", "amplitude", float, 1.0)
    center = _vec(cfg, "input", "center", grid.d)
    try:
        if name == "bump":
            return Field(grid, gen_bump(grid, center, width, amp)[None])
        if name == "gradient":
            return gen_gradient_field(grid, center, width, amp)
        if name in ("divfree", "vortex"):
            return gen_divfree_field(grid, center, width, amp)
        if name == "near_delta":
            sigma = cfg.positive("input", "sigma", 2 * grid.h)
            return gen_near_delta(grid, sigma, 1, None, center) * amp
        if name == "dipole":
            sep = cfg.positive("input", "separation", 2.0)
            c = np.zeros(grid.d) if center is None else center
            off = np.zeros(grid.d)
            off[0] = sep / 2
            return Field(grid, (gen_bump(grid, c - off, width, amp)
                                - gen_bump(grid, c + off, width, amp))[None])
        if name == "zero":
            return Field(grid, np.zeros((1,) + grid.shape))
        if name == "file":
            return fio.read_field(cfg.get("input", "path"))
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc), cfg._line("input", "generator"), cfg.source) from None
    raise ConfigError(f"unknown generator {name!r}", cfg._line("input", "generator"), cfg.source)


def random_measure(rng, d: int, atoms: int, spread: float = 2.0) -> PointMeasure:
    return PointMeasure(rng.uniform(-spread, spread, (atoms, d)), rng.uniform(0.1, 1.0, atoms))


def _weight(cfg: LabConfig, d: int, p):
    kind = cfg.get("qp", "weight", str, "poly")
    if kind == "unit":
        return Unit(d)
    if kind == "poly":
        theta = cfg.get("qp", "theta", float, float(4 * d + 9))
        try:
            return PolyDecay(theta, d)
        except ValueError as exc:
            raise ConfigError(str(exc), cfg._line("qp", "theta"), cfg.source) from None
    raise ConfigError(f"unknown weight {kind!r}", cfg._line("qp", "weight"), cfg.source)


# --- output helpers ------------------------------------------------------------

class Outputs:
    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.checks = []

    def table(self, stem: str, header, rows):
        rows = list(rows)
        self.files.append(fio.write_rows(self.root / f"{stem}.csv", header, rows).name)
        self.files.append(fio.write_dat(self.root / f"{stem}.dat", header, rows).name)

    def figure(self, fn, stem: str, *args, **kw):
        self.files.append(fn(self.root / f"{stem}.png", *args, **kw).name)

    def check(self, name: str, value: float, limit: float, ok: bool):
        self.checks.append((name, value, limit, bool(ok)))
        log.info("%s %s: %.6g (limit %.6g)", "PASS" if ok else "FAIL", name, value, limit)

    def finish(self, manifest: dict) -> bool:
        self.table("checks", ("check", "value", "limit", "passed"), self.checks)
        ok = all(c[3] for c in self.checks)
        manifest["outputs"] = ";".join(sorted(self.files))
        manifest["passed"] = ok
        fio.write_keyvalue(self.root / "manifest.txt", manifest)
        return ok


# --- jobs ----------------------------------------------------------------------

def job_gen(cfg, out: Outputs, rng, man):
    from .plotting import plot_field
    f = make_input(cfg)
    fio.write_field(f, out.root / "field.bin")
    out.files.append("field.bin")
    if f.grid.size <= 1 << 20:
        fio.export_field_csv(f, out.root / "field.csv")
        out.files.append("field.csv")
    out.figure(plot_field, "field", f, title=cfg.get("input", "generator", str, "bump"))
    man["field_hash"] = fio.field_hash(f)
    man["field_l1"] = f.grid.cell_volume * float(np.sum(f.magnitude()))


def job_qp(cfg, out: Outputs, rng, man):
    from .plotting import plot_series
    tol = cfg.get("tolerances", "bct", float, 1e-3)
    slack = cfg.get("tolerances", "monotone", float, 1e-8)
    n = cfg.get("qp", "instances", int, 10)
    dims = [int(v) for v in cfg.get("qp", "dims", list, [1.0])]
    ps = cfg.get("qp", "p_values", list, [2.0])
    atoms_max = cfg.get("qp", "atoms", int, 5)
    t_lo = cfg.get("qp", "t_min", float, 0.2)
    t_hi = cfg.get("qp", "t_max", float, 0.8)
    h_t = cfg.positive("qp", "h_t", 1e-4)
    scan = np.linspace(cfg.get("qp", "scan_min", float, 0.2), 1.0, cfg.get("qp", "scan_points", int, 9))
    if not 0 < t_lo - h_t < t_hi + h_t < 1:
        raise ConfigError("need 0 < t_min - h_t and t_max + h_t < 1", cfg._line("qp", "t_min"), cfg.source)
    bct_rows, scan_rows = [], []
    worst, mono_all = 0.0, True
    for i in range(n):
        d = dims[i % len(dims)]
        p = ps[(i // len(dims)) % len(ps)]
        mu = random_measure(rng, d, int(rng.integers(1, atoms_max + 1)))
        G = _weight(cfg, d, p)
        t = float(rng.uniform(t_lo, t_hi))
        S = QpSolver(mu, G, p, min(t - h_t, scan[0]))
        c = bct_identity_defect(mu, G, p, t, h_t, solver=S)
        worst = max(worst, c.defect)
        bct_rows.append((i, d, p, mu.positions.shape[0], t, c.qp, c.rhs, c.fd, c.defect))
        sc = monotonicity_scan(mu, G, p, scan, slack, solver=S)
        mono_all &= sc.verdict == "PASS"
        scan_rows.extend((i, tt, q, a, b) for tt, q, a, b in zip(sc.t, sc.values, sc.lhs_norm, sc.rhs_norm))
    out.table("bct", ("instance", "d", "p", "atoms", "t", "Qp", "bct_rhs", "fd_derivative", "defect"), bct_rows)
    out.table("scan", ("instance", "t", "Qp", "norm_t", "norm_bound"), scan_rows)
    first = [r for r in scan_rows if r[0] == 0]
    out.figure(plot_series, "scan", [r[1] for r in first], {"Q_p": [r[2] for r in first]},
               "t", "Q_p(t)", title="instance 0")
    out.check("bct_defect_max", worst, tol, worst <= tol)
    out.check("monotone_all", float(mono_all), 1.0, mono_all)


def _ladder(cfg, f, P):
    res = cfg.get("experiment", "resolution", str, "scale")
    try:
        return build_ladder(f, P.A, P.K, resolution=res)
    except ValueError as exc:
        raise ConfigError(f"ladder: {exc}", cfg._line("grid", "N"), cfg.source) from None


def job_atoms(cfg, out: Outputs, rng, man, f=None, lad=None):
    from .plotting import plot_star_table
    f = make_input(cfg) if f is None else f
    P = cfg.params(f.grid.d)
    lad = _ladder(cfg, f, P) if lad is None else lad
    choice = cfg.get("atoms", "choice", str, "argmax")
    an = rp.analyze_atoms(lad, P, choice=choice)
    header, rows = at.table_rows(an.tables, an.graphs, an.forest)
    out.table("atoms", header, rows)
    out.figure(plot_star_table, "atoms", an.tables, P.A)
    bad = {"two_paths": 0, "arrowless_unsaturated": 0, "sources_unsaturated": 0, "self_loops": 0}
    scale = max(float(np.max(t.heated3)) for t in an.tables)
    neg = min(float(np.min(t.defect)) for t in an.tables)
    for t, g in zip(an.tables, an.graphs):
        for key, v in at.graph_violations(g, t.maximal, t.star, P.Ksat).items():
            bad[key] += v
    for key, v in bad.items():
        out.check(f"graph_{key}", v, 0, v == 0)
    out.check("atom_defect_min", neg, -1e-9 * scale, neg >= -1e-9 * max(scale, 1e-300))
    audit = rp.partition_audit(an)
    out.check("partition_audit", audit["convex"] + audit["in_trees"] + audit["degenerate"],
              audit["atoms"], audit["passed"])
    man["field_hash"] = fio.field_hash(f)
    man["atoms"] = audit["atoms"]
    man["convex_atoms"] = audit["convex"]
    man["trees"] = len(an.forest.roots)
    return an


def job_embed(cfg, out: Outputs, rng, man):
    from .plotting import plot_series
    f = make_input(cfg)
    P = cfg.params(f.grid.d)
    lad = _ladder(cfg, f, P)
    rows = rp.embedding_report(f, P, ladder=lad)
    out.table("embedding", ("k", "term", "partial_sum", "ratio"),
              [(r.k, r.term, r.partial_sum, r.ratio) for r in rows])
    out.figure(plot_series, "embedding", [r.k for r in rows],
               {"partial sum": [r.partial_sum for r in rows], "term": [r.term for r in rows]},
               "k", "value")
    expect = cfg.get("experiment", "expect", str, "none")
    k0 = cfg.get("experiment", "k_ref", int, 2)
    if k0 > P.K:
        raise ConfigError("k_ref exceeds K", cfg._line("experiment", "k_ref"), cfg.source)
    if expect == "growth":
        fac = cfg.get("tolerances", "growth", float, 0.8)
        c = rows[k0].term
        margin = min(r.partial_sum - fac * c * r.k for r in rows[k0:])
        out.check("partial_sum_growth", margin, 0.0, margin >= 0)
    elif expect == "bounded":
        fac = cfg.get("tolerances", "bounded", float, 2.0)
        q = rows[-1].ratio / rows[k0].ratio if rows[k0].ratio > 0 else 0.0
        out.check("partial_sum_ratio", q, fac, q <= fac and 1 / fac <= q)
    elif expect != "none":
        raise ConfigError(f"unknown expectation {expect!r}", cfg._line("experiment", "expect"), cfg.source)
    man["field_hash"] = fio.field_hash(f)
    man["field_l1"] = rp.l1(f)
    if not cfg.get("atoms", "enabled", bool, True):
        return
    an = job_atoms(cfg, out, rng, man, f, lad)
    cv = rp.convex_sum_report(an)
    out.table("convex", ("k", "term", "coverage"),
              [(t.k, v, c) for t, v, c in zip(an.tables, cv.terms, cv.coverage)])
    man["convex_lhs"], man["convex_ratio"] = cv.lhs, cv.ratio
    trees = rp.tree_budget_report(an)
    out.table("trees", ("root_k", "root_j", "size", "depth_mass", "budget", "ratio", "decay_rate"),
              [(r.root_k, ",".join(map(str, r.root_j)), r.size,
                ";".join(f"{k}:{fio.format_value(v)}" for k, v in r.depth_mass), r.budget, r.ratio,
                r.decay_rate) for r in trees])
    tel = rp.telescoping_audit(an)
    out.check("telescoping_gains", tel["gains"], tel["bound"], tel["passed"])
    out.check("tree_budgets", tel["tree_budgets"], tel["bound"], tel["tree_budgets"] <= tel["bound"] * (1 + 1e-6))


def job_verify(cfg, out: Outputs, rng, man):
    """Quick invariant suites on the configured grid and input."""
    f = make_input(cfg)
    P = cfg.params(f.grid.d)
    g = f.grid
    part = max(at.partition_defect(g, k, P.A, P.theta1) for k in range(cfg.get("atoms", "partition_levels", int, 4)))
    out.check("partition_of_unity", part, 1e-10, part <= 1e-10)
    sg = semigroup_defect(f, 0.05, 0.1)
    sg = 0.0 if sg is None else sg
    lim = cfg.get("tolerances", "semigroup", float, 1e-10)
    out.check("semigroup", sg, lim, sg <= lim)
    lad = _ladder(cfg, f, P)
    l1s = at.level_l1(lad)
    drop = float(np.max(l1s[:-1] - l1s[1:])) if l1s.size > 1 else 0.0
    out.check("l1_telescoping", drop, 1e-9 * l1s.max(), drop <= 1e-9 * max(l1s.max(), 1e-300))
    for p in (1.5, 2.0):
        diff = abs(lorentz_norm(f, p, p) - lp_norm(f, p))
        out.check(f"lorentz_pp_eq_lp_{p}", diff, 1e-10 * max(1.0, lp_norm(f, p)),
                  diff <= 1e-10 * max(1.0, lp_norm(f, p)))
    for theta in (g.d + 1.0, 2.0 * g.d + 4):
        ok = True
        try:
            heat_weight(PolyDecay(theta, g.d), 0.5)
        except ValueError:
            ok = False
        out.check(f"heated_envelope_theta{theta:g}", float(ok), 1.0, ok)
    man["field_hash"] = fio.field_hash(f)


JOBS = {"verify": job_verify, "qp": job_qp, "atoms": job_atoms, "embed": job_embed, "gen": job_gen}


# --- entry points --------------------------------------------------------------

def resolve_config(path) -> Path:
    """A file path, or the bare name of a shipped config."""
    p = Path(path)
    name = p.name if p.suffix == ".cfg" else p.name + ".cfg"
    if p.exists() or p.name != str(path) or name not in SHIPPED:
        return p
    return Path(str(resources.files("heatlab") / "configs" / name))


def run(config_path, command: str | None = None, out_dir=None, seed: int = 0,
        threads: int = 1) -> int:
    """Run one experiment; returns the process exit code."""
    try:
        path = resolve_config(config_path)
        cfg = load_config(path)
        command = command or cfg.get("experiment", "command", str, "verify")
        if command not in JOBS:
            raise ConfigError(f"unknown command {command!r}", cfg._line("experiment", "command"), cfg.source)
        name = cfg.get("experiment", "name", str, path.stem)
        root = Path(out_dir) if out_dir else Path(cfg.get("output", "dir", str, "heatlab_out")) / name
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = Outputs(root)
        man = {"heatlab_version": __version__, "command": command, "experiment": name,
               "config": str(path), "config_sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
               "seed": seed, "threads": threads}
        if cfg.has("grid", "d"):
            man["grid"] = "d={} N={} L={}".format(*(cfg.raw("grid", k) for k in ("d", "N", "L")))
        if cfg.sections.get("params") or cfg.has("grid", "d"):
            d = cfg.get("grid", "d", int, 1) if cfg.has("grid", "d") else 1
            for k, v in cfg.params(d).as_dict().items():
                man[f"param_{k}"] = "" if v is None else v
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        JOBS[command](cfg, out, rng, man)
        log.info("%s finished in %.1f s", command, time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    ok = out.finish(man)
    print(f"{command}: {'PASS' if ok else 'FAIL'} ({len(out.checks)} checks) -> {root}")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatlab", description="heat-ladder embedding laboratory")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {"verify": "invariant suites", "qp": "monotonicity and derivative-identity scans",
             "atoms": "atom tables and graphs", "embed": "embedding, convex and tree reports",
             "gen": "write a generated field"}
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, metavar="PATH",
                        help="config file, or the name of a shipped config")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--threads", type=int, default=1, metavar="N")
        sp.add_argument("--seed", type=int, default=0, metavar="U64")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2**64:
        print("config error: --seed must fit in 64 unsigned bits", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return run(args.config, args.command, args.out, args.seed, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
