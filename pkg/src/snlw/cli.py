"""Command line entry point: ``snlw <experiment> [options]``.

Every experiment run writes its CSV outputs, the canonical ``config.ini`` and
a ``manifest.json`` into the run directory. ``snlw rerun DIR`` repeats a run
from its manifest and compares output hashes; ``snlw report DIR`` writes a
summary and a long-format CSV.

Exit codes: 0 success, 2 configuration error, 3 blowup-dominated run.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np
import scipy.stats

from . import __version__, kernels
from .config import SCHEMAS, ConfigError, coerce, dump_config, format_value, parse_config, schema

log = logging.getLogger("snlw")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3

CHUNK = 10
MANIFEST = "manifest.json"
RNG_INFO = {
    "generator": "Philox4x32-10",
    "counter": "(step, replica, packed mode, block)",
    "key": "seed as two 32-bit words",
}


# ---------------------------------------------------------------- workers

def worker_count(flag=None):
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("SNLW_WORKERS")
    return max(1, int(env)) if env else 1


def pmap(fn, jobs, workers):
    """Ordered map; results come back in job order whatever the pool size."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _chunks(R, size=CHUNK):
    reps = np.arange(R, dtype=np.int64)
    return [reps[i:i + size] for i in range(0, R, size)]


def _f(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) for v in row])


def _need_replicas(R, minimum=1):
    if R < minimum:
        raise ConfigError(f"need at least {minimum} replicas, got {R}")


# ---------------------------------------------------------------- jobs
# Module-level so that they pickle into worker processes.

def _psi_points_job(N, t, points, seed, reps, dispersion):
    from .convolution import psi_point_samples
    return psi_point_samples(N, t, points, seed, reps, dispersion)


def _gap_job(ell, N, M, eps, t, seed, reps, dispersion, grid):
    from .convolution import cauchy_gap_samples
    return cauchy_gap_samples(ell, N, M, eps, t, seed, reps, dispersion, grid)


def _solve_job(kw, seed, reps):
    from .noise import ModePath
    from .solver import SolverConfig, solve
    cfg = SolverConfig(**kw)
    tr = solve(cfg, ModePath(seed, cfg.N, cfg.dt, cfg.T, reps))
    return tr.times, tr.v_hs, tr.u_heps, tr.sigma, tr.blowup_time


def _converge_job(kw, seed, reps, Ns, eps, t_star, contrast):
    from dataclasses import replace
    from .noise import ModePath
    from .solver import SolverConfig, refinement_gap
    cfg = SolverConfig(**kw)
    path = ModePath(seed, 2 * max(Ns), cfg.dt, t_star, reps)
    arms = [("renormalized", cfg)]
    if contrast:
        arms.append(("unrenormalized", replace(cfg, renormalized=False)))
    out = {}
    for name, c in arms:
        res = [refinement_gap(c, path, N, eps, t_star) for N in Ns]
        out[name] = (np.array([g for g, _ in res]), np.array([b for _, b in res]))
    return out


def _universality_job(eps_list, fname, seed, reps, sigma, T, dt, N_ref, dispersion, control):
    from .universality import compare_to_limit, get_nonlinearity
    return compare_to_limit(eps_list, get_nonlinearity(fname), seed, reps, sigma=sigma, T=T,
                            dt=dt, N_ref=N_ref, dispersion=dispersion, control=control)


# ---------------------------------------------------------------- experiments

def run_sigma(v, out, workers):
    from .convolution import mc_stats, sigma_exact
    R = v["replicas"]
    if R > 0 and v.get("seed") is None:
        raise ConfigError("[sigma] seed is required when replicas > 0")
    rows = []
    for N in v["N"]:
        for t in v["t"]:
            exact = sigma_exact(N, t, v["dispersion"])
            mc = se = ""
            if R > 0:
                _need_replicas(R, 2)
                parts = pmap(_psi_points_job, [(N, t, [(0.0, 0.0)], v["seed"], r, v["dispersion"])
                                               for r in _chunks(R, 512)], workers)
                mc, se = mc_stats(np.concatenate(parts)[:, 0] ** 2)
            rows.append((N, t, exact, mc, se))
            print(f"N={N} t={t:g} sigma={exact!r}" + (f" mc={mc!r} se={se!r}" if R > 0 else ""))
    _write(os.path.join(out, "variance.csv"), ["N", "t", "sigma_exact", "sigma_mc", "se"], rows)
    return ["variance.csv"], {"rows": len(rows)}, EXIT_OK


def run_sample_psi(v, out, workers):
    from .convolution import sample_psi
    from .lattice import FrequencyLattice
    _need_replicas(v["replicas"])
    st = sample_psi(v["N"], v["t"], v["seed"], np.arange(v["replicas"]), v["dispersion"])
    modes = FrequencyLattice(v["N"]).half_modes
    rows = []
    for r in range(st.X.shape[0]):
        for (n1, n2), c in zip(modes, st.X[r]):
            rows.append((r, int(n1), int(n2), float(c.real), float(c.imag)))
    _write(os.path.join(out, "psi_modes.csv"), ["replica", "n1", "n2", "re", "im"], rows)
    return ["psi_modes.csv"], {"modes": len(modes)}, EXIT_OK


def run_wick(v, out, workers):
    from .convolution import (CauchyGapReport, covariance_kernel, exact_cauchy_gap,
                              hypercontractivity_check, mc_stats, sigma_exact, write_gap_csv)
    from .hermite import hermite
    R, seed, t, eps, disp = v["replicas"], v["seed"], v["t"], v["eps"], v["dispersion"]
    _need_replicas(R, 2)
    grid = v["grid"] or None
    reports = []
    for ell in v["ell"]:
        for N in v["N"]:
            parts = pmap(_gap_job, [(ell, N, 2 * N, eps, t, seed, r, disp, grid)
                                    for r in _chunks(R, 8)], workers)
            h = np.concatenate([p[0] for p in parts])
            w = np.concatenate([p[1] for p in parts])
            gap, se = mc_stats(h)
            wi, wse = mc_stats(w)
            reports.append(CauchyGapReport(ell, N, 2 * N, eps, t, gap, se,
                                           exact_cauchy_gap(ell, N, 2 * N, eps, t, disp), wi, wse))
            print(f"gap ell={ell} N={N}->{2 * N}: {gap:.6g} +- {se:.2g} (exact {reports[-1].exact:.6g})")
    write_gap_csv(os.path.join(out, "cauchy_gap.csv"), reports)

    Nc = v["check_N"]
    rng = np.random.default_rng(seed)
    xy = rng.random((v["points"], 2, 2))
    pts = [tuple(p) for pair in xy for p in pair]
    parts = pmap(_psi_points_job, [(Nc, t, pts, seed, r, disp) for r in _chunks(R, 512)], workers)
    vals = np.concatenate(parts)
    sig = sigma_exact(Nc, t, disp)
    cov_rows, hyp_rows = [], []
    for ell in v["ell"]:
        for i, (x, y) in enumerate(xy):
            prod = hermite(ell, vals[:, 2 * i], sig) * hermite(ell, vals[:, 2 * i + 1], sig)
            mean, se = mc_stats(prod)
            K = float(covariance_kernel(Nc, t, x - y, disp))
            exact = math.factorial(ell) * K ** ell
            z = (mean - exact) / se if se > 0 else 0.0
            cov_rows.append((ell, x[0], x[1], y[0], y[1], mean, exact, se, z))
        for p in v["p"]:
            rep = hypercontractivity_check(hermite(ell, vals[:, 0], sig), ell, p)
            hyp_rows.append((ell, p, rep.lp, rep.lp_se, rep.l2, rep.bound, int(rep.passed)))
    _write(os.path.join(out, "wick_covariance.csv"),
           ["ell", "x1", "x2", "y1", "y2", "empirical", "closed_form", "se", "z"], cov_rows)
    _write(os.path.join(out, "hypercontractivity.csv"),
           ["k", "p", "lp", "lp_se", "l2", "bound", "passed"], hyp_rows)
    mono = {}
    for ell in v["ell"]:
        g = [r.gap for r in reports if r.ell == ell]
        mono[str(ell)] = all(b < a for a, b in zip(g, g[1:]))
    summary = {"gap_strictly_decreasing": mono,
               "max_abs_z": max(abs(r[-1]) for r in cov_rows),
               "hypercontractivity_passed": all(r[-1] for r in hyp_rows)}
    return ["cauchy_gap.csv", "wick_covariance.csv", "hypercontractivity.csv"], summary, EXIT_OK


def _solver_kwargs(v, **extra):
    kw = dict(k=v["k"], dt=v["dt"], sign=v["sign"], dispersion=v["dispersion"])
    kw.update(extra)
    return kw


def run_solve(v, out, workers):
    R = v["replicas"]
    _need_replicas(R)
    kw = _solver_kwargs(v, N=v["N"], T=v["T"], renormalized=v["renormalized"], hs=v["hs"],
                        eps=v["eps"], sample_every=v["sample_every"])
    parts = pmap(_solve_job, [(kw, v["seed"], r) for r in _chunks(R)], workers)
    rows = []
    for reps, (times, vh, uh, sig, _) in zip(_chunks(R), parts):
        for j, r in enumerate(reps):
            for i, t in enumerate(times):
                rows.append((int(r), t, vh[i, j], uh[i, j], sig[i]))
    bt = np.concatenate([p[4] for p in parts])
    _write(os.path.join(out, "trajectory.csv"), ["replica", "t", "v_hs", "u_heps", "sigma"], rows)
    _write(os.path.join(out, "blowup.csv"), ["replica", "blowup_time"],
           [(r, bt[r]) for r in range(R)])
    blown = int(np.sum(np.isfinite(bt)))
    print(f"solve: {R - blown}/{R} replicas reached T={v['T']:g}")
    code = EXIT_BLOWUP if blown > R / 2 else EXIT_OK
    return ["trajectory.csv", "blowup.csv"], {"blown": blown}, code


def run_converge(v, out, workers):
    R = v["replicas"]
    _need_replicas(R)
    Ns = sorted(v["N"])
    kw = _solver_kwargs(v, N=2 * Ns[-1], T=v["t_star"])
    parts = pmap(_converge_job, [(kw, v["seed"], r, Ns, v["eps"], v["t_star"], v["contrast"])
                                 for r in _chunks(R)], workers)
    rows, medians = [], {}
    blown_total = 0
    for arm in parts[0]:
        gaps = np.concatenate([p[arm][0] for p in parts], axis=1)
        blown = np.concatenate([p[arm][1] for p in parts], axis=1)
        for i, N in enumerate(Ns):
            for r in range(R):
                rows.append((arm, N, r, gaps[i, r], int(blown[i, r])))
        medians[arm] = [float(np.nanmedian(g)) if np.any(np.isfinite(g)) else math.nan for g in gaps]
        if arm == "renormalized":
            blown_total = int(np.sum(np.any(blown, axis=0)))
        print(f"{arm}: " + ", ".join(f"N={N}: {m:.6g}" for N, m in zip(Ns, medians[arm])))
    _write(os.path.join(out, "gaps.csv"), ["arm", "N", "replica", "gap", "blown"], rows)
    med = medians["renormalized"]
    summary = {"N": Ns, "medians": medians,
               "renormalized_strictly_decreasing": all(b < a for a, b in zip(med, med[1:])),
               "blown": blown_total}
    code = EXIT_BLOWUP if blown_total > R / 2 else EXIT_OK
    return ["gaps.csv"], summary, code


def run_pairs(v, out, workers):
    from .strichartz import Infeasible, as_fraction, choose_pair, figure_data, max_J, s_crit
    ks = v["k"]
    if any(k < 2 for k in ks):
        raise ConfigError("[pairs] degrees must be >= 2")
    rows = [(k, s_crit(k), float(s_crit(k))) for k in ks]
    for k, s, _ in rows:
        print(f"k={k} s_crit={s}")
    _write(os.path.join(out, "scrit.csv"), ["k", "s_crit", "s_crit_float"], rows)
    fig = [(x, s, float(x), float(s)) for x, s in figure_data(v["figure_points"])]
    _write(os.path.join(out, "figure.csv"), ["inv_k", "s_crit", "inv_k_float", "s_crit_float"], fig)
    outputs = ["scrit.csv", "figure.csv"]
    if v["s"]:
        prow, mrow = [], []
        for s in v["s"]:
            sf = as_fraction(s)
            m = max_J(sf)
            mrow.append((sf, m.value, m.case, m.r_range[0], m.r_range[1], m.rd_range[0], m.rd_range[1]))
            for k in ks:
                try:
                    p = choose_pair(k, sf)
                except Infeasible:
                    prow.append((k, sf, "infeasible", "", "", "", "", "", ""))
                    continue
                rq, rr = p.ratios
                prow.append((k, sf, p.q, p.r, p.qd, p.rd, rq, rr, p.time_exponent))
        _write(os.path.join(out, "pairs.csv"),
               ["k", "s", "q", "r", "qd", "rd", "q_over_qd", "r_over_rd", "time_exponent"], prow)
        _write(os.path.join(out, "max_j.csv"),
               ["s", "max_J", "case", "r_lo", "r_hi", "rd_lo", "rd_hi"], mrow)
        outputs += ["pairs.csv", "max_j.csv"]
    return outputs, {"k": ks}, EXIT_OK


def run_universality(v, out, workers):
    from .universality import get_nonlinearity, merge_reports, write_distance_csv, write_remainder_csv
    R = v["replicas"]
    _need_replicas(R)
    try:
        get_nonlinearity(v["f"])
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    if not v["sigma"] < 0:
        raise ConfigError("[universality] sigma must be negative")
    jobs = [(v["eps"], v["f"], v["seed"], r, v["sigma"], v["T"], v["dt"], v["N_ref"],
             v["dispersion"], v["control"]) for r in _chunks(R)]
    rep = merge_reports(pmap(_universality_job, jobs, workers))
    write_distance_csv(rep, os.path.join(out, "distances.csv"))
    write_remainder_csv(rep, os.path.join(out, "remainder.csv"))
    med = rep.medians()
    for e, m in med.items():
        print(f"eps={e:g}: median sup distance {m:.6g}")
    blown = int(np.sum(np.any(np.stack(list(rep.blowup.values())), axis=0)))
    summary = {"medians": {repr(e): m for e, m in med.items()},
               "strictly_decreasing": rep.strictly_decreasing(), "blown": blown,
               "control_max": None if rep.control is None else float(np.max(rep.control)),
               "control_remainder": rep.control_remainder}
    code = EXIT_BLOWUP if blown > R / 2 else EXIT_OK
    return ["distances.csv", "remainder.csv"], summary, code


EXPERIMENTS = {
    "sigma": run_sigma,
    "sample-psi": run_sample_psi,
    "wick": run_wick,
    "solve": run_solve,
    "converge": run_converge,
    "pairs": run_pairs,
    "universality": run_universality,
}


# ---------------------------------------------------------------- manifests

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def execute(experiment, values, out, workers):
    """Run one experiment into ``out`` and write its manifest; returns the
    exit code."""
    os.makedirs(out, exist_ok=True)
    text = dump_config({experiment: values})
    with open(os.path.join(out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(text)
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat()
    outputs, summary, code = EXPERIMENTS[experiment](values, out, workers)
    manifest = {
        "experiment": experiment,
        "config": values,
        "config_text": text,
        "seeds": [values["seed"]] if values.get("seed") is not None else [],
        "replicas": values.get("replicas", 0),
        "workers": workers,
        "version": __version__,
        "backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "rng": RNG_INFO,
        "outputs": {name: sha256_file(os.path.join(out, name)) for name in outputs},
        "started": started,
        "wall_clock_s": time.perf_counter() - t0,
        "summary": summary,
        "exit_code": code,
    }
    with open(os.path.join(out, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
    log.info("wrote %s", out)
    return code


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Fraction):
        return str(o)
    raise TypeError(f"cannot serialize {type(o)}")


def read_manifest(run_dir):
    path = os.path.join(run_dir, MANIFEST)
    if not os.path.isfile(path):
        raise ConfigError(f"{run_dir}: no manifest, run incomplete")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def rerun(run_dir, out=None, workers=None):
    """Repeat a run from its manifest; returns (exit code, {file: identical})."""
    man = read_manifest(run_dir)
    exp = man["experiment"]
    values = parse_config(man["config_text"], exp)[exp]
    out = out or run_dir.rstrip("/") + "-rerun"
    workers = man["workers"] if workers is None else workers
    execute(exp, values, out, workers)
    new = read_manifest(out)
    same = {name: new["outputs"].get(name) == h for name, h in man["outputs"].items()}
    return (EXIT_OK if all(same.values()) else EXIT_MISMATCH), same


# ---------------------------------------------------------------- report

def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def loglog_fit(x, y, level=0.95):
    """Least-squares slope of ``log y`` on ``log x`` with a t-interval."""
    res = scipy.stats.linregress(np.log(x), np.log(y))
    dof = len(x) - 2
    half = scipy.stats.t.ppf(0.5 + level / 2, dof) * res.stderr if dof > 0 else math.inf
    return res.slope, (res.slope - half, res.slope + half)


def report(run_dir):
    """Write ``summary.md`` and ``report_long.csv`` into ``run_dir``."""
    man = read_manifest(run_dir)
    exp = man["experiment"]
    lines = [f"# {exp} run", "", f"version {man['version']}, backend {man['backend']}, "
             f"workers {man['workers']}, wall clock {man['wall_clock_s']:.1f} s", "",
             "```", man["config_text"].strip(), "```", ""]
    long_rows = []
    if exp == "wick":
        rows = _read_csv(os.path.join(run_dir, "cauchy_gap.csv"))
        lines += ["| ell | N | gap | SE | monotone |", "|---|---|---|---|---|"]
        prev = {}
        for r in rows:
            ell, gap = r["ell"], float(r["gap"])
            flag = "n/a" if ell not in prev else ("pass" if gap < prev[ell] else "fail")
            prev[ell] = gap
            lines.append(f"| {ell} | {r['N']} | {gap:.6g} | {float(r['se']):.3g} | {flag} |")
            long_rows.append((exp, "gap", f"ell={ell};N={r['N']}", gap))
            long_rows.append((exp, "gap_se", f"ell={ell};N={r['N']}", float(r["se"])))
    elif exp == "converge":
        rows = [r for r in _read_csv(os.path.join(run_dir, "gaps.csv")) if r["arm"] == "renormalized"]
        x = np.array([float(r["N"]) for r in rows])
        y = np.array([float(r["gap"]) for r in rows])
        ok = np.isfinite(y) & (y > 0)
        slope, (lo, hi) = loglog_fit(x[ok], y[ok])
        lines.append(f"log-log slope of refinement gap vs N: {slope:.4f} (95% CI {lo:.4f} .. {hi:.4f})")
        long_rows += [(exp, "slope", "", slope), (exp, "slope_ci_lo", "", lo), (exp, "slope_ci_hi", "", hi)]
    for key, val in man.get("summary", {}).items():
        lines.append(f"- {key}: {json.dumps(val)}")
        long_rows.append((exp, key, "", json.dumps(val)))
    with open(os.path.join(run_dir, "summary.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write(os.path.join(run_dir, "report_long.csv"), ["experiment", "quantity", "key", "value"], long_rows)
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------- argparse

def build_parser():
    ap = argparse.ArgumentParser(prog="snlw", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, params in SCHEMAS.items():
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="INI file with a [%s] section" % name)
        sp.add_argument("--workers", type=int, help="worker processes (default $SNLW_WORKERS or 1)")
        sp.add_argument("--out", help="run directory (default runs/%s)" % name)
        for p in params:
            sp.add_argument(f"--{p.name}", dest=f"p_{p.name}", metavar=p.kind.upper(), help=p.help or None)
    sp = sub.add_parser("report", help="summarize a run directory")
    sp.add_argument("run_dir")
    sp = sub.add_parser("rerun", help="repeat a run from its manifest and compare outputs")
    sp.add_argument("run_dir")
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int)
    return ap


def _values(args):
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(str(exc)) from None
        sections = parse_config(text)
        extra = set(sections) - {args.command}
        if extra:
            raise ConfigError(f"config sections {sorted(extra)} do not match subcommand {args.command}")
        if args.command in sections:
            raw.update(sections[args.command])
    for p in SCHEMAS[args.command]:
        val = getattr(args, f"p_{p.name}")
        if val is not None:
            raw[p.name] = val
    # typed values from the file are re-serialized so that flags and file merge uniformly
    sch = schema(args.command)
    text = {k: (v if isinstance(v, str) else format_value(sch[k].kind, v)) for k, v in raw.items()}
    return coerce(args.command, text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return report(args.run_dir)
        if args.command == "rerun":
            code, same = rerun(args.run_dir, args.out, args.workers)
            for name, ok in same.items():
                print(f"{name}: {'identical' if ok else 'DIFFERENT'}")
            return code
        values = _values(args)
        out = args.out or os.environ.get("SNLW_OUT") or os.path.join("runs", args.command)
        return execute(args.command, values, out, worker_count(args.workers))
    except ValueError as exc:
        # ConfigError and parameter validation in the library alike
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
