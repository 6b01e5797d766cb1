"""Command-line front end.

Sub-commands::

    lazyneg random    random pure states, negativity vs block size
    lazyneg quench    Neel-state quench of the Heisenberg chain
    lazyneg heis-gs   DMRG ground state, block negativities and log fit
    lazyneg logneg    negativity of a stored state or MPS

Exit codes: 0 success, 1 usage or input error, 2 some result did not
converge (results are still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dmrg import DmrgConfig, dmrg2
from .io import FormatError, load_mps, load_state, save_mps
from .mps import DEFAULT_CUTOFF, BlockSpec, MpsError, dense_from_mps, logneg_mps_blocks
from .oracle import OracleCapError, exact_logneg, reduce_dense
from .physics import HeisenbergModel, QuenchConfig, cft_fit, evolve, heisenberg_mpo, neel_state
from .pts import TriPartition, analytic_random_logneg, logneg_pts, random_pure_state
from .slq import SlqConfig

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_UNCONVERGED = 0, 1, 2
DENSE_GUARD = 24
THREADS_ENV = "LAZYNEG_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for a grid point, independent of evaluation order."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    if path is None or str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _manifest(args, command, wall, extra=None):
    flags = {k: v for k, v in sorted(vars(args).items())
             if k not in ("func", "command") and not callable(v)}
    out = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        # wall time breaks byte-identical reruns, so it is opt-in
        "wall_time_s": round(wall, 3) if args.timing else None,
    }
    if extra:
        out.update(extra)
    return out


def _sidecar(out) -> Path | None:
    if out is None or str(out) == "-":
        return None
    return Path(str(out) + ".json")


def _slq(args, seed) -> SlqConfig:
    return SlqConfig(tol=args.tol, seed=seed, threads=args.threads,
                     n_max=args.n_max, k_max=args.k_max)


def _parse_sites(text: str) -> list[int]:
    sites = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            sites.extend(range(int(lo), int(hi) + 1))
        else:
            sites.append(int(part))
    if not sites:
        raise UsageError(f"empty site list {text!r}")
    return sites


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_random(args) -> int:
    L = args.L
    if not 2 <= L <= DENSE_GUARD:
        raise UsageError(f"--L must be in [2, {DENSE_GUARD}]")
    lab_max = L if args.lab_max is None else args.lab_max
    if args.lab_min < 2 or lab_max > L or args.lab_min > lab_max:
        raise UsageError("need 2 <= --lab-min <= --lab-max <= L")
    if args.realizations < 1:
        raise UsageError("--realizations must be >= 1")
    t_start = time.perf_counter()
    rows = []
    ok = True
    labs = [l for l in range(args.lab_min, lab_max + 1) if l % 2 == 0]
    if not labs:
        raise UsageError("no even L_AB in the requested range")
    for r in range(args.realizations):
        psi = random_pure_state(L, seed=derive_seed(args.seed, 0, r))
        for lab in labs:
            la = lab // 2
            part = TriPartition.from_sites(L, range(la), range(la, lab))
            t0 = time.perf_counter()
            neg = logneg_pts(psi, part, _slq(args, derive_seed(args.seed, 1, r, lab)))
            ms = (time.perf_counter() - t0) * 1e3
            ok &= neg.converged
            rows.append((L, lab, r, neg.E, neg.err,
                         analytic_random_logneg(part.d_a, part.d_b, part.d_c),
                         neg.n_samples, round(ms, 1) if args.timing else None))
    rows.sort(key=lambda x: (x[1], x[2]))
    _write_csv(args.out, ["L", "L_AB", "realization", "E", "E_err", "E_analytic",
                          "n_samples", "wall_ms"], rows)
    side = _sidecar(args.out)
    if side:
        _write_json(side, _manifest(args, "random", time.perf_counter() - t_start,
                                    {"all_converged": ok}))
    return EXIT_OK if ok else EXIT_UNCONVERGED


def cmd_quench(args) -> int:
    L = args.L
    if not 2 <= L <= DENSE_GUARD:
        raise UsageError(f"--L must be in [2, {DENSE_GUARD}]")
    labs = _parse_int_list(args.lab_list)
    if not labs or any(l < 2 or l > L for l in labs):
        raise UsageError("--lab-list entries must lie in [2, L]")
    try:
        qcfg = QuenchConfig(t_max=args.t_max, dt=args.dt)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = HeisenbergModel(L, args.J)
    t_start = time.perf_counter()
    rows = []
    ok = True
    for step, (t, psi) in enumerate(evolve(neel_state(L), model, qcfg)):
        for lab in labs:
            b = BlockSpec.central(L, lab)
            part = TriPartition.from_sites(L, b.block_a, b.block_b)
            neg = logneg_pts(psi, part, _slq(args, derive_seed(args.seed, step, lab)))
            ok &= neg.converged
            row = [round(t, 10), lab, neg.E, neg.err, neg.n_samples]
            if args.exact:
                row.append(exact_logneg(reduce_dense(psi, part)))
            rows.append(row)
    header = ["Jt", "L_AB", "E", "E_err", "n_samples"] + (["E_exact"] if args.exact else [])
    _write_csv(args.out, header, rows)
    side = _sidecar(args.out)
    if side:
        _write_json(side, _manifest(args, "quench", time.perf_counter() - t_start,
                                    {"all_converged": ok}))
    return EXIT_OK if ok else EXIT_UNCONVERGED


def cmd_heis_gs(args) -> int:
    L = args.L
    lab_max = min(args.lab_max, L)
    if L < 4 or args.lab_min < 2 or args.lab_min > lab_max or args.lab_step < 2 \
            or args.lab_step % 2:
        raise UsageError("need L >= 4, 2 <= --lab-min <= --lab-max and an even --lab-step")
    t_start = time.perf_counter()
    model = HeisenbergModel(L, args.J)
    dcfg = DmrgConfig(chi_max=args.chi_max, cutoff=args.dmrg_cutoff,
                      max_sweeps=args.max_sweeps)
    res = dmrg2(heisenberg_mpo(model), dcfg, seed=args.seed)
    if args.save_mps:
        save_mps(res.mps, args.save_mps)
    rows = []
    ok = res.converged
    start = args.lab_min + (args.lab_min % 2)
    for lab in range(start, lab_max + 1, args.lab_step):
        neg = logneg_mps_blocks(res.mps, BlockSpec.central(L, lab),
                                _slq(args, derive_seed(args.seed, lab)), args.cutoff)
        ok &= neg.converged
        rows.append((lab, neg.E, neg.err, neg.n_samples))
    _write_csv(args.out, ["L_AB", "E", "E_err", "n_samples"], rows)
    fit = None
    try:
        f = cft_fit([(r[0], r[1]) for r in rows], L)
        fit = {"c": f.c, "c_err": f.c_err, "K": f.k_const, "K_err": f.k_err,
               "n_points": f.n_points}
    except ValueError as exc:
        print(f"lazyneg: fit skipped: {exc}", file=sys.stderr)
    side = _sidecar(args.out)
    if side:
        _write_json(side, _manifest(args, "heis-gs", time.perf_counter() - t_start, {
            "fit": fit,
            "dmrg": {"energy": res.energy, "converged": res.converged,
                     "sweep_energies": res.sweep_energies, "max_chi": res.mps.chi,
                     "bond_dims": res.mps.bond_dims},
            "all_converged": ok,
        }))
    return EXIT_OK if ok else EXIT_UNCONVERGED


def cmd_logneg(args) -> int:
    sites_a = _parse_sites(args.sites_a)
    sites_b = _parse_sites(args.sites_b)
    if set(sites_a) & set(sites_b):
        raise UsageError("--sites-a and --sites-b overlap")
    cfg = _slq(args, args.seed)
    out = {"schema_version": SCHEMA_VERSION}
    psi = None
    if args.state_file:
        psi = load_state(args.state_file)
        if max(sites_a + sites_b) >= psi.L or min(sites_a + sites_b) < 0:
            raise UsageError(f"sites must lie in 0..{psi.L - 1}")
        part = TriPartition.from_sites(psi.L, sites_a, sites_b, psi.p)
        neg = logneg_pts(psi, part, cfg)
        out["method"] = "pts"
    else:
        m = load_mps(args.mps_dir)
        blocks = _blocks_from_sites(sites_a, sites_b, m.L)
        neg = logneg_mps_blocks(m, blocks, cfg, args.cutoff)
        out["method"] = "mps"
        if args.exact:
            psi = dense_from_mps(m)
            part = TriPartition.from_sites(m.L, sites_a, sites_b, m.p)
    out.update({"E": neg.E, "E_err": neg.err, "n_samples": neg.n_samples,
                "converged": neg.converged})
    if args.exact:
        ex = exact_logneg(reduce_dense(psi.normalized(), part))
        out["E_exact"] = ex
        out["deviation"] = neg.E - ex
    sys.stdout.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if neg.converged else EXIT_UNCONVERGED


def _blocks_from_sites(sites_a, sites_b, L) -> BlockSpec:
    a, b = sorted(sites_a), sorted(sites_b)
    if a[0] > b[0]:
        # negativity is symmetric in A and B
        a, b = b, a
    for s in (a, b):
        if s != list(range(s[0], s[-1] + 1)):
            raise UsageError("MPS input needs contiguous blocks")
    if b[-1] >= L:
        raise UsageError(f"sites must lie in 0..{L - 1}")
    return BlockSpec(a[0], len(a), b[0] - a[-1] - 1, len(b))


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    default_threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    common = _Parser(add_help=False)
    common.add_argument("--tol", type=float, default=0.01,
                        help="relative target on the trace-norm standard error")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=default_threads,
                        help=f"worker threads for SLQ samples (env {THREADS_ENV})")
    common.add_argument("--n-max", type=int, default=400, help="max SLQ samples")
    common.add_argument("--k-max", type=int, default=128, help="max Lanczos steps")
    common.add_argument("--timing", action="store_true",
                        help="record wall times (outputs are then not reproducible)")

    p = _Parser(prog="lazyneg", description="Matrix-free logarithmic negativity.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("random", parents=[common], help="random pure states")
    r.add_argument("--L", type=int, required=True)
    r.add_argument("--lab-min", type=int, default=2)
    r.add_argument("--lab-max", type=int, default=None)
    r.add_argument("--realizations", type=int, default=10)
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_random)

    q = sub.add_parser("quench", parents=[common], help="Neel quench")
    q.add_argument("--L", type=int, required=True)
    q.add_argument("--t-max", type=float, required=True)
    q.add_argument("--dt", type=float, default=0.02)
    q.add_argument("--lab-list", default="2,4,6")
    q.add_argument("--J", type=float, default=1.0)
    q.add_argument("--exact", action="store_true", help="add dense oracle column")
    q.add_argument("--out", default="-")
    q.set_defaults(func=cmd_quench)

    h = sub.add_parser("heis-gs", parents=[common], help="DMRG ground state")
    h.add_argument("--L", type=int, required=True)
    h.add_argument("--chi-max", type=int, default=128)
    h.add_argument("--lab-min", type=int, default=4)
    h.add_argument("--lab-max", type=int, required=True)
    h.add_argument("--lab-step", type=int, default=2)
    h.add_argument("--J", type=float, default=1.0)
    h.add_argument("--dmrg-cutoff", type=float, default=1e-8,
                   help="discarded-weight cutoff of the DMRG truncation")
    h.add_argument("--max-sweeps", type=int, default=40)
    h.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF,
                   help="relative cutoff of the transfer-matrix compression")
    h.add_argument("--save-mps", default=None, help="directory to store the MPS")
    h.add_argument("--out", default="-")
    h.set_defaults(func=cmd_heis_gs)

    g = sub.add_parser("logneg", parents=[common], help="negativity of a stored state")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--state-file", help="dense state directory or its manifest.json")
    src.add_argument("--mps-dir", help="MPS directory")
    g.add_argument("--sites-a", required=True, help="e.g. 0,1 or 0-3")
    g.add_argument("--sites-b", required=True)
    g.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    g.add_argument("--exact", action="store_true", help="compare with the dense oracle")
    g.set_defaults(func=cmd_logneg)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if not args.tol > 0:
            raise UsageError("--tol must be positive")
        return args.func(args)
    except (UsageError, FormatError, OracleCapError, MpsError, ValueError) as exc:
        print(f"lazyneg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
