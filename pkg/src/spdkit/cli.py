"""Command-line entry point: solve, benchmark, sweep, and verify.

Subcommands
-----------
``solve``
    Factor one problem, run preconditioned CG, and write a solve report
    (JSON by default) plus a convergence figure.
``bench``
    Sweep grid sizes, drop tolerances, and schemes; write the benchmark
    table as CSV plus iteration-count and memory figures.
``forward-error``
    Sweep eigenvector modes of the constant-coefficient grid operator
    and write per-scheme forward errors as CSV plus a figure.
``verify``
    Run the built-in verification suites (condition-number oracles, the
    rate-squaring identity, the residual-matching harness, and SPD
    preservation) and exit nonzero if any property fails.

Exit codes: 0 success, 1 usage error, 2 input error (missing or
malformed files, unsupported problem parameters), 3 numerical failure
(factorization or solver breakdown, failed verification).
"""

import argparse
import os
import sys
import time

import numpy as np

from . import reports
from .analysis import (
    TheoremInstance,
    build_two_level,
    cond_first,
    cond_second,
    forward_error,
    make_theorem_instance,
    rate_identity,
    theorem_harness,
)
from .errors import InputError, NumericalError, RhoNotOne
from .factorize import factorize, memory_ratio
from .krylov import pcg
from .partition import build_hierarchy, default_levels
from .sparse import (
    eig_mode_sequence,
    high_contrast_field,
    jacobi_prescale,
    laplacian_2d,
    laplacian_from_field,
    poisson_eigvec,
    read_matrix_market,
)

__all__ = [
    "RunConfig",
    "main",
    "run",
    "verify_cond_oracle",
    "verify_rate_identity",
    "verify_theorem",
    "verify_spd_preservation",
]

SCHEME_CHOICES = ("first", "second-full", "second-superfine")
SUITE_ORDER = ("cond-oracle", "rate-identity", "theorem", "spd-preservation")


class UsageError(Exception):
    """Bad command-line arguments; maps to exit code 1."""


class RunConfig:
    """Validated options of one CLI invocation.

    The matrix source is either a Matrix Market file path or a list of
    grid sizes for the built-in variable-coefficient grid operator with
    contrast ``rho``.  ``jacobi`` is a three-state flag: None picks the
    default per source (on for files, off for generated operators).
    """

    def __init__(self, command, matrix_path=None, grid_sizes=(), rho=1.0,
                 eps_values=(0.01,), schemes=("second-full",), tol=1e-10,
                 skip_levels=4, levels=None, jacobi=None, outdir=".",
                 fmt="json", figures=True, seed=0, only=None):
        self.command = command
        self.matrix_path = matrix_path
        self.grid_sizes = list(grid_sizes)
        self.rho = float(rho)
        self.eps_values = [float(e) for e in eps_values]
        self.schemes = list(schemes)
        self.tol = float(tol)
        self.skip_levels = int(skip_levels)
        self.levels = levels
        self.jacobi = jacobi
        self.outdir = outdir
        self.fmt = fmt
        self.figures = bool(figures)
        self.seed = int(seed)
        self.only = only
        for eps in self.eps_values:
            if not 0.0 <= eps <= 1.0:
                raise UsageError(f"eps must lie in [0, 1], got {eps:g}")
        if command in ("solve", "bench", "forward-error") and not self.schemes:
            raise UsageError("at least one scheme is required")
        if self.tol <= 0.0:
            raise UsageError("tol must be positive")
        if self.skip_levels < 0:
            raise UsageError("skip-levels must be nonnegative")
        if self.levels is not None and self.levels < 1:
            raise UsageError("levels must be at least 1")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_output_options(parser):
    parser.add_argument("--outdir", default=None,
                        help="output directory (default: $SPDKIT_OUTDIR "
                             "or the working directory)")
    parser.add_argument("--no-figures", dest="figures", action="store_false",
                        default=True, help="skip rendering PNG figures")


def _add_problem_options(parser, sizes_nargs):
    parser.add_argument("--laplacian", type=int, nargs=sizes_nargs,
                        metavar="D", default=None,
                        help="grid side length(s) of the built-in operator")
    parser.add_argument("--rho", type=float, default=1.0,
                        help="coefficient contrast of the built-in operator "
                             "(1 = constant coefficients)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed of the coefficient field generator")
    parser.add_argument("--skip-levels", type=int, default=4,
                        help="number of initial levels factored without "
                             "interface compression")
    parser.add_argument("--levels", type=int, default=None,
                        help="override the partition depth")
    parser.add_argument("--jacobi-prescale",
                        action=argparse.BooleanOptionalAction, default=None,
                        help="diagonal prescaling (default: on for matrix "
                             "files, off for generated operators)")


def _build_parser():
    parser = _Parser(prog="spdkit",
                     description="Sparse SPD factorization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="factor one problem and solve it")
    p_solve.add_argument("--matrix", default=None,
                         help="Matrix Market file with a symmetric "
                              "positive definite matrix")
    _add_problem_options(p_solve, sizes_nargs=None)
    p_solve.add_argument("--eps", type=float, default=0.01,
                         help="drop tolerance of the factorization")
    p_solve.add_argument("--scheme", choices=SCHEME_CHOICES,
                         default="second-full")
    p_solve.add_argument("--tol", type=float, default=1e-10,
                         help="relative residual tolerance of CG")
    p_solve.add_argument("--format", dest="fmt", choices=("json", "csv"),
                         default="json", help="report file format")
    _add_output_options(p_solve)

    p_bench = sub.add_parser("bench", help="benchmark sweep over grids, "
                                           "tolerances, and schemes")
    _add_problem_options(p_bench, sizes_nargs="*")
    p_bench.add_argument("--eps", type=float, nargs="+", default=[0.01],
                         help="drop tolerances to sweep")
    p_bench.add_argument("--scheme", choices=SCHEME_CHOICES, nargs="+",
                         default=list(SCHEME_CHOICES))
    p_bench.add_argument("--tol", type=float, default=1e-10)
    _add_output_options(p_bench)

    p_fwd = sub.add_parser("forward-error",
                           help="forward errors on grid eigenvectors")
    _add_problem_options(p_fwd, sizes_nargs=None)
    p_fwd.add_argument("--eps", type=float, nargs="+", default=[0.1])
    p_fwd.add_argument("--scheme", choices=SCHEME_CHOICES, nargs="+",
                       default=list(SCHEME_CHOICES))
    _add_output_options(p_fwd)

    p_verify = sub.add_parser("verify", help="run verification suites")
    p_verify.add_argument("--only", choices=SUITE_ORDER, default=None,
                          help="run a single suite")
    _add_output_options(p_verify)
    return parser


def _config_from(args):
    outdir = args.outdir or os.environ.get("SPDKIT_OUTDIR") or "."
    common = dict(outdir=outdir, figures=args.figures)
    if args.command == "solve":
        if (args.matrix is None) == (args.laplacian is None):
            raise UsageError("pass exactly one of --matrix or --laplacian")
        return RunConfig("solve", matrix_path=args.matrix,
                         grid_sizes=[] if args.laplacian is None
                         else [args.laplacian],
                         rho=args.rho, eps_values=[args.eps],
                         schemes=[args.scheme], tol=args.tol,
                         skip_levels=args.skip_levels, levels=args.levels,
                         jacobi=args.jacobi_prescale, fmt=args.fmt,
                         seed=args.seed, **common)
    if args.command == "bench":
        if not args.laplacian:
            raise UsageError("bench needs at least one --laplacian size")
        return RunConfig("bench", grid_sizes=args.laplacian, rho=args.rho,
                         eps_values=args.eps, schemes=args.scheme,
                         tol=args.tol, skip_levels=args.skip_levels,
                         levels=args.levels, jacobi=args.jacobi_prescale,
                         seed=args.seed, **common)
    if args.command == "forward-error":
        if args.laplacian is None:
            raise UsageError("forward-error needs --laplacian")
        return RunConfig("forward-error", grid_sizes=[args.laplacian],
                         rho=args.rho, eps_values=args.eps,
                         schemes=args.scheme, skip_levels=args.skip_levels,
                         levels=args.levels, jacobi=args.jacobi_prescale,
                         seed=args.seed, **common)
    return RunConfig("verify", only=args.only, **common)


def _build_operator(config, d):
    """The generated grid operator for one side length."""
    if config.rho == 1.0:
        return laplacian_2d(d)
    field = high_contrast_field(d, config.rho, seed=config.seed)
    return laplacian_from_field(field)


def _load_problem(config):
    """Returns (matrix, rhs, source tag, jacobi applied?)."""
    if config.matrix_path is not None:
        a = read_matrix_market(config.matrix_path)
        tag = os.path.splitext(os.path.basename(config.matrix_path))[0]
        jacobi = True if config.jacobi is None else config.jacobi
    else:
        d = config.grid_sizes[0]
        a = _build_operator(config, d)
        tag = f"laplacian{d}-rho{config.rho:g}"
        jacobi = False if config.jacobi is None else config.jacobi
    b = np.ones(a.n)
    if jacobi:
        a, b, _ = jacobi_prescale(a, b)
    return a, b, tag, jacobi


def _factor_and_solve(a, b, config, eps, scheme):
    """Factor, solve, and return the filled SolveReport."""
    levels = config.levels or default_levels(a.n)
    t0 = time.perf_counter()
    hierarchy = build_hierarchy(a, levels)
    factor = factorize(a, hierarchy, eps, scheme,
                       skip_levels=config.skip_levels)
    t_factor = time.perf_counter() - t0
    _, report = pcg(a, b, factor.apply_m, tol=config.tol)
    report.eps = eps
    report.scheme = scheme
    report.mu = memory_ratio(factor, a)
    report.factor_seconds = t_factor
    return report


def cmd_solve(config):
    a, b, tag, jacobi = _load_problem(config)
    eps = config.eps_values[0]
    scheme = config.schemes[0]
    report = _factor_and_solve(a, b, config, eps, scheme)
    stem = os.path.join(config.outdir, f"solve-{tag}-eps{eps:g}-{scheme}")
    payload = {
        "schema": 1,
        "command": "solve",
        "source": tag,
        "n": a.n,
        "nnz": a.nnz,
        "jacobi_prescale": jacobi,
        "tol": config.tol,
        "skip_levels": config.skip_levels,
        "levels": config.levels or default_levels(a.n),
        **report.as_dict(),
    }
    written = []
    if config.fmt == "json":
        written.append(reports.write_json(stem + ".json", payload))
    else:
        scalars = {k: v for k, v in payload.items()
                   if k != "residual_history"}
        written.append(reports.write_csv(
            stem + ".csv", list(scalars), [list(scalars.values())]))
        written.append(reports.write_csv(
            stem + "-history.csv", ["k", "relative_residual"],
            list(enumerate(report.residual_history))))
    if config.figures:
        history = report.residual_history
        written.append(reports.render_lines(
            stem + ".png",
            [(f"{scheme}, eps={eps:g}", range(len(history)), history)],
            xlabel="CG iteration", ylabel="relative residual",
            title=f"{tag}: n={a.n}", logy=True))
    print(f"{tag}: n={a.n} nnz={a.nnz} scheme={scheme} eps={eps:g} "
          f"n_cg={report.n_cg} converged={report.converged} "
          f"mu={report.mu:.2f}")
    for path in written:
        print("wrote", path)
    return 0


BENCH_HEADER = ("d", "n", "rho", "eps", "scheme", "mu", "n_cg",
                "t_factor", "t_solve", "t_total")


def cmd_bench(config):
    rows = []
    for d in sorted(config.grid_sizes):
        a = _build_operator(config, d)
        b = np.ones(a.n)
        if config.jacobi:
            a, b, _ = jacobi_prescale(a, b)
        for eps in config.eps_values:
            for scheme in config.schemes:
                report = _factor_and_solve(a, b, config, eps, scheme)
                rows.append((d, a.n, config.rho, eps, scheme,
                             round(report.mu, 6), report.n_cg,
                             round(report.factor_seconds, 6),
                             round(report.solve_seconds, 6),
                             round(report.factor_seconds
                                   + report.solve_seconds, 6)))
    sizes = "-".join(str(d) for d in sorted(config.grid_sizes))
    stem = os.path.join(config.outdir, f"bench-d{sizes}-rho{config.rho:g}")
    written = [reports.write_csv(stem + ".csv", BENCH_HEADER, rows)]
    if config.figures:
        for column, ylabel, suffix in ((6, "CG iterations", "iterations"),
                                       (5, "memory ratio", "memory")):
            series = []
            for eps in config.eps_values:
                for scheme in config.schemes:
                    cell = [r for r in rows
                            if r[3] == eps and r[4] == scheme]
                    series.append((f"{scheme}, eps={eps:g}",
                                   [r[0] for r in cell],
                                   [r[column] for r in cell]))
            written.append(reports.render_lines(
                f"{stem}-{suffix}.png", series, xlabel="grid side d",
                ylabel=ylabel, title=f"rho={config.rho:g}", logx=True))
    widths = [max(len(str(v)) for v in [h] + [r[i] for r in rows])
              for i, h in enumerate(BENCH_HEADER)]
    print("  ".join(h.rjust(w) for h, w in zip(BENCH_HEADER, widths)))
    for row in rows:
        print("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))
    for path in written:
        print("wrote", path)
    return 0


def cmd_forward_error(config):
    if config.rho != 1.0:
        raise RhoNotOne("forward-error sweeps need the constant-coefficient "
                        "operator (eigenvectors are known only for rho=1)")
    d = config.grid_sizes[0]
    a = laplacian_2d(d)
    levels = config.levels or default_levels(a.n)
    hierarchy = build_hierarchy(a, levels)
    modes = eig_mode_sequence(d)
    rows = []
    for eps in config.eps_values:
        for scheme in config.schemes:
            factor = factorize(a, hierarchy, eps, scheme,
                               skip_levels=config.skip_levels)
            for p in modes:
                v, lam = poisson_eigvec(d, p)
                err = forward_error(factor.apply_m, a, v)
                rows.append((scheme, eps, p, lam, err))
    stem = os.path.join(config.outdir, f"forward-error-d{d}")
    written = [reports.write_csv(
        stem + ".csv", ("scheme", "eps", "p", "lam", "error"), rows)]
    if config.figures:
        series = []
        for eps in config.eps_values:
            for scheme in config.schemes:
                cell = [r for r in rows if r[0] == scheme and r[1] == eps]
                series.append((f"{scheme}, eps={eps:g}",
                               [r[3] for r in cell], [r[4] for r in cell]))
        written.append(reports.render_lines(
            stem + ".png", series, xlabel="eigenvalue",
            ylabel="forward error", title=f"d={d}", logx=True, logy=True))
    print(f"forward-error: d={d} modes={len(modes)} rows={len(rows)}")
    for path in written:
        print("wrote", path)
    return 0


def _coupled_spd(rng, m1, n_rest, decay, tail):
    """Random SPD matrix with log-spaced scaled-panel singular values."""
    k = min(m1, n_rest)
    left, _ = np.linalg.qr(rng.standard_normal((m1, m1)))
    right, _ = np.linalg.qr(rng.standard_normal((n_rest, k)))
    svals = 10.0 ** np.linspace(0.0, -decay, k)
    panel = left[:, :k] @ (svals[:, None] * right.T)
    scale = rng.uniform(0.6, 1.8, size=m1)
    top = scale[:, None] * panel
    trailing = panel.T @ panel + tail * np.eye(n_rest)
    return np.block([[np.diag(scale * scale), top], [top.T, trailing]])


def verify_cond_oracle(count=50, rel_tol=1e-8, lam_tol=1e-10, seed=0):
    """Closed-form condition numbers vs dense eigenvalue oracles.

    Builds random two-level setups (n <= 100, leading block 10-30, drop
    tolerance cycling 0.05/0.2/0.5), assembles both preconditioner
    factors densely, and compares eigenvalue-ratio condition numbers
    against the closed forms.  Also checks that the largest eigenvalue
    of the keep-everything operator is one.
    """
    eps_cycle = (0.05, 0.2, 0.5)
    worst_rel = 0.0
    worst_lam = 0.0
    for k in range(count):
        rng = np.random.default_rng(7000 + seed + k)
        m1 = int(rng.integers(10, 31))
        n_rest = int(rng.integers(20, 101 - m1))
        a = _coupled_spd(rng, m1, n_rest,
                         decay=float(rng.uniform(1.8, 4.0)),
                         tail=float(rng.uniform(0.3, 3.0)))
        setup = build_two_level(a, m1, eps_cycle[k % 3], "second-full")
        n = a.shape[0]
        nf = setup.n_fine
        outer = setup.scaling @ setup.rotation
        base = np.eye(n)
        base[nf:, nf:] = setup.l_hat
        unit = np.eye(n)
        unit[nf:, :nf] = setup.e_hat.T
        pairs = ((cond_first(setup), outer @ base, False),
                 (cond_second(setup), outer @ unit @ base, True))
        for closed, lower, keeps_all in pairs:
            inv = np.linalg.inv(lower)
            sym = inv @ a @ inv.T
            eigs = np.linalg.eigvalsh(0.5 * (sym + sym.T))
            worst_rel = max(worst_rel, abs(closed - eigs[-1] / eigs[0])
                            / closed)
            if keeps_all:
                worst_lam = max(worst_lam, abs(eigs[-1] - 1.0))
    ok = worst_rel <= rel_tol and worst_lam <= lam_tol
    detail = (f"{count} setups; worst relative condition gap "
              f"{worst_rel:.2e} (tol {rel_tol:g}); worst unit-eigenvalue "
              f"offset {worst_lam:.2e} (tol {lam_tol:g})")
    return ok, detail, []


def verify_rate_identity(tol=1e-14):
    """Exact squaring identity between the two rate bounds."""
    rows = []
    worst = 0.0
    for step in range(1, 20):
        e_tilde = 0.05 * step
        r1, r2, gap = rate_identity(e_tilde)
        rows.append((round(e_tilde, 2),
                     (1.0 + e_tilde) / (1.0 - e_tilde),
                     1.0 / (1.0 - e_tilde ** 2), r1, r2))
        worst = max(worst, gap)
    ok = worst <= tol
    detail = (f"{len(rows)} coupling norms; worst squaring-identity gap "
              f"{worst:.2e} (tol {tol:g})")
    return ok, detail, rows


def verify_theorem(count=100, m1=8, m2=4, equal_tol=1e-8, control_tol=1e-4,
                   control_quota=None, run_tol=1e-10):
    """Residual matching on random instances, plus a negative control.

    Every instance satisfies the orthogonality constraint, so the even
    residuals of the coupled system must match the block-diagonal
    system's residuals; instances with the constraint deliberately
    broken must show a clear mismatch on at least ``control_quota``
    instances (nine tenths of ``count`` by default).
    """
    if control_quota is None:
        control_quota = (9 * count) // 10
    worst = 0.0
    control_hits = 0
    sample_rows = []
    for seed in range(count):
        inst = make_theorem_instance(m1, m2, seed=seed)
        norms1, norms2, deviation = theorem_harness(inst, tol=run_tol)
        worst = max(worst, deviation)
        if seed == 0:
            length = max(len(norms1), len(norms2))
            for k in range(length):
                sample_rows.append((
                    k,
                    norms1[k] if k < len(norms1) else None,
                    norms2[k] if k < len(norms2) else None,
                ))
        broken = TheoremInstance(inst.coupling,
                                 inst.b1 + inst.coupling @ np.ones(m2),
                                 inst.b2)
        if theorem_harness(broken, tol=run_tol)[2] > control_tol:
            control_hits += 1
    ok = worst <= equal_tol and control_hits >= control_quota
    detail = (f"{count} instances; worst residual deviation {worst:.2e} "
              f"(tol {equal_tol:g}); negative control tripped on "
              f"{control_hits}/{count} (need {control_quota})")
    return ok, detail, sample_rows


def verify_spd_preservation():
    """Factorization succeeds and keeps its quality on a config sweep.

    Every Cholesky pivot inside the factorization must stay positive for
    all sampled grids, contrasts, tolerances, and schemes; the exact
    (eps = 0) factorization must solve in one iteration; and the
    second-order schemes must keep their iteration advantage, which
    guards the sign and placement of the correction blocks.
    """
    failures = []
    count = 0
    guard_counts = {}
    for d, rho in ((32, 1.0), (32, 100.0), (64, 1.0), (64, 100.0)):
        if rho == 1.0:
            a = laplacian_2d(d)
        else:
            a = laplacian_from_field(high_contrast_field(d, rho, seed=0))
        b = np.ones(a.n)
        hierarchy = build_hierarchy(a, default_levels(a.n))
        for eps in (0.1, 0.01):
            for scheme in SCHEME_CHOICES:
                count += 1
                label = f"d={d} rho={rho:g} eps={eps:g} {scheme}"
                try:
                    factor = factorize(a, hierarchy, eps, scheme)
                    _, report = pcg(a, b, factor.apply_m, tol=1e-10)
                except NumericalError as exc:
                    failures.append(f"{label}: {exc}")
                    continue
                if not report.converged:
                    failures.append(f"{label}: CG did not converge")
                if d == 64 and rho == 1.0 and eps == 0.01:
                    guard_counts[scheme] = report.n_cg
    exact = laplacian_2d(32)
    exact_b = np.ones(exact.n)
    exact_h = build_hierarchy(exact, default_levels(exact.n))
    for scheme in SCHEME_CHOICES:
        factor = factorize(exact, exact_h, 0.0, scheme)
        _, report = pcg(exact, exact_b, factor.apply_m, tol=1e-10)
        if report.n_cg != 1:
            failures.append(f"exact limit ({scheme}): n_cg={report.n_cg}")
    for scheme in ("second-full", "second-superfine"):
        n_cg = guard_counts.get(scheme)
        if n_cg is None or n_cg > 5:
            failures.append(f"second-order quality guard ({scheme}): "
                            f"n_cg={n_cg} exceeds 5")
    ok = not failures
    detail = (f"{count} configurations factored; exact limit and "
              f"second-order guards hold" if ok
              else "; ".join(failures[:3]))
    return ok, detail, []


_SUITES = {
    "cond-oracle": verify_cond_oracle,
    "rate-identity": verify_rate_identity,
    "theorem": verify_theorem,
    "spd-preservation": verify_spd_preservation,
}

_SUITE_CSV = {
    "rate-identity": ("verify-rates.csv",
                      ("e_tilde", "kappa1", "kappa2", "r1", "r2")),
    "theorem": ("verify-theorem.csv",
                ("k", "res_coupled", "res_block_diagonal")),
}


def _write_suite_artifacts(config, name, rows):
    written = []
    filename, header = _SUITE_CSV[name]
    written.append(reports.write_csv(
        os.path.join(config.outdir, filename), header, rows))
    if not config.figures:
        return written
    if name == "rate-identity":
        xs = [r[0] for r in rows]
        series = [("first-order bound", xs, [r[3] for r in rows]),
                  ("second-order bound", xs, [r[4] for r in rows]),
                  ("first-order bound squared", xs,
                   [r[3] ** 2 for r in rows])]
        written.append(reports.render_lines(
            os.path.join(config.outdir, "verify-rates.png"), series,
            xlabel="whitened coupling norm", ylabel="rate bound",
            title="convergence-rate bounds"))
    else:
        ks = [r[0] for r in rows]
        series = [("coupled system", ks,
                   [r[1] for r in rows if r[1] is not None]),
                  ("block-diagonal system",
                   [r[0] for r in rows if r[2] is not None],
                   [r[2] for r in rows if r[2] is not None])]
        series[0] = ("coupled system",
                     [r[0] for r in rows if r[1] is not None],
                     series[0][2])
        written.append(reports.render_lines(
            os.path.join(config.outdir, "verify-theorem.png"), series,
            xlabel="CG step", ylabel="residual norm",
            title="residual matching", logy=True))
    return written


def cmd_verify(config):
    names = [config.only] if config.only else list(SUITE_ORDER)
    written = []
    failed = []
    for name in names:
        ok, detail, rows = _SUITES[name]()
        print(("PASS" if ok else "FAIL"), f"{name}: {detail}")
        if not ok:
            failed.append(name)
        if rows and name in _SUITE_CSV:
            written.extend(_write_suite_artifacts(config, name, rows))
    for path in written:
        print("wrote", path)
    if failed:
        print(f"verification failed: {failed[0]}", file=sys.stderr)
        return 3
    return 0


_DISPATCH = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "forward-error": cmd_forward_error,
    "verify": cmd_verify,
}


def main(argv=None):
    """Parse arguments and dispatch; returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _config_from(args)
        os.makedirs(config.outdir, exist_ok=True)
        return _DISPATCH[config.command](config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, InputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def run():
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
