"""``csdip`` command line.

Subcommands: measure, recover, estimate-prior, baseline-lasso,
theory-verify, compare. Failures exit with status 1 and a single
``error: <Type>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io, linops, theory
from .generator import GeneratorConfig, dcgan_config
from .lasso import DEFAULT_LAMBDAS, DctBasis, LassoConfig, fista, idct2, lasso_grid
from .regularization import PriorStats, estimate_prior
from .solver import SolverConfig, grid_search, recover

log = logging.getLogger("csdip")

LAMBDA_T_GRID = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)


def _measurement_operator(header: dict):
    kind = header["kind"]
    if kind == "gaussian":
        return linops.make_gaussian(header["m"], header["n"], header["seed"])
    if kind == "fourier":
        return linops.make_radial_mask(header["height"], header["width"], header["lines"])
    raise ValueError(f"unknown measurement kind {kind!r}")


def load_measurements(path):
    header, arrays = io.read_container(path)
    return header, arrays["y"], _measurement_operator(header)


def cmd_measure(args) -> None:
    x = io.load_image(args.image)
    c, h, w = x.shape
    if args.kind == "gaussian":
        if args.m is None:
            raise ValueError("--m is required for gaussian measurements")
        op = linops.make_gaussian(args.m, x.size, args.seed)
    else:
        if args.lines is None:
            raise ValueError("--lines is required for fourier measurements")
        if c != 1:
            raise ValueError("fourier measurements need a single-channel image")
        op = linops.make_radial_mask(h, w, args.lines)
    noise_seed = args.seed + 1 if args.noise_seed is None else args.noise_seed
    y = linops.add_noise(linops.apply(op, x), linops.NoiseSpec(args.sigma2, noise_seed), op.out_size)
    header = {"kind": args.kind, "m": op.out_size, "n": x.size, "channels": c, "height": h,
              "width": w, "lines": args.lines, "sigma2": args.sigma2, "seed": args.seed,
              "noise_seed": noise_seed}
    io.write_container(args.out, header, {"y": y})
    io.write_manifest(f"{args.out}.manifest.json", "measure", image=args.image, out=args.out,
                      operator=op.descriptor(), noise={"sigma2": args.sigma2, "seed": noise_seed},
                      header=header)


def _gen_config(args, header) -> GeneratorConfig:
    if args.gen_config:
        return GeneratorConfig.load(args.gen_config)
    return dcgan_config((header["channels"], header["height"], header["width"]))


def _write_run(out: Path, image, mloss, objective, manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.save_image(out / "image.png", image)
    io.write_container(out / "recon.bin", {"kind": "image"}, {"image": image})
    io.write_trace(out / "trace.csv", mloss, objective)
    io.write_manifest(out / "manifest.json", **manifest)


def cmd_recover(args) -> None:
    header, y, op = load_measurements(args.measurements)
    gen_config = _gen_config(args, header)
    stats = PriorStats.load(args.prior) if args.prior else None
    cfg = SolverConfig(steps=args.steps, lambda_T=args.lt, lambda_L=args.ll,
                       restarts=args.restarts, learning_rate=args.lr, seed=args.seed)
    out = Path(args.out)
    grid = None
    if args.grid:
        lam, result, grid = grid_search(y, op, gen_config, cfg, LAMBDA_T_GRID, stats)
        cfg = SolverConfig(**{**asdict(cfg), "lambda_T": lam})
    else:
        result = recover(y, op, gen_config, cfg, stats)
    _write_run(out, result.image, result.measurement_loss_trace, result.objective_trace, {
        "command": "recover", "method": "cs-dip", "measurements": args.measurements,
        "measurement_header": header, "operator": op.descriptor(), "m": header["m"],
        "generator": gen_config.to_dict(), "solver": asdict(cfg), "prior": args.prior,
        "chosen_step": result.chosen_step, "restart_index": result.restart_index,
        "restart_losses": result.restart_losses, "final_objective": result.final_objective,
        "latent_seed": list(np.atleast_1d(result.latent.seed).tolist()), "out": str(out)})
    io.save_weights(out / "weights.bin", result.weights, result.latent)
    if grid is not None:
        with open(out / "grid.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["lambda_T", "measurement_loss"])
            w.writerows(grid)


def cmd_estimate_prior(args) -> None:
    paths = sorted(glob.glob(args.weights))
    if not paths:
        raise FileNotFoundError(f"no weight files match {args.weights!r}")
    weight_sets = [io.load_weights(p) for p in paths]
    stats = estimate_prior(weight_sets, args.S, args.T, args.seed)
    stats.save(args.out)
    io.write_manifest(f"{args.out}.manifest.json", "estimate-prior", weights=paths,
                      S=args.S, T=args.T, seed=args.seed, out=args.out)


def cmd_baseline_lasso(args) -> None:
    header, y, op = load_measurements(args.measurements)
    shape = (header["channels"], header["height"], header["width"])
    if shape[0] != 1:
        raise ValueError("the Lasso-DCT baseline supports single-channel images")
    basis = DctBasis(shape[1], shape[2])
    if args.lam is None:
        lam, _, table = lasso_grid(y, op, basis, DEFAULT_LAMBDAS, LassoConfig(
            iterations=args.iterations))
    else:
        lam, table = args.lam, None
    if not isinstance(op, linops.GaussianOperator):
        raise TypeError(f"Lasso-DCT baseline needs a Gaussian operator, got {op.kind}")
    coeffs, mloss, objective = fista(y, op, basis, LassoConfig(lam, args.iterations))
    image = idct2(coeffs).reshape(shape)
    out = Path(args.out)
    _write_run(out, image, mloss, objective, {
        "command": "baseline-lasso", "method": "lasso-dct", "measurements": args.measurements,
        "measurement_header": header, "operator": op.descriptor(), "m": header["m"],
        "lambda": lam, "iterations": args.iterations, "out": str(out)})
    if table is not None:
        with open(out / "grid.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["lambda", "measurement_loss"])
            w.writerows([row[:2] for row in table])


def _write_rows(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trial", "quantity", "bound", "pass"])
        for r in rows:
            w.writerow([r["trial"], repr(r["quantity"]), repr(r["bound"]), int(r["pass"])])


def cmd_theory_verify(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = theory.verify_lemmas(args.n, args.d, args.k, args.trials, args.seed,
                                  sign_d=args.sign_d, radius=args.radius)
    by_check: dict[str, list] = {}
    for row in report.rows:
        by_check.setdefault(row["check"], []).append(row)
    for check, rows in by_check.items():
        _write_rows(out / f"{check}.csv", rows)

    traces = theory.descent_trials(args.n, args.d, args.k, args.trials, args.eta_bar,
                                   args.tau_max, args.seed)
    decay_rows = []
    with open(out / "residual_traces.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trial", "tau", "residual", "bound"])
        for i, tr in enumerate(traces):
            ratio = float(np.nanmax(tr.residual_norms / tr.bound_curve))
            decay_rows.append({"trial": i, "quantity": ratio, "bound": 1.0,
                               "pass": tr.within_bound()})
            for tau in range(0, len(tr.residual_norms), args.trace_every):
                w.writerow([i, tau, repr(float(tr.residual_norms[tau])),
                            repr(float(tr.bound_curve[tau]))])
    _write_rows(out / "residual_decay.csv", decay_rows)

    summary = report.summary()
    ok = sum(r["pass"] for r in decay_rows)
    summary["residual_decay"] = {"passed": ok, "trials": len(decay_rows),
                                 "failure_rate": 1 - ok / max(len(decay_rows), 1)}
    (out / "summary.json").write_text(json.dumps({
        "n": args.n, "d": args.d, "k": args.k, "trials": args.trials,
        "sigma_min_applicable": report.sigma_min_applicable, "checks": summary}, indent=2))
    io.write_manifest(out / "manifest.json", "theory-verify", **{
        k: v for k, v in vars(args).items() if k not in ("func", "command")})


def cmd_compare(args) -> None:
    truth = io.load_image(args.truth)
    rows = []
    for run in args.runs:
        run = Path(run)
        manifest = io.read_manifest(run / "manifest.json")
        _, arrays = io.read_container(run / "recon.bin")
        image = arrays["image"].reshape(truth.shape)
        rows.append({"run": str(run), "method": manifest.get("method", "unknown"),
                     "kind": manifest.get("operator", {}).get("kind"),
                     "m": manifest.get("m"), "mse": io.mse(image, truth)})
    rows.sort(key=lambda r: (r["method"], r["m"] or 0, r["run"]))
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["method", "kind", "m", "mse", "run"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "mse": repr(r["mse"])})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csdip", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="simulate measurements of an image")
    m.add_argument("--image", required=True)
    m.add_argument("--kind", choices=["gaussian", "fourier"], required=True)
    g = m.add_mutually_exclusive_group(required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--lines", type=int)
    m.add_argument("--sigma2", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--noise-seed", type=int)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_measure)

    r = sub.add_parser("recover", help="CS-DIP reconstruction")
    r.add_argument("--measurements", required=True)
    r.add_argument("--gen-config")
    r.add_argument("--lt", type=float, default=0.01, help="TV weight")
    r.add_argument("--ll", type=float, default=0.0, help="learned-prior weight")
    r.add_argument("--restarts", type=int, default=1)
    r.add_argument("--steps", type=int, default=1000)
    r.add_argument("--lr", type=float, default=1e-3)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--prior")
    r.add_argument("--grid", action="store_true", help="sweep the TV weight")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_recover)

    e = sub.add_parser("estimate-prior", help="fit layer-wise weight statistics")
    e.add_argument("--weights", required=True, help="glob of weights.bin files")
    e.add_argument("--S", type=int, required=True)
    e.add_argument("--T", type=int, required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate_prior)

    b = sub.add_parser("baseline-lasso", help="Lasso in a DCT basis")
    b.add_argument("--measurements", required=True)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--iterations", type=int, default=2000)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline_lasso)

    t = sub.add_parser("theory-verify", help="one-layer convergence and spectrum checks")
    t.add_argument("--n", type=int, default=10)
    t.add_argument("--d", type=int, default=2000)
    t.add_argument("--k", type=int, default=16)
    t.add_argument("--trials", type=int, default=20)
    t.add_argument("--eta-bar", type=float, default=1.0)
    t.add_argument("--tau-max", type=int, default=5000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--sign-d", type=int)
    t.add_argument("--radius", type=float, default=0.1)
    t.add_argument("--trace-every", type=int, default=10)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_theory_verify)

    c = sub.add_parser("compare", help="MSE table across runs")
    c.add_argument("--runs", nargs="+", required=True)
    c.add_argument("--truth", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - one-line error contract
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
