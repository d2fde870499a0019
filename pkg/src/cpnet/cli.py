"""Command-line driver: ``cpnet <gen|eval|train|oracle|lift|verify|relax|export> ...``.

Exit codes: 0 pass, 1 verification failure, 2 input error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .cp_lift import (
    assemble_qcqp,
    check_constraints_vectorized,
    check_constraints_kronecker,
    eval_objective_vectorized,
    optimal_atom,
    random_factor,
)
from .errors import ConvergenceError, CpnetError, InstanceFormatError
from .formats import export_sdpa, generate_instance, parse_instance, serialize_instance
from .linnet import oracle_opt, train_shallow
from .relax_solver import build_relaxation, certify_sandwich, solve
from .verify import (
    EXIT_INPUT_ERROR,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_VERIFY_FAILED,
    RunConfig,
    objective_chain,
    run_verify,
)

log = logging.getLogger("cpnet")


def _widths(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad widths {text!r}") from exc


def _config(args) -> RunConfig:
    base = RunConfig.load(args.config).as_dict() if getattr(args, "config", None) else RunConfig().as_dict()
    for key in ("samples", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    for key, dest in (("rank_tol", "rank_tol"), ("constraint_tol", "constraint_tol"), ("objective_tol", "objective_tol")):
        v = getattr(args, key, None)
        if v is not None:
            base[dest] = v
    for key, dest in (("rho", "rho"), ("max_iter", "max_iter"), ("tol_p", "tol_p"), ("tol_d", "tol_d")):
        v = getattr(args, key, None)
        if v is not None:
            base["relax"][dest] = v
    if getattr(args, "no_relax", False):
        base["run_relaxation"] = False
    return RunConfig.from_dict(base)


def _emit(args, text: str, payload: dict):
    if getattr(args, "format", "text") == "json":
        sys.stdout.write(json.dumps(payload, indent=1, sort_keys=True, default=_plain) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if getattr(args, "json", None):
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, indent=1, sort_keys=True, default=_plain) + "\n")


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def cmd_gen(args) -> int:
    spec = {"kind": args.kind, "widths": args.widths, "n": args.n}
    if args.noise is not None:
        spec["noise"] = args.noise
    inst = generate_instance(spec, args.seed)
    text = serialize_instance(inst, {**spec, "seed": args.seed})
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    inst = parse_instance(args.instance)
    rng = np.random.default_rng(args.seed or 0)
    p = random_factor(inst, rng)
    vals = objective_chain(p, inst)
    lines = [f"objective at a seeded random factor point (seed={args.seed or 0})"]
    lines += [f"  {k:<9s} {v:.15g}" for k, v in vals.items()]
    spread = max(vals.values()) - min(vals.values())
    lines.append(f"  spread    {spread:.3e}")
    _emit(args, "\n".join(lines), {"values": vals, "spread": spread})
    return EXIT_OK


def cmd_train(args) -> int:
    inst = parse_instance(args.instance)
    cfg = _config(args)
    if args.iters is not None:
        cfg.train.max_iter = args.iters
    res = train_shallow(inst, cfg.train)
    opt = oracle_opt(inst).opt_value
    text = (
        f"trained objective {res.objective:.15g} after {res.iterations} iterations "
        f"(grad norm {res.grad_norm:.3e}, converged={res.converged})\n"
        f"oracle optimum    {opt:.15g}\nexcess            {res.objective - opt:.3e}"
    )
    payload = {
        "objective": res.objective, "iterations": res.iterations, "grad_norm": res.grad_norm,
        "converged": res.converged, "opt_value": opt, "U": res.point.U, "V": res.point.V,
    }
    _emit(args, text, payload)
    return EXIT_OK if res.objective >= opt - 1e-9 else EXIT_VERIFY_FAILED


def cmd_oracle(args) -> int:
    inst = parse_instance(args.instance)
    o = oracle_opt(inst)
    text = (
        f"opt_value {o.opt_value:.15g}\neffective_rank {o.effective_rank} (r = {inst.r})\n"
        f"rank constraint vacuous: {inst.rank_vacuous}\nW* =\n{np.array2string(o.W_star, precision=8)}"
    )
    _emit(args, text, {"opt_value": o.opt_value, "effective_rank": o.effective_rank,
                       "r": inst.r, "rank_constraint_vacuous": inst.rank_vacuous, "W_star": o.W_star})
    return EXIT_OK


def cmd_lift(args) -> int:
    inst = parse_instance(args.instance)
    cfg = _config(args)
    atom, opt = optimal_atom(inst)
    r1 = check_constraints_vectorized(atom, inst, cfg.constraint_tol)
    r2 = check_constraints_kronecker(atom, inst, cfg.constraint_tol)
    obj = eval_objective_vectorized(atom, inst)
    text = "\n".join([
        f"optimal atom objective {obj:.15g}  (oracle {opt:.15g})",
        r1.to_text("vectorized constraints"),
        r2.to_text("Kronecker constraints"),
    ])
    _emit(args, text, {"objective": obj, "opt_value": opt, "vectorized": r1.as_dict(), "kronecker": r2.as_dict(),
                       "z": atom.z})
    ok = r1.passed and r2.passed and abs(obj - opt) <= cfg.constraint_tol
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_relax(args) -> int:
    inst = parse_instance(args.instance)
    cfg = _config(args)
    res = solve(build_relaxation(assemble_qcqp(inst), inst), cfg.relax)
    sw = certify_sandwich(inst, res, cfg.sandwich_tol, raise_on_violation=False)
    text = "\n".join([
        f"lower bound {res.lower_bound:.12g} (objective {res.objective:.12g}, margin {res.safety_margin:.2e})",
        f"optimum     {sw.opt_value:.12g}",
        f"gap         {sw.gap:.3e}",
        f"iterations  {res.iterations}, converged={res.converged}, "
        f"primal {res.primal_residual:.2e}, dual {res.dual_residual:.2e}",
        sw.report.to_text("sandwich"),
    ])
    payload = {**res.as_dict(), "opt_value": sw.opt_value, "gap": sw.gap, "sandwich": sw.report.as_dict()}
    if not args.deterministic:
        payload["elapsed_s"] = res.elapsed
    _emit(args, text, payload)
    if not res.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if sw.passed else EXIT_VERIFY_FAILED


def cmd_export(args) -> int:
    inst = parse_instance(args.instance)
    f = assemble_qcqp(inst)
    prob = build_relaxation(f, inst)
    data = export_sdpa(f, prob, args.output)
    sys.stdout.write(f"wrote {args.output}: {data.m} constraints, blocks {list(data.block_struct)}\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = parse_instance(args.instance)
    cfg = _config(args)
    rep = run_verify(inst, cfg, deterministic=args.deterministic)
    if args.format == "json":
        sys.stdout.write(rep.to_json())
    else:
        sys.stdout.write(rep.to_text())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(rep.to_json())
    return rep.exit_code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpnet", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("instance", help="instance JSON file")
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--json", metavar="PATH", help="also write the JSON report here")
        p.add_argument("--deterministic", action="store_true", help="suppress timings in reports")
        if config:
            p.add_argument("--config", help="RunConfig JSON file")
            p.add_argument("--seed", type=int)
            p.add_argument("--samples", type=int)
            p.add_argument("--rank-tol", dest="rank_tol", type=float)
            p.add_argument("--constraint-tol", dest="constraint_tol", type=float)
            p.add_argument("--objective-tol", dest="objective_tol", type=float)
            p.add_argument("--rho", type=float)
            p.add_argument("--max-iter", dest="max_iter", type=int)
            p.add_argument("--tol-p", dest="tol_p", type=float)
            p.add_argument("--tol-d", dest="tol_d", type=float)

    p = sub.add_parser("gen", help="generate a seeded instance")
    p.add_argument("--kind", default="random-gaussian", choices=("random-gaussian", "exact-fit", "low-rank-plus-noise"))
    p.add_argument("--widths", type=_widths, required=True, help="comma-separated d_0,...,d_N")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="evaluate every formulation at a random factor point")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="gradient descent on the shallow factorization")
    common(p)
    p.add_argument("--iters", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("oracle", help="closed-form global optimum")
    common(p, config=False)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("lift", help="build and check the atom at the optimum")
    common(p)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("verify", help="run the full verification chain")
    common(p)
    p.add_argument("--no-relax", dest="no_relax", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("relax", help="solve the PSD relaxation and check the sandwich")
    common(p)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("export", help="write the PSD relaxation in SDPA sparse format")
    p.add_argument("instance")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InstanceFormatError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT_ERROR
    except ConvergenceError as exc:
        sys.stderr.write(f"solver error: {exc}\n")
        return EXIT_NOT_CONVERGED
    except CpnetError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())
