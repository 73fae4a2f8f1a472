"""Command-line front end.

Commands print JSON (or CSV where noted) to stdout or ``--out``.  Exit codes:
0 success, 2 usage error, 3 numeric non-convergence, 4 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

from . import bce, guarantee, lp_core, mechanism, prior

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4
FIGURE_MAX_BUYERS = 50


class UsageError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


def _step(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None


def _kv(text: str) -> dict[str, float]:
    out = {}
    for part in filter(None, text.split(",")):
        key, sep, val = part.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {part!r}")
        try:
            out[key.strip()] = float(Fraction(val.strip()))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad number in {part!r}") from None
    return out


def _need(d: dict, keys, flag: str):
    missing = [k for k in keys if k not in d]
    extra = [k for k in d if k not in keys]
    if missing or extra:
        raise UsageError(f"{flag} needs exactly {', '.join(keys)}")
    return [d[k] for k in keys]


def _emit(text: str, args) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def _to_builtin(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _csv(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{x:.4f}" if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _config(args) -> guarantee.SearchConfig:
    return guarantee.SearchConfig(nu=args.nu, seed=args.seed, k=args.k)


def _prior(args):
    return prior.parse_prior_spec(args.prior)


# --- commands ------------------------------------------------------------------

def cmd_guarantee(args) -> int:
    pr = _prior(args)
    if args.buyers < 1:
        raise UsageError("--buyers must be >= 1")
    cfg = _config(args)
    if args.variant == "sharp2":
        if args.buyers != 2:
            raise UsageError("--variant sharp2 requires --buyers 2")
        res = guarantee.pi_sharp_2(pr, cfg)
    else:
        res = guarantee.pi_star_I(pr, args.buyers, cfg)
    out = res.to_dict()
    out["prior"] = pr.to_dict()
    out["mean"] = pr.mean()
    if args.format == "csv":
        _emit(_csv(["variant", "buyers", "value", "A"],
                   [[res.variant, res.buyers, res.value, res.params["A"]]]), args)
    else:
        _emit(_json(out), args)
    if not res.converged:
        raise NonConvergence("outer search over A did not converge")
    return EXIT_OK


def table_rows(cfg: guarantee.SearchConfig):
    rows = []
    for name, pr in list(prior.REFERENCE_PRIORS.items()) + [("Triangle", prior.TRIANGLE)]:
        sharp = guarantee.pi_sharp_2(pr, cfg)
        star2 = guarantee.pi_star_I(pr, 2, cfg)
        star1 = guarantee.pi_star_I(pr, 1, cfg)
        ok = sharp.converged and star2.converged and star1.converged
        rows.append({"prior": name, "spec": pr.label, "mean": pr.mean(), "pi_sharp_2": sharp.value,
                     "pi_star_2": star2.value, "pi_star_1": star1.value, "converged": ok})
    return rows


def cmd_table(args) -> int:
    rows = table_rows(_config(args))
    cols = ["prior", "mean", "pi_sharp_2", "pi_star_2", "pi_star_1"]
    if args.format == "json":
        _emit(_json(rows), args)
    else:
        note = ("first-price auction column omitted: its values come from a separate "
                "algorithm not implemented here")
        _emit(_csv(cols, [[r[c] for c in cols] for r in rows], [note]), args)
    if not all(r["converged"] for r in rows):
        raise NonConvergence("outer search over A did not converge for some prior")
    return EXIT_OK


def cmd_figure(args) -> int:
    if not 1 <= args.max_buyers <= FIGURE_MAX_BUYERS:
        raise UsageError(f"--max-buyers must lie in 1..{FIGURE_MAX_BUYERS}")
    pr = _prior(args)
    cfg = _config(args)
    res = [guarantee.pi_star_I(pr, I, cfg) for I in range(1, args.max_buyers + 1)]
    if args.format == "json":
        _emit(_json([{"buyers": r.buyers, "value": r.value, "A": r.params["A"]} for r in res]), args)
    else:
        _emit(_csv(["buyers", "pi_star"], [[r.buyers, r.value] for r in res],
                   [f"prior {pr.label}"]), args)
    if not all(r.converged for r in res):
        raise NonConvergence("outer search over A did not converge")
    return EXIT_OK


def _lp_mechanism(args) -> mechanism.FiniteMechanism:
    given = [x for x in (args.mechanism_file, args.exp, args.gen2, args.posted) if x is not None]
    if len(given) > 1:
        raise UsageError("give at most one of --mechanism-file, --exp, --gen2, --posted")
    if args.mechanism_file:
        return mechanism.load_mechanism(args.mechanism_file)
    if args.exp:
        a, X = _need(_kv(args.exp), ["a", "X"], "--exp")
        if args.k is None:
            raise UsageError("--exp needs --k")
        return mechanism.build_exponential(args.buyers, args.k, a, X)
    if args.gen2:
        a, Y0, Y1 = _need(_kv(args.gen2), ["a", "Y0", "Y1"], "--gen2")
        if args.k is None:
            raise UsageError("--gen2 needs --k")
        return mechanism.build_generalized_two_buyer(args.k, a, Y0, Y1)
    if args.posted:
        (p,) = _need(_kv(args.posted), ["p"], "--posted")
        return mechanism.build_posted_price(p)
    if args.k is None:
        raise UsageError("give a mechanism: --mechanism-file, --exp, --gen2 or --posted")
    return mechanism.zero_mechanism(args.buyers, args.k)


def cmd_lp(args) -> int:
    mech = _lp_mechanism(args)
    pr = prior.as_discrete(_prior(args), args.nu)
    primal, mu = bce.min_bce_revenue(mech, pr, backend=args.backend)
    dual, cert = bce.max_dual_revenue(mech, pr, backend=args.backend)
    rep = bce.verify_bce(mu, mech, pr)
    out = {
        "primal": primal, "dual": dual, "gap": abs(primal - dual),
        "consistency_residual": rep.consistency_residual,
        "obedience_violation": rep.obedience_violation,
        "complementary_slackness": bce.complementary_slackness(mu, cert, mech, pr),
        "buyers": mech.buyers, "messages": list(mech.messages), "nu": pr.step,
        "meta": mech.meta,
    }
    if mech.meta.get("kind") == "exponential":
        rev = bce.virtual_revenue_table(mech, bce.BandRates(mech.meta["a"]), pr.values)
        out["band_rate_bound"] = float(pr.weights @ rev.reshape(rev.shape[0], -1).min(axis=1))
    if args.dump_mu:
        with open(args.dump_mu, "w", encoding="utf-8") as fh:
            fh.write(_json(mu.to_dict(primal)))
    if args.dump_certificate:
        with open(args.dump_certificate, "w", encoding="utf-8") as fh:
            fh.write(_json(dict(cert.to_dict(), value=dual)))
    if args.format == "csv":
        _emit(_csv(["primal", "dual", "gap"], [[primal, dual, abs(primal - dual)]]), args)
    else:
        _emit(_json(out), args)
    return EXIT_OK


def cmd_rs(args) -> int:
    pr = _prior(args)
    if not isinstance(pr, prior.ContinuousPrior):
        raise UsageError("rs needs a continuous prior")
    res = guarantee.rs_construct(pr)
    out = res.to_dict()
    out["mean"] = pr.mean()
    out["prior"] = pr.to_dict()
    _emit(_json(out), args)
    return EXIT_OK


def cmd_triangle_bound(args) -> int:
    bound = guarantee.wallet_game_bound()
    cfg = _config(args)
    star = guarantee.pi_star_I(prior.TRIANGLE, 2, cfg)
    sharp = guarantee.pi_sharp_2(prior.TRIANGLE, cfg)
    out = {"bound": bound, "pi_star_2": star.value, "pi_sharp_2": sharp.value,
           "ratio_star": star.value / bound, "ratio_sharp": sharp.value / bound}
    _emit(_json(out), args)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--prior", default="uniform",
                        help="uniform | beta:b,c | powercdf:e | concavecdf | triangle | file:PATH")
    common.add_argument("--nu", type=_step, default=prior.DEFAULT_NU, help="grid step, e.g. 1/200")
    common.add_argument("--buyers", type=int, default=1)
    common.add_argument("--k", type=int, default=None,
                        help="number of demand levels (guarantees: finite-k objective)")
    common.add_argument("--seed", type=int, default=None, help="jitter for the A search grid")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    p = argparse.ArgumentParser(prog="robustmech", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("guarantee", parents=[common], help="revenue guarantee of a mechanism family")
    g.add_argument("--variant", choices=("star", "sharp2"), default="star")
    g.set_defaults(func=cmd_guarantee, default_format="json")

    t = sub.add_parser("table", parents=[common], help="guarantees for the reference priors")
    t.set_defaults(func=cmd_table, default_format="csv")

    f = sub.add_parser("figure", parents=[common], help="exponential guarantee against buyer count")
    f.add_argument("--max-buyers", type=int, default=20)
    f.set_defaults(func=cmd_figure, default_format="csv")

    lp = sub.add_parser("lp", parents=[common], help="worst-case BCE revenue of a mechanism")
    lp.add_argument("--mechanism-file")
    lp.add_argument("--exp", help="a=..,X=.. (with --buyers, --k)")
    lp.add_argument("--gen2", help="a=..,Y0=..,Y1=.. (with --k)")
    lp.add_argument("--posted", help="p=..")
    lp.add_argument("--backend", choices=("simplex", "highs"), default="simplex")
    lp.add_argument("--dump-mu")
    lp.add_argument("--dump-certificate")
    lp.set_defaults(func=cmd_lp, default_format="json")

    r = sub.add_parser("rs", parents=[common], help="one-buyer optimal signal and mechanism")
    r.set_defaults(func=cmd_rs, default_format="json")

    tb = sub.add_parser("triangle-bound", parents=[common], help="wallet-game bound for the triangle prior")
    tb.set_defaults(func=cmd_triangle_bound, default_format="json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    try:
        return args.func(args)
    except (UsageError, prior.InvalidPriorError, mechanism.MechanismError, OSError) as exc:
        print(f"robustmech: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergence, guarantee.SearchError, guarantee.RSConstructionError,
            lp_core.NoConvergenceError, bce.InternalLPError, bce.EmbedError) as exc:
        print(f"robustmech: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except bce.SizeCapError as exc:
        print(f"robustmech: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
