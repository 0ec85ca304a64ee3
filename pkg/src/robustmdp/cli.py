"""Command-line entry point: validate, solve-tabular, train, backtest, selftest.

Exit codes: 0 success, 2 bad input, 3 runtime failure. Errors are written to
stderr as one JSON object per line with a stable ``code`` field.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

from . import backtest as bt
from . import data
from .ambiguity import make_mode
from .bellman import load_mdp, tabular_solve
from .core import RewardSpec, load_config, validate_config
from .errors import DimensionMismatch, InvalidConfig, ParseError, RobustMdpError
from .neural import load_checkpoint, policy_function, save_checkpoint, train

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3


class CliFailure(Exception):
    def __init__(self, exit_code, code, message):
        super().__init__(message)
        self.exit_code, self.code, self.message = exit_code, code, message


def _fail(exc: Exception, exit_code: int):
    code = getattr(exc, "code", type(exc).__name__)
    raise CliFailure(exit_code, code, getattr(exc, "message", str(exc)) or str(exc))


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _parse_period(text: str):
    try:
        start, end = text.split(":")
        return date.fromisoformat(start), date.fromisoformat(end)
    except ValueError as exc:
        raise ParseError(f"bad --period {text!r}, expected START:END in ISO dates") from exc


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        cp = cfg.growth_constant
        validate_config(cfg)
    except RobustMdpError as exc:
        _fail(exc, EXIT_INPUT)
    except TypeError as exc:
        _fail(InvalidConfig(str(exc)), EXIT_INPUT)
    _emit({"valid": True, "ambiguity": cfg.ambiguity, "alpha": cfg.alpha, "c_p": cp,
           "alpha_times_c_p": cfg.alpha * cp, "margin": 1.0 - cfg.alpha * cp})
    return EXIT_OK


def cmd_solve_tabular(args) -> int:
    try:
        if not args.tol > 0:
            raise InvalidConfig(f"tol must be > 0, got {args.tol}")
        if not 0 < args.alpha < 1:
            raise InvalidConfig(f"alpha must lie in (0, 1), got {args.alpha}")
        mdp = load_mdp(args.data)
    except RobustMdpError as exc:
        _fail(exc, EXIT_INPUT)
    try:
        table = tabular_solve(mdp, args.alpha, args.tol, args.max_iter)
    except RobustMdpError as exc:
        _fail(exc, EXIT_RUNTIME)
    payload = dict(table.to_dict(), alpha=args.alpha, tol=args.tol)
    _emit(payload)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "value_table.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def _training_panel(args, cfg):
    returns = data.compute_returns(data.load_prices(args.data))
    if returns.D != cfg.D:
        raise DimensionMismatch(f"config has D = {cfg.D}, data has {returns.D} assets")
    if args.period:
        first = min(_parse_period(p)[0] for p in args.period)
        train_panel, _ = data.train_test_split(returns, [first])
    else:
        train_panel = returns
    return train_panel


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        validate_config(cfg, myopic_ok=True)
        panel = _training_panel(args, cfg)
        pairs = data.build_windows(panel, cfg.m)
        windows, _ = data.windows_array(pairs)
        sigma_r = data.estimate_sigma_r(panel)
        spec = RewardSpec(cfg.lambda_risk, sigma_r)
        mode = make_mode(cfg, panel.returns)
    except RobustMdpError as exc:
        _fail(exc, EXIT_INPUT)
    except TypeError as exc:
        _fail(InvalidConfig(str(exc)), EXIT_INPUT)
    try:
        value, action, report = train(cfg, mode, windows, spec)
    except RobustMdpError as exc:
        _fail(exc, EXIT_RUNTIME)

    model = Path(args.model)
    model.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, value, action, cfg, spec)
    out = Path(args.out) if args.out else model.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    data.write_split_metadata(out / "split.json", panel, [], sigma_r)
    _emit({"model": str(model), "epochs": cfg.epochs,
           "final_critic_loss": report.critic_loss[-1] if report.critic_loss else None})
    return EXIT_OK


def cmd_backtest(args) -> int:
    try:
        _, action, cfg, spec = load_checkpoint(args.model)
        returns = data.compute_returns(data.load_prices(args.data))
        if returns.D != cfg.D:
            raise DimensionMismatch(f"model trades D = {cfg.D} assets, data has {returns.D}")
        if args.period:
            periods = [_parse_period(p) for p in args.period]
            panels = [data.select_period(returns, s, e, warmup=cfg.m) for s, e in periods]
        else:
            panels = [returns]
        jobs = []
        for panel in panels:
            pairs = data.build_windows(panel, cfg.m)
            windows, nxt = data.windows_array(pairs)
            jobs.append((panel, windows, nxt))
    except RobustMdpError as exc:
        _fail(exc, EXIT_INPUT)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy = policy_function(action)
    summary = []
    for i, (panel, windows, nxt) in enumerate(jobs, start=1):
        try:
            result = bt.run_backtest(policy, windows, nxt, spec)
        except RobustMdpError as exc:
            _fail(exc, EXIT_RUNTIME)
        trade_dates = panel.dates[cfg.m:]
        bt.write_report(out / f"period_{i}.json", result, start=str(trade_dates[0]), end=str(trade_dates[-1]))
        bt.write_curve(out / f"period_{i}_curve.csv", result, trade_dates)
        summary.append(dict(result.metrics(), period=i))
    _emit({"periods": summary})
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .checks import run_selftest

    ok = True
    for name, passed, detail in run_selftest():
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= bool(passed)
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a configuration against the discount condition")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-tabular", help="exact robust value iteration on a finite MDP")
    p.add_argument("--data", "--mdp", dest="data", required=True, help="finite MDP JSON")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10**6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_tabular)

    p = sub.add_parser("train", help="neural value iteration on a price CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="checkpoint path to write")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--period", action="append", default=[],
                   help="START:END test period; training uses rows before the earliest START")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="evaluate a checkpoint on test periods")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--period", action="append", default=[])
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("selftest", help="run the oracle and contraction suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as exc:
        sys.stderr.write(json.dumps({"code": exc.code, "message": exc.message}, sort_keys=True) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
