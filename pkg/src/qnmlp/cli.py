"""Command-line front end.

Subcommands: ``train`` (one function, one optimizer), ``bench`` (train
over both functions), ``compare`` (GD vs BFGS from shared initial
state), ``gradcheck`` (analytic-vs-finite-difference gradient suite).

Every computing run writes a ``manifest.txt`` whose plain ``key =
value`` lines are themselves a valid ``--config`` file, so re-running
from a manifest reproduces the numbers exactly. ``history.csv`` holds no
wall-clock fields and is byte-reproducible.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, TrainReport, get_function, run_benchmark, run_comparison
from .mlp import Dataset, Network, Topology, finite_diff_grad, grad_backprop, init_params, relative_error
from .optim import (
    GdConfig,
    StopCriteria,
    WolfeConfig,
    STATUS_LINE_SEARCH_FAILED,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

HISTORY_HEADER = "iter,train_error_pct,test_error_pct,grad_norm"
COMPARISON_HEADER = "optimizer,train_error_pct,test_error_pct,iterations,wall_clock_s"

GRADCHECK_TOL = 1e-6

_INT_KEYS = {"hidden", "samples", "seed", "epochs", "max_iters"}
_FLOAT_KEYS = {"train_fraction", "eta", "grad_tol", "c1", "c2"}
_STR_KEYS = {"function", "optimizer", "out"}
CONFIG_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS

DEFAULTS = {
    "function": None,  # required where it applies
    "optimizer": None,  # required where it applies
    "hidden": 10,
    "samples": 500,
    "train_fraction": 0.8,
    "seed": 42,
    "eta": 0.1,
    "epochs": 500,
    "max_iters": 500,
    "grad_tol": 1e-5,
    "c1": 1e-4,
    "c2": 0.9,
    "out": "./out",
}


class UsageError(Exception):
    """Bad flags or bad configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _convert(key: str, value: str, where: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        return value
    except ValueError:
        raise UsageError(f"{where}: value {value!r} for {key!r} is not a number") from None


def parse_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment; unknown keys fail."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise UsageError(f"cannot read config file {path}: {err}") from None
    options = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise UsageError(f"{path}, line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}, line {lineno}: unknown key {key!r}")
        options[key] = _convert(key, value, f"{path}, line {lineno}")
    return options


def _resolve_options(args, required: tuple = ()) -> dict:
    """Defaults, overridden by --config file entries, overridden by flags."""
    options = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        options.update(parse_config(config_path))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    for key in required:
        if options.get(key) is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
    _validate_options(options)
    return options


def _validate_options(o: dict) -> None:
    if o["function"] is not None and o["function"] not in ("beale", "booth"):
        raise UsageError(f"unknown function {o['function']!r}; choose 'beale' or 'booth'")
    if o["optimizer"] is not None and o["optimizer"] not in ("gd", "bfgs"):
        raise UsageError(f"unknown optimizer {o['optimizer']!r}; choose 'gd' or 'bfgs'")
    if o["hidden"] < 1:
        raise UsageError(f"--hidden must be >= 1, got {o['hidden']}")
    if o["samples"] < 10:
        raise UsageError(f"--samples must be >= 10, got {o['samples']}")
    if not 0.0 < o["train_fraction"] < 1.0:
        raise UsageError(f"--train-fraction must be in (0, 1), got {o['train_fraction']}")
    if o["seed"] < 0:
        raise UsageError(f"--seed must be >= 0, got {o['seed']}")
    if not o["eta"] > 0:
        raise UsageError(f"--eta must be positive, got {o['eta']}")
    if o["epochs"] < 1:
        raise UsageError(f"--epochs must be >= 1, got {o['epochs']}")
    if o["max_iters"] < 1:
        raise UsageError(f"--max-iters must be >= 1, got {o['max_iters']}")
    if not o["grad_tol"] >= 0:
        raise UsageError(f"--grad-tol must be >= 0, got {o['grad_tol']}")
    if not 0.0 < o["c1"] < o["c2"] < 1.0:
        raise UsageError(f"need 0 < c1 < c2 < 1, got c1={o['c1']}, c2={o['c2']}")


def _bench_config(options: dict, optimizer: str, function: str) -> BenchConfig:
    return BenchConfig(
        function=get_function(function),
        n_samples=options["samples"],
        train_fraction=options["train_fraction"],
        seed=options["seed"],
        hidden=options["hidden"],
        optimizer=optimizer,
        gd=GdConfig(eta=options["eta"], epochs=options["epochs"], mode="online"),
        stop=StopCriteria(grad_tol=options["grad_tol"], max_iters=options["max_iters"]),
        wolfe=WolfeConfig(c1=options["c1"], c2=options["c2"]),
    )


def _fmt(value) -> str:
    """Locale-free shortest round-trip decimal for a float."""
    return repr(float(value))


def _out_dir(options: dict) -> Path:
    out = Path(options["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise UsageError(f"output directory {out} is not writable: {err}") from None
    return out


def _write_history(path: Path, history) -> None:
    lines = [HISTORY_HEADER]
    for iteration, train_pct, test_pct, grad_norm in history:
        lines.append(f"{iteration},{_fmt(train_pct)},{_fmt(test_pct)},{_fmt(grad_norm)}")
    path.write_text("\n".join(lines) + "\n")


def _write_keyvalues(path: Path, pairs) -> None:
    path.write_text("".join(f"{key} = {value}\n" for key, value in pairs))


@dataclass(frozen=True)
class RunManifest:
    """Fully resolved configuration of one run, plus artifact metadata.

    Rendered as ``key = value`` lines with the metadata in ``#`` comments,
    so the file doubles as a ``--config`` input: re-running from it
    reproduces the numerical outputs exactly.
    """

    subcommand: str
    options: dict
    artifacts: tuple
    version: str = __version__

    def render(self) -> str:
        lines = [
            f"# qnmlp {self.version}",
            f"# subcommand = {self.subcommand}",
            f"# artifacts = {', '.join(self.artifacts)}",
        ]
        for key in sorted(CONFIG_KEYS):
            value = self.options.get(key)
            if value is None:
                continue
            lines.append(f"{key} = {_fmt(value) if isinstance(value, float) else value}")
        return "\n".join(lines) + "\n"


def _write_manifest(path: Path, subcommand: str, options: dict, artifacts) -> None:
    path.write_text(RunManifest(subcommand, options, tuple(artifacts)).render())


def _report_pairs(report: TrainReport, options: dict, function: str, optimizer: str):
    return [
        ("function", function),
        ("optimizer", optimizer),
        ("seed", options["seed"]),
        ("status", report.status),
        ("iterations", report.iterations),
        ("train_error_pct", _fmt(report.train_error_pct)),
        ("test_error_pct", _fmt(report.test_error_pct)),
        ("wall_clock_s", _fmt(report.wall_clock_s)),
        ("init_params_hash", report.init_params_hash),
    ]


def _exit_for(report: TrainReport) -> int:
    return EXIT_NUMERICAL if report.status == STATUS_LINE_SEARCH_FAILED else EXIT_OK


def _run_train_into(out: Path, options: dict, function: str, optimizer: str, subcommand: str) -> int:
    report = run_benchmark(_bench_config(options, optimizer, function))
    _write_history(out / "history.csv", report.history)
    _write_keyvalues(out / "report.txt", _report_pairs(report, options, function, optimizer))
    manifest_options = dict(options, function=function, optimizer=optimizer)
    _write_manifest(out / "manifest.txt", subcommand, manifest_options,
                    ["history.csv", "report.txt", "manifest.txt"])
    print(f"{function} [{optimizer}] status={report.status} iterations={report.iterations} "
          f"train_error_pct={report.train_error_pct:.6g} test_error_pct={report.test_error_pct:.6g}")
    return _exit_for(report)


def cmd_train(args) -> int:
    options = _resolve_options(args, required=("function", "optimizer"))
    out = _out_dir(options)
    return _run_train_into(out, options, options["function"], options["optimizer"], "train")


def cmd_bench(args) -> int:
    options = _resolve_options(args, required=("optimizer",))
    base = _out_dir(options)
    worst = EXIT_OK
    for function in ("beale", "booth"):
        sub = dict(options, out=str(base / function))
        out = _out_dir(sub)
        worst = max(worst, _run_train_into(out, sub, function, options["optimizer"], "bench"))
    return worst


def cmd_compare(args) -> int:
    options = _resolve_options(args, required=("function",))
    out = _out_dir(options)
    function = get_function(options["function"])
    gd_report, bfgs_report = run_comparison(
        function,
        options["seed"],
        gd_cfg=GdConfig(eta=options["eta"], epochs=options["epochs"], mode="online"),
        bfgs_stop=StopCriteria(grad_tol=options["grad_tol"], max_iters=options["max_iters"]),
        wolfe=WolfeConfig(c1=options["c1"], c2=options["c2"]),
        n_samples=options["samples"],
        train_fraction=options["train_fraction"],
        hidden=options["hidden"],
    )
    rows = [("gd", gd_report), ("bfgs", bfgs_report)]
    lines = [COMPARISON_HEADER]
    for name, report in rows:
        lines.append(f"{name},{_fmt(report.train_error_pct)},{_fmt(report.test_error_pct)},"
                     f"{report.iterations},{_fmt(report.wall_clock_s)}")
    (out / "comparison.csv").write_text("\n".join(lines) + "\n")
    _write_history(out / "history_gd.csv", gd_report.history)
    _write_history(out / "history_bfgs.csv", bfgs_report.history)
    pairs = [("function", options["function"]), ("seed", options["seed"])]
    for name, report in rows:
        pairs += [
            (f"{name}_status", report.status),
            (f"{name}_iterations", report.iterations),
            (f"{name}_train_error_pct", _fmt(report.train_error_pct)),
            (f"{name}_test_error_pct", _fmt(report.test_error_pct)),
            (f"{name}_wall_clock_s", _fmt(report.wall_clock_s)),
            (f"{name}_init_params_hash", report.init_params_hash),
        ]
    _write_keyvalues(out / "report.txt", pairs)
    _write_manifest(out / "manifest.txt", "compare", options,
                    ["comparison.csv", "history_gd.csv", "history_bfgs.csv", "report.txt", "manifest.txt"])

    print(f"{'optimizer':<10} {'train_error_pct':>16} {'test_error_pct':>15} {'iterations':>11} {'wall_clock_s':>13}")
    for name, report in rows:
        print(f"{name:<10} {report.train_error_pct:>16.6g} {report.test_error_pct:>15.6g} "
              f"{report.iterations:>11d} {report.wall_clock_s:>13.3f}")
    return max(_exit_for(gd_report), _exit_for(bfgs_report))


def _gradcheck_max_error(trials: int, seed: int, hidden, step: float = 1e-5,
                         sabotage: bool = False) -> float:
    """Worst relative error between backprop and finite differences.

    Each trial draws a fresh 2-h-1 network (h cycling 1..5 unless pinned)
    and a fresh 6-row dataset whose first 5 rows are the training
    selection. The sabotage hook flips the sign of the largest gradient
    coordinate so a broken comparison path is detectable; it is inert
    unless explicitly requested.
    """
    master = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        h = hidden if hidden is not None else (trial % 5) + 1
        topology = Topology(2, h, 1)
        net = Network(topology, init_params(topology, int(master.integers(2**31))))
        inputs = master.uniform(-1.0, 1.0, size=(6, 2))
        raw = master.uniform(0.0, 1.0, size=6)
        data = Dataset.from_samples(inputs, raw, split_index=5)
        grad = grad_backprop(net, data, "train")
        if sabotage:
            grad = grad.copy()
            flip = int(np.argmax(np.abs(grad)))
            grad[flip] = -grad[flip]
        oracle = finite_diff_grad(net, data, "train", step)
        worst = max(worst, relative_error(grad, oracle))
    return worst


def cmd_gradcheck(args) -> int:
    if args.trials is None or args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")
    if args.hidden is not None and args.hidden < 1:
        raise UsageError(f"--hidden must be >= 1, got {args.hidden}")
    seed = args.seed if args.seed is not None else DEFAULTS["seed"]
    worst = _gradcheck_max_error(args.trials, seed, args.hidden, sabotage=args.sabotage)
    print(f"gradcheck: {args.trials} trials, max relative error {worst:.3e} (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if worst <= GRADCHECK_TOL else EXIT_NUMERICAL


def _add_common_train_flags(p, with_function=True, with_optimizer=True) -> None:
    if with_function:
        p.add_argument("--function", choices=("beale", "booth"))
    if with_optimizer:
        p.add_argument("--optimizer", choices=("gd", "bfgs"))
    p.add_argument("--hidden", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--seed", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--grad-tol", type=float, dest="grad_tol")
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--config", type=str)
    p.add_argument("--out", type=str)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qnmlp",
                     description="Train a one-hidden-layer perceptron on the Beale/Booth "
                                 "surfaces with gradient descent or BFGS and export the runs.")
    parser.add_argument("--version", action="version", version=f"qnmlp {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_train = sub.add_parser("train", help="train one optimizer on one function")
    _add_common_train_flags(p_train)
    p_train.set_defaults(handler=cmd_train)

    p_bench = sub.add_parser("bench", help="train on both functions")
    _add_common_train_flags(p_bench, with_function=False)
    p_bench.set_defaults(handler=cmd_bench)

    p_compare = sub.add_parser("compare", help="train GD and BFGS from shared initial state")
    _add_common_train_flags(p_compare, with_optimizer=False)
    p_compare.set_defaults(handler=cmd_compare)

    p_grad = sub.add_parser("gradcheck", help="check backprop against finite differences")
    p_grad.add_argument("--trials", type=int, default=20)
    p_grad.add_argument("--seed", type=int)
    p_grad.add_argument("--hidden", type=int)
    p_grad.add_argument("--sabotage", action="store_true", help=argparse.SUPPRESS)
    p_grad.set_defaults(handler=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
