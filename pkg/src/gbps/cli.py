"""Command-line entry point.

Subcommands::

    gbps backtest    --prices prices.csv --out report/
    gbps posterior   --ensemble experts.csv --out post/
    gbps synth       --regimes regimes.csv --months 120 --out market/
    gbps demo-policy [--spec demo.cfg] --out demo/

Configuration files use one ``key = value`` per line with ``#`` comments.
Explicit flags override file values. Every run writes ``run_manifest.txt``,
itself a valid config file, so ``--config <manifest>`` repeats the run.

Exit status is 0 on success, 1 on invalid input, 2 on runtime failure. Errors
go to standard error as a single ``ERROR[<code>]: message`` line.
"""

import argparse
import csv
import hashlib
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .backtest import BacktestConfig, emit_report, run_backtest
from .dynamic import EvolutionConfig
from .errors import ConfigError, DataFormatError, GBPSError, ValidationError
from .experts import DEFAULT_EXPERTS, ExpertConfig, ExpertSpec, GaussianPredictive
from .market_data import Regime, generate_synthetic, load_prices_csv, returns_to_prices, to_returns, write_table_csv
from .policy_learning import EffectSpec, policy_learning_demo
from .static import PredictiveEnsemble, posterior_summary, sample_posterior

log = logging.getLogger("gbps")

DEFAULT_SEED = 42
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class InputFileError(ValidationError):
    code = "io"


class UsageError(ValidationError):
    code = "usage"


def _fmt(x):
    return format(float(x), ".12g")


# -- config file ---------------------------------------------------------------------------


def _positive(x):
    return x > 0


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_month(s):
    p = pd.Period(s.strip(), freq="M")
    if str(p) != s.strip():
        raise ValueError(f"want YYYY-MM, got {s!r}")
    return str(p)


def _parse_floats(s):
    return tuple(float(x) for x in s.split(","))


def _parse_matrix(s):
    return tuple(_parse_floats(row) for row in s.split(";"))


def _parse_experts(s):
    return tuple(ExpertSpec.parse(tok) for tok in s.split(","))


def _fmt_floats(v):
    return ",".join(_fmt(x) for x in v)


# key -> (parser, validity check, human-readable range, serializer)
CONFIG_KEYS = {
    "seed": (int, lambda v: v >= 0, "integer >= 0", str),
    "lambda": (float, _positive, "> 0", _fmt),
    "discount": (float, lambda v: 0 < v <= 1, "in (0, 1]", _fmt),
    "jitter": (float, lambda v: v >= 0, ">= 0", _fmt),
    "resample_threshold": (float, lambda v: 0 < v <= 1, "in (0, 1]", _fmt),
    "particles": (int, lambda v: v >= 2, "integer >= 2", str),
    "temperature": (float, _positive, "> 0", _fmt),
    "samples": (int, lambda v: v >= 1, "integer >= 1", str),
    "burn_in": (int, lambda v: v >= 0, "integer >= 0", str),
    "kappa": (float, _positive, "> 0", _fmt),
    "mc_draws": (int, lambda v: v >= 100, "integer >= 100", str),
    "prior_alpha": (_parse_floats, lambda v: all(a > 0 for a in v), "positive numbers", _fmt_floats),
    "train_start": (_parse_month, None, "YYYY-MM", str),
    "train_end": (_parse_month, None, "YYYY-MM", str),
    "test_end": (_parse_month, None, "YYYY-MM", str),
    "experts": (_parse_experts, None, "mean:<w> / ar:<p>:<w> list", lambda v: ",".join(e.token() for e in v)),
    "ar_fallback": (_parse_bool, None, "boolean", lambda v: str(v).lower()),
    "months": (int, lambda v: v >= 1, "integer >= 1", str),
    "start": (_parse_month, None, "YYYY-MM", str),
    "treatments": (int, lambda v: v >= 2, "integer >= 2", str),
    "n": (int, lambda v: v >= 100, "integer >= 100", str),
    "bootstrap": (int, lambda v: v >= 2, "integer >= 2", str),
    "loss_bias": (_parse_floats, lambda v: len(v) == 2, "two numbers", _fmt_floats),
    "oracle_experts": (_parse_bool, None, "boolean", lambda v: str(v).lower()),
    "noise_sd": (float, lambda v: v >= 0, ">= 0", _fmt),
    "intercepts": (_parse_floats, None, "numbers", _fmt_floats),
    "slopes": (_parse_matrix, None, "rows separated by ';'", lambda m: ";".join(_fmt_floats(r) for r in m)),
    "propensity_coef": (_parse_matrix, None, "rows separated by ';'", lambda m: ";".join(_fmt_floats(r) for r in m)),
}


def load_config(path):
    """Parse a ``key = value`` file into a dict of typed values.

    Unknown keys, malformed lines and out-of-range values raise
    :class:`ConfigError` naming the line.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, str(path))


def parse_config(text, source="<config>"):
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}; valid keys: {', '.join(sorted(CONFIG_KEYS))}")
        parse, check, expect, _ = CONFIG_KEYS[key]
        try:
            parsed = parse(value)
        except (ValueError, ValidationError) as exc:
            raise ConfigError(f"{source}:{line_no}: {key}: expected {expect}, got {value!r} ({exc})") from None
        if check is not None and not check(parsed):
            raise ConfigError(f"{source}:{line_no}: {key} = {value} out of range ({expect})")
        out[key] = parsed
    return out


def dump_config(values):
    return "".join(f"{k} = {CONFIG_KEYS[k][3](v)}\n" for k, v in values.items())


# -- argument parsing ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed",
    "lam": "lambda",
    "discount": "discount",
    "particles": "particles",
    "temperature": "temperature",
    "samples": "samples",
    "burn_in": "burn_in",
    "months": "months",
}


def build_parser():
    p = _Parser(prog="gbps", description="Ensemble expert policies with a general-Bayes posterior.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def common(sp):
        sp.add_argument("--out", help="output directory (required; checked after inputs are read)")
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--lambda", dest="lam", type=float, help="loss temperature")

    bt = sub.add_parser("backtest", help="monthly rebalancing backtest from a price CSV")
    bt.add_argument("--prices", required=True)
    common(bt)
    bt.add_argument("--discount", type=float)
    bt.add_argument("--particles", type=int)
    bt.add_argument("--temperature", type=float, help="softmax temperature of expert allocations")

    po = sub.add_parser("posterior", help="static posterior from an ensemble spec CSV")
    po.add_argument("--ensemble", required=True)
    common(po)
    po.add_argument("--samples", type=int)
    po.add_argument("--burn-in", dest="burn_in", type=int)

    sy = sub.add_parser("synth", help="synthetic regime-switching return table")
    sy.add_argument("--regimes", required=True)
    sy.add_argument("--months", type=int)
    common(sy)

    de = sub.add_parser("demo-policy", help="static ensemble of DM and IPW policy experts")
    de.add_argument("--spec", help="key = value demo specification")
    common(de)
    de.add_argument("--samples", type=int)
    de.add_argument("--burn-in", dest="burn_in", type=int)
    de.add_argument("--temperature", type=float, help="softmax temperature of expert policies")
    return p


@dataclass
class CliConfig:
    command: str
    out: Path
    values: dict
    inputs: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.values["seed"]

    def get(self, key, default=None):
        return self.values.get(key, default)


def resolve(args):
    """Merge config-file values under explicit flags; the seed always resolves."""
    values = {}
    for attr in ("config", "spec"):
        path = getattr(args, attr, None)
        if path:
            values.update(load_config(path))
    for dest, key in FLAG_KEYS.items():
        flag = getattr(args, dest, None)
        if flag is None:
            continue
        parse, check, expect, _ = CONFIG_KEYS[key]
        if check is not None and not check(flag):
            raise ConfigError(f"--{key.replace('_', '-')} = {flag} out of range ({expect})")
        if key in values and values[key] != flag:
            log.warning("flag --%s=%s overrides config value %s", key.replace("_", "-"), flag, values[key])
        values[key] = flag
    values.setdefault("seed", DEFAULT_SEED)
    return CliConfig(args.command, Path(args.out) if args.out else None, values)


# -- input files ---------------------------------------------------------------------------


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc.strerror or exc}") from None


def _register_input(cfg, name, path):
    data = _read_bytes(path)
    cfg.inputs[name] = (str(path), hashlib.sha256(data).hexdigest())
    return data


def _csv_records(text, required, path):
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise DataFormatError(f"{path}: empty file", line=1)
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataFormatError(f"{path}: header lacks {missing}", line=1)
    for line_no, rec in enumerate(rows[1:], start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise DataFormatError(f"{path}: expected {len(header)} fields", line=line_no)
        yield line_no, dict(zip(header, (c.strip() for c in rec)))


def _float(value, line, column):
    try:
        x = float(value)
    except ValueError:
        raise DataFormatError(f"not a number: {value!r}", line=line, column=column) from None
    if not np.isfinite(x):
        raise DataFormatError(f"non-finite value {value!r}", line=line, column=column)
    return x


def read_ensemble_csv(text, path="<ensemble>"):
    """Gaussian ``expert,mean,variance`` or empirical long-form ``expert,sample``."""
    header = [h.strip() for h in (text.splitlines() or [""])[0].split(",")]
    order, members = [], {}
    if "mean" in header and "variance" in header:
        for line, rec in _csv_records(text, ("expert", "mean", "variance"), path):
            name = rec["expert"]
            if name in members:
                raise DataFormatError(f"duplicate expert {name!r}", line=line)
            var = _float(rec["variance"], line, "variance")
            if var < 0:
                raise DataFormatError("negative variance", line=line, column="variance")
            order.append(name)
            members[name] = GaussianPredictive(_float(rec["mean"], line, "mean"), var)
    elif "sample" in header:
        for line, rec in _csv_records(text, ("expert", "sample"), path):
            name = rec["expert"]
            if name not in members:
                order.append(name)
                members[name] = []
            members[name].append(_float(rec["sample"], line, "sample"))
    else:
        raise DataFormatError(f"{path}: header must be expert,mean,variance or expert,sample", line=1)
    if not order:
        raise DataFormatError(f"{path}: no experts", line=2)
    return order, PredictiveEnsemble([members[k] for k in order])


def read_regimes_csv(text, path="<regimes>"):
    """Long-form ``start,asset,mean,vol`` (optional ``end``) regime table."""
    segments, assets = {}, []
    for line, rec in _csv_records(text, ("start", "asset", "mean", "vol"), path):
        try:
            start = int(rec["start"])
            end = int(rec["end"]) if rec.get("end") else None
        except ValueError:
            raise DataFormatError("start/end must be integers", line=line) from None
        asset = rec["asset"]
        if asset not in assets:
            assets.append(asset)
        seg = segments.setdefault(start, {"end": end, "values": {}})
        if seg["end"] != end:
            raise DataFormatError(f"inconsistent end for regime {start}", line=line, column="end")
        seg["values"][asset] = (_float(rec["mean"], line, "mean"), _float(rec["vol"], line, "vol"))
    regimes = []
    for start in sorted(segments):
        vals = segments[start]["values"]
        if set(vals) != set(assets):
            raise ValidationError(f"{path}: regime starting at {start} does not list every asset")
        regimes.append(
            Regime(start, tuple(vals[a][0] for a in assets), tuple(vals[a][1] for a in assets), segments[start]["end"])
        )
    return assets, regimes


# -- outputs -------------------------------------------------------------------------------


def _write_csv(path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _output_dir(cfg):
    if cfg.out is None:
        raise UsageError(f"{cfg.command}: --out is required")
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def write_manifest(cfg, used_keys):
    lines = ["# gbps run manifest", f"# command: {cfg.command}"]
    for name, (path, digest) in sorted(cfg.inputs.items()):
        lines.append(f"# input {name}: {path} sha256={digest}")
    resolved = {k: cfg.values[k] for k in used_keys if k in cfg.values}
    text = "\n".join(lines) + "\n" + dump_config(resolved)
    (cfg.out / "run_manifest.txt").write_text(text, encoding="utf-8")


# -- subcommands ---------------------------------------------------------------------------


BACKTEST_DEFAULTS = {
    "lambda": 1.0,
    "discount": 0.95,
    "jitter": 1e-6,
    "resample_threshold": 0.5,
    "particles": 5000,
    "temperature": 0.02,
    "experts": DEFAULT_EXPERTS,
    # backtests resolve singular AR designs to the sample-mean fallback
    "ar_fallback": True,
}


def cmd_backtest(args, cfg):
    _register_input(cfg, "prices", args.prices)
    returns = to_returns(load_prices_csv(args.prices))
    v = cfg.values
    for key, default in BACKTEST_DEFAULTS.items():
        v.setdefault(key, default)
    experts = ExpertConfig(v["experts"], v["temperature"], v["ar_fallback"])
    v.setdefault("train_start", str(returns.dates[0]))
    v.setdefault("train_end", str(pd.Period(v["train_start"], freq="M") + experts.longest_window - 1))
    v.setdefault("test_end", str(returns.dates[-1]))
    config = BacktestConfig(
        train_start=v["train_start"],
        train_end=v["train_end"],
        test_end=v["test_end"],
        experts=experts,
        evolution=EvolutionConfig(v["discount"], v["jitter"], v["resample_threshold"]),
        n_particles=v["particles"],
        lam=v["lambda"],
        seed=cfg.seed,
        prior_alpha=v.get("prior_alpha"),
    )
    log.info("backtest %s..%s, %d experts, seed %d", config.train_end, config.test_end, len(experts.experts), cfg.seed)
    _output_dir(cfg)
    report = run_backtest(returns, config)
    emit_report(report, cfg.out)
    log.info("best expert in hindsight: %s", report.best_expert())
    write_manifest(cfg, [*BACKTEST_DEFAULTS, "seed", "prior_alpha", "train_start", "train_end", "test_end"])


def cmd_posterior(args, cfg):
    text = _register_input(cfg, "ensemble", args.ensemble).decode("utf-8")
    names, ensemble = read_ensemble_csv(text, args.ensemble)
    v = cfg.values
    for key, default in {"samples": 5000, "burn_in": 2000, "lambda": 1.0, "kappa": 50.0, "mc_draws": 2000}.items():
        v.setdefault(key, default)
    sample = sample_posterior(
        ensemble,
        prior_alpha=v.get("prior_alpha"),
        n_samples=v["samples"],
        burn_in=v["burn_in"],
        seed=cfg.seed,
        lam=v["lambda"],
        kappa=v["kappa"],
        mc_draws=v["mc_draws"],
    )
    for msg in sample.warnings:
        log.warning(msg)
    summary = posterior_summary(sample)
    q = summary["quantiles"]
    _output_dir(cfg)
    _write_csv(
        cfg.out / "posterior.csv",
        ["expert", "mean", "sd", "q05", "q50", "q95"],
        (
            [name, _fmt(summary["mean"][j]), _fmt(summary["sd"][j]), _fmt(q[0.05][j]), _fmt(q[0.5][j]), _fmt(q[0.95][j])]
            for j, name in enumerate(names)
        ),
    )
    _write_csv(
        cfg.out / "diagnostics.csv",
        ["n_samples", "acceptance_rate", "kappa", "seed"],
        [[len(sample), _fmt(sample.acceptance_rate), _fmt(sample.kappa), str(sample.seed)]],
    )
    write_manifest(cfg, ["seed", "lambda", "samples", "burn_in", "prior_alpha", "kappa", "mc_draws"])


def cmd_synth(args, cfg):
    text = _register_input(cfg, "regimes", args.regimes).decode("utf-8")
    assets, regimes = read_regimes_csv(text, args.regimes)
    v = cfg.values
    if "months" not in v:
        raise ConfigError("synth needs --months or 'months' in the config")
    table = generate_synthetic(len(assets), v["months"], regimes, cfg.seed, v.get("start", "2000-01"), assets)
    _output_dir(cfg)
    write_table_csv(cfg.out / "returns.csv", table.dates, table.assets, table.returns)
    prices = returns_to_prices(table)
    write_table_csv(cfg.out / "prices.csv", prices.dates, prices.assets, prices.prices)
    write_manifest(cfg, ["seed", "months", "start"])


DEMO_DEFAULTS = {
    "n": 2000,
    "lambda": 10.0,
    "temperature": 0.25,
    "bootstrap": 200,
    "loss_bias": (0.0, 0.0),
    "oracle_experts": False,
    "samples": 5000,
    "burn_in": 2000,
}


def cmd_demo(args, cfg):
    if args.spec:
        _register_input(cfg, "spec", args.spec)
    v = cfg.values
    for key, default in DEMO_DEFAULTS.items():
        v.setdefault(key, default)
    K = v.get("treatments", len(v["intercepts"]) if "intercepts" in v else 3)
    spec = None
    if "intercepts" in v or "slopes" in v:
        if "intercepts" not in v or "slopes" not in v:
            raise ConfigError("demo spec needs both 'intercepts' and 'slopes'")
        spec = EffectSpec(v["intercepts"], v["slopes"], v.get("noise_sd", 1.0), v.get("propensity_coef"))
        v.setdefault("treatments", spec.n_treatments)
    report = policy_learning_demo(
        K=K,
        n=v["n"],
        effect_spec=spec,
        seed=cfg.seed,
        lam=v["lambda"],
        temperature=v["temperature"],
        n_bootstrap=v["bootstrap"],
        loss_bias=v["loss_bias"],
        oracle_experts=v["oracle_experts"],
        n_samples=v["samples"],
        burn_in=v["burn_in"],
    )
    _output_dir(cfg)
    theta = dict(zip(report.expert_ids, report.theta))
    _write_csv(
        cfg.out / "demo.csv",
        ["policy", "theta", "true_value", "std_error"],
        (
            [name, _fmt(theta[name]) if name in theta else "", _fmt(val), _fmt(se)]
            for name, (val, se) in report.values.items()
        ),
    )
    _write_csv(
        cfg.out / "ensemble.csv",
        ["expert", "mean", "variance"],
        ([name, _fmt(h.mean), _fmt(h.variance)] for name, h in zip(report.expert_ids, report.ensemble.members)),
    )
    write_manifest(
        cfg,
        ["seed", "lambda", "temperature", "samples", "burn_in", "treatments", "n", "bootstrap", "loss_bias",
         "oracle_experts", "noise_sd", "intercepts", "slopes", "propensity_coef"],
    )


COMMANDS = {"backtest": cmd_backtest, "posterior": cmd_posterior, "synth": cmd_synth, "demo-policy": cmd_demo}


def _setup_logging():
    level = os.environ.get("GBPS_LOG", "info").strip().lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"GBPS_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(LOG_LEVELS[level])
    logging.captureWarnings(True)


def _fail(code, message, status):
    print(f"ERROR[{code}]: {' '.join(str(message).split())}", file=sys.stderr)
    return status


def run_cli(argv=None):
    """Run one subcommand and return the process exit status."""
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args, cfg)
    except SystemExit as exc:
        return exc.code or 0
    except ValidationError as exc:
        return _fail(exc.code, exc, 1)
    except GBPSError as exc:
        return _fail(exc.code, exc, 2)
    except OSError as exc:
        return _fail("io", exc, 2)
    except Exception as exc:  # noqa: BLE001 - last-resort reporting for the CLI
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 2)
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
