"""Command-line front end.

``gefzeros <command> [--config FILE] [--seed N] [--threads N] [--out DIR]``

Every command reads an optional JSON config whose keys are validated against
the command's schema (unknown keys are a config error), merges the command
line overrides, and writes CSV/JSON/SVG artifacts into ``--out``.  Each file
starts with a provenance block (package version, master seed, config hash)
and carries no timestamps, so identical configs give identical bytes.

Exit codes: 0 success, 2 config error, 3 numerical-tolerance failure,
4 statistical-acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from importlib import resources

import numpy as np

from . import __version__
from . import acceptance as acc
from . import correlation as corr
from . import independence as ind
from . import montecarlo as mc
from . import spectral as sp
from .gef import GefError, sample_gef, sample_seed
from .plots import histogram_vs_normal, line_plot
from .test_functions import FourierToleranceError, UnknownTestFunction, builtin, load_grid
from .zeros import ZeroFinderError, find_zeros_disk, required_valid_radius, zeroset_to_csv

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_STATISTICAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------------------

_num = (int, float)
_list = (list,)

SCHEMAS: dict[str, dict[str, tuple]] = {
    "sample": {"n_samples": (int,), "R_v": _num, "tail_tol": _num, "zeros_radius": _num},
    "zeros": {"n_samples": (int,), "radius": _num, "center": _list, "tail_tol": _num},
    "variance": {
        "test_function": (str,),
        "params": (dict,),
        "grid_file": (str,),
        "R_values": _list,
        "perimeter": _num,
        "mc_samples": (int,),
    },
    "pair-correlation": {"r_min": _num, "r_max": _num, "n_points": (int,)},
    "normality": {
        "probe": (str,),
        "test_function": (str,),
        "params": (dict,),
        "R_values": _list,
        "n_samples": (int,),
    },
    "abnormal": {"alpha": _num, "R_values": _list, "n_samples": (int,)},
    "almost-indep": {
        "A": _num,
        "configurations": (int,),
        "configuration": (dict,),
        "separation": _num,
        "side": _num,
        "decorrelation_samples": (int,),
    },
    "verify": {
        k: ((tuple, list) if k == "criteria" else ((int,) if isinstance(v, int) else _num))
        for k, v in acc.AcceptanceConfig().to_dict().items()
        if k not in ("seed", "threads")
    },
    "report": {"R_values": _list, "lambda_max": _num},
}

DEFAULTS: dict[str, dict] = {
    "sample": {"n_samples": 4, "R_v": 10.0, "tail_tol": 1e-12, "zeros_radius": None},
    "zeros": {"n_samples": 4, "radius": 6.0, "center": [0.0, 0.0], "tail_tol": 1e-12},
    "variance": {
        "test_function": "gaussian",
        "params": {},
        "grid_file": None,
        "R_values": [2.0, 4.0, 8.0, 16.0, 32.0],
        "perimeter": None,
        "mc_samples": 0,
    },
    "pair-correlation": {"r_min": 0.01, "r_max": 4.0, "n_points": 400},
    "normality": {
        "probe": "clt",
        "test_function": "smooth_bump",
        "params": {},
        "R_values": [4.0, 8.0],
        "n_samples": 400,
    },
    "abnormal": {"alpha": 0.5, "R_values": [4.0, 8.0], "n_samples": 400},
    "almost-indep": {
        "A": ind.DEFAULT_A,
        "configurations": 10,
        "configuration": None,
        "separation": 8.0,
        "side": 2.0,
        "decorrelation_samples": 400,
    },
    "verify": {k: v for k, v in acc.AcceptanceConfig().to_dict().items() if k not in ("seed", "threads")},
    "report": {"R_values": [2.0, 4.0, 8.0, 16.0], "lambda_max": 5.0},
}

GLOBAL_KEYS = {"seed": (int,), "threads": (int,), "notes": (str, list)}


def default_config_text() -> str:
    """The shipped verify config (full acceptance sizes, pilot-run notes)."""
    return resources.files("gefzeros").joinpath("configs/verify.json").read_text(encoding="utf-8")


def load_config(command: str, path: str | None) -> dict:
    """Parse and validate a config file for ``command``; returns merged parameters."""
    raw: dict = {}
    if path == "default":
        if command != "verify":
            raise ConfigError("the shipped default config is for 'verify'")
        raw = json.loads(default_config_text())
    elif path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    schema = {**SCHEMAS[command], **GLOBAL_KEYS}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for '{command}': {unknown}")
    for k, v in raw.items():
        types = schema[k]
        if isinstance(v, bool) or not isinstance(v, types):
            if not (v is None and DEFAULTS.get(command, {}).get(k, 0) is None):
                raise ConfigError(f"key '{k}' has type {type(v).__name__}")
    cfg = {**DEFAULTS[command], **{k: v for k, v in raw.items() if k != "notes"}}
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, **cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# -- output ----------------------------------------------------------------------------------


class Output:
    """Atomic writer adding provenance to every artifact."""

    def __init__(self, out_dir: str, command: str, cfg: dict):
        self.dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.prov = {
            "package": "gefzeros",
            "version": __version__,
            "command": command,
            "master_seed": cfg["seed"],
            "config_sha256": config_hash(command, cfg),
            "config": cfg,
        }
        self.files: list[str] = []

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.dir, name)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
        self.files.append(path)
        return path

    def csv(self, name: str, body: str) -> str:
        head = "".join(
            f"# {k}: {self.prov[k]}\r\n" for k in ("package", "version", "command", "master_seed", "config_sha256")
        )
        return self._write(name, head + body)

    def json(self, name: str, body) -> str:
        doc = {"provenance": self.prov, "body": body}
        return self._write(name, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")

    def svg(self, name: str, text: str) -> str:
        comment = f"<!-- gefzeros {__version__} seed {self.prov['master_seed']} config {self.prov['config_sha256']} -->\n"
        return self._write(name, text.replace("\n", "\n" + comment, 1))


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, mc.EnsembleSummary):
        return x.to_dict()
    raise TypeError(type(x).__name__)


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()


def _test_function(cfg):
    if cfg.get("grid_file"):
        return load_grid(cfg["grid_file"])
    return builtin(cfg["test_function"], **cfg.get("params", {}))


# -- commands ----------------------------------------------------------------------------------


def cmd_sample(cfg, out: Output) -> int:
    records = []
    zsets = []
    for i in range(cfg["n_samples"]):
        R_v = cfg["R_v"]
        if cfg["zeros_radius"]:
            R_v = max(R_v, required_valid_radius(cfg["zeros_radius"]))
        s = sample_gef(sample_seed(cfg["seed"], i), R_v=R_v, tail_tol=cfg["tail_tol"])
        records.append(s.to_record())
        if cfg["zeros_radius"]:
            zsets.append(find_zeros_disk(s, 0.0, cfg["zeros_radius"]))
    out.json("samples.json", records)
    if zsets:
        out.csv("zeros.csv", zeroset_to_csv(zsets))
    return EXIT_OK


def cmd_zeros(cfg, out: Output) -> int:
    c = complex(*cfg["center"])
    zsets = []
    for i in range(cfg["n_samples"]):
        s = sample_gef(
            sample_seed(cfg["seed"], i), R_v=required_valid_radius(cfg["radius"], c), tail_tol=cfg["tail_tol"]
        )
        zsets.append(find_zeros_disk(s, c, cfg["radius"]))
    out.csv("zeros.csv", zeroset_to_csv(zsets))
    out.json(
        "zeros_summary.json",
        [{"sample_index": i, "count": len(z), "validated_radius": z.disk_radius} for i, z in enumerate(zsets)],
    )
    return EXIT_OK


def cmd_variance(cfg, out: Output) -> int:
    h = _test_function(cfg)
    reports = []
    for R in cfg["R_values"]:
        est = None
        if cfg["mc_samples"]:
            summ = mc.run_ensemble(h, float(R), cfg["mc_samples"], cfg["seed"], cfg["threads"])
            est = (summ.variance, summ.variance_se)
        reports.append(sp.variance_report(h, float(R), cfg["perimeter"], est))
    out.csv("variance.csv", sp.reports_to_csv(reports))
    out.json("variance.json", [r.to_dict() for r in reports])
    R = np.array([r.R for r in reports])
    series = {"exact": (np.log(R), np.log([r.exact for r in reports]))}
    if all(r.asymptotic_prediction for r in reports):
        series["asymptotic"] = (np.log(R), np.log([r.asymptotic_prediction for r in reports]))
    out.svg("variance.svg", line_plot(series, f"Var n(R, {h.name})", "log R", "log variance"))
    return EXIT_OK


def cmd_pair_correlation(cfg, out: Output) -> int:
    r = np.linspace(cfg["r_min"], cfg["r_max"], cfg["n_points"])
    out.csv("pair_correlation.csv", corr.pair_correlation_csv(r))
    d = corr.smooth_density(r)
    out.svg(
        "pair_correlation.svg",
        line_plot({"1/pi^2 + d(r)": (r, 1 / math.pi**2 + d), "1/pi^2": (r, np.full(r.size, 1 / math.pi**2))},
                  "pair intensity", "r", "density"),
    )
    return EXIT_OK


def _table_out(out: Output, name: str, rows: list[dict], cols: list[str]) -> None:
    out.csv(f"{name}.csv", _rows_csv(cols, [[r.get(c) for c in cols] for r in rows]))
    out.json(f"{name}.json", [{k: v for k, v in r.items() if k != "summary"} for r in rows])
    for r in rows:
        if "summary" in r:
            out.svg(
                f"{name}_R{r['R']:g}.svg",
                histogram_vs_normal(r["summary"].standardized_samples, title=f"{name}, R = {r['R']:g}"),
            )


def cmd_normality(cfg, out: Output) -> int:
    if cfg["probe"] == "log_minus":
        res = mc.log_minus_probe([float(R) for R in cfg["R_values"]], cfg["n_samples"], cfg["seed"], cfg["threads"])
        for row in res["rows"]:
            row["failed"] = len(row["failed"])
        cols = ["R", "mean", "mean_se", "expected_mean", "circle_variance", "circle_variance_exact",
                "max_identity_error"]
        out.csv("log_minus.csv", _rows_csv(cols, [[r[c] for c in cols] for r in res["rows"]]))
        out.json("log_minus.json", res)
        return EXIT_OK
    if cfg["probe"] != "clt":
        raise ConfigError("probe must be 'clt' or 'log_minus'")
    h = _test_function(cfg)
    rows = mc.clt_probe(h, [float(R) for R in cfg["R_values"]], cfg["n_samples"], cfg["seed"], cfg["threads"])
    _table_out(out, "normality", rows,
               ["R", "ks_p_value", "skewness", "excess_kurtosis", "variance_exact", "r_alpha_sigma", "normal"])
    return EXIT_OK


def cmd_abnormal(cfg, out: Output) -> int:
    rows = mc.abnormal_probe(cfg["alpha"], [float(R) for R in cfg["R_values"]], cfg["n_samples"], cfg["seed"],
                             cfg["threads"])
    _table_out(out, "abnormal", rows,
               ["R", "r_alpha_sigma_mc", "r_alpha_sigma_exact", "ks_p_value", "skewness", "excess_kurtosis",
                "rejects_normality"])
    return EXIT_OK


def cmd_almost_indep(cfg, out: Output) -> int:
    if cfg["configuration"] is not None:
        nets = ind.nets_from_config(cfg["configuration"])
        out.json("nets.json", ind.net_summary(nets))
        configs = [nets]
    else:
        rng = np.random.Generator(np.random.Philox(cfg["seed"]))
        configs = [ind.random_configuration(rng, A=cfg["A"]) for _ in range(cfg["configurations"])]
    rows = []
    for k, nets in enumerate(configs):
        g = ind.coupling_gram(nets)
        rows.append((k, g.points.size, ind.gershgorin_margin(g), ind.smallest_eigenvalue(g),
                     ind.interaction_bound_holds(nets)))
    out.csv("margins.csv", ind.margins_csv(rows))
    dec = None
    if cfg["decorrelation_samples"]:
        dec = ind.empirical_decorrelation(None, cfg["separation"], cfg["side"], cfg["decorrelation_samples"],
                                          cfg["seed"], cfg["threads"])
    out.json("almost_indep.json", {"configurations": len(rows), "min_margin": min(r[2] for r in rows),
                                   "all_bounds_hold": all(r[4] for r in rows), "decorrelation": dec})
    return EXIT_OK


NUMERICAL_CRITERIA = {1, 4, 5, 6, 7}


def cmd_verify(cfg, out: Output) -> int:
    acfg = acc.AcceptanceConfig(**{**cfg, "criteria": tuple(cfg["criteria"])})
    results = acc.run_acceptance(acfg, echo=print)
    out.json("verdict.json", json.loads(acc.verdict_json(results)))
    failed = {r.number for r in results if not r.passed}
    if failed & NUMERICAL_CRITERIA:
        return EXIT_NUMERICAL
    if failed:
        return EXIT_STATISTICAL
    return EXIT_OK


def cmd_report(cfg, out: Output) -> int:
    reports = []
    for name in ("indicator", "gaussian", "cone", "abnormal", "smooth_bump"):
        h = builtin(name)
        for R in cfg["R_values"]:
            reports.append(sp.variance_report(h, float(R), 2 * math.pi if name == "indicator" else None))
    out.csv("variance_report.csv", sp.reports_to_csv(reports))
    lam = np.linspace(1e-3, cfg["lambda_max"], 500)
    out.svg("spectral_density.svg",
            line_plot({"M": (lam, sp.spectral_density_M(lam)), "1/pi": (lam, np.full(lam.size, 1 / math.pi))},
                      "spectral density", "|lambda|", "M"))
    out.json("constants.json", {
        "M_sup": sp.M_SUP, "ratio_lower": sp.RATIO_LOWER, "ratio_upper": sp.RATIO_UPPER,
        "smooth_coefficient": sp.SMOOTH_COEFFICIENT, "boundary_coefficient": sp.BOUNDARY_COEFFICIENT,
        "potential_bound": sp.POTENTIAL_BOUND,
    })
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "zeros": cmd_zeros,
    "variance": cmd_variance,
    "pair-correlation": cmd_pair_correlation,
    "normality": cmd_normality,
    "abnormal": cmd_abnormal,
    "almost-indep": cmd_almost_indep,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file for the command ('default': shipped verify config)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker threads for ensembles")
    common.add_argument("--out", default="out", help="output directory")
    p = argparse.ArgumentParser(prog="gefzeros", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"gefzeros {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", ""))
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.command, args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed", acc.AcceptanceConfig.seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        threads = args.threads if args.threads is not None else cfg.get("threads", 1)
        if threads < 1:
            raise ConfigError("threads must be positive")
        cfg["seed"], cfg["threads"] = int(seed), int(threads)
        out = Output(args.out, args.command, cfg)
        code = COMMANDS[args.command](cfg, out)
    except (ConfigError, UnknownTestFunction, ind.ConfigurationError, GefError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ZeroFinderError, sp.VarianceToleranceError, FourierToleranceError, mc.EnsembleAbort) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
