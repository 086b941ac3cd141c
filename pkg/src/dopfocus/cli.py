"""Command-line front end: ``dopfocus simulate|recover|bench|inspect``.

Every command reads a YAML run configuration::

    scenario: scene.yaml        # radar/pulse/targets/generator/clutter
    seed: 1                     # mandatory master seed
    acquisition: {n_kappa: 20, kappa_mode: consecutive}
    noise: {snr_db: -10}        # omitted or null -> noiseless
    recovery: {detector: focusing, M: 200, window: rectangular}
    suite: {snr_db: [-20, -10], trials: 50, detectors: [focusing, twostage]}
    output: runs/example

Relative paths are resolved against the config file's directory. Command
line flags override config values. The default output directory can be set
with ``DOPFOCUS_OUTPUT_DIR``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from . import __version__
from .detectors import classic_detect, focusing_detect, twostage_detect, write_detections
from .evaluation import DETECTORS, HitCriterion, SuiteConfig, format_table, run_suite, score
from .scene import Scenario, Target, read_scenario, write_scenario
from .waveform import add_awgn, make_pulse, noise_level_for_snr, read_signal, read_signal_header, synthesize, write_signal
from .xampler import read_xamples, read_xamples_header, select_kappa, write_xamples, xample_analytic

OUTPUT_ENV = "DOPFOCUS_OUTPUT_DIR"
RECOVER_DETECTORS = ("focusing", "twostage", "classic")


class ConfigError(Exception):
    """Invalid or inconsistent user input (exit code 2)."""


@dataclass
class RunConfig:
    scenario: Path
    seed: int
    n_kappa: int = 20
    kappa_mode: str = "consecutive"
    snr_db: Optional[float] = None
    detector: str = "focusing"
    M: Optional[int] = None
    window: object = None
    refine: bool = True
    output: Path = Path("dopfocus-out")
    suite: dict = field(default_factory=dict)
    write_signal: bool = True

    def load_scenario(self) -> Scenario:
        if not self.scenario.is_file():
            raise ConfigError(f"scenario file not found: {self.scenario}")
        try:
            return read_scenario(self.scenario)
        except (ValueError, TypeError, KeyError, yaml.YAMLError) as e:
            raise ConfigError(f"{self.scenario}: {e}") from e


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    o = {k: v for k, v in (overrides or {}).items() if v is not None}
    base = path.parent

    def rel(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    if "scenario" not in raw:
        raise ConfigError(f"{path}: missing 'scenario' entry")
    seed = o.get("seed", raw.get("seed"))
    if seed is None:
        raise ConfigError(f"{path}: a master 'seed' is required")
    acq = raw.get("acquisition") or {}
    noise = raw.get("noise") or {}
    rec = raw.get("recovery") or {}
    out = o.get("output") or raw.get("output") or os.environ.get(OUTPUT_ENV) or "dopfocus-out"
    cfg = RunConfig(
        scenario=rel(raw["scenario"]),
        seed=int(seed),
        n_kappa=int(acq.get("n_kappa", 20)),
        kappa_mode=str(acq.get("kappa_mode", "consecutive")),
        snr_db=o.get("snr_db", noise.get("snr_db")),
        detector=str(o.get("detector", rec.get("detector", "focusing"))),
        M=rec.get("M"),
        window=rec.get("window"),
        refine=bool(rec.get("refine", True)),
        output=Path(out) if "output" in o or "output" not in raw else rel(out),
        suite=dict(raw.get("suite") or {}),
        write_signal=bool(raw.get("write_signal", True)),
    )
    valid = RECOVER_DETECTORS + ("all",)
    if cfg.detector not in valid:
        raise ConfigError(f"unknown detector {cfg.detector!r}; valid: {', '.join(valid)}")
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _streams(seed: int):
    scene, kappa, noise = np.random.SeedSequence(seed).spawn(3)
    return scene, kappa, noise


def _resolve(cfg: RunConfig):
    sc = cfg.load_scenario()
    pulse = dict(sc.pulse or {"kind": "flat"})
    try:
        shape = make_pulse(sc.params, pulse.pop("kind", "flat"), **pulse)
        kappa = select_kappa(sc.params, cfg.n_kappa, cfg.kappa_mode, rng_seed=_streams(cfg.seed)[1])
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    return sc, shape, kappa


def cmd_simulate(cfg: RunConfig, out=None) -> List[Path]:
    out = out or sys.stdout
    sc, shape, kappa = _resolve(cfg)
    p = sc.params
    targets = sc.resolve_targets()
    clutter = sc.resolve_clutter()
    s_noise = _streams(cfg.seed)[2]
    ref = targets[0] if targets else Target(0.0, 0.0, 1.0)
    s2 = 0.0 if cfg.snr_db is None else noise_level_for_snr(float(cfg.snr_db), ref.amplitude, p)
    x = xample_analytic(p, shape, targets, kappa, clutter, noise_sigma2=s2, rng_seed=s_noise)
    cfg.output.mkdir(parents=True, exist_ok=True)
    files = [cfg.output / "scene.yaml", cfg.output / "xamples.bin"]
    resolved = Scenario(p, targets, None, sc.clutter, sc.pulse)
    write_scenario(files[0], resolved)
    write_xamples(files[1], x)
    if cfg.write_signal:
        sig = synthesize(p, shape, targets, clutter)
        if cfg.snr_db is not None:
            sig = add_awgn(sig, p, float(cfg.snr_db), ref, s_noise)
        files.append(cfg.output / "signal.bin")
        write_signal(files[2], sig)
    for f in files:
        print(f"wrote {f}", file=out)
    return files


def cmd_recover(cfg: RunConfig, xamples=None, signal=None, truth=None, out=None) -> List[Path]:
    out = out or sys.stdout
    sc, shape, kappa = _resolve(cfg)
    p = sc.params
    dets = RECOVER_DETECTORS if cfg.detector == "all" else (cfg.detector,)
    xamples = Path(xamples) if xamples else cfg.output / "xamples.bin"
    signal = Path(signal) if signal else cfg.output / "signal.bin"
    n_targets = len(sc.resolve_targets()) or int((sc.generator or {}).get("n_targets", 0))
    if n_targets < 1:
        raise ConfigError("scenario does not define the number of targets")
    truth_targets = None
    if truth:
        if not Path(truth).is_file():
            raise ConfigError(f"truth file not found: {truth}")
        truth_targets = read_scenario(truth).resolve_targets()
    cfg.output.mkdir(parents=True, exist_ok=True)
    written = []
    crit = HitCriterion.for_params(p)
    for det in dets:
        if det == "classic":
            if not signal.is_file():
                raise ConfigError(f"signal dump not found: {signal}")
            try:
                sig = read_signal(signal)
            except ValueError as e:
                raise ConfigError(str(e)) from e
            if sig.pulse_count != p.pulse_count:
                raise ConfigError(f"{signal}: dump has P={sig.pulse_count} but the configuration has P={p.pulse_count}")
            est = classic_detect(sig, shape, p, n_targets, cfg.M, window=cfg.window)
        else:
            if not xamples.is_file():
                raise ConfigError(f"Xample dump not found: {xamples}")
            try:
                x = read_xamples(xamples, p)
            except ValueError as e:
                raise ConfigError(str(e)) from e
            if det == "focusing":
                est = focusing_detect(x, shape, n_targets, cfg.M, cfg.window, refine=cfg.refine)
            else:
                est = twostage_detect(x, shape, n_targets, cfg.M)
        path = cfg.output / f"detections_{det}.csv"
        write_detections(path, est)
        written.append(path)
        print(f"{det}: {len(est)} detections -> {path}", file=out)
        for d in est:
            print(f"  tau={d.tau_hat * 1e6:.6f} us  nu={d.nu_hat:.3f} rad/s  |alpha|={abs(d.alpha_hat):.4g}", file=out)
        if truth_targets is not None:
            r = score(truth_targets, est, crit)
            print(f"  hit-rate {r.hits}/{len(truth_targets)} = {r.hits / len(truth_targets):.3f}"
                  f"  false alarms {r.false_alarms}", file=out)
    return written


def suite_from_config(cfg: RunConfig, overrides: Optional[dict] = None) -> SuiteConfig:
    sc, _, _ = _resolve(cfg)
    s = dict(cfg.suite)
    s.update({k: v for k, v in (overrides or {}).items() if v is not None})
    n_targets = s.pop("n_targets", None) or len(sc.targets) or int((sc.generator or {}).get("n_targets", 0))
    if not n_targets:
        raise ConfigError("suite needs n_targets (in the suite section or the scenario generator)")
    dets = s.pop("detectors", ["focusing", "twostage", "classic-decimated"])
    if isinstance(dets, str):
        dets = [d.strip() for d in dets.split(",") if d.strip()]
    bad = [d for d in dets if d not in DETECTORS]
    if bad:
        raise ConfigError(f"unknown detector(s) {', '.join(bad)}; valid: {', '.join(DETECTORS)}")
    known = set(SuiteConfig.__dataclass_fields__) - {"params", "n_targets", "detectors"}
    extra = set(s) - known
    if extra:
        raise ConfigError(f"unknown suite option(s): {', '.join(sorted(extra))}")
    s.setdefault("n_kappa", cfg.n_kappa)
    s.setdefault("kappa_mode", cfg.kappa_mode)
    s.setdefault("M", cfg.M)
    s.setdefault("window", cfg.window)
    s.setdefault("seed", cfg.seed)
    if sc.pulse:
        s.setdefault("pulse", sc.pulse.get("kind", "flat"))
    if sc.clutter:
        s.setdefault("clutter", {k: sc.clutter[k] for k in ("n_scatterers", "scr_db")})
    try:
        return SuiteConfig(sc.params, n_targets=int(n_targets), detectors=tuple(dets), **s)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def cmd_bench(cfg: RunConfig, overrides: Optional[dict] = None, out=None) -> Path:
    out = out or sys.stdout
    suite = suite_from_config(cfg, overrides)

    def progress(done, total):
        print(f"\r{done}/{total} trials", end="" if done < total else "\n", file=sys.stderr, flush=True)

    res = run_suite(suite, progress)
    cfg.output.mkdir(parents=True, exist_ok=True)
    name = "results.csv" if res.complete else "results.incomplete.csv"
    path = cfg.output / name
    path.write_text(format_table(res.rows))
    print(f"wrote {path}", file=out)
    if not res.complete:
        raise RuntimeError(f"suite interrupted after {len(res.per_trial)} of {suite.trials} trials")
    return path


def cmd_inspect(path, out=None) -> dict:
    out = out or sys.stdout
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"DFSG":
        info = read_signal_header(path)
    elif magic == b"DFXS":
        info = read_xamples_header(path)
    else:
        try:
            sc = read_scenario(path)
        except Exception as e:
            raise ConfigError(f"{path}: not a signal dump, Xample dump or scenario ({e})") from e
        info = {"kind": "scenario", **sc.params.to_dict(), "n_targets": len(sc.resolve_targets())}
    for k, v in info.items():
        print(f"{k}: {v}", file=out)
    return info


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dopfocus", description="Sub-Nyquist pulse-Doppler recovery tools.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--out", dest="output", help=f"output directory (default: config, then ${OUTPUT_ENV})")
        p.add_argument("--seed", type=int, help="master seed override")

    p = sub.add_parser("simulate", help="write scene, Xample dump and Nyquist signal dump")
    common(p)
    p.add_argument("--snr", dest="snr_db", type=float, help="SNR of the first target [dB]")
    p.add_argument("--no-signal", action="store_true", help="skip the Nyquist-rate signal dump")

    p = sub.add_parser("recover", help="run detectors on dumps and write detection CSVs")
    common(p)
    p.add_argument("--detector", help=f"one of {', '.join(RECOVER_DETECTORS)} or 'all'")
    p.add_argument("--xamples", help="Xample dump (default: <out>/xamples.bin)")
    p.add_argument("--signal", help="signal dump (default: <out>/signal.bin)")
    p.add_argument("--truth", help="scenario file with true targets for scoring")

    p = sub.add_parser("bench", help="Monte Carlo suite to a results CSV")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    p.add_argument("--detectors", help="comma-separated detector list")

    p = sub.add_parser("inspect", help="print the header of a dump or scenario file")
    p.add_argument("path")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "inspect":
            cmd_inspect(args.path)
            return 0
        ov = {"output": args.output, "seed": args.seed}
        if args.command == "simulate":
            ov["snr_db"] = args.snr_db
        if args.command == "recover":
            ov["detector"] = args.detector
        cfg = load_config(args.config, ov)
        if args.command == "simulate":
            if args.no_signal:
                cfg.write_signal = False
            cmd_simulate(cfg)
        elif args.command == "recover":
            cmd_recover(cfg, args.xamples, args.signal, args.truth)
        else:
            cmd_bench(cfg, {"trials": args.trials, "workers": args.workers, "detectors": args.detectors})
        return 0
    except ConfigError as e:
        print(f"dopfocus: error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("dopfocus: interrupted", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure
        print(f"dopfocus: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
