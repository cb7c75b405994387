"""Experiment configuration: a flat dotted-key text format with typed
values, validated all at once so every violation is reported together.

Example::

    grid.n = 32
    gamma = 0.5
    noise.channels.1.lambda = 7.0
    noise.channels.1.kernel.type = gaussian
    noise.channels.1.kernel.amplitude = 1.0
    noise.channels.1.kernel.sigma = 1.0
    time.horizon = 1.0
    time.steps = 32
    initial_data.type = taylor_green
    initial_data.amplitude = 0.1, 0.2, 0.4

See README for the full schema.  Lists are comma-separated; '#' starts a
comment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Tuple

from .noise import (
    AdmissibilityViolation,
    gaussian_kernel,
    validate_noise,
    zero_kernel,
)


class ParseError(ValueError):
    """Malformed config text; the message carries line number and field."""


class ValidationError(ValueError):
    """One or more schema violations; all of them are listed, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))


@dataclass(frozen=True)
class ChannelSpec:
    """Plain-data description of one noise channel (picklable)."""

    lam: float
    kernel_type: str
    amplitude: float = 1.0
    sigma: float = 1.0

    def build_kernel(self):
        if self.kernel_type == "gaussian":
            return gaussian_kernel(self.amplitude, self.sigma)
        if self.kernel_type == "zero":
            return zero_kernel()
        raise ValueError(f"unknown kernel type {self.kernel_type!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 32
    length: float = 6.283185307179586
    gamma: float = 0.5
    channels: Tuple[ChannelSpec, ...] = ()
    horizon: float = 1.0
    steps: int = 32
    picard_tol: float = 1e-9
    picard_max_iter: int = 50
    t_probe_max: float = 1.0
    levels: int = 12
    num_paths: int = 1
    base_seed: int = 0
    initial_type: str = "taylor_green"
    amplitudes: Tuple[float, ...] = (0.1,)
    snapshot_path: Optional[str] = None
    calibration_ensemble: int = 8
    calibration_steps: int = 16
    output_directory: str = "runs"
    sha256: str = ""

    def build_noise_model(self):
        return validate_noise([(c.lam, c.build_kernel()) for c in self.channels])


def _parse_value(raw):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",")]
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_dotted_keys(text, source="<config>"):
    """Parse the dotted-key format into a flat {key: value} dict."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ParseError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = _parse_value(raw)
    return entries


def _as_list(value):
    return value if isinstance(value, list) else [value]


_KNOWN_PREFIXES = (
    "grid.",
    "noise.channels.",
    "time.",
    "picard.",
    "search.",
    "monte_carlo.",
    "initial_data.",
    "calibration.",
    "output.",
)


def _collect_channels(entries, problems):
    indices = set()
    for key in entries:
        if key.startswith("noise.channels."):
            parts = key.split(".")
            if len(parts) < 4 or not parts[2].isdigit():
                problems.append(f"{key}: expected noise.channels.<index>.<field>")
                continue
            indices.add(int(parts[2]))
    channels = []
    for idx in sorted(indices):
        prefix = f"noise.channels.{idx}."
        lam = entries.get(prefix + "lambda")
        ktype = entries.get(prefix + "kernel.type", "zero")
        if lam is None:
            problems.append(f"noise.channels.{idx}: missing lambda")
            continue
        if not isinstance(lam, (int, float)) or isinstance(lam, bool):
            problems.append(f"noise.channels.{idx}.lambda: must be a number, got {lam!r}")
            continue
        if ktype not in ("gaussian", "zero"):
            problems.append(
                f"noise.channels.{idx}.kernel.type: must be 'gaussian' or 'zero', got {ktype!r}"
            )
            continue
        amplitude = entries.get(prefix + "kernel.amplitude", 1.0)
        sigma = entries.get(prefix + "kernel.sigma", 1.0)
        if ktype == "gaussian" and (not isinstance(sigma, (int, float)) or sigma <= 0):
            problems.append(f"noise.channels.{idx}.kernel.sigma: must be positive, got {sigma!r}")
            continue
        channels.append(
            ChannelSpec(float(lam), ktype, float(amplitude), float(sigma))
        )
    return tuple(channels)


def _number(entries, key, default, problems, kind=float, check=None, describe=""):
    value = entries.get(key, default)
    ok_types = (int,) if kind is int else (int, float)
    if isinstance(value, bool) or not isinstance(value, ok_types):
        problems.append(f"{key}: expected {kind.__name__}, got {value!r}")
        return default
    value = kind(value)
    if check is not None and not check(value):
        problems.append(f"{key}: {describe}, got {value!r}")
    return value


def load_config(path):
    """Load and validate a config file; raises ParseError or a
    ValidationError listing every violated constraint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    sha = hashlib.sha256(raw).hexdigest()
    entries = parse_dotted_keys(raw.decode("utf-8"), source=str(path))

    problems = []
    for key in entries:
        if key != "gamma" and not key.startswith(_KNOWN_PREFIXES):
            problems.append(f"{key}: unknown key")

    n = _number(entries, "grid.n", 32, problems, int,
                lambda v: v >= 8 and v % 2 == 0, "must be an even integer >= 8")
    length = _number(entries, "grid.length", 6.283185307179586, problems, float,
                     lambda v: v > 0, "must be positive")
    gamma = _number(entries, "gamma", 0.5, problems, float,
                    lambda v: 0.0 < v < 1.0, "must lie in the open interval (0, 1)")
    horizon = _number(entries, "time.horizon", 1.0, problems, float,
                      lambda v: v > 0, "must be positive")
    steps = _number(entries, "time.steps", 32, problems, int,
                    lambda v: v >= 2, "must be an integer >= 2")
    tol = _number(entries, "picard.tol", 1e-9, problems, float,
                  lambda v: v > 0, "must be positive")
    max_iter = _number(entries, "picard.max_iter", 50, problems, int,
                       lambda v: v >= 1, "must be an integer >= 1")
    t_probe_max = _number(entries, "search.t_probe_max", 1.0, problems, float,
                          lambda v: v > 0, "must be positive")
    levels = _number(entries, "search.levels", 12, problems, int,
                     lambda v: v >= 1, "must be an integer >= 1")
    num_paths = _number(entries, "monte_carlo.num_paths", 1, problems, int,
                        lambda v: v >= 1, "must be an integer >= 1")
    base_seed = _number(entries, "monte_carlo.base_seed", 0, problems, int)
    cal_ensemble = _number(entries, "calibration.ensemble_size", 8, problems, int,
                           lambda v: v >= 1, "must be an integer >= 1")
    cal_steps = _number(entries, "calibration.num_steps", 16, problems, int,
                        lambda v: v >= 2, "must be an integer >= 2")

    initial_type = entries.get("initial_data.type", "taylor_green")
    snapshot_path = None
    amplitudes = (0.1,)
    if initial_type not in ("taylor_green", "random", "snapshot"):
        problems.append(
            f"initial_data.type: must be taylor_green, random or snapshot, got {initial_type!r}"
        )
    elif initial_type == "snapshot":
        snapshot_path = entries.get("initial_data.path")
        if not isinstance(snapshot_path, str):
            problems.append("initial_data.path: required for snapshot initial data")
    if initial_type != "snapshot":
        amps = _as_list(entries.get("initial_data.amplitude", 0.1))
        bad = [a for a in amps if isinstance(a, bool) or not isinstance(a, (int, float)) or a <= 0]
        if bad:
            problems.append(f"initial_data.amplitude: amplitudes must be positive numbers, got {bad!r}")
        else:
            amplitudes = tuple(float(a) for a in amps)

    out_dir = entries.get("output.directory", "runs")
    if not isinstance(out_dir, str):
        problems.append(f"output.directory: expected a path string, got {out_dir!r}")
        out_dir = "runs"

    channels = _collect_channels(entries, problems)
    try:
        validate_noise([(c.lam, c.build_kernel()) for c in channels])
    except AdmissibilityViolation as exc:
        problems.append(f"noise.channels: {exc}")

    if problems:
        raise ValidationError(problems)

    return ExperimentConfig(
        n=n,
        length=length,
        gamma=gamma,
        channels=channels,
        horizon=horizon,
        steps=steps,
        picard_tol=tol,
        picard_max_iter=max_iter,
        t_probe_max=t_probe_max,
        levels=levels,
        num_paths=num_paths,
        base_seed=base_seed,
        initial_type=initial_type,
        amplitudes=amplitudes,
        snapshot_path=snapshot_path,
        calibration_ensemble=cal_ensemble,
        calibration_steps=cal_steps,
        output_directory=out_dir,
        sha256=sha,
    )
