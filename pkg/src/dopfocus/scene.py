"""Radar parameters, point-target scenes and clutter fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class RadarParams:
    """Description of one coherent processing interval (CPI).

    Attributes
    ----------
    pulse_count : int
        Number of pulses P.
    pri : float
        Pulse repetition interval tau [s].
    bandwidth : float
        Pulse bandwidth B_h [Hz]. ``pri * bandwidth`` must be an integer.
    pulse_time : float
        Pulse time T_p [s]; reference duration in the per-target SNR.
    carrier : float or None
        Carrier frequency [Hz], only used by :func:`check_assumptions`.
    noise_psd : float
        Noise level N0 [W/Hz]. The noise PSD is N0/2, so complex baseband
        samples at rate B_h carry per-sample variance ``N0 * B_h / 2``.
    """

    pulse_count: int
    pri: float
    bandwidth: float
    pulse_time: Optional[float] = None
    carrier: Optional[float] = None
    noise_psd: float = 0.0

    def __post_init__(self):
        if int(self.pulse_count) != self.pulse_count or self.pulse_count < 1:
            raise ValueError(f"pulse_count must be a positive integer, got {self.pulse_count}")
        if not self.pri > 0:
            raise ValueError(f"pri must be positive, got {self.pri}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "pulse_count", int(self.pulse_count))
        if self.pulse_time is None:
            object.__setattr__(self, "pulse_time", float(self.pri))
        if not 0 < self.pulse_time <= self.pri * (1 + 1e-12):
            raise ValueError(f"pulse_time must lie in (0, pri], got {self.pulse_time}")
        n = self.pri * self.bandwidth
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ValueError(f"pri * bandwidth = {n!r} is not a positive integer")
        if self.noise_psd < 0:
            raise ValueError("noise_psd must be non-negative")

    @property
    def nyquist_count(self) -> int:
        """Nyquist samples per frame, N = tau * B_h."""
        return int(round(self.pri * self.bandwidth))

    @property
    def cpi(self) -> float:
        return self.pulse_count * self.pri

    @property
    def delay_bin(self) -> float:
        """Classic delay resolution 1/B_h [s]."""
        return 1.0 / self.bandwidth

    @property
    def doppler_bin(self) -> float:
        """Classic Doppler resolution 2*pi/(P*tau) [rad/s]."""
        return 2.0 * math.pi / (self.pulse_count * self.pri)

    @property
    def doppler_limit(self) -> float:
        """Edge pi/tau of the unambiguous Doppler region [rad/s]."""
        return math.pi / self.pri

    def replace(self, **changes) -> "RadarParams":
        kw = self.to_dict()
        kw.update(changes)
        return RadarParams(**kw)

    def to_dict(self) -> dict:
        return {
            "pulse_count": self.pulse_count,
            "pri": float(self.pri),
            "bandwidth": float(self.bandwidth),
            "pulse_time": float(self.pulse_time),
            "carrier": None if self.carrier is None else float(self.carrier),
            "noise_psd": float(self.noise_psd),
        }


@dataclass(frozen=True)
class Target:
    """A point scatterer: delay [s], Doppler [rad/s] and complex amplitude."""

    delay: float
    doppler: float
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        object.__setattr__(self, "delay", float(self.delay))
        object.__setattr__(self, "doppler", float(self.doppler))
        object.__setattr__(self, "amplitude", complex(self.amplitude))


@dataclass(frozen=True)
class ClutterField:
    """Dense set of near-static scatterers."""

    scatterers: tuple
    doppler_spread: float
    scr_db: float
    ref_power: float = 1.0

    @property
    def total_power(self) -> float:
        return float(sum(abs(s.amplitude) ** 2 for s in self.scatterers))


def target_arrays(targets: Sequence[Target]):
    """Split a target list into (delays, dopplers, amplitudes) arrays."""
    delays = np.array([t.delay for t in targets], dtype=float)
    dopplers = np.array([t.doppler for t in targets], dtype=float)
    amps = np.array([t.amplitude for t in targets], dtype=complex)
    return delays, dopplers, amps


def validate_scene(params: RadarParams, targets: Sequence[Target]) -> None:
    """Raise ValueError unless every target is unambiguous and unique."""
    lim = params.doppler_limit
    seen = set()
    for i, t in enumerate(targets):
        if not 0.0 <= t.delay < params.pri:
            raise ValueError(f"target {i}: delay {t.delay} outside [0, {params.pri})")
        if not -lim <= t.doppler < lim:
            raise ValueError(f"target {i}: Doppler {t.doppler} outside [-pi/tau, pi/tau)")
        key = (t.delay, t.doppler)
        if key in seen:
            raise ValueError(f"target {i}: duplicate delay/Doppler pair {key}")
        seen.add(key)


def _separated(d, nu, delays, dopplers, sep_t, sep_f, pri):
    for d2, nu2 in zip(delays, dopplers):
        dt = abs(d - d2)
        dt = min(dt, pri - dt)
        span = 2.0 * math.pi / pri
        df = abs(nu - nu2) % span
        df = min(df, span - df)
        if dt < sep_t and df < sep_f:
            return False
    return True


def random_scene(
    params: RadarParams,
    n_targets: int,
    rng_seed,
    amp_db_spread: float = 0.0,
    amplitude: float = 1.0,
    min_separation: Optional[tuple] = None,
    delay_fraction: float = 0.95,
    doppler_exclusion: float = 0.0,
    max_tries: int = 1000,
) -> list:
    """Draw a random sparse scene.

    Delays are uniform on ``[0, delay_fraction * tau)``, Dopplers uniform on
    ``[-pi/tau, pi/tau)``, phases uniform. Magnitudes equal ``amplitude`` or,
    with ``amp_db_spread > 0``, are spread uniformly in dB below it.

    ``min_separation=(dt, dnu)`` rejects draws that fall within ``dt`` in delay
    *and* ``dnu`` in Doppler of an earlier target; default one Nyquist bin in
    each axis. ``doppler_exclusion`` keeps |nu| at least that far from zero.
    """
    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    if min_separation is None:
        min_separation = (params.delay_bin, params.doppler_bin)
    sep_t, sep_f = min_separation
    rng = np.random.default_rng(rng_seed)
    lim = params.doppler_limit
    if doppler_exclusion >= lim:
        raise ValueError("doppler_exclusion leaves no admissible Doppler region")
    delays, dopplers = [], []
    for i in range(n_targets):
        for _ in range(max_tries):
            d = rng.uniform(0.0, delay_fraction * params.pri)
            if doppler_exclusion > 0:
                nu = rng.uniform(doppler_exclusion, lim) * rng.choice((-1.0, 1.0))
                if nu >= lim:
                    continue
            else:
                nu = rng.uniform(-lim, lim)
            if _separated(d, nu, delays, dopplers, sep_t, sep_f, params.pri):
                delays.append(d)
                dopplers.append(nu)
                break
        else:
            raise ValueError(
                f"could not place target {i + 1} of {n_targets} with separation "
                f"{min_separation} after {max_tries} draws"
            )
    mags = amplitude * 10.0 ** (-rng.uniform(0.0, amp_db_spread, n_targets) / 20.0)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_targets)
    return [Target(d, nu, m * np.exp(1j * ph)) for d, nu, m, ph in zip(delays, dopplers, mags, phases)]


def make_clutter(
    params: RadarParams,
    n_scatterers: int,
    scr_db: float,
    ref_power: float,
    rng_seed,
) -> ClutterField:
    """Static clutter confined to the DC Doppler bin.

    Dopplers are uniform over one Nyquist Doppler bin centred on zero, delays
    uniform on [0, tau). Complex Gaussian amplitudes are rescaled so the
    summed power equals ``ref_power * 10**(-scr_db / 10)``.
    """
    if n_scatterers < 1:
        raise ValueError("n_scatterers must be >= 1")
    if ref_power <= 0:
        raise ValueError("ref_power must be positive")
    rng = np.random.default_rng(rng_seed)
    spread = params.doppler_bin
    delays = rng.uniform(0.0, params.pri, n_scatterers)
    dopplers = rng.uniform(-spread / 2, spread / 2, n_scatterers)
    amps = rng.standard_normal(n_scatterers) + 1j * rng.standard_normal(n_scatterers)
    target_total = ref_power * 10.0 ** (-scr_db / 10.0)
    amps *= math.sqrt(target_total / np.sum(np.abs(amps) ** 2))
    scat = tuple(Target(d, nu, a) for d, nu, a in zip(delays, dopplers, amps))
    return ClutterField(scat, spread, float(scr_db), float(ref_power))


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    ratio: float  # worst-case lhs/rhs; passes when ratio <= margin
    detail: str


def check_assumptions(
    params: RadarParams,
    targets: Sequence[Target],
    kinematics: Optional[Sequence] = None,
    margin: float = 0.1,
) -> dict:
    """Evaluate the far/slow/small-acceleration inequalities.

    ``kinematics`` is an optional sequence of ``(velocity, acceleration)``
    pairs in m/s and m/s^2, one per target; a ``None`` velocity is derived
    from the target Doppler. A "much less than" inequality is taken to hold
    when lhs/rhs <= ``margin``.
    """
    if params.carrier is None:
        raise ValueError("check_assumptions needs params.carrier")
    fc = params.carrier
    cpi = params.cpi
    if kinematics is None:
        kinematics = [(None, 0.0)] * len(targets)
    r1 = r2 = r2b = r3 = 0.0
    for t, (vel, acc) in zip(targets, kinematics):
        if vel is None:
            nu = abs(t.doppler)
        else:
            nu = 4.0 * math.pi * fc * abs(vel) / SPEED_OF_LIGHT
        rhs1 = 2.0 * math.pi * fc * t.delay / cpi
        r1 = max(r1, 0.0 if nu == 0 else (math.inf if rhs1 == 0 else nu / rhs1))
        r2 = max(r2, nu / (2.0 * math.pi * fc / (cpi * params.bandwidth)))
        r2b = max(r2b, (nu / (2.0 * math.pi)) * params.pulse_time)
        r3 = max(r3, abs(acc or 0.0) / (SPEED_OF_LIGHT / (2.0 * fc * cpi ** 2)))
    return {
        "A1": AssumptionCheck("A1", r1 <= margin, r1, "nu << 2 pi fc tau_l / (P tau)"),
        "A2": AssumptionCheck(
            "A2", max(r2, r2b) <= margin, max(r2, r2b),
            "nu << 2 pi fc / (P tau B_h) and nu/(2 pi) << 1/T_p",
        ),
        "A3": AssumptionCheck("A3", r3 <= margin, r3, "accel << c / (2 fc (P tau)^2)"),
    }


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Everything needed to regenerate a scene deterministically."""

    params: RadarParams
    targets: list = field(default_factory=list)
    generator: Optional[dict] = None
    clutter: Optional[dict] = None
    pulse: Optional[dict] = None

    def resolve_targets(self) -> list:
        if self.targets:
            return list(self.targets)
        if self.generator:
            g = dict(self.generator)
            return random_scene(self.params, g.pop("n_targets"), g.pop("seed"), **g)
        return []

    def resolve_clutter(self) -> Optional[ClutterField]:
        if not self.clutter:
            return None
        c = self.clutter
        return make_clutter(self.params, c["n_scatterers"], c["scr_db"], c.get("ref_power", 1.0), c["seed"])


def _target_to_dict(t: Target) -> dict:
    return {"delay": t.delay, "doppler": t.doppler, "amplitude": [t.amplitude.real, t.amplitude.imag]}


def _target_from_dict(d: dict) -> Target:
    a = d.get("amplitude", 1.0)
    if isinstance(a, (list, tuple)):
        a = complex(float(a[0]), float(a[1]))
    elif isinstance(a, str):
        a = float(a)
    return Target(d["delay"], d["doppler"], a)


def scenario_to_dict(sc: Scenario) -> dict:
    out = {"radar": sc.params.to_dict()}
    if sc.pulse:
        out["pulse"] = dict(sc.pulse)
    if sc.targets:
        out["targets"] = [_target_to_dict(t) for t in sc.targets]
    if sc.generator:
        out["generator"] = dict(sc.generator)
    if sc.clutter:
        out["clutter"] = dict(sc.clutter)
    return out


def scenario_from_dict(d: dict) -> Scenario:
    if "radar" not in d:
        raise ValueError("scenario needs a 'radar' section")
    # YAML 1.1 reads "2e7" as a string, so numeric fields are coerced here
    radar = {k: (v if v is None or k == "pulse_count" else float(v)) for k, v in d["radar"].items()}
    params = RadarParams(**radar)
    targets = [_target_from_dict(t) for t in d.get("targets") or []]
    if targets:
        validate_scene(params, targets)
    return Scenario(params, targets, d.get("generator"), d.get("clutter"), d.get("pulse"))


def write_scenario(path, sc: Scenario) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(sc), sort_keys=False))


def read_scenario(path) -> Scenario:
    return scenario_from_dict(yaml.safe_load(Path(path).read_text()))
