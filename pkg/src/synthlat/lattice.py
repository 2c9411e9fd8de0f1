"""Lattice data model and construction of the steady-state coupling matrix.

Unit conventions used throughout the package: mode frequencies ``nu`` are in
GHz, linewidths ``kappa`` in MHz, coupling magnitudes ``beta`` dimensionless
(normalized to the geometric mean of the linewidths of the coupled pair).
The GHz/MHz split matches how such devices are usually tabulated; the one
explicit conversion lives in :func:`normalized_detuning`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

GHZ_TO_MHZ = 1.0e3

# Allowed mismatch between a declared pump frequency and the mode-frequency
# difference it bridges, in GHz.  Pump-induced shifts of order 1 MHz are
# expected, so the check only catches gross misconfiguration.
PUMP_TOL_GHZ = 1.0e-3


@dataclass(frozen=True)
class ModeParams:
    """One lattice node: a resonant mode with a single external port.

    Attributes
    ----------
    label : str
        Short identifier, e.g. ``"a"``.
    nu : float
        Resonance frequency in GHz.
    kappa : float
        Total linewidth in MHz (external plus internal).
    eta : float
        Coupling efficiency kappa_ext / kappa, in [0, 1].
    """

    label: str
    nu: float
    kappa: float
    eta: float

    def __post_init__(self):
        if not self.label:
            raise ValueError("mode label must be non-empty")
        for name in ("nu", "kappa", "eta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"mode {self.label!r}: {name} must be finite")
        if self.nu <= 0.0:
            raise ValueError(f"mode {self.label!r}: nu must be positive")
        if self.kappa <= 0.0:
            raise ValueError(f"mode {self.label!r}: kappa must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"mode {self.label!r}: eta must lie in [0, 1]")

    @property
    def kappa_ext(self) -> float:
        """External (port) loss rate in MHz."""
        return self.eta * self.kappa

    @property
    def kappa_int(self) -> float:
        """Internal loss rate in MHz."""
        return (1.0 - self.eta) * self.kappa


@dataclass(frozen=True)
class CouplingSpec:
    """One parametric link between two modes.

    ``beta`` is the normalized coupling magnitude |g| / (2 sqrt(kappa_n
    kappa_m)) and ``phase`` the static hopping phase in radians.  At most one
    link in a lattice may set ``carries_loop_phase``; the swept loop phase
    (plus any global offset) is added onto that link only, which is
    sufficient because only the phase sum around a closed loop is physical.
    """

    pair: tuple[str, str]
    beta: float
    phase: float = 0.0
    pump_nu: float | None = None
    carries_loop_phase: bool = False

    def __post_init__(self):
        pair = tuple(self.pair)
        if len(pair) != 2 or not all(isinstance(x, str) and x for x in pair):
            raise ValueError(f"coupling pair must be two mode labels, got {self.pair!r}")
        object.__setattr__(self, "pair", pair)
        if pair[0] == pair[1]:
            raise ValueError(f"coupling must connect two distinct modes, got {pair!r}")
        if not math.isfinite(self.beta) or self.beta < 0.0:
            raise ValueError(f"coupling {pair!r}: beta must be >= 0")
        if not math.isfinite(self.phase):
            raise ValueError(f"coupling {pair!r}: phase must be finite")
        if self.pump_nu is not None and (not math.isfinite(self.pump_nu) or self.pump_nu <= 0):
            raise ValueError(f"coupling {pair!r}: pump_nu must be positive")


@dataclass(frozen=True)
class LatticeSpec:
    """A programmable coupling graph: modes plus parametric links."""

    modes: tuple[ModeParams, ...]
    couplings: tuple[CouplingSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ValueError("mode labels must be unique")
        by_label = {m.label: m for m in self.modes}
        seen_pairs = set()
        carriers = 0
        for c in self.couplings:
            for lab in c.pair:
                if lab not in by_label:
                    raise ValueError(f"coupling references unknown mode {lab!r}")
            key = frozenset(c.pair)
            if key in seen_pairs:
                raise ValueError(f"duplicate coupling for pair {tuple(sorted(c.pair))!r}")
            seen_pairs.add(key)
            if c.carries_loop_phase:
                carriers += 1
            if c.pump_nu is not None:
                diff = abs(by_label[c.pair[0]].nu - by_label[c.pair[1]].nu)
                if abs(c.pump_nu - diff) > PUMP_TOL_GHZ:
                    raise ValueError(
                        f"coupling {c.pair!r}: pump_nu={c.pump_nu} GHz is inconsistent "
                        f"with the mode-frequency difference {diff:.6f} GHz"
                    )
        if carriers > 1:
            raise ValueError("only one coupling may carry the swept loop phase")

    @property
    def dim(self) -> int:
        return len(self.modes)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    @property
    def loop_link(self) -> CouplingSpec | None:
        for c in self.couplings:
            if c.carries_loop_phase:
                return c
        return None

    def mode_index(self, label: str) -> int:
        for i, m in enumerate(self.modes):
            if m.label == label:
                return i
        raise KeyError(f"unknown mode label {label!r}")

    def mode(self, label: str) -> ModeParams:
        return self.modes[self.mode_index(label)]

    def nu_vector(self) -> np.ndarray:
        return np.array([m.nu for m in self.modes])

    def kappa_vector(self) -> np.ndarray:
        return np.array([m.kappa for m in self.modes])

    def eta_vector(self) -> np.ndarray:
        return np.array([m.eta for m in self.modes])


def normalized_detuning(mode: ModeParams, probe_nu: float) -> complex:
    """Dimensionless detuning (probe - nu)/kappa + i/2 of one mode.

    ``probe_nu`` is in GHz like ``mode.nu``; the difference is converted to
    MHz before dividing by the linewidth.
    """
    if not math.isfinite(probe_nu):
        raise ValueError(f"probe_nu must be finite, got {probe_nu!r}")
    return (probe_nu - mode.nu) * GHZ_TO_MHZ / mode.kappa + 0.5j


def beta_from_g(g_mag: float, kappa_n: float, kappa_m: float) -> float:
    """Normalized coupling magnitude |g| / (2 sqrt(kappa_n kappa_m)).

    All three arguments are rates in the same units (MHz).
    """
    if not (math.isfinite(kappa_n) and kappa_n > 0.0):
        raise ValueError(f"kappa_n must be positive, got {kappa_n!r}")
    if not (math.isfinite(kappa_m) and kappa_m > 0.0):
        raise ValueError(f"kappa_m must be positive, got {kappa_m!r}")
    if not math.isfinite(g_mag) or g_mag < 0.0:
        raise ValueError(f"g_mag must be >= 0, got {g_mag!r}")
    return g_mag / (2.0 * math.sqrt(kappa_n * kappa_m))


def _wrap_phase(phi: float) -> float:
    return math.remainder(phi, 2.0 * math.pi)


def build_coupling_matrix(
    spec: LatticeSpec,
    probe_nu_per_mode,
    loop_phase: float = 0.0,
    phi_offset: float = 0.0,
) -> np.ndarray:
    """Complex coupling matrix M of the steady-state equations of motion.

    The diagonal holds the normalized detunings (imaginary part exactly 1/2)
    and each link (n, m) contributes beta * exp(i Phi) at [n, m] with the
    conjugate at [m, n], where Phi is the static link phase plus, on the
    designated link only, ``loop_phase + phi_offset``.

    Parameters
    ----------
    probe_nu_per_mode : array_like
        One probe frequency (GHz) per mode, in lattice order.  In a
        frequency-converting sweep all modes share a single scan offset, so
        mode n is probed at nu_n + delta.
    """
    probe = np.asarray(probe_nu_per_mode, dtype=float)
    if probe.shape != (spec.dim,):
        raise ValueError(
            f"expected {spec.dim} probe frequencies, got array of shape {probe.shape}"
        )
    extra = loop_phase + phi_offset
    if (
        spec.couplings
        and spec.loop_link is None
        and abs(_wrap_phase(extra)) > 1.0e-9
    ):
        raise ValueError("no coupling carries the loop phase, but a nonzero one was given")

    m = np.zeros((spec.dim, spec.dim), dtype=complex)
    for i, mode in enumerate(spec.modes):
        m[i, i] = normalized_detuning(mode, probe[i])
    for c in spec.couplings:
        i = spec.mode_index(c.pair[0])
        j = spec.mode_index(c.pair[1])
        phi = c.phase + (extra if c.carries_loop_phase else 0.0)
        entry = c.beta * complex(math.cos(phi), math.sin(phi))
        m[i, j] = entry
        m[j, i] = entry.conjugate()
    return m


# ---------------------------------------------------------------------------
# JSON configuration files

_MODE_KEYS = {"label", "nu_GHz", "kappa_MHz", "eta"}
_COUPLING_KEYS = {"from", "to", "beta", "phase_rad", "pump_nu_GHz", "carries_loop_phase"}


def lattice_from_dict(data: dict) -> LatticeSpec:
    """Build a :class:`LatticeSpec` from the JSON configuration schema.

    Unknown fields are rejected so that typos do not silently change what a
    simulation means.
    """
    if not isinstance(data, dict):
        raise ValueError("lattice configuration must be a JSON object")
    unknown = set(data) - {"modes", "couplings"}
    if unknown:
        raise ValueError(f"unknown lattice configuration fields: {sorted(unknown)}")
    modes = []
    for entry in data.get("modes", []):
        extra = set(entry) - _MODE_KEYS
        if extra:
            raise ValueError(f"unknown mode fields: {sorted(extra)}")
        missing = {"label", "nu_GHz", "kappa_MHz", "eta"} - set(entry)
        if missing:
            raise ValueError(f"mode entry missing fields: {sorted(missing)}")
        modes.append(
            ModeParams(
                label=entry["label"],
                nu=float(entry["nu_GHz"]),
                kappa=float(entry["kappa_MHz"]),
                eta=float(entry["eta"]),
            )
        )
    couplings = []
    for entry in data.get("couplings", []):
        extra = set(entry) - _COUPLING_KEYS
        if extra:
            raise ValueError(f"unknown coupling fields: {sorted(extra)}")
        missing = {"from", "to", "beta"} - set(entry)
        if missing:
            raise ValueError(f"coupling entry missing fields: {sorted(missing)}")
        pump = entry.get("pump_nu_GHz")
        couplings.append(
            CouplingSpec(
                pair=(entry["from"], entry["to"]),
                beta=float(entry["beta"]),
                phase=float(entry.get("phase_rad", 0.0)),
                pump_nu=None if pump is None else float(pump),
                carries_loop_phase=bool(entry.get("carries_loop_phase", False)),
            )
        )
    return LatticeSpec(modes=tuple(modes), couplings=tuple(couplings))


def lattice_to_dict(spec: LatticeSpec) -> dict:
    data: dict = {
        "modes": [
            {"label": m.label, "nu_GHz": m.nu, "kappa_MHz": m.kappa, "eta": m.eta}
            for m in spec.modes
        ],
        "couplings": [],
    }
    for c in spec.couplings:
        entry = {
            "from": c.pair[0],
            "to": c.pair[1],
            "beta": c.beta,
            "phase_rad": c.phase,
            "carries_loop_phase": c.carries_loop_phase,
        }
        if c.pump_nu is not None:
            entry["pump_nu_GHz"] = c.pump_nu
        data["couplings"].append(entry)
    return data


def load_lattice(path) -> LatticeSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return lattice_from_dict(json.load(fh))


def save_lattice(spec: LatticeSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(lattice_to_dict(spec), fh, indent=2)
        fh.write("\n")
