"""Scattering-trace data model, preprocessing, synthesis and file round trip.

A trace is the measured magnitude of one scattering element versus probe
frequency at one loop phase.  Preprocessing mirrors the calibration chain of
a network-analyzer measurement: dB -> linear conversion, division by a
recorded background (which for frequency-converting transmission is the
noise floor, so transmission ends up in noise-floor units), and removal of a
residual linear slope from reflection traces.

File format (CSV-like, one block per trace)::

    # element=S_ab
    # phi_rad=0.7853981633974483
    # units=dB
    4.14890000231,-32.11
    ...

Header keys ``element``, ``phi_rad`` and ``units`` are required per block;
``seed``, ``noise_sigma`` and ``generated`` are accepted as file-level
metadata.  Mode labels must be single characters so that ``S_ab`` is
unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateBackgroundError, TraceParseError
from .lattice import LatticeSpec

UNITS = ("dB", "linear")


@dataclass(frozen=True)
class Trace:
    """Magnitude of one scattering element on a frequency grid.

    ``element`` is the ordered pair (output node, input node); the trace is a
    reflection exactly when the two coincide.
    """

    element: tuple[str, str]
    loop_phase: float
    freq_GHz: np.ndarray
    values: np.ndarray
    units: str = "linear"

    def __post_init__(self):
        element = tuple(self.element)
        if len(element) != 2 or not all(isinstance(x, str) and x for x in element):
            raise ValueError(f"element must be an (out, in) pair of labels, got {self.element!r}")
        object.__setattr__(self, "element", element)
        if not math.isfinite(self.loop_phase):
            raise ValueError("loop_phase must be finite")
        if self.units not in UNITS:
            raise ValueError(f"units must be one of {UNITS}, got {self.units!r}")
        freq = np.array(self.freq_GHz, dtype=float)
        vals = np.array(self.values, dtype=float)
        if freq.ndim != 1 or freq.size == 0 or vals.shape != freq.shape:
            raise ValueError("freq_GHz and values must be equal-length 1-d arrays")
        if np.any(np.diff(freq) <= 0.0):
            raise ValueError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(freq)) or not np.all(np.isfinite(vals)):
            raise ValueError("trace contains non-finite entries")
        freq.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "freq_GHz", freq)
        object.__setattr__(self, "values", vals)

    @property
    def kind(self) -> str:
        return "reflection" if self.element[0] == self.element[1] else "transmission"

    def __len__(self) -> int:
        return self.freq_GHz.size


class TraceSet:
    """Traces keyed by (element, loop phase), with provenance metadata.

    Iteration and key listing are deterministic: elements row-major by label,
    then phase ascending.
    """

    def __init__(self, traces=(), provenance: dict | None = None):
        self._traces: dict[tuple[tuple[str, str], float], Trace] = {}
        self.provenance = dict(provenance or {})
        for t in traces:
            self.add(t)

    def add(self, trace: Trace) -> None:
        key = (trace.element, float(trace.loop_phase))
        if key in self._traces:
            raise ValueError(f"duplicate trace for element {trace.element} at phase {key[1]}")
        for (element, _), other in self._traces.items():
            if element == trace.element and len(other) != len(trace):
                raise ValueError(
                    f"trace for element {element} has grid length {len(trace)}, "
                    f"existing traces have {len(other)}"
                )
        self._traces[key] = trace

    def sorted_keys(self):
        return sorted(self._traces, key=lambda k: (k[0][0], k[0][1], k[1]))

    def get(self, element, loop_phase: float) -> Trace:
        return self._traces[(tuple(element), float(loop_phase))]

    def __len__(self) -> int:
        return len(self._traces)

    def __iter__(self):
        for key in self.sorted_keys():
            yield self._traces[key]

    def __contains__(self, key) -> bool:
        element, phase = key
        return (tuple(element), float(phase)) in self._traces

    def elements(self):
        return sorted({k[0] for k in self._traces})

    def phases(self):
        return sorted({k[1] for k in self._traces})

    def labels(self):
        return sorted({lab for k in self._traces for lab in k[0]})

    def subset(self, labels) -> "TraceSet":
        """Traces whose output and input nodes both lie in ``labels``."""
        wanted = set(labels)
        keep = [t for t in self if set(t.element) <= wanted]
        return TraceSet(keep, provenance=self.provenance)


def db_to_linear(trace: Trace) -> Trace:
    """Convert magnitudes from dB to linear amplitude units, 10^(v/20)."""
    if trace.units != "dB":
        raise ValueError("trace is already in linear units")
    return replace(trace, values=10.0 ** (trace.values / 20.0), units="linear")


def normalize_background(trace: Trace, background: Trace) -> Trace:
    """Divide a linear trace pointwise by a recorded background trace.

    For transmission the recorded background is the noise floor, so the
    result is expressed in noise-floor units (noise power = 1).
    """
    if trace.units != "linear" or background.units != "linear":
        raise ValueError("both traces must be in linear units")
    if not np.array_equal(trace.freq_GHz, background.freq_GHz):
        raise ValueError("trace and background frequency grids differ")
    if np.any(background.values <= 0.0):
        raise ValueError("background trace must be strictly positive")
    return replace(trace, values=trace.values / background.values)


def remove_slope(trace: Trace, window: int = 5) -> Trace:
    """Divide a reflection trace by the line through its two endpoint means.

    The line passes through the mean of the first ``window`` points and the
    mean of the last ``window`` points (frequency and value averaged alike),
    which flattens a residual linear background without touching the
    resonance features in between.
    """
    if trace.kind != "reflection":
        raise ValueError("slope removal applies to reflection traces only")
    if trace.units != "linear":
        raise ValueError("trace must be in linear units")
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(trace) < 2 * window:
        raise ValueError(f"need at least {2 * window} points for window={window}")
    f = trace.freq_GHz
    v = trace.values
    x1 = float(np.mean(f[:window]))
    y1 = float(np.mean(v[:window]))
    x2 = float(np.mean(f[-window:]))
    y2 = float(np.mean(v[-window:]))
    line = y1 + (y2 - y1) * (f - x1) / (x2 - x1)
    if np.min(np.abs(line)) < 1.0e-12 or np.min(line) * np.max(line) < 0.0:
        raise DegenerateBackgroundError("background line crosses zero inside the band")
    return replace(trace, values=v / line)


def noise_floor_model(model_mag, c_scale):
    """Measured transmission magnitude sqrt((C |S|)^2 + 1) in noise-floor units.

    Signal and noise powers add, and the noise floor is normalized to one, so
    the result is always >= 1 and increases monotonically with the model
    magnitude.  Works elementwise on arrays.
    """
    mag = np.asarray(model_mag, dtype=float)
    if np.any(mag < 0.0):
        raise ValueError("model magnitude must be >= 0")
    c = np.asarray(c_scale, dtype=float)
    if np.any(c <= 0.0):
        raise ValueError("scale factor must be positive")
    out = np.hypot(c * mag, 1.0)
    return float(out) if np.isscalar(model_mag) or np.ndim(model_mag) == 0 else out


def synthesize_traces(
    spec: LatticeSpec,
    fit_params,
    delta_grid,
    phases,
    noise_sigma: float = 0.0,
    seed: int | None = None,
) -> TraceSet:
    """Generate a full TraceSet from model parameters, optionally noisy.

    Evaluates exactly the same model the global fit uses: reflection traces
    are |S_nn|, transmission traces are rescaled through
    :func:`noise_floor_model` with the scale factor of that element.  Gaussian
    magnitude noise of standard deviation ``noise_sigma`` is added pointwise;
    the result is deterministic for a fixed ``seed``.

    Trace grids are anchored at the input mode: element (n, m) is sampled at
    frequencies nu_m + delta.
    """
    from .fitting import model_trace_values  # deferred: fitting imports this module

    if noise_sigma < 0.0:
        raise ValueError("noise_sigma must be >= 0")
    fp = fit_params
    if tuple(spec.labels) != tuple(fp.labels):
        raise ValueError("lattice and fit parameters disagree on mode labels")
    spec_links = {frozenset(c.pair) for c in spec.couplings}
    fp_links = {frozenset(link) for link in fp.links}
    if spec_links != fp_links:
        raise ValueError("lattice and fit parameters disagree on the coupling graph")

    deltas = np.asarray(delta_grid, dtype=float)
    phase_list = [float(p) for p in phases]
    rng = np.random.default_rng(seed)
    traces = []
    for out_label in fp.labels:
        for in_label in fp.labels:
            i_in = fp.labels.index(in_label)
            freq = fp.nu[i_in] + deltas * 1.0e-3
            # evaluate at the detunings a consumer reconstructs from the
            # frequency grid, so generator and fit model agree bit for bit
            deltas_eval = (freq - fp.nu[i_in]) * 1.0e3
            for phi in sorted(phase_list):
                values = model_trace_values(fp, (out_label, in_label), deltas_eval, phi)
                if noise_sigma > 0.0:
                    values = values + rng.normal(0.0, noise_sigma, size=values.shape)
                traces.append(
                    Trace(
                        element=(out_label, in_label),
                        loop_phase=phi,
                        freq_GHz=freq,
                        values=values,
                        units="linear",
                    )
                )
    return TraceSet(
        traces,
        provenance={"origin": "synthetic", "seed": seed, "noise_sigma": noise_sigma},
    )


# ---------------------------------------------------------------------------
# File I/O

_FILE_KEYS = ("seed", "noise_sigma", "generated")
_BLOCK_KEYS = ("element", "phi_rad", "units")


def _format_element(element) -> str:
    out, inp = element
    if len(out) != 1 or len(inp) != 1:
        raise ValueError("trace files require single-character mode labels")
    return f"S_{out}{inp}"


def write_traces(ts: TraceSet, path, timestamp: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if timestamp is not None:
            fh.write(f"# generated={timestamp}\n")
        seed = ts.provenance.get("seed")
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        sigma = ts.provenance.get("noise_sigma")
        if sigma is not None:
            fh.write(f"# noise_sigma={sigma!r}\n")
        for trace in ts:
            fh.write(f"# element={_format_element(trace.element)}\n")
            fh.write(f"# phi_rad={float(trace.loop_phase)!r}\n")
            fh.write(f"# units={trace.units}\n")
            for f, v in zip(trace.freq_GHz, trace.values):
                fh.write(f"{float(f)!r},{float(v)!r}\n")


def read_traces(path) -> TraceSet:
    """Parse a trace file, validating the schema strictly.

    Raises :class:`TraceParseError` with the offending line number for
    malformed headers, unknown units, missing required keys or a
    non-monotone frequency grid.
    """
    provenance: dict = {"origin": str(path)}
    ts = TraceSet(provenance=provenance)
    header: dict = {}
    rows: list[tuple[float, float]] = []
    block_line = 0
    in_block = False

    def flush(lineno):
        nonlocal header, rows, in_block
        if not in_block:
            return
        for key in _BLOCK_KEYS:
            if key not in header:
                raise TraceParseError(f"trace block is missing the {key!r} header", line=block_line)
        if not rows:
            raise TraceParseError("trace block has no data rows", line=block_line)
        freq = np.array([r[0] for r in rows])
        if np.any(np.diff(freq) <= 0.0):
            raise TraceParseError("frequency grid is not strictly increasing", line=lineno)
        element = header["element"]
        if not (element.startswith("S_") and len(element) == 4):
            raise TraceParseError(f"malformed element name {element!r}", line=block_line)
        ts.add(
            Trace(
                element=(element[2], element[3]),
                loop_phase=header["phi_rad"],
                freq_GHz=freq,
                values=np.array([r[1] for r in rows]),
                units=header["units"],
            )
        )
        header = {}
        rows = []
        in_block = False

    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        for raw in fh:
            lineno += 1
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    raise TraceParseError(f"malformed header {line!r}", line=lineno)
                key, _, value = body.partition("=")
                key = key.strip()
                value = value.strip()
                if key == "element":
                    flush(lineno)
                    in_block = True
                    block_line = lineno
                    header["element"] = value
                elif key == "phi_rad":
                    if not in_block:
                        raise TraceParseError("phi_rad header outside a trace block", line=lineno)
                    try:
                        header["phi_rad"] = float(value)
                    except ValueError:
                        raise TraceParseError(f"bad phi_rad value {value!r}", line=lineno) from None
                elif key == "units":
                    if not in_block:
                        raise TraceParseError("units header outside a trace block", line=lineno)
                    if value not in UNITS:
                        raise TraceParseError(f"unknown units {value!r}", line=lineno)
                    header["units"] = value
                elif key in _FILE_KEYS:
                    if in_block:
                        raise TraceParseError(
                            f"file-level header {key!r} inside a trace block", line=lineno
                        )
                    provenance[key] = value
                else:
                    raise TraceParseError(f"unknown header key {key!r}", line=lineno)
            else:
                if not in_block:
                    raise TraceParseError("data row before any trace header", line=lineno)
                parts = line.split(",")
                if len(parts) != 2:
                    raise TraceParseError(f"expected 'freq_GHz,value', got {line!r}", line=lineno)
                try:
                    rows.append((float(parts[0]), float(parts[1])))
                except ValueError:
                    raise TraceParseError(f"non-numeric data row {line!r}", line=lineno) from None
        flush(lineno + 1)
    if len(ts) == 0:
        raise TraceParseError("file contains no traces", line=1)
    return ts
