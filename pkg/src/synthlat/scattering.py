"""Steady-state multi-port scattering matrices of the coupled-mode model.

With the coupling matrix M (diagonal detunings, off-diagonal hopping) and
port efficiencies eta_n, the scattering matrix is

    S = i H M^{-1} H - 1,        H = diag(sqrt(eta_n)),

so an uncoupled lossless mode reflects with S = +1 on resonance and a
critically coupled one (eta = 1/2) gives S = 0.  When all eta_n = 1 the model
is lossless and S is unitary.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError
from .lattice import GHZ_TO_MHZ, LatticeSpec, build_coupling_matrix

# Condition-number limit above which the coupling matrix counts as singular.
# A physical M has imaginary part 1/2 on the diagonal and is comfortably
# invertible; the limit only catches malformed inputs.
COND_LIMIT = 1.0e12

WORKERS_ENV = "SYNTHLAT_THREADS"


@dataclass(frozen=True)
class ScatteringMatrix:
    """A scattering matrix tagged with the sweep point it belongs to.

    ``delta`` is the shared probe detuning from resonance in MHz and
    ``loop_phase`` the swept loop phase in radians; both are ``None`` for
    matrices that do not come from a sweep.
    """

    entries: np.ndarray
    delta: float | None = None
    loop_phase: float | None = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"scattering matrix must be square, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def scattering_at(
    m: np.ndarray,
    eta,
    *,
    delta: float | None = None,
    loop_phase: float | None = None,
) -> ScatteringMatrix:
    """Invert the coupling matrix and form S = i H M^{-1} H - 1."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {m.shape}")
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (m.shape[0],):
        raise ValueError("need one coupling efficiency per mode")
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise ValueError("coupling efficiencies must lie in [0, 1]")
    if np.linalg.cond(m) > COND_LIMIT:
        raise SingularMatrixError(
            f"coupling matrix is singular (delta={delta}, loop_phase={loop_phase})",
            delta=delta,
            loop_phase=loop_phase,
        )
    h = np.sqrt(eta)
    s = 1j * (h[:, None] * h[None, :]) * np.linalg.inv(m)
    s[np.diag_indices_from(s)] -= 1.0
    return ScatteringMatrix(s, delta=delta, loop_phase=loop_phase)


def analytic_plaquette_S(beta: float) -> ScatteringMatrix:
    """Closed-form scattering matrix of the lossless four-mode plaquette.

    Configuration: equal linewidths, eta = 1, probed on resonance, all four
    cross couplings (within-rung pairs uncoupled) of equal magnitude ``beta``
    and zero hopping phase.  With d = 1 + 16 beta^2 the matrix has 1/d on the
    diagonal, -1 + 1/d between the two nodes of each rung and 4 i beta / d on
    all cross terms.  Two eigenvalues equal 1 for any beta, with eigenvectors
    pinned to each rung.
    """
    if not math.isfinite(beta) or beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta!r}")
    d = 1.0 + 16.0 * beta * beta
    refl = 1.0 / d
    rung = -1.0 + 1.0 / d
    cross = 4.0j * beta / d
    s = np.array(
        [
            [refl, rung, cross, cross],
            [rung, refl, cross, cross],
            [cross, cross, refl, rung],
            [cross, cross, rung, refl],
        ]
    )
    return ScatteringMatrix(s, delta=0.0, loop_phase=0.0)


def reciprocity_defect(s: ScatteringMatrix) -> float:
    """Largest asymmetry max_{n<m} |S_nm - S_mn|; zero for reciprocal transport."""
    e = s.entries
    return float(np.max(np.abs(e - e.T))) if s.dim > 1 else 0.0


def s_eigenmodes(s: ScatteringMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of S, sorted by distance of the eigenvalue from 1.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns.  The
    ordering puts the unit-eigenvalue edge modes of the strongly coupled
    plaquette first.
    """
    vals, vecs = np.linalg.eig(s.entries)
    order = np.argsort(np.abs(vals - 1.0), kind="stable")
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class SweepResult:
    """Scattering matrices on a (detuning, loop phase) grid.

    ``matrices[i][j]`` belongs to ``phases[i]`` and ``deltas[j]``.
    """

    deltas: np.ndarray
    phases: np.ndarray
    matrices: tuple[tuple[ScatteringMatrix, ...], ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float)
        phases = np.asarray(self.phases, dtype=float)
        if deltas.ndim != 1 or deltas.size == 0:
            raise ValueError("delta grid must be a non-empty 1-d array")
        if np.any(np.diff(deltas) <= 0.0):
            raise ValueError("delta grid must be strictly increasing")
        if phases.ndim != 1 or phases.size == 0:
            raise ValueError("phase grid must be a non-empty 1-d array")
        if len(set(phases.tolist())) != phases.size:
            raise ValueError("phase grid contains duplicates")
        deltas.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "matrices", tuple(tuple(row) for row in self.matrices))

    def __iter__(self):
        for i, phi in enumerate(self.phases):
            for j, delta in enumerate(self.deltas):
                yield float(phi), float(delta), self.matrices[i][j]

    def element_magnitudes(self, out_label: str, in_label: str) -> np.ndarray:
        """|S_out,in| as a (n_phases, n_deltas) array."""
        i = self.labels.index(out_label)
        j = self.labels.index(in_label)
        return np.array(
            [[abs(s.entries[i, j]) for s in row] for row in self.matrices]
        )


def resolve_worker_count(max_workers: int | None = None) -> int:
    """Worker count for grid evaluation; SYNTHLAT_THREADS caps it (0 = all cores)."""
    if max_workers is None:
        env = os.environ.get(WORKERS_ENV, "1")
        try:
            max_workers = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    if max_workers == 0:
        return os.cpu_count() or 1
    if max_workers < 0:
        raise ValueError("worker count must be >= 0")
    return max_workers


def _phase_slice(
    spec: LatticeSpec, deltas: np.ndarray, phi: float, phi_offset: float
) -> tuple[ScatteringMatrix, ...]:
    """All scattering matrices of one loop-phase slice, vectorized over delta."""
    nu = spec.nu_vector()
    kappa = spec.kappa_vector()
    eta = spec.eta_vector()
    base = build_coupling_matrix(spec, nu, phi, phi_offset)
    off = base - np.diag(np.diag(base))
    m = off[None, :, :] + np.zeros((deltas.size, spec.dim, spec.dim), dtype=complex)
    idx = np.arange(spec.dim)
    m[:, idx, idx] = deltas[:, None] / kappa[None, :] + 0.5j
    conds = np.linalg.cond(m)
    bad = np.nonzero(conds > COND_LIMIT)[0]
    if bad.size:
        j = int(bad[0])
        raise SingularMatrixError(
            f"coupling matrix is singular at delta={deltas[j]} MHz, loop_phase={phi}",
            delta=float(deltas[j]),
            loop_phase=float(phi),
        )
    h = np.sqrt(eta)
    s = 1j * (h[:, None] * h[None, :])[None, :, :] * np.linalg.inv(m)
    s[:, idx, idx] -= 1.0
    return tuple(
        ScatteringMatrix(s[j], delta=float(deltas[j]), loop_phase=float(phi))
        for j in range(deltas.size)
    )


def scattering_sweep(
    spec: LatticeSpec,
    delta_grid,
    phases,
    phi_offset: float = 0.0,
    max_workers: int | None = None,
) -> SweepResult:
    """Scattering matrices over a detuning grid at each loop phase.

    Every mode is probed at its own resonance plus the shared scan offset
    delta (MHz).  Phase slices are independent and evaluated concurrently
    when more than one worker is allowed; the assembled result order is
    deterministic either way.
    """
    deltas = np.asarray(delta_grid, dtype=float)
    phase_arr = np.asarray(phases, dtype=float)
    if deltas.size == 0 or phase_arr.size == 0:
        raise ValueError("delta and phase grids must be non-empty")
    workers = resolve_worker_count(max_workers)
    if workers > 1 and phase_arr.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(lambda phi: _phase_slice(spec, deltas, float(phi), phi_offset), phase_arr)
            )
    else:
        rows = [_phase_slice(spec, deltas, float(phi), phi_offset) for phi in phase_arr]
    return SweepResult(deltas=deltas, phases=phase_arr, matrices=tuple(rows), labels=spec.labels)


def write_sweep_csv(result: SweepResult, path, timestamp: str | None = None) -> None:
    """Write a sweep as CSV rows delta_MHz,phi_rad,element,re,im,mag,mag_dB.

    Element names use the single-character mode labels, e.g. ``S_ab`` for
    output node a and input node b.
    """
    labels = result.labels
    if any(len(lab) != 1 for lab in labels):
        raise ValueError("sweep CSV output requires single-character mode labels")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if timestamp is not None:
            fh.write(f"# generated={timestamp}\n")
        fh.write("delta_MHz,phi_rad,element,re,im,mag,mag_dB\n")
        for phi, delta, s in result:
            for i, out in enumerate(labels):
                for j, inp in enumerate(labels):
                    v = s.entries[i, j]
                    mag = abs(v)
                    with np.errstate(divide="ignore"):
                        mag_db = 20.0 * np.log10(mag) if mag > 0.0 else -np.inf
                    fh.write(
                        f"{delta:.15g},{phi:.15g},S_{out}{inp},"
                        f"{v.real:.15g},{v.imag:.15g},{mag:.15g},{mag_db:.15g}\n"
                    )
