"""Creutz-ladder band theory and single-plaquette dynamics.

The ladder has two legs (a, b) per unit cell with diagonal hopping t_d,
vertical hopping t_v and horizontal hopping t_h carrying a phase phi/2, so
that phi is the flux through each plaquette.  The momentum-space Hamiltonian
used here,

    h(k) = [[-2 t_h cos(k - phi/2),   -(2 t_d cos k + t_v)],
            [-(2 t_d cos k + t_v),    -2 t_h cos(k + phi/2)]],

is obtained by Fourier transform of the real-space ladder and is validated
against exact diagonalization of finite periodic ladders in the test suite.
At the strong-coupling point (t_v = 0, t_d = t_h, phi = pi) both bands are
exactly flat at -2 t_h and +2 t_h.

Single-plaquette quantities use the fixed basis ordering (a1, b1, a2, b2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateBandError

PLAQUETTE_NODES = ("a1", "b1", "a2", "b2")

_SIGMA = {
    "TR": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "C": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "S": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
}

_STATE_NORM_TOL = 1.0e-12


@dataclass(frozen=True)
class CreutzParams:
    """Hopping rates and plaquette flux of the ladder (dimensionless units)."""

    t_d: float
    t_v: float
    t_h: float
    phi: float

    def __post_init__(self):
        for name in ("t_d", "t_v", "t_h"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")
        if not math.isfinite(self.phi):
            raise ValueError("phi must be finite")


def bloch_hamiltonian(p: CreutzParams, k: float) -> np.ndarray:
    """2x2 momentum-space Hamiltonian at quasimomentum k."""
    if not math.isfinite(k):
        raise ValueError("k must be finite")
    off = -(2.0 * p.t_d * math.cos(k) + p.t_v)
    return np.array(
        [
            [-2.0 * p.t_h * math.cos(k - 0.5 * p.phi), off],
            [off, -2.0 * p.t_h * math.cos(k + 0.5 * p.phi)],
        ],
        dtype=complex,
    )


def band_structure(p: CreutzParams, k_grid) -> np.ndarray:
    """Band energies over k_grid as an (n_k, 2) array, lower band first."""
    ks = np.asarray(k_grid, dtype=float)
    if ks.size == 0:
        raise ValueError("k grid must be non-empty")
    bands = np.empty((ks.size, 2))
    for i, k in enumerate(ks.ravel()):
        bands[i] = np.linalg.eigvalsh(bloch_hamiltonian(p, float(k)))
    return bands


def real_space_hamiltonian(p: CreutzParams, n_cells: int, periodic: bool = True) -> np.ndarray:
    """Single-particle ladder Hamiltonian on n_cells unit cells.

    Basis ordering is (a_0, b_0, a_1, b_1, ...).  Serves as the exact
    diagonalization oracle for :func:`bloch_hamiltonian` and hosts the
    flat-band Wannier states on open chains.
    """
    if n_cells < 2:
        raise ValueError("need at least two unit cells")
    dim = 2 * n_cells
    h = np.zeros((dim, dim), dtype=complex)

    def a(n):
        return 2 * (n % n_cells)

    def b(n):
        return 2 * (n % n_cells) + 1

    def add(x, y, amp):
        h[x, y] += amp
        h[y, x] += np.conj(amp)

    t_h = p.t_h * cmath.exp(0.5j * p.phi)
    links = range(n_cells) if periodic else range(n_cells - 1)
    for n in links:
        m = n + 1
        add(b(n), a(m), -p.t_d)
        add(a(n), b(m), -p.t_d)
        add(b(n), a(n), -0.5 * p.t_v)
        add(a(m), b(m), -0.5 * p.t_v)
        add(a(m), a(n), -t_h)
        add(b(n), b(m), -t_h)
    return h


def check_symmetry(p: CreutzParams, kind: str, k_grid) -> float:
    """Largest violation of one discrete-symmetry relation over the k grid.

    kind "TR": sigma_x h(k) sigma_x = h(-k)      (time reversal)
    kind "C":  sigma_z h(k) sigma_z = -h(-k)     (particle-hole)
    kind "S":  sigma_y h(k) sigma_y = -h(k)      (chiral)

    Violations are measured in operator (spectral) norm.  The grid must be
    symmetric under k -> -k.
    """
    if kind not in _SIGMA:
        raise ValueError(f"kind must be one of {sorted(_SIGMA)}, got {kind!r}")
    ks = np.asarray(k_grid, dtype=float)
    if ks.size == 0:
        raise ValueError("k grid must be non-empty")
    if not np.allclose(np.sort(ks), np.sort(-ks), atol=1.0e-12, rtol=0.0):
        raise ValueError("k grid must be symmetric under k -> -k")
    sigma = _SIGMA[kind]
    worst = 0.0
    for k in ks.ravel():
        h_k = bloch_hamiltonian(p, float(k))
        lhs = sigma @ h_k @ sigma
        if kind == "TR":
            rhs = bloch_hamiltonian(p, float(-k))
        elif kind == "C":
            rhs = -bloch_hamiltonian(p, float(-k))
        else:
            rhs = -h_k
        worst = max(worst, float(np.linalg.norm(lhs - rhs, ord=2)))
    return worst


def zak_phase(p: CreutzParams, band: str = "lower", k_points: int = 256) -> float:
    """Zak phase of one band from a discretized Wilson loop, in (-pi, pi].

    Uses the periodic gauge with both orbitals at intracell position zero:
    h(k) is 2*pi periodic, so the loop closes on the first eigenvector
    without an extra embedding phase.  The result is gauge invariant because
    every eigenvector enters once as a bra and once as a ket.
    """
    if band not in ("lower", "upper"):
        raise ValueError(f"band must be 'lower' or 'upper', got {band!r}")
    if k_points < 100:
        raise ValueError("need at least 100 k points across the Brillouin zone")
    col = 0 if band == "lower" else 1
    ks = -math.pi + 2.0 * math.pi * np.arange(k_points) / k_points
    vecs = np.empty((k_points, 2), dtype=complex)
    gap = np.inf
    for i, k in enumerate(ks):
        vals, u = np.linalg.eigh(bloch_hamiltonian(p, float(k)))
        gap = min(gap, float(vals[1] - vals[0]))
        vecs[i] = u[:, col]
    if gap < 1.0e-8:
        raise DegenerateBandError(
            f"band gap closes on the k grid (min gap {gap:.3e}); Zak phase undefined"
        )
    overlaps = np.einsum("ij,ij->i", np.conj(vecs), np.roll(vecs, -1, axis=0))
    product = complex(np.prod(overlaps))
    if abs(product) < 1.0e-12:
        raise DegenerateBandError("Wilson loop collapsed; k grid too coarse")
    phase = -float(np.angle(product))
    if phase < -math.pi + 1.0e-9:
        phase += 2.0 * math.pi
    return phase


# ---------------------------------------------------------------------------
# Flat-band Wannier states on the open ladder (strong-coupling point)


def wannier_state(n_cells: int, cell: int) -> np.ndarray:
    """Lower-flat-band Wannier state centred between cells ``cell`` and ``cell+1``.

    Cells are numbered 1..n_cells; valid centres have 1 <= cell <= n_cells-1.
    The returned vector is an exact eigenstate, with eigenvalue -2, of
    ``real_space_hamiltonian(CreutzParams(1, 0, 1, pi), n_cells, periodic=False)``.
    """
    if not 1 <= cell <= n_cells - 1:
        raise IndexError(f"cell must lie in [1, {n_cells - 1}], got {cell}")
    e_plus = cmath.exp(0.25j * math.pi)
    e_minus = cmath.exp(-0.25j * math.pi)
    v = np.zeros(2 * n_cells, dtype=complex)
    c0 = cell - 1
    v[2 * c0] = -0.5 * e_minus        # a_n
    v[2 * c0 + 1] = -0.5 * e_plus     # b_n
    v[2 * c0 + 2] = -0.5 * e_plus     # a_{n+1}
    v[2 * c0 + 3] = -0.5 * e_minus    # b_{n+1}
    return v


def wannier_center(n_cells: int, cell: int) -> float:
    """Expectation of the cell-position operator in the Wannier state: cell + 1/2."""
    v = wannier_state(n_cells, cell)
    positions = np.repeat(np.arange(1, n_cells + 1, dtype=float), 2)
    return float(np.real(np.sum(positions * np.abs(v) ** 2)))


# ---------------------------------------------------------------------------
# Single plaquette: zero modes, caging, polarization dynamics


def plaquette_hamiltonian() -> np.ndarray:
    """Strong-coupling single-plaquette Hamiltonian over (a1, b1, a2, b2).

    Couplings: unit-magnitude diagonal hops b1-a2 and a1-b2, and horizontal
    hops a1-a2 and b1-b2 with a +/- pi/2 phase, i.e. flux pi through the
    plaquette.  The spectrum is {-2, 0, 0, +2} with both zero modes pinned to
    a single rung.
    """
    return np.array(
        [
            [0.0, 0.0, -1.0j, -1.0],
            [0.0, 0.0, -1.0, 1.0j],
            [1.0j, -1.0, 0.0, 0.0],
            [-1.0, -1.0j, 0.0, 0.0],
        ]
    )


@lru_cache(maxsize=1)
def _plaquette_eigensystem() -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(plaquette_hamiltonian())
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return vals, vecs


def _node_index(node: str) -> int:
    try:
        return PLAQUETTE_NODES.index(node)
    except ValueError:
        raise ValueError(f"node must be one of {PLAQUETTE_NODES}, got {node!r}") from None


def _as_state(state) -> np.ndarray:
    s = np.asarray(state, dtype=complex).reshape(-1)
    if s.shape != (4,):
        raise ValueError(f"plaquette state must have 4 amplitudes, got shape {s.shape}")
    norm = float(np.linalg.norm(s))
    if abs(norm - 1.0) > _STATE_NORM_TOL:
        raise ValueError(f"state must be normalized (|norm - 1| = {abs(norm - 1.0):.3e})")
    return s


def basis_state(node: str) -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    v[_node_index(node)] = 1.0
    return v


def zero_mode_state(side: str) -> np.ndarray:
    """Zero-energy eigenstate localized on the left or right rung."""
    e_plus = cmath.exp(0.25j * math.pi)
    e_minus = cmath.exp(-0.25j * math.pi)
    if side == "L":
        amps = (e_minus, e_plus, 0.0, 0.0)
    elif side == "R":
        amps = (0.0, 0.0, e_plus, e_minus)
    else:
        raise ValueError(f"side must be 'L' or 'R', got {side!r}")
    return np.array(amps, dtype=complex) / math.sqrt(2.0)


def chi_state() -> np.ndarray:
    """Left-rung excitation orthogonal to the left zero mode: (|a1> - i |b1>)/sqrt(2)."""
    return np.array([1.0, -1.0j, 0.0, 0.0], dtype=complex) / math.sqrt(2.0)


def evolve_state(state, t: float) -> np.ndarray:
    """Apply exp(-i H t) of the plaquette Hamiltonian; preserves the norm."""
    s = _as_state(state)
    vals, vecs = _plaquette_eigensystem()
    coeff = vecs.conj().T @ s
    return vecs @ (np.exp(-1j * vals * float(t)) * coeff)


def position_expectation(state) -> float:
    """Rung-position expectation <m> with m = diag(1, 1, 2, 2)."""
    s = _as_state(state)
    weights = np.array([1.0, 1.0, 2.0, 2.0])
    return float(np.sum(weights * np.abs(s) ** 2))


def time_averaged_position(state, t_total: float = 0.5 * math.pi) -> float:
    """Exact time average of <m(t)> over [0, t_total].

    Expands the state in the plaquette eigenbasis, where each interference
    term oscillates at a Bohr frequency, and integrates each term in closed
    form.  The default window is one period of the fastest observable
    oscillation.
    """
    s = _as_state(state)
    if not (math.isfinite(t_total) and t_total > 0.0):
        raise ValueError("t_total must be positive")
    vals, vecs = _plaquette_eigensystem()
    coeff = vecs.conj().T @ s
    m_eig = vecs.conj().T @ np.diag([1.0, 1.0, 2.0, 2.0]) @ vecs
    # <m(t)> = sum_ij w_ij e^{i (E_i - E_j) t}; average each term in closed form
    phase = (vals[:, None] - vals[None, :]) * t_total
    small = np.abs(phase) < 1.0e-12
    factor = np.where(small, 1.0, (np.exp(1j * phase) - 1.0) / np.where(small, 1.0, 1j * phase))
    weight = np.conj(coeff)[:, None] * coeff[None, :] * m_eig
    return float(np.real(np.sum(weight * factor)))


def caging_check(start_node: str, target_node: str, t_grid) -> float:
    """Maximum transfer probability |<target|psi(t)>|^2 over the time grid.

    At flux pi, destructive interference cages an excitation: starting from
    a1 the probability on a2 never exceeds 1/4, and a zero-mode excitation
    never leaves its rung.
    """
    i_start = _node_index(start_node)
    i_target = _node_index(target_node)
    if i_start == i_target:
        raise ValueError("start and target nodes must be distinct")
    ts = np.asarray(t_grid, dtype=float)
    if ts.size == 0:
        raise ValueError("time grid must be non-empty")
    vals, vecs = _plaquette_eigensystem()
    coeff = vecs.conj().T @ basis_state(PLAQUETTE_NODES[i_start])
    phases = np.exp(-1j * np.outer(ts.ravel(), vals))
    amps = phases @ (vecs[i_target] * coeff)
    return float(np.max(np.abs(amps) ** 2))
