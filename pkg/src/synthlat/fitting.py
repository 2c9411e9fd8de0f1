"""Simultaneous reconstruction of lattice parameters from scattering traces.

The fit model evaluates |S_nm| from the coupled-mode scattering matrix at
each trace point and, for transmission elements, rescales it through the
noise-floor combination sqrt((C_nm |S|)^2 + 1).  Reflection traces are
background-normalized to one rather than to the noise floor, so they enter as
|S_nn| directly with C_nn = 1.

For the canonical four-mode plaquette the free parameters are the mode
frequencies, linewidths and coupling efficiencies (4 each), the four link
couplings, one global loop-phase offset and 12 transmission scale factors:
29 in total.  The fit runs in two stages: first with the mode parameters
frozen at their initial values, then with everything free.

Bounds are enforced by smooth reparameterization (log for kappa, beta and C,
logit for eta), which keeps the Levenberg-Marquardt iteration unconstrained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import FitError, RankDeficiencyError
from .lattice import CouplingSpec, LatticeSpec, ModeParams
from .traces import Trace, TraceSet, noise_floor_model

LABELS4 = ("a", "b", "c", "d")
LINKS4 = (("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"))

BETA_FLOOR = 1.0e-6
_ETA_CLIP = 1.0e-12
# Singular-value ratio below which the normal equations count as singular.
# Forward-difference Jacobians carry O(1e-7) relative noise, so exactly
# degenerate directions show up around this level, well separated from the
# ~1e-5 conditioning of healthy fits.
_RANK_TOL = 1.0e-8


def off_diagonal_pairs(labels) -> tuple[tuple[str, str], ...]:
    """Ordered (out, in) pairs excluding the diagonal, row-major."""
    return tuple((o, i) for o in labels for i in labels if o != i)


@dataclass(frozen=True, eq=False)
class FitParams:
    """Named parameter vector of the scattering model.

    ``nu`` is in GHz, ``kappa`` in MHz; ``beta`` holds one entry per link in
    ``links`` order and ``c_scales`` one entry per off-diagonal element in
    row-major order.  The diagonal scale factors are fixed at one and are not
    parameters.
    """

    nu: np.ndarray
    kappa: np.ndarray
    eta: np.ndarray
    beta: np.ndarray
    phi_off: float
    c_scales: np.ndarray
    labels: tuple[str, ...] = LABELS4
    links: tuple[tuple[str, str], ...] = LINKS4
    loop_link: tuple[str, str] | None = ("a", "c")

    def __post_init__(self):
        labels = tuple(self.labels)
        links = tuple(tuple(l) for l in self.links)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "links", links)
        if self.loop_link is not None:
            object.__setattr__(self, "loop_link", tuple(self.loop_link))
        n = len(labels)
        if len(set(labels)) != n or n < 1:
            raise ValueError("labels must be unique and non-empty")
        for name, size in (("nu", n), ("kappa", n), ("eta", n), ("beta", len(links))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise ValueError(f"{name} must have {size} entries, got shape {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        c = np.array(self.c_scales, dtype=float)
        n_off = n * (n - 1)
        if c.shape != (n_off,):
            raise ValueError(f"c_scales must have {n_off} entries, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c_scales", c)
        if np.any(self.kappa <= 0.0):
            raise ValueError("kappa must be positive")
        if np.any((self.eta < 0.0) | (self.eta > 1.0)):
            raise ValueError("eta must lie in [0, 1]")
        if np.any(self.beta < 0.0):
            raise ValueError("beta must be >= 0")
        if np.any(c <= 0.0):
            raise ValueError("c_scales must be positive")
        if not math.isfinite(self.phi_off):
            raise ValueError("phi_off must be finite")
        link_sets = [frozenset(l) for l in links]
        if len(set(link_sets)) != len(link_sets):
            raise ValueError("duplicate links")
        for link in links:
            if not set(link) <= set(labels):
                raise ValueError(f"link {link!r} references unknown labels")
        if self.loop_link is not None and frozenset(self.loop_link) not in link_sets:
            raise ValueError(f"loop link {self.loop_link!r} is not one of the links")

    @property
    def n_params(self) -> int:
        n = len(self.labels)
        return 3 * n + len(self.links) + 1 + n * (n - 1)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def param_names(self) -> tuple[str, ...]:
        names = [f"nu_{l}" for l in self.labels]
        names += [f"kappa_{l}" for l in self.labels]
        names += [f"eta_{l}" for l in self.labels]
        names += [f"beta_{a}{b}" for a, b in self.links]
        names.append("phi_off")
        names += [f"C_{o}{i}" for o, i in off_diagonal_pairs(self.labels)]
        return tuple(names)

    def c_for(self, out_label: str, in_label: str) -> float:
        if out_label == in_label:
            return 1.0
        idx = off_diagonal_pairs(self.labels).index((out_label, in_label))
        return float(self.c_scales[idx])

    def to_lattice(self) -> LatticeSpec:
        modes = tuple(
            ModeParams(label=l, nu=float(self.nu[i]), kappa=float(self.kappa[i]), eta=float(self.eta[i]))
            for i, l in enumerate(self.labels)
        )
        couplings = tuple(
            CouplingSpec(
                pair=link,
                beta=float(self.beta[i]),
                phase=0.0,
                carries_loop_phase=(
                    self.loop_link is not None and frozenset(link) == frozenset(self.loop_link)
                ),
            )
            for i, link in enumerate(self.links)
        )
        return LatticeSpec(modes=modes, couplings=couplings)

    @classmethod
    def canonical(cls, nu, kappa, eta, beta, phi_off=0.0, c_scales=None) -> "FitParams":
        """Four-mode plaquette with links ac, ad, bc, bd; loop phase on a-c."""
        if c_scales is None:
            c_scales = np.ones(12)
        return cls(nu=nu, kappa=kappa, eta=eta, beta=beta, phi_off=phi_off, c_scales=c_scales)


# ---------------------------------------------------------------------------
# Model evaluation


def _offdiag_matrix(fp: FitParams, loop_phase: float) -> np.ndarray:
    n = len(fp.labels)
    b = np.zeros((n, n), dtype=complex)
    loop = None if fp.loop_link is None else frozenset(fp.loop_link)
    for link, beta in zip(fp.links, fp.beta):
        i = fp.index(link[0])
        j = fp.index(link[1])
        phi = (loop_phase + fp.phi_off) if frozenset(link) == loop else 0.0
        entry = beta * complex(math.cos(phi), math.sin(phi))
        b[i, j] = entry
        b[j, i] = entry.conjugate()
    return b


def _scattering_columns(fp: FitParams, in_index: int, deltas: np.ndarray, loop_phase: float) -> np.ndarray:
    """|S_{n, in}| for all output nodes n over the detuning grid, shape (P, n)."""
    n = len(fp.labels)
    m = np.broadcast_to(_offdiag_matrix(fp, loop_phase), (deltas.size, n, n)).copy()
    idx = np.arange(n)
    m[:, idx, idx] = deltas[:, None] / fp.kappa[None, :] + 0.5j
    rhs = np.zeros((deltas.size, n, 1), dtype=complex)
    rhs[:, in_index, 0] = 1.0
    x = np.linalg.solve(m, rhs)[:, :, 0]
    h = np.sqrt(fp.eta)
    cols = 1j * h[None, :] * h[in_index] * x
    cols[:, in_index] -= 1.0
    return np.abs(cols)


def model_trace_values(fp: FitParams, element, deltas_mhz, loop_phase: float) -> np.ndarray:
    """Model magnitudes of one scattering element over a detuning grid.

    Reflection elements return |S_nn|; transmission elements are passed
    through the noise-floor combination with that element's scale factor.
    """
    out_label, in_label = element
    deltas = np.atleast_1d(np.asarray(deltas_mhz, dtype=float))
    mags = _scattering_columns(fp, fp.index(in_label), deltas, loop_phase)[:, fp.index(out_label)]
    if out_label == in_label:
        return mags
    return noise_floor_model(mags, fp.c_for(out_label, in_label))


def model_magnitude(fp: FitParams, element, delta_mhz: float, loop_phase: float) -> float:
    """Scalar model magnitude at one (element, detuning, loop phase) point."""
    return float(model_trace_values(fp, element, [delta_mhz], loop_phase)[0])


def assemble_residuals(fp: FitParams, ts: TraceSet) -> np.ndarray:
    """Residual vector model - data over every point of every trace.

    Traces are visited in deterministic order (element row-major, phase
    ascending).  Traces sharing an input node, loop phase and frequency grid
    reuse a single batched matrix solve.  All traces must already be in
    linear units.
    """
    keys = ts.sorted_keys()
    groups: dict[tuple, list] = {}
    for key in keys:
        trace = ts.get(*key)
        if trace.units != "linear":
            raise ValueError(
                f"trace {trace.element} at phase {trace.loop_phase} is in dB; "
                "convert to linear units before fitting"
            )
        gkey = (key[1], trace.element[1], trace.freq_GHz.tobytes())
        groups.setdefault(gkey, []).append((key, trace))

    chunks: dict[tuple, np.ndarray] = {}
    for (loop_phase, in_label, _), members in groups.items():
        i_in = fp.index(in_label)
        freq = members[0][1].freq_GHz
        deltas = (freq - fp.nu[i_in]) * 1.0e3
        mags = _scattering_columns(fp, i_in, deltas, loop_phase)
        for key, trace in members:
            out_label = trace.element[0]
            model = mags[:, fp.index(out_label)]
            if out_label != in_label:
                model = noise_floor_model(model, fp.c_for(out_label, in_label))
            chunks[key] = model - trace.values
    return np.concatenate([chunks[key] for key in keys])


# ---------------------------------------------------------------------------
# Parameter vector transforms


class _Layout:
    """Slices of the flat parameter vector for one FitParams template."""

    def __init__(self, template: FitParams):
        n = len(template.labels)
        n_links = len(template.links)
        self.nu = slice(0, n)
        self.kappa = slice(n, 2 * n)
        self.eta = slice(2 * n, 3 * n)
        self.beta = slice(3 * n, 3 * n + n_links)
        self.phi = 3 * n + n_links
        self.c = slice(3 * n + n_links + 1, 3 * n + n_links + 1 + n * (n - 1))
        self.size = 3 * n + n_links + 1 + n * (n - 1)


def fp_to_vector(fp: FitParams) -> np.ndarray:
    return np.concatenate([fp.nu, fp.kappa, fp.eta, fp.beta, [fp.phi_off], fp.c_scales])


def vector_to_fp(template: FitParams, p: np.ndarray) -> FitParams:
    lay = _Layout(template)
    return replace(
        template,
        nu=p[lay.nu],
        kappa=p[lay.kappa],
        eta=p[lay.eta],
        beta=p[lay.beta],
        phi_off=float(p[lay.phi]),
        c_scales=p[lay.c],
    )


def _encode(p: np.ndarray, lay: _Layout) -> np.ndarray:
    x = np.array(p, dtype=float)
    x[lay.kappa] = np.log(p[lay.kappa])
    eta = np.clip(p[lay.eta], _ETA_CLIP, 1.0 - _ETA_CLIP)
    x[lay.eta] = np.log(eta / (1.0 - eta))
    x[lay.beta] = np.log(np.maximum(p[lay.beta], BETA_FLOOR))
    x[lay.c] = np.log(p[lay.c])
    return x


def _decode(x: np.ndarray, lay: _Layout) -> np.ndarray:
    # exponents clipped so that wild trial steps decode to finite, positive
    # values; such steps are then rejected on cost rather than crashing
    p = np.array(x, dtype=float)
    p[lay.kappa] = np.exp(np.clip(x[lay.kappa], -60.0, 60.0))
    p[lay.eta] = 1.0 / (1.0 + np.exp(-np.clip(x[lay.eta], -60.0, 60.0)))
    p[lay.beta] = np.exp(np.clip(x[lay.beta], -60.0, 60.0))
    p[lay.c] = np.exp(np.clip(x[lay.c], -60.0, 60.0))
    return p


def _dphys_dx(p: np.ndarray, lay: _Layout) -> np.ndarray:
    """Jacobian diagonal of the decode map, for error propagation."""
    d = np.ones_like(p)
    d[lay.kappa] = p[lay.kappa]
    eta = p[lay.eta]
    d[lay.eta] = eta * (1.0 - eta)
    d[lay.beta] = p[lay.beta]
    d[lay.c] = p[lay.c]
    return d


def stage1_free_mask(template: FitParams) -> np.ndarray:
    """Free couplings, loop-phase offset and scale factors; mode params frozen."""
    lay = _Layout(template)
    mask = np.zeros(lay.size, dtype=bool)
    mask[lay.beta] = True
    mask[lay.phi] = True
    mask[lay.c] = True
    return mask


# ---------------------------------------------------------------------------
# Damped least squares (Levenberg-Marquardt)

LM_DEFAULTS = {
    "max_iterations": 200,
    "ftol": 1.0e-10,
    "gtol": 1.0e-10,
    "lambda0": 1.0e-3,
    "lambda_factor": 10.0,
    "lambda_max": 1.0e12,
}


@dataclass
class LMResult:
    x: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    status: str
    free_indices: np.ndarray
    cost_history: list[float]


def _fd_jacobian(residual_fn, x, free_idx, r0):
    jac = np.empty((r0.size, free_idx.size))
    for col, j in enumerate(free_idx):
        step = max(1.0e-6 * abs(x[j]), 1.0e-8)
        x_step = x.copy()
        x_step[j] += step
        jac[:, col] = (residual_fn(x_step) - r0) / step
    return jac


def _null_combinations(jac, free_idx, param_names):
    """Human-readable descriptions of unconstrained parameter directions."""
    _, svals, vt = np.linalg.svd(jac, full_matrices=False)
    scale = svals[0] if svals.size and svals[0] > 0 else 1.0
    combos = []
    for i, s in enumerate(svals):
        if s / scale < _RANK_TOL:
            vec = vt[i]
            terms = []
            for coeff, j in zip(vec, free_idx):
                if abs(coeff) > 0.05:
                    name = param_names[j] if param_names is not None else f"x[{j}]"
                    terms.append(f"{coeff:+.3f}*{name}")
            combos.append(" ".join(terms) if terms else f"direction {i}")
    return combos


# Variance assigned to unconstrained parameter directions when a singular
# covariance is tolerated instead of raised.
UNCONSTRAINED_VARIANCE = 1.0e30


def _covariance(jac, residual_norm, free_idx, param_names, strict):
    m, n_free = jac.shape
    _, svals, vt = np.linalg.svd(jac, full_matrices=False)
    scale = max(svals[0], np.finfo(float).tiny) if svals.size else np.finfo(float).tiny
    deficient = svals.size == 0 or svals[-1] / scale < _RANK_TOL
    if deficient and strict:
        combos = _null_combinations(jac, free_idx, param_names)
        raise RankDeficiencyError(
            "normal equations are singular; unconstrained combinations: "
            + "; ".join(combos),
            null_combinations=combos,
        )
    dof = max(m - n_free, 1)
    sigma2 = residual_norm**2 / dof
    good = svals / scale >= _RANK_TOL
    inv_s2 = np.where(good, 1.0 / np.where(good, svals, 1.0) ** 2, 0.0)
    cov = sigma2 * (vt.T * inv_s2) @ vt
    if deficient:
        null = vt[~good]
        cov = cov + UNCONSTRAINED_VARIANCE * (null.T @ null)
    return cov


def damped_least_squares(
    residual_fn,
    x0,
    free_mask=None,
    *,
    param_names=None,
    strict_covariance=True,
    **options,
) -> LMResult:
    """Levenberg-Marquardt minimization of ||residual_fn(x)||^2.

    Only coordinates where ``free_mask`` is True are adjusted; frozen
    coordinates keep their initial values bit-exactly.  The Jacobian is built
    by forward finite differences with step max(1e-6 |x_j|, 1e-8).  Iteration
    stops when the relative residual-norm decrease of an accepted step falls
    below ``ftol``, the gradient infinity-norm falls below ``gtol``, or
    ``max_iterations`` is reached.  Accepted steps never increase the
    residual norm.

    The covariance is sigma_res^2 (J^T J)^{-1} on the free coordinates,
    evaluated at the solution.  Singular normal equations raise
    :class:`RankDeficiencyError` naming the unconstrained combinations;
    with ``strict_covariance=False`` they instead yield a pseudo-inverse
    covariance whose null directions carry a huge variance.
    """
    opts = dict(LM_DEFAULTS)
    unknown = set(options) - set(opts)
    if unknown:
        raise TypeError(f"unknown options: {sorted(unknown)}")
    opts.update(options)

    x = np.array(x0, dtype=float)
    if free_mask is None:
        free_mask = np.ones(x.size, dtype=bool)
    free_mask = np.asarray(free_mask, dtype=bool)
    if free_mask.shape != x.shape:
        raise ValueError("free_mask must match the parameter vector")
    free_idx = np.nonzero(free_mask)[0]
    if free_idx.size == 0:
        raise ValueError("at least one parameter must be free")

    r = np.asarray(residual_fn(x), dtype=float)
    cost = float(np.linalg.norm(r))
    lam = float(opts["lambda0"])
    iterations = 0
    converged = False
    status = "max_iterations"
    cost_history = [cost]

    while iterations < opts["max_iterations"]:
        jac = _fd_jacobian(residual_fn, x, free_idx, r)
        grad = jac.T @ r
        if float(np.linalg.norm(grad, ord=np.inf)) < opts["gtol"]:
            converged = True
            status = "gtol"
            break
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        diag[diag < np.finfo(float).tiny] = 1.0

        accepted = False
        while lam <= opts["lambda_max"]:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= opts["lambda_factor"]
                continue
            x_try = x.copy()
            x_try[free_idx] += step
            r_try = np.asarray(residual_fn(x_try), dtype=float)
            cost_try = float(np.linalg.norm(r_try))
            if cost_try < cost:
                accepted = True
                break
            lam *= opts["lambda_factor"]
        if not accepted:
            # no damping gives any decrease: the achievable relative change
            # is below ftol, so the iteration has converged
            converged = True
            status = "ftol (no further decrease)"
            break

        iterations += 1
        rel_drop = (cost - cost_try) / max(cost, np.finfo(float).tiny)
        x, r, cost = x_try, r_try, cost_try
        cost_history.append(cost)
        lam = max(lam / opts["lambda_factor"], 1.0e-14)
        if rel_drop < opts["ftol"]:
            converged = True
            status = "ftol"
            break

    final_jac = _fd_jacobian(residual_fn, x, free_idx, r)
    cov = _covariance(final_jac, cost, free_idx, param_names, strict_covariance)
    return LMResult(
        x=x,
        covariance=cov,
        residual_norm=cost,
        iterations=iterations,
        converged=converged,
        status=status,
        free_indices=free_idx,
        cost_history=cost_history,
    )


# ---------------------------------------------------------------------------
# Pairwise and global fits


@dataclass
class FitResult:
    """Converged parameters with per-parameter standard errors.

    ``sigma`` maps free parameter names to standard errors on the physical
    scale (delta-method propagation through the bound transforms);
    ``covariance`` is on the transformed free coordinates.
    """

    params: FitParams
    sigma: dict[str, float]
    residual_norm: float
    iterations: int
    converged: bool
    covariance: np.ndarray
    free_names: tuple[str, ...]
    status: str


@dataclass
class GlobalFitResult:
    stage1: FitResult
    stage2: FitResult
    options: dict

    @property
    def params(self) -> FitParams:
        return self.stage2.params


def _run_masked_fit(ts, template, p_init, free_mask, lm_options, stage, strict_covariance=True):
    lay = _Layout(template)
    names = template.param_names()

    def residual(x):
        p = _decode(x, lay)
        p[~free_mask] = p_init[~free_mask]
        return assemble_residuals(vector_to_fp(template, p), ts)

    result = damped_least_squares(
        residual,
        _encode(p_init, lay),
        free_mask=free_mask,
        param_names=names,
        strict_covariance=strict_covariance,
        **lm_options,
    )
    p_out = _decode(result.x, lay)
    p_out[~free_mask] = p_init[~free_mask]
    fp_out = vector_to_fp(template, p_out)

    sigma_x = np.sqrt(np.maximum(np.diag(result.covariance), 0.0))
    dphys = _dphys_dx(p_out, lay)
    sigma = {
        names[j]: float(sigma_x[col] * dphys[j])
        for col, j in enumerate(result.free_indices)
    }
    fit = FitResult(
        params=fp_out,
        sigma=sigma,
        residual_norm=result.residual_norm,
        iterations=result.iterations,
        converged=result.converged,
        covariance=result.covariance,
        free_names=tuple(names[j] for j in result.free_indices),
        status=result.status,
    )
    if not result.converged:
        raise FitError(
            f"stage {stage} did not converge after {result.iterations} iterations "
            f"(residual norm {result.residual_norm:.6g}, status: {result.status})",
            stage=stage,
            iterations=result.iterations,
            residual_norm=result.residual_norm,
        )
    return fit, p_out


def fit_global(ts: TraceSet, init: FitParams, *, lm_options: dict | None = None) -> GlobalFitResult:
    """Two-stage simultaneous fit of all traces.

    Stage 1 holds the mode frequencies, linewidths and efficiencies at their
    initial values and fits the couplings, the loop-phase offset and the
    scale factors.  Stage 2 restarts from the stage-1 output with all
    parameters free.  Raises :class:`FitError` if either stage fails to
    converge.
    """
    lm_opts = dict(LM_DEFAULTS)
    lm_opts.update(lm_options or {})
    p0 = fp_to_vector(init)
    stage1, p1 = _run_masked_fit(ts, init, p0, stage1_free_mask(init), lm_opts, stage=1)
    all_free = np.ones(p0.size, dtype=bool)
    stage2, _ = _run_masked_fit(ts, init, p1, all_free, lm_opts, stage=2)
    return GlobalFitResult(stage1=stage1, stage2=stage2, options=lm_opts)


def _smooth(values: np.ndarray, width: int = 5) -> np.ndarray:
    if values.size < width:
        return values
    # edge padding keeps the moving average flat at the band edges
    padded = np.pad(values, width // 2, mode="edge")
    return np.convolve(padded, np.ones(width) / width, mode="valid")[: values.size]


def _reflection_guess(trace: Trace):
    """(nu, kappa, split) estimates from one linear reflection trace.

    ``split`` is None when the trace shows no resolved mode splitting.
    """
    f = trace.freq_GHz
    v = _smooth(trace.values)
    span_mhz = (f[-1] - f[0]) * 1.0e3
    interior = np.arange(1, v.size - 1)
    is_min = (v[interior] < v[interior - 1]) & (v[interior] <= v[interior + 1])
    minima = interior[is_min]
    minima = minima[np.argsort(v[minima])]
    if minima.size >= 2:
        lead = sorted(minima[:2])
        nu = 0.5 * (f[lead[0]] + f[lead[1]])
        split_mhz = (f[lead[1]] - f[lead[0]]) * 1.0e3
        i_dip = int(minima[0])
    else:
        i_dip = int(np.argmin(v))
        nu = f[i_dip]
        split_mhz = None
    # amplitude FWHM of the deepest dip approximates the linewidth
    half_level = 0.5 * (v[i_dip] + float(np.median(v)))
    left = i_dip
    while left > 0 and v[left] < half_level:
        left -= 1
    right = i_dip
    while right < v.size - 1 and v[right] < half_level:
        right += 1
    kappa = np.clip((f[right] - f[left]) * 1.0e3, span_mhz / 200.0, span_mhz / 2.0)
    return float(nu), float(kappa), None if split_mhz is None else float(split_mhz)


def _single_mode_prefit(trace: Trace, nu0: float, kappa0: float, lm_opts) -> tuple[float, float, float]:
    """(nu, kappa, eta) from one reflection trace alone.

    Magnitude-only reflection of an uncoupled mode cannot distinguish eta
    from 1 - eta; the fit converges to whichever branch the 0.7 start leads
    to.  Coupled data later resolves the ambiguity where it matters.
    """
    label = trace.element[0]
    single = FitParams(
        nu=[nu0], kappa=[kappa0], eta=[0.7], beta=[], phi_off=0.0, c_scales=[],
        labels=(label,), links=(), loop_link=None,
    )
    one = TraceSet([trace])
    lay = _Layout(single)
    free = np.ones(lay.size, dtype=bool)
    free[lay.phi] = False
    fit, _ = _run_masked_fit(
        one, single, fp_to_vector(single), free, lm_opts,
        stage=f"prefit-{label}", strict_covariance=False,
    )
    return float(fit.params.nu[0]), float(fit.params.kappa[0]), float(fit.params.eta[0])


def pairwise_fit(ts: TraceSet, *, lm_options: dict | None = None) -> FitResult:
    """Fit the two-mode model to traces of a single activated link.

    Initial estimates come from the traces themselves: resonance positions
    and linewidths from the reflection dips, the coupling from the splitting
    of the hybridized resonances, and the scale factors from the transmission
    peaks.  When the reflections show resolved splitting, the fit first runs
    with the coupling efficiencies held at 0.7 (which steers the
    magnitude-only problem past a shallow local minimum) and then frees
    them.  Without resolved splitting each mode is prefit on its own
    reflection before the joint fit.  The loop-phase offset is always
    frozen: a single link closes no loop, so its phase is gauge.  Returns a
    :class:`FitResult` whose params are a two-mode :class:`FitParams`.
    """
    labels = tuple(ts.labels())
    if len(labels) != 2:
        raise ValueError(f"pairwise fit expects traces covering two modes, found {labels}")
    lm_opts = dict(LM_DEFAULTS)
    lm_opts.update(lm_options or {})
    phases = ts.phases()
    nus, kappas, splits = [], [], []
    for lab in labels:
        trace = ts.get((lab, lab), phases[0])
        if trace.units != "linear":
            raise ValueError("pairwise fit requires linear-unit traces")
        nu, kappa, split = _reflection_guess(trace)
        nus.append(nu)
        kappas.append(kappa)
        splits.append(split)
    resolved = [s for s in splits if s is not None]
    etas = [0.7, 0.7]
    if resolved:
        split = float(np.mean(resolved))
        beta0 = float(np.clip(split / (2.0 * math.sqrt(kappas[0] * kappas[1])), 0.05, 5.0))
    else:
        # unresolved splitting: the modes are nearly independent, so anchor
        # each on its own reflection and start from a weak coupling
        beta0 = 0.05
        for i, lab in enumerate(labels):
            nus[i], kappas[i], etas[i] = _single_mode_prefit(
                ts.get((lab, lab), phases[0]), nus[i], kappas[i], lm_opts
            )
    link = (labels[0], labels[1])
    base = FitParams(
        nu=nus,
        kappa=kappas,
        eta=etas,
        beta=[beta0],
        phi_off=0.0,
        c_scales=[1.0, 1.0],
        labels=labels,
        links=(link,),
        loop_link=link,
    )
    # scale-factor guesses compare transmission peaks against the C=1 model
    c0 = []
    for out_label, in_label in off_diagonal_pairs(labels):
        trace = ts.get((out_label, in_label), phases[0])
        deltas = (trace.freq_GHz - base.nu[base.index(in_label)]) * 1.0e3
        model_peak = float(
            np.max(model_trace_values(base, (out_label, in_label), deltas, phases[0]))
        )
        signal = math.sqrt(max(float(np.max(trace.values)) ** 2 - 1.0, 1.0e-2))
        c0.append(signal / max(math.sqrt(max(model_peak**2 - 1.0, 1.0e-4)), 0.05))
    init = replace(base, c_scales=np.clip(c0, 1.0e-2, 1.0e4))

    lay = _Layout(init)
    p_start = fp_to_vector(init)
    if resolved:
        geom_free = np.ones(lay.size, dtype=bool)
        geom_free[lay.phi] = False
        geom_free[lay.eta] = False
        _, p_start = _run_masked_fit(
            ts, init, p_start, geom_free, lm_opts,
            stage="pairwise-1", strict_covariance=False,
        )
    free = np.ones(lay.size, dtype=bool)
    free[lay.phi] = False
    fit, _ = _run_masked_fit(
        ts, init, p_start, free, lm_opts, stage="pairwise-2", strict_covariance=False
    )
    return fit


# ---------------------------------------------------------------------------
# Fit report


def fit_report_dict(result: GlobalFitResult, init: FitParams) -> dict:
    """JSON-ready report of both fit stages plus the options actually used."""

    def stage_dict(fit: FitResult) -> dict:
        names = fit.params.param_names()
        values = fp_to_vector(fit.params)
        return {
            "parameters": {name: float(v) for name, v in zip(names, values)},
            "sigma": dict(fit.sigma),
            "free": list(fit.free_names),
            "residual_norm": fit.residual_norm,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "status": fit.status,
        }

    names = init.param_names()
    mask = stage1_free_mask(init)
    return {
        "stage1": stage_dict(result.stage1),
        "stage2": stage_dict(result.stage2),
        "stage1_frozen": [n for n, free in zip(names, mask) if not free],
        "options": {k: v for k, v in result.options.items()},
    }
