import dataclasses

import numpy as np
import pytest

from synthlat import (
    FitError,
    RankDeficiencyError,
    assemble_residuals,
    beta_from_g,
    build_coupling_matrix,
    damped_least_squares,
    db_to_linear,
    fit_global,
    fit_report_dict,
    model_magnitude,
    model_trace_values,
    noise_floor_model,
    pairwise_fit,
    scattering_at,
    stage1_free_mask,
    synthesize_traces,
)
from synthlat.fitting import FitParams, _Layout, _decode, _encode, fp_to_vector, vector_to_fp
from synthlat.traces import Trace, TraceSet

from conftest import (
    FOUR_PHASES,
    PAIRWISE_ETA,
    PAIRWISE_KAPPA,
    PAIRWISE_NU,
    PAIRWISE_BETA,
)

GRID = np.linspace(-10.0, 10.0, 401)


def two_mode_params(link=("a", "c"), beta=0.8561, c_scales=(20.1, 8.4)):
    idx = {"a": 0, "b": 1, "c": 2, "d": 3}
    i, j = idx[link[0]], idx[link[1]]
    return FitParams(
        nu=[PAIRWISE_NU[i], PAIRWISE_NU[j]],
        kappa=[PAIRWISE_KAPPA[i], PAIRWISE_KAPPA[j]],
        eta=[PAIRWISE_ETA[i], PAIRWISE_ETA[j]],
        beta=[beta],
        phi_off=0.0,
        c_scales=list(c_scales),
        labels=link,
        links=(link,),
        loop_link=link,
    )


class TestFitParams:
    def test_parameter_count(self, device_params):
        assert device_params.n_params == 29
        assert len(device_params.param_names()) == 29

    def test_names(self, device_params):
        names = device_params.param_names()
        assert names[0] == "nu_a"
        assert names[12] == "beta_ac"
        assert names[16] == "phi_off"
        assert names[17] == "C_ab"
        assert names[-1] == "C_dc"

    def test_c_for(self, device_params):
        assert device_params.c_for("a", "a") == 1.0
        assert device_params.c_for("a", "b") == 19.1
        assert device_params.c_for("d", "c") == 7.2

    def test_vector_roundtrip(self, device_params):
        p = fp_to_vector(device_params)
        again = vector_to_fp(device_params, p)
        assert np.array_equal(fp_to_vector(again), p)

    def test_transform_roundtrip(self, device_params):
        lay = _Layout(device_params)
        p = fp_to_vector(device_params)
        assert np.allclose(_decode(_encode(p, lay), lay), p, rtol=1e-14, atol=0)

    @pytest.mark.parametrize(
        "field,value",
        [("kappa", [0.0, 1, 1, 1]), ("eta", [1.2, 0.5, 0.5, 0.5]), ("beta", [-0.1, 1, 1, 1])],
    )
    def test_invalid(self, device_params, field, value):
        with pytest.raises(ValueError):
            dataclasses.replace(device_params, **{field: np.array(value, float)})

    def test_stage1_mask(self, device_params):
        mask = stage1_free_mask(device_params)
        names = np.array(device_params.param_names())
        free = set(names[mask])
        assert free == {"phi_off"} | {n for n in names if n.startswith(("beta_", "C_"))}
        assert mask.sum() == 17


class TestModelMagnitude:
    def test_uncoupled_lossless_reflection(self):
        fp = FitParams(
            nu=[4.0], kappa=[1.0], eta=[1.0], beta=[], phi_off=0.0, c_scales=[],
            labels=("a",), links=(), loop_link=None,
        )
        assert model_magnitude(fp, ("a", "a"), 0.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_transmission_never_below_one(self, device_params):
        rng = np.random.default_rng(8)
        for _ in range(20):
            el = tuple(rng.choice(list("abcd"), 2, replace=False))
            v = model_magnitude(
                fp=device_params,
                element=el,
                delta_mhz=rng.uniform(-10, 10),
                loop_phase=rng.uniform(0, 2 * np.pi),
            )
            assert v >= 1.0

    def test_matches_scattering_composition(self, device_params, device_lattice):
        delta, phi = 0.0, np.pi
        probe = device_params.nu + delta * 1e-3
        m = build_coupling_matrix(device_lattice, probe, phi, device_params.phi_off)
        s = scattering_at(m, device_params.eta)
        raw = abs(s.entries[1, 0])
        expected = noise_floor_model(raw, device_params.c_for("b", "a"))
        got = model_magnitude(device_params, ("b", "a"), delta, phi)
        assert got == pytest.approx(expected, abs=1e-12)


class TestAssembleResiduals:
    def test_generator_identity(self, device_lattice, device_params):
        ts = synthesize_traces(device_lattice, device_params, GRID, FOUR_PHASES)
        r = assemble_residuals(device_params, ts)
        assert r.size == 64 * 401
        assert np.max(np.abs(r)) <= 1e-12
        assert np.linalg.norm(r) <= 1e-10

    def test_db_traces_rejected(self, device_params):
        t = Trace(("a", "a"), 0.0, np.array([4.158, 4.159]), np.array([0.0, -3.0]), "dB")
        with pytest.raises(ValueError, match="dB"):
            assemble_residuals(device_params, TraceSet([t]))

    def test_c_scale_touches_only_its_element(self, device_lattice, device_params):
        grid = np.linspace(-5, 5, 41)
        ts = synthesize_traces(device_lattice, device_params, grid, [0.0, np.pi])
        bumped = dataclasses.replace(
            device_params,
            c_scales=device_params.c_scales * np.array([1.1] + [1.0] * 11),
        )
        r = assemble_residuals(bumped, ts)
        keys = ts.sorted_keys()
        sizes = [len(ts.get(*k)) for k in keys]
        offsets = np.cumsum([0] + sizes)
        for key, start, stop in zip(keys, offsets[:-1], offsets[1:]):
            chunk = np.max(np.abs(r[start:stop]))
            if key[0] == ("a", "b"):
                assert chunk > 1e-3
            else:
                # only grid-anchoring float noise, no scale-factor leakage
                assert chunk < 1e-10


class TestDampedLeastSquares:
    def test_linear_problem(self):
        res = damped_least_squares(lambda x: x - 3.0, np.array([0.0]))
        assert res.converged
        assert abs(res.x[0] - 3.0) <= 1e-9
        assert res.iterations <= 4

    def test_linear_problem_two_iterations(self):
        res = damped_least_squares(lambda x: x - 3.0, np.array([0.0]), max_iterations=2)
        assert abs(res.x[0] - 3.0) <= 1e-6

    def test_quadratic_bowl_matches_normal_equations(self):
        a = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
        b = np.array([1.0, 2.0, 3.0])
        res = damped_least_squares(lambda x: a @ x - b, np.zeros(2))
        exact, *_ = np.linalg.lstsq(a, b, rcond=None)
        assert np.max(np.abs(res.x - exact)) <= 1e-10

    def test_frozen_coordinate_untouched(self):
        target = np.array([3.0, -1.0])

        def residual(x):
            return x - target

        mask = np.array([True, False])
        res = damped_least_squares(residual, np.array([0.0, 0.5]), free_mask=mask)
        assert res.x[1] == 0.5
        assert abs(res.x[0] - 3.0) <= 1e-9

    def test_monotone_descent(self):
        a = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [1.0, 1.0]])
        b = np.array([1.0, 2.0, 3.0, -1.0])

        def residual(x):
            return np.tanh(a @ x) - np.tanh(b)

        res = damped_least_squares(residual, np.array([2.0, -3.0]))
        costs = np.array(res.cost_history)
        assert np.all(np.diff(costs) <= 0.0)

    def test_rank_deficiency_named(self):
        a = np.array([[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]])
        b = np.array([1.0, 2.0, 3.0])
        with pytest.raises(RankDeficiencyError) as err:
            damped_least_squares(
                lambda x: a @ x - b, np.zeros(2), param_names=["p0", "p1"]
            )
        assert err.value.null_combinations
        assert "p0" in err.value.null_combinations[0] or "p1" in err.value.null_combinations[0]

    def test_lenient_covariance_flags_unconstrained(self):
        a = np.array([[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]])
        b = np.array([1.0, 2.0, 3.0])
        res = damped_least_squares(
            lambda x: a @ x - b, np.zeros(2), strict_covariance=False
        )
        assert np.max(np.diag(res.covariance)) > 1e3

    def test_unknown_option(self):
        with pytest.raises(TypeError):
            damped_least_squares(lambda x: x, np.zeros(1), bogus=1)


class TestPairwiseFit:
    def test_strong_link_round_trip(self):
        truth = two_mode_params()
        ts = synthesize_traces(truth.to_lattice(), truth, GRID, [0.0], seed=3)
        fit = pairwise_fit(ts)
        assert abs(fit.params.beta[0] - truth.beta[0]) <= 1e-6
        assert np.max(np.abs(fit.params.nu - truth.nu)) <= 1e-8
        assert np.max(np.abs(fit.params.kappa / truth.kappa - 1.0)) <= 1e-6
        assert np.max(np.abs(fit.params.eta - truth.eta)) <= 1e-6

    def test_zero_coupling(self):
        truth = two_mode_params(beta=0.0)
        ts = synthesize_traces(truth.to_lattice(), truth, GRID, [0.0], seed=4)
        fit = pairwise_fit(ts)
        assert fit.params.beta[0] <= 1e-3

    def test_split_resonances_track_coupling_rate(self):
        # deep strong coupling: the reflection dips sit at +/- g/2, so their
        # separation reads off the coupling rate directly
        truth = FitParams(
            nu=[4.0, 7.0], kappa=[0.5, 0.5], eta=[0.7, 0.7], beta=[3.0],
            phi_off=0.0, c_scales=[5.0, 5.0],
            labels=("a", "c"), links=(("a", "c"),), loop_link=("a", "c"),
        )
        g = 2.0 * truth.beta[0] * np.sqrt(truth.kappa[0] * truth.kappa[1])
        vals = model_trace_values(truth, ("a", "a"), GRID, 0.0)
        minima = [
            j for j in range(1, GRID.size - 1)
            if vals[j] < vals[j - 1] and vals[j] <= vals[j + 1]
        ]
        minima = sorted(minima, key=lambda j: vals[j])[:2]
        split = abs(GRID[minima[0]] - GRID[minima[1]])
        assert split == pytest.approx(g, rel=0.05)

    def test_beta_definition_consistency(self):
        truth = two_mode_params()
        ts = synthesize_traces(truth.to_lattice(), truth, GRID, [0.0], seed=3)
        fit = pairwise_fit(ts)
        g = 2.0 * fit.params.beta[0] * np.sqrt(fit.params.kappa[0] * fit.params.kappa[1])
        assert beta_from_g(g, *fit.params.kappa) == pytest.approx(
            fit.params.beta[0], abs=1e-6
        )

    def test_wrong_label_count(self, device_lattice, device_params):
        ts = synthesize_traces(device_lattice, device_params, np.linspace(-2, 2, 5), [0.0])
        with pytest.raises(ValueError, match="two modes"):
            pairwise_fit(ts)


class TestGlobalFit:
    def test_fixed_point(self, device_lattice, device_params):
        ts = synthesize_traces(device_lattice, device_params, GRID, FOUR_PHASES)
        result = fit_global(ts, device_params)
        assert result.stage1.converged and result.stage2.converged
        assert result.stage2.residual_norm <= 1e-8
        drift = np.max(np.abs(fp_to_vector(result.params) - fp_to_vector(device_params)))
        assert drift <= 1e-8

    def test_stage1_freezes_mode_parameters(self, device_lattice, device_params, pairwise_init):
        grid = np.linspace(-10, 10, 101)
        ts = synthesize_traces(device_lattice, device_params, grid, FOUR_PHASES)
        result = fit_global(ts, pairwise_init)
        for field in ("nu", "kappa", "eta"):
            assert np.array_equal(
                getattr(result.stage1.params, field), getattr(pairwise_init, field)
            )
        assert result.stage1.params.phi_off != pairwise_init.phi_off

    def test_phase_offset_periodicity(self, device_lattice, device_params):
        grid = np.linspace(-10, 10, 101)
        ts = synthesize_traces(device_lattice, device_params, grid, FOUR_PHASES)
        shifted = dataclasses.replace(device_params, phi_off=device_params.phi_off + 2 * np.pi)
        r1 = fit_global(ts, device_params)
        r2 = fit_global(ts, shifted)
        assert r2.stage2.residual_norm == pytest.approx(
            r1.stage2.residual_norm, abs=1e-9
        )
        dphi = r2.params.phi_off - r1.params.phi_off
        assert dphi == pytest.approx(2 * np.pi, abs=1e-6)

    def test_sigma_reported_for_free_parameters_only(self, device_lattice, device_params):
        grid = np.linspace(-10, 10, 101)
        ts = synthesize_traces(device_lattice, device_params, grid, FOUR_PHASES, 0.01, seed=5)
        result = fit_global(ts, device_params)
        assert set(result.stage1.sigma) == set(result.stage1.free_names)
        assert len(result.stage2.sigma) == 29
        assert all(v >= 0 for v in result.stage2.sigma.values())

    def test_report_structure(self, device_lattice, device_params):
        grid = np.linspace(-10, 10, 101)
        ts = synthesize_traces(device_lattice, device_params, grid, FOUR_PHASES)
        result = fit_global(ts, device_params)
        report = fit_report_dict(result, device_params)
        assert set(report) == {"stage1", "stage2", "stage1_frozen", "options"}
        assert len(report["stage2"]["parameters"]) == 29
        assert report["stage2"]["converged"] is True
        assert "nu_a" in report["stage1_frozen"]
        assert report["options"]["max_iterations"] == 200

    def test_nonconvergence_raises(self, device_lattice, device_params, pairwise_init):
        grid = np.linspace(-10, 10, 51)
        ts = synthesize_traces(device_lattice, device_params, grid, FOUR_PHASES, 0.02, seed=6)
        with pytest.raises(FitError) as err:
            fit_global(ts, pairwise_init, lm_options={"max_iterations": 1, "ftol": 1e-16, "gtol": 1e-16})
        assert err.value.stage == 1
        assert err.value.iterations == 1
        assert err.value.residual_norm > 0


class TestIdentifiability:
    def test_four_phase_fit_is_full_rank(self, device_lattice, device_params):
        grid = np.linspace(-10, 10, 101)
        ts = synthesize_traces(device_lattice, device_params, grid, FOUR_PHASES, 0.02, seed=11)
        lay = _Layout(device_params)
        x0 = _encode(fp_to_vector(device_params), lay)

        def residual(x):
            return assemble_residuals(vector_to_fp(device_params, _decode(x, lay)), ts)

        res = damped_least_squares(
            residual, x0, param_names=device_params.param_names(), max_iterations=3
        )
        i_phi = list(res.free_indices).index(lay.phi)
        assert res.covariance[i_phi, i_phi] < 1e3

    def test_static_link_phase_degenerate_with_offset(self, device_lattice, device_params):
        # a per-link static phase enters the model identically to phi_off, so
        # adding one as a free parameter makes single-phase data rank deficient
        grid = np.linspace(-10, 10, 51)
        ts = synthesize_traces(device_lattice, device_params, grid, [0.0], 0.02, seed=12)
        lay = _Layout(device_params)
        x0 = np.concatenate([_encode(fp_to_vector(device_params), lay), [0.0]])
        names = list(device_params.param_names()) + ["phase_ac"]

        def residual(x):
            p = _decode(x[:-1], lay)
            p[lay.phi] += x[-1]
            return assemble_residuals(vector_to_fp(device_params, p), ts)

        with pytest.raises(RankDeficiencyError) as err:
            damped_least_squares(residual, x0, param_names=names, max_iterations=2)
        combo = " ".join(err.value.null_combinations)
        assert "phi_off" in combo and "phase_ac" in combo


class TestPreprocessedPipeline:
    def test_db_then_fit_matches_linear(self, device_lattice, device_params):
        grid = np.linspace(-5, 5, 41)
        ts = synthesize_traces(device_lattice, device_params, grid, [0.0, np.pi])
        as_db = TraceSet(
            [
                dataclasses.replace(
                    t, values=20.0 * np.log10(np.maximum(t.values, 1e-12)), units="dB"
                )
                for t in ts
            ]
        )
        back = TraceSet([db_to_linear(t) for t in as_db])
        r = assemble_residuals(device_params, back)
        assert np.linalg.norm(r) <= 1e-9
