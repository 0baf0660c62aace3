import numpy as np
import pytest
from scipy import stats as sstats

from hawkesnet.algebra import expected_rates
from hawkesnet.errors import ArgumentError, StationarityError, TruncationError
from hawkesnet.events import EventStream
from hawkesnet.kernels import (
    BimodalGaussian,
    DelayedExponential,
    Exponential,
    InhibitionTwoPhase,
    KernelSpec,
    NonMultiplicativeBimodal,
    PowerLaw,
    Tabulated,
    kernel_l1_norm,
)
from hawkesnet.quadrature import build_quadrature
from hawkesnet.simulate import SimConfig, SimDiagnostics, intensity_at, simulate


def one_dim(kernel, factor, mu=0.5, M=1):
    return KernelSpec(
        dimension=1,
        mark_cardinality=M,
        baseline=np.array([mu]),
        kernels=((kernel,),),
        mark_factors=((factor,),),
    )


def rate_check(spec, horizon, seed, prune_tol=1e-6, se_mult=4.0, T_norm=200.0):
    quad = build_quadrature(20_000, 1e-8, T_norm)
    lam = expected_rates(kernel_l1_norm(spec, T_norm, quad), spec.baseline)
    stream = simulate(SimConfig(spec=spec, horizon=horizon, seed=seed, prune_tol=prune_tol))
    counts = stream.counts()
    for i in range(spec.dimension):
        expect = lam[i] * horizon
        # clustering inflates the count variance; a crude upper bound is
        # Poisson variance over (1 - R)^2
        from hawkesnet.algebra import branching_ratio

        R = branching_ratio(kernel_l1_norm(spec, T_norm, quad, absolute=True))
        se = np.sqrt(expect) / max(1.0 - R, 0.05)
        assert abs(counts[i] - expect) < se_mult * se, f"component {i+1}: {counts[i]} vs {expect:.0f} (se {se:.0f})"
    return stream


class TestIntensity:
    def test_empty_history_is_baseline(self, exp_spec_1d):
        empty = EventStream(np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64), 1.0, 1, 1)
        np.testing.assert_allclose(intensity_at(exp_spec_1d, empty, 0.7), [0.5])

    def test_single_event_decay(self, exp_spec_1d):
        h = EventStream(np.array([0.0]), np.array([1]), np.array([1]), 2.0, 1, 1)
        lam = intensity_at(exp_spec_1d, h, 1.0)
        assert lam[0] == pytest.approx(0.5 + np.exp(-2.0))

    def test_inhibition_clamps_at_zero(self):
        spec = one_dim(Exponential(-5.0, 0.1), "f0", mu=0.1)
        h = EventStream(np.array([0.0, 0.01, 0.02]), np.array([1, 1, 1]), np.array([1, 1, 1]), 1.0, 1, 1)
        assert intensity_at(spec, h, 0.05) == pytest.approx([0.0])

    def test_event_at_t_excluded(self, exp_spec_1d):
        h = EventStream(np.array([1.0]), np.array([1]), np.array([1]), 2.0, 1, 1)
        assert intensity_at(exp_spec_1d, h, 1.0) == pytest.approx([0.5])

    def test_future_history_rejected(self, exp_spec_1d):
        h = EventStream(np.array([1.5]), np.array([1]), np.array([1]), 2.0, 1, 1)
        with pytest.raises(ArgumentError):
            intensity_at(exp_spec_1d, h, 1.0)


class TestSimulate:
    def test_poisson_count(self):
        spec = KernelSpec(
            dimension=1, mark_cardinality=1, baseline=np.array([2.0]), kernels=((None,),), mark_factors=((None,),)
        )
        stream = simulate(SimConfig(spec=spec, horizon=10_000.0, seed=7))
        assert abs(len(stream) - 20_000) < 4 * np.sqrt(20_000)

    def test_exponential_rate(self, exp_spec_1d):
        rate_check(exp_spec_1d, horizon=20_000.0, seed=11)

    def test_deterministic(self, exp_spec_1d):
        a = simulate(SimConfig(spec=exp_spec_1d, horizon=500.0, seed=3))
        b = simulate(SimConfig(spec=exp_spec_1d, horizon=500.0, seed=3))
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.components, b.components)
        assert np.array_equal(a.marks, b.marks)
        c = simulate(SimConfig(spec=exp_spec_1d, horizon=500.0, seed=4))
        assert not np.array_equal(a.times, c.times)

    def test_rate_all_families(self):
        # each windowed family against its first-order prediction
        specs = [
            one_dim(DelayedExponential(1.0, 4.0, 0.2), "f1", mu=0.8, M=3),
            one_dim(InhibitionTwoPhase(0.8, 3.0, -0.2, 2.0, 0.3), "f0", mu=1.0),
            one_dim(BimodalGaussian(0.4, 0.1, 0.05, 0.6, 0.1), "f2", mu=0.7, M=4),
            one_dim(NonMultiplicativeBimodal(0.4, 0.1, 0.05, 0.6, 0.1), None, mu=0.7, M=4),
        ]
        for k, spec in enumerate(specs):
            rate_check(spec, horizon=15_000.0, seed=100 + k)

    def test_rate_power_law(self):
        # slow tails make the exact-window rule enormous; a 1e-4 tolerance
        # keeps the window at gamma/tol = 100 s with negligible rate bias
        spec = one_dim(PowerLaw(0.005, 2.0, 0.01), "f0", mu=0.6)
        rate_check(spec, horizon=15_000.0, seed=104, prune_tol=1e-4)

    def test_two_dim_rates(self, exp_spec_2d):
        rate_check(exp_spec_2d, horizon=60_000.0, seed=5)

    def test_tabulated_kernel_rate(self):
        grid = np.linspace(0.0, 6.0, 400)
        vals = 0.9 * 2.0 * np.exp(-2.0 * grid)
        spec = one_dim(Tabulated(grid=grid, values=vals[None, :]), None, mu=0.5)
        rate_check(spec, horizon=15_000.0, seed=21, T_norm=6.0)

    def test_first_interevent_time_distribution(self):
        # for a fresh 1-dim exponential Hawkes started empty, the first event
        # time is exponential with the baseline rate
        spec = one_dim(Exponential(1.0, 2.0), "f0", mu=0.5)
        firsts = []
        for seed in range(400):
            s = simulate(SimConfig(spec=spec, horizon=60.0, seed=seed))
            if len(s):
                firsts.append(s.times[0])
        res = sstats.kstest(firsts, "expon", args=(0.0, 1.0 / 0.5))
        assert res.pvalue > 0.01

    def test_mark_frequencies(self):
        pmf = np.array([[0.5, 0.3, 0.2]])
        spec = KernelSpec(
            dimension=1,
            mark_cardinality=3,
            baseline=np.array([2.0]),
            kernels=((Exponential(1.0, 4.0),),),
            mark_factors=(("f0",),),
            mark_pmfs=pmf,
        )
        stream = simulate(SimConfig(spec=spec, horizon=10_000.0, seed=13))
        counts = np.bincount(stream.marks, minlength=4)[1:]
        res = sstats.chisquare(counts, pmf[0] * counts.sum())
        assert res.pvalue > 0.01
        assert len(stream) >= 10_000

    def test_max_events_truncation(self, exp_spec_1d):
        with pytest.raises(TruncationError) as exc:
            simulate(SimConfig(spec=exp_spec_1d, horizon=10_000.0, seed=1, max_events=50))
        assert exc.value.stream is not None
        assert len(exc.value.stream) == 50

    def test_unstable_spec_rejected(self):
        spec = one_dim(Exponential(3.0, 2.0), "f0")  # norm 1.5
        with pytest.raises(StationarityError):
            simulate(SimConfig(spec=spec, horizon=10.0, seed=1))

    def test_inhibition_clamp_diagnostic(self):
        # strong inhibition drives the intensity negative now and then
        spec = one_dim(InhibitionTwoPhase(-3.0, 6.0, 0.6, 3.0, 0.4), "f0", mu=0.4)
        stream, diag = simulate(SimConfig(spec=spec, horizon=5_000.0, seed=9), return_diagnostics=True)
        assert isinstance(diag, SimDiagnostics)
        assert 0.0 < diag.clamp_fraction < 1.0
        assert len(stream) > 100

    def test_thinning_against_reference_intensity(self, exp_spec_2d):
        # the recursive/windowed intensity inside the loop must agree with
        # the full-history reference at the recorded event times
        stream = simulate(SimConfig(spec=exp_spec_2d, horizon=200.0, seed=17))
        k = len(stream) // 2
        head = EventStream(
            stream.times[:k], stream.components[:k], stream.marks[:k], stream.horizon, 2, 1
        )
        lam = intensity_at(exp_spec_2d, head, stream.times[k] + 1e-9)
        assert np.all(lam > 0)
