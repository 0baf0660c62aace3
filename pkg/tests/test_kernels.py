import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkesnet.errors import ArgumentError, DegenerateKernelError
from hawkesnet.kernels import (
    BimodalGaussian,
    DelayedExponential,
    Exponential,
    InhibitionTwoPhase,
    KernelSpec,
    NonMultiplicativeBimodal,
    PowerLaw,
    Tabulated,
    aggregated_mark_kernel,
    aggregated_time_kernel,
    kernel_eval,
    kernel_l1_norm,
    mark_factor_value,
)
from hawkesnet.quadrature import build_quadrature

QUAD = build_quadrature(20_000, 1e-8, 10.0)


def single(kernel, factor=None, M=1, mu=1.0, pmfs=None):
    return KernelSpec(
        dimension=1,
        mark_cardinality=M,
        baseline=np.array([mu]),
        kernels=((kernel,),),
        mark_factors=((factor,),),
        mark_pmfs=pmfs,
    )


class TestKernelEval:
    def test_exponential_with_linear_marks(self):
        # direct closed-form evaluation: 1.5 * exp(0) * f1(10) with M=10
        spec = single(Exponential(1.5, 8.0), "f1", M=10)
        assert kernel_eval(spec, 1, 1, 0.0, 10) == pytest.approx(30.0 / 11.0)

    def test_delayed_zero_before_lag(self):
        spec = single(DelayedExponential(1.25, 5.0, 0.25), "f0")
        assert kernel_eval(spec, 1, 1, 0.1, 1) == 0.0
        assert kernel_eval(spec, 1, 1, 0.25, 1) == pytest.approx(1.25)

    def test_two_phase_switches_sign(self):
        spec = single(InhibitionTwoPhase(1.0, 3.0, -0.3, 2.0, 0.25), "f0")
        assert kernel_eval(spec, 1, 1, 0.1, 1) > 0
        assert kernel_eval(spec, 1, 1, 0.3, 1) < 0

    def test_non_multiplicative_mode_moves_with_mark(self):
        # alpha, mu_lo, sigma_lo, mu_hi, sigma_hi per the bimodal Gaussian table
        k = NonMultiplicativeBimodal(0.5, 0.05, 0.1, 0.5, 0.1)
        spec = single(k, None, M=10)
        ts = np.linspace(0.0, 1.5, 30_001)
        # mark 1: second mode centered at mu_hi; brute-force scan of the argmax
        vals = kernel_eval(spec, 1, 1, ts, 1)
        upper = vals[ts > 0.3]
        assert abs(ts[ts > 0.3][np.argmax(upper)] - 0.5) < 2e-3
        # the center interpolates toward mu_lo as the mark grows
        assert k.second_center(5, 10) == pytest.approx(0.32)
        assert k.second_center(1, 10) == pytest.approx(0.5)
        assert k.second_center(10, 10) == pytest.approx(0.9 * 0.05 + 0.1 * 0.5)

    def test_tabulated_interpolates_and_truncates(self):
        tab = Tabulated(grid=np.array([0.0, 1.0, 2.0]), values=np.array([[2.0, 4.0, 0.0]]))
        spec = single(tab, None)
        assert kernel_eval(spec, 1, 1, 0.5, 1) == pytest.approx(3.0)
        assert kernel_eval(spec, 1, 1, 3.0, 1) == 0.0

    def test_errors(self):
        spec = single(Exponential(1.0, 1.0), "f0")
        with pytest.raises(ArgumentError):
            kernel_eval(spec, 1, 2, 0.0, 1)
        with pytest.raises(ArgumentError):
            kernel_eval(spec, 1, 1, -0.5, 1)
        with pytest.raises(ArgumentError):
            kernel_eval(spec, 1, 1, 0.5, 2)

    def test_none_entry_is_zero(self):
        spec = KernelSpec(
            dimension=2,
            mark_cardinality=1,
            baseline=np.array([1.0, 1.0]),
            kernels=((None, Exponential(1.0, 1.0)), (None, None)),
            mark_factors=((None, "f0"), (None, None)),
        )
        assert kernel_eval(spec, 1, 1, 1.0, 1) == 0.0
        assert kernel_eval(spec, 2, 2, 1.0, 1) == 0.0


class TestL1Norm:
    def test_zero_kernel_matrix(self):
        spec = KernelSpec(
            dimension=2,
            mark_cardinality=1,
            baseline=np.array([1.0, 1.0]),
            kernels=((None, None), (None, None)),
            mark_factors=((None, None), (None, None)),
        )
        assert np.all(kernel_l1_norm(spec, 10.0, QUAD).values == 0.0)

    def test_exponential_closed_form(self):
        spec = single(Exponential(1.5, 8.0), "f1", M=10)
        norm = kernel_l1_norm(spec, 10.0, QUAD).values[0, 0]
        assert norm == pytest.approx(1.5 / 8.0 * (1 - np.exp(-80.0)), rel=1e-5)

    def test_power_law_closed_form(self):
        a, b, g = 0.01, 1.05, 0.0005
        T = 10_000.0
        quad = build_quadrature(40_000, 1e-9, T)
        spec = single(PowerLaw(a, b, g), "f0")
        norm = kernel_l1_norm(spec, T, quad).values[0, 0]
        exact_partial = a * (g ** (1 - b) - (g + T) ** (1 - b)) / (b - 1)
        assert norm == pytest.approx(exact_partial, rel=1e-4)
        # partial integrals approach the infinite-horizon value a*g^(1-b)/(b-1)
        full = a * g ** (1 - b) / (b - 1)
        assert exact_partial < full

    def test_refinement_stability(self):
        spec = single(Exponential(1.5, 8.0), "f2", M=5)
        coarse = kernel_l1_norm(spec, 10.0, QUAD).values[0, 0]
        fine = kernel_l1_norm(spec, 10.0, build_quadrature(200_000, 1e-8, 10.0)).values[0, 0]
        assert abs(fine - coarse) < 1e-6

    def test_absolute_variant_bounds_signed(self):
        spec = single(InhibitionTwoPhase(1.0, 3.0, -0.3, 2.0, 0.25), "f0")
        signed = kernel_l1_norm(spec, 10.0, QUAD).values[0, 0]
        absolute = kernel_l1_norm(spec, 10.0, QUAD, absolute=True).values[0, 0]
        assert absolute >= abs(signed)


class TestAggregatedKernels:
    def test_multiplicative_time_kernel_equals_profile(self):
        spec = single(Exponential(2.0, 3.0), "f1", M=10)
        ts = np.array([0.0, 0.3, 2.0])
        assert aggregated_time_kernel(spec, 1, 1, ts) == pytest.approx(2.0 * np.exp(-3.0 * ts))

    def test_single_mark_equals_kernel_eval(self):
        spec = single(Exponential(2.0, 3.0), "f0")
        assert aggregated_time_kernel(spec, 1, 1, 0.7) == pytest.approx(kernel_eval(spec, 1, 1, 0.7, 1))

    def test_quadratic_factor_at_zero(self):
        spec = single(Exponential(2.0, 3.0), "f2", M=5)
        assert aggregated_time_kernel(spec, 1, 1, 0.0) == pytest.approx(2.0)

    def test_mark_profile_values(self):
        spec = single(Exponential(1.0, 2.0), "f1", M=10)
        assert aggregated_mark_kernel(spec, 1, 1, 10, QUAD) == pytest.approx(20.0 / 11.0, rel=1e-6)
        spec0 = single(Exponential(1.0, 2.0), "f0", M=10)
        for m in (1, 5, 10):
            assert aggregated_mark_kernel(spec0, 1, 1, m, QUAD) == pytest.approx(1.0, rel=1e-9)
        spec2 = single(Exponential(1.0, 2.0), "f2", M=5)
        assert aggregated_mark_kernel(spec2, 1, 1, 1, QUAD) == pytest.approx(6.0 / 66.0, rel=1e-6)

    def test_mark_profile_mean_is_one(self):
        # normalization property, including the mark-coupled family
        for kern, factor in [
            (Exponential(1.0, 2.0), "f2"),
            (NonMultiplicativeBimodal(0.5, 0.05, 0.1, 0.5, 0.1), None),
        ]:
            spec = single(kern, factor, M=10)
            mean = sum(
                spec.mark_pmfs[0][m - 1] * aggregated_mark_kernel(spec, 1, 1, m, QUAD) for m in range(1, 11)
            )
            assert mean == pytest.approx(1.0, abs=1e-6)

    def test_zero_norm_rejected(self):
        spec = KernelSpec(
            dimension=1,
            mark_cardinality=1,
            baseline=np.array([1.0]),
            kernels=((None,),),
            mark_factors=((None,),),
        )
        with pytest.raises(DegenerateKernelError):
            aggregated_mark_kernel(spec, 1, 1, 1, QUAD)


class TestSpecValidation:
    def test_pmf_must_sum_to_one(self):
        with pytest.raises(ArgumentError):
            single(Exponential(1.0, 1.0), "f0", M=2, pmfs=np.array([[0.6, 0.5]]))

    def test_mark_factor_normalization(self):
        for M in (1, 2, 5, 10, 17):
            marks = np.arange(1, M + 1)
            assert mark_factor_value("f1", marks, M).mean() == pytest.approx(1.0, abs=1e-12)
            assert mark_factor_value("f2", marks, M).mean() == pytest.approx(1.0, abs=1e-12)

    def test_mark_coupled_rejects_factor(self):
        with pytest.raises(ArgumentError):
            single(NonMultiplicativeBimodal(0.5, 0.05, 0.1, 0.5, 0.1), "f1", M=10)

    def test_tabulated_grid_must_increase(self):
        with pytest.raises(ArgumentError):
            Tabulated(grid=np.array([0.0, 0.0, 1.0]), values=np.zeros((1, 3)))

    def test_json_round_trip(self):
        spec = KernelSpec(
            dimension=2,
            mark_cardinality=3,
            baseline=np.array([0.5, 0.2]),
            kernels=(
                (Exponential(1.0, 2.0), PowerLaw(0.01, 1.5, 0.001)),
                (InhibitionTwoPhase(1.0, 3.0, -0.3, 2.0, 0.25), Tabulated(np.array([0.0, 1.0]), np.ones((3, 2)))),
            ),
            mark_factors=(("f1", "f2"), ("f0", None)),
        )
        again = KernelSpec.from_json(spec.to_json())
        ts = np.linspace(0.0, 2.0, 7)
        for i in (1, 2):
            for j in (1, 2):
                for m in (1, 2, 3):
                    np.testing.assert_allclose(
                        kernel_eval(again, i, j, ts, m), kernel_eval(spec, i, j, np.minimum(ts, 10.0), m)
                    )
        assert again.to_json() == spec.to_json()


@given(
    alpha=st.floats(0.1, 5.0),
    beta=st.floats(0.5, 20.0),
    M=st.integers(1, 12),
)
@settings(max_examples=30, deadline=None)
def test_aggregated_mark_mean_property(alpha, beta, M):
    # mark-expectation of the normalized profile is 1 for every factor
    quad = build_quadrature(3000, 1e-7, 10.0)
    for factor in ("f0", "f1", "f2"):
        spec = single(Exponential(alpha, beta), factor, M=M)
        mean = sum(spec.mark_pmfs[0][m - 1] * aggregated_mark_kernel(spec, 1, 1, m, quad) for m in range(1, M + 1))
        assert mean == pytest.approx(1.0, abs=1e-6)
