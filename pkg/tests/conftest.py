import numpy as np
import pytest

from jumplab import CoefficientField, MarkMeasure


@pytest.fixture
def heat_field():
    # unit diffusion, no drift, no jumps
    return CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros_like(x),
        diffusion=lambda t, x: x[..., None] * 0.0 + 1.0,
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        diffusion_hess=lambda t, x: np.zeros((1, 1, 1, 1)),
        elementwise=True,
    )


@pytest.fixture
def empty_measure():
    return MarkMeasure()


@pytest.fixture
def drifted_field():
    a0, b0 = 0.5, 0.3
    return CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.full_like(x, a0),
        diffusion=lambda t, x: x[..., None] * 0.0 + b0,
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        diffusion_hess=lambda t, x: np.zeros((1, 1, 1, 1)),
        elementwise=True,
    )
