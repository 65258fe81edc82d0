"""Session-wide fixtures: kernel parameters and coefficient tables built once."""

import pytest

from boltzmann_spectral.coefficients import CoeffTable, build_table
from boltzmann_spectral.models import KernelParams, QuadratureSpec


@pytest.fixture(scope="session")
def params() -> KernelParams:
    return KernelParams(s=0.5)


@pytest.fixture(scope="session")
def spec() -> QuadratureSpec:
    return QuadratureSpec()


@pytest.fixture(scope="session")
def table4(params, spec) -> CoeffTable:
    """Coefficients up to energy 4."""
    return build_table(4, params, spec, threads=2)


@pytest.fixture(scope="session")
def table6(params, spec) -> CoeffTable:
    """Coefficients up to energy 6."""
    return build_table(6, params, spec, threads=4)


@pytest.fixture(scope="session")
def table8(params, spec) -> CoeffTable:
    """Coefficients up to energy 8, the largest table the tests use."""
    return build_table(8, params, spec, threads=8)
