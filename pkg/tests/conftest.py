"""Shared fixtures: the GTM plant and the standard interactor."""

import numpy as np
import pytest

from psmrac.interactor import InteractorBundle, high_freq_gain, lds_decompose
from psmrac.matching import FilterSpec, solve_matching
from psmrac.plant import PartialStateSelector, gtm_model


@pytest.fixture(scope="session")
def gtm():
    return gtm_model()


@pytest.fixture(scope="session")
def gtm_xi():
    return InteractorBundle.diagonal([2, 2], 2.0)


@pytest.fixture(scope="session")
def gtm_lds(gtm, gtm_xi):
    return lds_decompose(high_freq_gain(gtm.transfer(), gtm_xi))


def gtm_case_selector(case):
    states = {1: (3, 4, 7), 2: (3, 6, 7), 3: (8,), 4: (6,), 5: (4, 8),
              6: tuple(range(1, 9))}[case]
    return PartialStateSelector.from_states(8, states)
