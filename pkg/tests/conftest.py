"""Shared fixtures: cached spaces and form sets for the meshes tests reuse."""

import numpy as np
import pytest

from chcda.forms import FormSet
from chcda.mesh import build_uniform_mesh
from chcda.space import build_space

_SPACES = {}
_FORMSETS = {}


def get_space(n):
    if n not in _SPACES:
        _SPACES[n] = build_space(build_uniform_mesh(n))
    return _SPACES[n]


def get_formset(n):
    if n not in _FORMSETS:
        _FORMSETS[n] = FormSet(get_space(n))
    return _FORMSETS[n]


@pytest.fixture(scope="session")
def space_of():
    return get_space


@pytest.fixture(scope="session")
def formset_of():
    return get_formset


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
