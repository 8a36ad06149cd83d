import numpy as np
import pytest

from posctrl import builtin
from posctrl.expr import parse_model_file


@pytest.fixture(scope="session")
def s1():
    return builtin("S1")


@pytest.fixture(scope="session")
def s2():
    return builtin("S2")


@pytest.fixture(scope="session")
def s3():
    return builtin("S3")


def make_model(text):
    """Build an ad-hoc expression-backed model from model-file text."""
    return parse_model_file(text)


@pytest.fixture(scope="session")
def linear_decay_1d():
    # xdot = -x under u=1 (psi constant, c zero): the classic test equation
    return make_model("system lin\ndim 1\nf1 = -x1\nc = [0]\npsi = 1\n")


def ninf(v):
    return float(np.max(np.abs(v)))
