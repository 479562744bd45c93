import numpy as np
import pytest

from safaudit import rng as rngmod
from safaudit.config import ExperimentConfig
from safaudit.experiment import fit_classifiers, make_data, make_saf
from safaudit.sde import SdeSpec


@pytest.fixture
def ve():
    return SdeSpec()


@pytest.fixture
def subvp():
    return SdeSpec(kind="SubVP")


@pytest.fixture
def rng():
    return rngmod.stream(1234, "tests")


@pytest.fixture(scope="session")
def toy_setup():
    """Default toy images (N=16), the fingerprinted set and both classifiers."""
    cfg = ExperimentConfig()
    saf = make_saf(cfg, make_data(cfg))
    c_p, c_id = fit_classifiers(cfg, saf)
    return cfg, saf, c_p, c_id


def mixture_logpdf(x, data, m, var):
    """Reference log of (1/N) sum_i N(x; m x_i, var I), written independently of the package."""
    x = np.atleast_2d(x)
    d = x.shape[1]
    sq = ((x[:, None, :] - m * data[None, :, :]) ** 2).sum(-1)
    from scipy.special import logsumexp
    return logsumexp(-sq / (2 * var), axis=1) - np.log(len(data)) - 0.5 * d * np.log(2 * np.pi * var)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
