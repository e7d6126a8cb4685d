import pytest

from tracesmc.distributions import normal_lnp
from tracesmc.models import crp_model, gaussian_model, hmm_model
from tracesmc.trace import Model


@pytest.fixture
def gaussian():
    return gaussian_model()


@pytest.fixture
def hmm_small():
    return hmm_model("small")


@pytest.fixture
def crp():
    return crp_model()


def _noisy(ctx):
    for i in range(3):
        x = ctx.normal_rng(0.0, 1.0)
        yield normal_lnp(x, 0.0, 4.0)
        ctx.predict(f"x{i}", x)


@pytest.fixture
def noisy():
    """Three observes, one fresh normal draw before each."""
    return Model(_noisy, 3, "noisy")


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p for p, _ in parts.values())
        detail = "; ".join(f"{k}: {d}" if k else d for k, (_, d) in parts.items())
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
