import hypothesis
import hypothesis.strategies as st
import numpy as np
import pytest

from batsflan import BatsModel

hypothesis.settings.register_profile("default", max_examples=25, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile("default")

# rank law of the published M = 16, q = 256 example
RANKD = [0, 0, 0, 0, 0, 0, 0.0004, 0.0025, 0.0110, 0.0387, 0.1040, 0.2062,
         0.2797, 0.2339, 0.1038, 0.0190, 0.0008]

# K = 32, M = 4, q = 16 reference configuration for the Monte Carlo checks
REF_H = [0.0, 0.05, 0.15, 0.3, 0.5]
REF_PSI = [0.0, 0.1, 0.3, 0.3, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]


@pytest.fixture
def rankd_model():
    return BatsModel.create(K=196, M=16, q=256, rank_dist=RANKD, degree_dist=[1.0])


@pytest.fixture
def ref_model():
    return BatsModel.create(K=32, M=4, q=16, rank_dist=REF_H, degree_dist=REF_PSI)


def random_model(rng, K_max=24, M_max=2, q=4, lt=None, dirichlet=1.0, K_min=2):
    K = int(rng.integers(K_min, K_max + 1))
    M = int(rng.integers(1, M_max + 1))
    D = int(rng.integers(1, K + 1))
    lt_mode = bool(rng.random() < 0.5) if (lt is None and M == 1) else bool(lt and M == 1)
    h = rng.dirichlet(np.full(M + 1, dirichlet))
    psi = rng.dirichlet(np.full(D, dirichlet))
    return BatsModel.create(K=K, M=M, q=q, rank_dist=h, degree_dist=psi, lt_mode=lt_mode, renormalize=True)


@st.composite
def models(draw, K_max=16, M_max=3, q_choices=(2, 4, 16, 256)):
    """Small random models; probabilities come from normalized draws."""
    K = draw(st.integers(1, K_max))
    M = draw(st.integers(1, M_max))
    D = draw(st.integers(1, K))
    q = draw(st.sampled_from(q_choices))
    w = st.floats(0.0, 1.0, allow_nan=False)
    h = np.array(draw(st.lists(w, min_size=M + 1, max_size=M + 1)))
    psi = np.array(draw(st.lists(w, min_size=D, max_size=D)))
    h[draw(st.integers(0, M))] += 0.5
    psi[draw(st.integers(0, D - 1))] += 0.5
    lt_mode = M == 1 and draw(st.booleans())
    return BatsModel.create(K=K, M=M, q=q, rank_dist=h / h.sum(), degree_dist=psi / psi.sum(),
                            lt_mode=lt_mode, renormalize=True)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
