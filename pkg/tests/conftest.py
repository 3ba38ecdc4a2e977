import numpy as np
import pytest

from icenet.data_schema import ColumnRoles, RawData, fit_schema, transform
from icenet.network import Architecture, init


def make_raw(n=60, seed=0, n_levels=(4,), n_cont=3):
    """Small mixed-type portfolio with integer-valued continuous columns."""
    rng = np.random.default_rng(seed)
    cont = {f"c{i}": rng.integers(0, 9 + 3 * i, size=n).astype(float) for i in range(n_cont)}
    for name, col in cont.items():  # guarantee min < max
        col[0], col[1] = 0.0, col.max() + 1.0
    cat = {}
    for t, k in enumerate(n_levels):
        codes = rng.integers(0, k, size=n)
        codes[:k] = np.arange(k)
        cat[f"k{t}"] = np.array([f"L{c}" for c in codes], dtype=object)
    y = rng.poisson(0.3, size=n).astype(float)
    v = rng.uniform(0.1, 1.0, size=n)
    return RawData(y, v, cont, cat, np.arange(1, n + 1))


def make_problem(n=60, seed=0, constrained=("c0", "c1", "k0"), layers=(6, 4), n_levels=(4,), n_cont=3):
    raw = make_raw(n, seed, n_levels, n_cont)
    schema = fit_schema(raw, list(constrained))
    data = transform(raw, schema)
    arch = Architecture.for_schema(schema, layers=layers, embedding_dim=2)
    params = init(arch, seed)
    params.head_bias[0] = -1.0
    return raw, schema, data, arch, params


@pytest.fixture
def problem():
    return make_problem()


@pytest.fixture
def roles():
    return ColumnRoles("y", "v", ("a", "b"), ("c",), "id")


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL/SKIP line per criterion
# --------------------------------------------------------------------------

ACCEPTANCE: dict = {}


def record(criterion: int, passed, detail: str) -> None:
    """Store and print the verdict of an acceptance criterion (``passed=None`` means skipped)."""
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {criterion}: {status} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
