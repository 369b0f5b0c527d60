import pytest

from mitiplan import DATA_DIR
from mitiplan.adversary import load_adversaries
from mitiplan.env import EnvConfig, MitigationEnv, load_world
from mitiplan.flows import load_corpus_dir
from mitiplan.orgsynth import MaturityPrior, load_difficulties, sample_population
from mitiplan.vomm import fit


@pytest.fixture(scope="session")
def pool():
    return load_adversaries(DATA_DIR / "adversaries.json")


@pytest.fixture(scope="session")
def bundled_vomm(pool):
    extra = {t for a in pool for t in a.observed_techniques}
    return fit(load_corpus_dir(DATA_DIR / "flows"), extra_vocab=extra)


@pytest.fixture(scope="session")
def bundled_world(bundled_vomm):
    return load_world(bundled_vomm, EnvConfig())


@pytest.fixture(scope="session")
def bundled_env(bundled_world):
    return MitigationEnv(bundled_world)


@pytest.fixture(scope="session")
def orgs():
    return sample_population(MaturityPrior(rng_seed=1), load_difficulties(DATA_DIR / "practices.json"), 30)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:02d}: {'PASS' if ok else 'FAIL'}  {detail}")
