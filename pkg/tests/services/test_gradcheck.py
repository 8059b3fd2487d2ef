import pytest

from fluxamba import services
from fluxamba.exceptions import ConfigError


def test_ops_gradients():
    results = services.run_gradcheck("ops")

    assert len(results) >= 15
    failed = [(r.name, r.max_rel_error) for r in results if not r.passed]
    assert failed == []


def test_unknown_scope():
    with pytest.raises(ConfigError) as excinfo:
        services.run_gradcheck("everything")
    assert "unknown gradcheck scope 'everything'" in str(excinfo.value)


@pytest.mark.slow
@pytest.mark.parametrize("scope", ["blocks", "model"])
def test_block_and_model_gradients(scope):
    results = services.run_gradcheck(scope)

    assert results
    assert all(r.passed for r in results), [(r.name, r.max_rel_error) for r in results]
