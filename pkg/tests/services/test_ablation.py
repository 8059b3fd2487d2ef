from fluxamba import services
from fluxamba.models import TOGGLES


def test_run_ablation(micro_config):
    rows = services.run_ablation(micro_config, 32)

    assert len(rows) == 16
    assert len({row.label() for row in rows}) == 16
    assert rows[0].label() == "0000"
    assert rows[-1].label() == "1111"
    assert all(list(row.toggles) == list(TOGGLES) for row in rows)
    assert all(row.finite for row in rows)
    assert all(row.logits_shape == (1, 1, 32, 32) for row in rows)
    assert rows[-1].params == max(row.params for row in rows)
    assert rows[0].params == min(row.params for row in rows)
