import numpy as np
import pytest

from adass.errors import ParameterError
from adass.experiments import (
    ADASS,
    STREAM_STRIDE,
    ExperimentGrid,
    cov_table,
    rank_table,
    run_grid,
    run_replication,
    run_sensitivity_q,
    table_csv,
    table_text,
    write_table,
)
from adass.gibbs import ChainSettings

TINY = dict(design="signed_two", n_values=[40], p=30, s_values=[6], r_values=[1, 2], replications=2,
            n_iter=60, burn_in=20, thin=2, q=4, base_seed=11)


@pytest.fixture(scope="module")
def tiny_results():
    grid = ExperimentGrid(**TINY)
    return grid, run_grid(grid)


def test_grid_validation():
    with pytest.raises(ParameterError):
        ExperimentGrid(design="x")
    with pytest.raises(ParameterError):
        ExperimentGrid(methods=["ER", "nope"])
    with pytest.raises(ParameterError):
        ExperimentGrid(s_values=[2], r_values=[3])
    with pytest.raises(ParameterError):
        ExperimentGrid(replications=0)
    with pytest.raises(ParameterError):
        ExperimentGrid(n_iter=10, burn_in=10)


def test_desk_and_full_scale_defaults():
    g = ExperimentGrid()
    assert (g.p, g.replications, g.n_iter, g.burn_in, g.thin) == (200, 20, 3000, 500, 5)
    f = ExperimentGrid.full_scale()
    assert (f.p, f.replications) == (1000, 100)
    assert len(f.cells()) == 2 * 3 * 3


def test_results_ordered_and_keyed_by_stream(tiny_results):
    grid, results = tiny_results
    assert [(x.cell_index, x.replication) for x in results] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert [x.stream_id for x in results] == [0, 1, STREAM_STRIDE, STREAM_STRIDE + 1]
    for x in results:
        assert set(x.r_hat) == {"ET", "ER", "GR", "ACT", "DT", ADASS}
        assert sum(x.xi_histogram.values()) == grid.settings().n_retained


def test_replication_independent_of_order_and_method_subset(tiny_results):
    grid, results = tiny_results
    again = run_replication(grid, 1, 1)
    assert again.r_hat == results[3].r_hat and again.adass_loss == results[3].adass_loss
    only_adass = run_replication(ExperimentGrid(**{**TINY, "methods": [ADASS]}), 1, 1)
    assert only_adass.r_hat == {ADASS: results[3].r_hat[ADASS]}
    assert only_adass.adass_loss == results[3].adass_loss
    only_er = run_replication(ExperimentGrid(**{**TINY, "methods": ["ER"]}), 1, 1)
    assert only_er.r_hat["ER"] == results[3].r_hat["ER"] and only_er.adass_loss is None


def test_parallel_pool_matches_serial(tiny_results):
    grid, results = tiny_results
    par = run_grid(ExperimentGrid(**{**TINY, "threads": 2}))
    assert [x.r_hat for x in par] == [x.r_hat for x in results]
    assert [x.adass_loss for x in par] == [x.adass_loss for x in results]


def test_rank_table_rows_and_lineage(tiny_results):
    grid, results = tiny_results
    rows = rank_table(grid, results)
    assert len(rows) == 2 * 6
    for row in rows:
        assert row["pct_true"] + row["pct_over"] + row["pct_under"] == pytest.approx(100.0)
    second = [r for r in rows if r["r"] == 2][0]
    assert second["base_seed"] == 11 and second["streams"] == f"{STREAM_STRIDE}-{STREAM_STRIDE + 1}"
    er = [r for r in rows if r["method"] == "ER" and r["r"] == 1][0]
    assert er["ave"] == np.mean([x.r_hat["ER"] for x in results[:2]])


def test_cov_table(tiny_results):
    grid, results = tiny_results
    rows = cov_table(grid, results)
    assert len(rows) == 2
    loss = [x.adass_loss for x in results[:2]]
    assert rows[0]["mean_loss"] == pytest.approx(np.mean(loss))
    assert rows[0]["se_loss"] == pytest.approx(np.std(loss, ddof=1))
    assert 0 <= rows[0]["pct_below_sample_cov"] <= 100


def test_table_rendering(tmp_path):
    rows = [{"n": 100, "method": "ER", "ave": 2.5}, {"n": 50, "method": "AdaSS", "ave": 3.0}]
    assert table_csv(rows) == "n,method,ave\n100,ER,2.500\n50,AdaSS,3.000\n"
    text = table_text(rows).splitlines()
    assert text[0] == "  n  method    ave" and text[2] == "100      ER  2.500"
    csv_path, txt_path = write_table(rows, tmp_path / "sub" / "rank_table")
    assert csv_path.read_text() == table_csv(rows) and txt_path.name == "rank_table.txt"
    assert table_csv([]) == "" and table_text([]) == ""


def test_sensitivity_shares_data_and_respects_column_budget():
    st = ChainSettings(n_iter=60, burn_in=20, thin=2)
    res = run_sensitivity_q([2, 6], design="signed_two", n=40, p=30, s=8, r=3, settings=st, base_seed=4)
    assert [x.q for x in res] == [2, 6]
    assert res[0].xi_path.max() <= 2
    assert res[0].retained_xi.size == st.n_retained and res[1].xi_path.size == 60
    again = run_sensitivity_q([6], design="signed_two", n=40, p=30, s=8, r=3, settings=st, base_seed=4)
    np.testing.assert_array_equal(again[0].xi_path, res[1].xi_path)
