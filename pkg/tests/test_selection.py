import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spgc import propagation
from spgc.selection import (GridSpec, aggregate_runs, grid_search, hash64, load_grid, parse_grid,
                            run_seed, write_report)
from spgc.training import TrainConfig, train

SMALL = GridSpec(learning_rate=(0.05, 0.01), weight_decay=(5e-4,), dropout=(0.0, 0.3),
                 k=(1, 2), n_runs=2)


def test_hash64_stable_and_spread():
    assert hash64(1, 2, 3) == hash64(1, 2, 3)
    assert hash64(1, 2, 3) != hash64(3, 2, 1)
    assert 0 <= hash64(-1) < 2 ** 64
    seeds = {run_seed(0, c, r) for c in range(50) for r in range(10)}
    assert len(seeds) == 500


def test_aggregate_runs_hand_values():
    assert aggregate_runs([0.6, 0.8]) == pytest.approx((0.7, 0.1), rel=1e-15)
    assert aggregate_runs([0.7] * 3) == (pytest.approx(0.7, rel=1e-15), 0.0)
    with pytest.raises(ValueError):
        aggregate_runs([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_aggregate_matches_population_std(values):
    mean, std = aggregate_runs(values)
    assert mean == pytest.approx(np.mean(values), abs=1e-12)
    assert std == pytest.approx(np.std(values), abs=1e-12)


def test_parse_grid_aliases_duplicates_comments():
    g = parse_grid("# header\nlr = 0.1, 0.1, 0.01,\nwd: 5e-4\ndrop_out = 0.5\n"
                   "k = 2, 4, 2\n#hidden = 8\nruns = 3\nprotocol = test_selected\n")
    assert g.learning_rate == (0.1, 0.01)
    assert g.weight_decay == (5e-4,) and g.dropout == (0.5,)
    assert g.k == (2, 4) and g.n_runs == 3 and g.protocol == "test_selected"
    assert len(g.cells()) == 2 * 1 * 1 * 2


@pytest.mark.parametrize("text", [
    "learning_rate = 0.1\nweight_decay = 0\ndropout = 0\n",          # no k
    "learning_rate = 0.1\nweight_decay = 0\ndropout = 0\nk = two\n",
    "learning_rate = 0.1\nweight_decay = 0\ndropout = 0\nk = 2\nfoo = 1\n",
    "learning_rate 0.1\n",
    "learning_rate = 0.1\nweight_decay = 0\ndropout = 0\nk = 2\nprotocol = best\n",
    "learning_rate = \nweight_decay = 0\ndropout = 0\nk = 2\n",
])
def test_parse_grid_errors(text):
    with pytest.raises(ValueError):
        parse_grid(text)


@pytest.mark.parametrize("name", ["cora", "citeseer", "pubmed", "CORA"])
def test_bundled_grids_load(name):
    g = load_grid(name)
    assert g.protocol == "validated" and g.n_runs >= 1 and g.cells()
    # hidden is recorded but never multiplies the cell count
    assert len(g.cells()) == (len(g.k) * len(g.learning_rate) * len(g.weight_decay)
                              * len(g.dropout))


def test_load_grid_missing():
    with pytest.raises(FileNotFoundError):
        load_grid("no_such_dataset")


def _search(bundle, **kw):
    return grid_search("LGC", bundle.graph, SMALL, base_seed=11,
                       operator="renormalized_adjacency", max_epochs=30, patience=10, **kw)


def _run_rows(report):
    return [(c.index, r.run, r.seed, r.val_acc, r.test_acc, r.best_epoch)
            for c in report.cells for r in c.runs]


def test_grid_search_deterministic_across_workers(bundle):
    a, b, c = _search(bundle), _search(bundle), _search(bundle, workers=4)
    assert _run_rows(a) == _run_rows(b) == _run_rows(c)
    assert a.summary() == c.summary()


def test_one_cache_build_per_distinct_k(bundle):
    before = propagation.BUILD_COUNT[0]
    rep = _search(bundle)
    assert propagation.BUILD_COUNT[0] - before == len(SMALL.k)
    assert len(rep.cells) == 8 and all(len(c.runs) == 2 for c in rep.cells)


def test_cache_directory_reused(bundle, tmp_path):
    _search(bundle, dataset_id="toy", cache_dir=tmp_path)
    before = propagation.BUILD_COUNT[0]
    _search(bundle, dataset_id="toy", cache_dir=tmp_path)
    assert propagation.BUILD_COUNT[0] == before
    assert len(list(tmp_path.glob("toy__*.spgc"))) == len(SMALL.k)


def test_selection_protocols(bundle):
    rep = _search(bundle)
    val_best = max(c.val[0] for c in rep.cells)
    test_best = max(c.test[0] for c in rep.cells)
    assert rep.cells[rep.validated_cell].val[0] == val_best
    assert rep.cells[rep.test_selected_cell].test[0] == test_best
    assert rep.accuracy("test_selected")[0] >= rep.accuracy("validated")[0]
    assert not rep.biased and "note" not in rep.summary()


def test_single_cell_grid_matches_direct_training(bundle):
    grid = GridSpec((0.05,), (5e-4,), (0.2,), (2,), n_runs=3)
    rep = grid_search("EGC", bundle.graph, grid, base_seed=5,
                      operator="renormalized_adjacency", max_epochs=40, patience=20)
    cache = propagation.build_diffusion_cache(
        propagation.PropagationOperator.for_graph(bundle.graph, "renormalized_adjacency"),
        bundle.graph.x, 2)
    direct = [train("EGC", cache, bundle.graph,
                    TrainConfig(0.05, 5e-4, 0.2, 40, 20, run_seed(5, 0, r))).test_acc_at_best
              for r in range(3)]
    assert rep.accuracy() == aggregate_runs(direct)


def test_failed_cells_excluded(bundle, monkeypatch):
    import spgc.selection as sel

    real = sel.train

    def flaky(variant, cache, graph, cfg, **kw):
        if cfg.dropout > 0:
            raise FloatingPointError("diverged")
        return real(variant, cache, graph, cfg, **kw)

    monkeypatch.setattr(sel, "train", flaky)
    rep = _search(bundle)
    failed = [c.index for c in rep.cells if c.failed]
    assert failed == [c.index for c in rep.cells if c.dropout > 0]
    assert rep.validated_cell not in failed and rep.test_selected_cell not in failed
    assert rep.summary()["failed_cells"] == failed


def test_all_cells_failed(bundle, monkeypatch):
    import spgc.selection as sel

    def boom(*a, **kw):
        raise RuntimeError("nope")

    monkeypatch.setattr(sel, "train", boom)
    rep = _search(bundle)
    assert rep.chosen_cell is None
    with pytest.raises(RuntimeError):
        rep.accuracy()


def test_write_report(bundle, tmp_path):
    rep = grid_search("SGC", bundle.graph,
                      GridSpec((0.05,), (5e-4,), (0.0,), (1, 2), n_runs=2,
                               protocol="test_selected"),
                      max_epochs=10, patience=5)
    csv_path, json_path = write_report(rep, tmp_path)
    rows = list(csv.DictReader(open(csv_path, encoding="utf-8")))
    assert [r["row"] for r in rows] == ["run", "run", "aggregate"] * 2
    agg = rows[2]
    mean, std = rep.cells[0].test
    assert float(agg["test_acc"]) == mean and float(agg["test_std"]) == std
    summary = json.loads(json_path.read_text())
    assert summary["biased"] is True and "optimistic" in summary["note"]
    assert summary["protocol"] == "test_selected"
    assert len(summary["seeds"]) == 2
