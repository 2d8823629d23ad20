import csv
import json

import numpy as np
import pytest

import seltmr as st
from seltmr.campaign import (
    COLLAPSE_NOTE,
    CURVE_COLUMNS,
    MIN_PROTECT_GRID,
    OVERHEAD_COLUMNS,
    derive_seed,
    emit_report,
    find_min_protection,
)

from _support import make_dataset


# one small model + dataset on disk, shared by every campaign test
@pytest.fixture(scope="module")
def paths(tmp_path_factory):
    root = tmp_path_factory.mktemp("campaign")
    rng = np.random.Generator(np.random.PCG64(21))
    net = st.Network(
        [st.dense(rng.normal(0, 0.5, (16, 20)).astype(np.float32)),
         st.relu(),
         st.dense(rng.normal(0, 0.5, (4, 16)).astype(np.float32))],
        input_shape=(20,), num_classes=4)
    st.save_model(net, root / "model")
    st.save_dataset(make_dataset(3, 24, (20,), classes=4), root / "data.nnd")
    return str(root / "model"), str(root / "data.nnd")


def config_for(paths, **kw):
    model, data = paths
    kw.setdefault("ber_grid", (0.0, 0.02, 0.1))
    kw.setdefault("trials", 3)
    kw.setdefault("calibration_size", 8)
    return st.CampaignConfig(model_path=model, dataset_path=data, **kw)


def test_derive_seed_is_stable():
    assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)
    # distinct label tuples must not collide through string joining
    assert derive_seed(0, "ab") != derive_seed(0, "a", "b")
    assert 0 <= derive_seed(123, "x") < 2**64


def test_config_validation(paths):
    with pytest.raises(ValueError):
        config_for(paths, ber_grid=(0.1, 0.01))
    with pytest.raises(ValueError):
        config_for(paths, ber_grid=(0.5, 1.5))
    with pytest.raises(ValueError):
        config_for(paths, trials=0)
    with pytest.raises(ValueError):
        config_for(paths, protection_fraction=0.0)
    with pytest.raises(ValueError):
        config_for(paths, bit_mode="parity")
    with pytest.raises(ValueError):
        config_for(paths, strategies=("oracle",))
    with pytest.raises(ValueError):
        config_for(paths, strategies=())


def test_config_echo_omits_output_dir(paths):
    cfg = config_for(paths, output_dir="/tmp/somewhere")
    assert "output_dir" not in cfg.describe()
    assert cfg.describe()["trials"] == 3


def test_sensitivity_structure(paths):
    cfg = config_for(paths)
    rep = st.run_sensitivity(cfg)
    assert rep.experiment == "sensitivity"
    assert len(rep.cells) == 3 * 3  # strategies x bers
    assert len(rep.trial_results) == sum(c["trials_effective"] for c in rep.cells)

    zero = [c for c in rep.cells if c["ber"] == 0.0]
    assert len(zero) == 3
    for c in zero:
        assert c["nbf"] == 0
        assert c["trials_effective"] == 1
        assert c["trials"] == 3
        assert c["mean_accuracy"] == rep.baseline_accuracy
        assert c["std_accuracy"] == 0.0
        assert c["note"] == COLLAPSE_NOTE

    for c in rep.cells:
        if c["ber"] == 0.0:
            continue
        if c["strategy"] == "random":
            assert c["trials_effective"] == 3
        else:
            # magnitude/xai targeting with the fixed bit is deterministic
            assert c["trials_effective"] == 1
            assert c["note"] == COLLAPSE_NOTE


def test_sensitivity_trial_seeds_unique(paths):
    rep = st.run_sensitivity(config_for(paths))
    seeds = [t["seed_used"] for t in rep.trial_results]
    assert len(seeds) == len(set(seeds))


def test_sensitivity_uniform_bits_do_not_collapse(paths):
    cfg = config_for(paths, bit_mode="uniform", strategies=("magnitude",),
                     ber_grid=(0.02,))
    rep = st.run_sensitivity(cfg)
    assert rep.cells[0]["trials_effective"] == 3
    assert rep.cells[0]["note"] is None


def test_sensitivity_deterministic(paths):
    cfg = config_for(paths)
    a = st.run_sensitivity(cfg).as_dict()
    b = st.run_sensitivity(cfg).as_dict()
    assert a == b


def test_tmr_eval_structure(paths):
    cfg = config_for(paths, protection_fraction=0.05)
    rep = st.run_tmr_eval(cfg)
    assert rep.experiment == "tmr-eval"
    labels = [c["strategy"] for c in rep.cells]
    for m in ("random", "magnitude", "xai"):
        assert m in labels and f"{m}_unprotected" in labels
    assert len(rep.cells) == 3 * 3 * 2

    # ber 0: nothing flips on either side of the comparison
    for c in rep.cells:
        if c["ber"] == 0.0:
            assert c["mean_accuracy"] == rep.baseline_accuracy
            assert c["mean_loss"] == rep.baseline_loss
            assert c["note"] == COLLAPSE_NOTE

    # reliability entries recompute from the paired cells
    by_key = {(c["strategy"], c["ber"]): c for c in rep.cells}
    assert len(rep.reliability_improvement) == 9
    for entry in rep.reliability_improvement:
        prot = by_key[(entry["strategy"], entry["ber"])]
        unprot = by_key[(entry["strategy"] + "_unprotected", entry["ber"])]
        want = (prot["mean_accuracy"] - unprot["mean_accuracy"]) * 100.0
        assert entry["accuracy_points"] == pytest.approx(want, abs=1e-12)

    # overhead matches the protection size: ceil(0.05 * 384) = 20 triples
    assert rep.overhead["base_bytes"] == 4 * 384
    assert rep.overhead["replica_bytes"] == 8 * 20
    assert rep.overhead["index_bytes"] == 4 * 20
    assert rep.overhead["percent_overhead"] == pytest.approx(240 * 100 / 1536)


def test_tmr_eval_storage_nbf_counts_replica_words(paths):
    cfg = config_for(paths, protection_fraction=1.0, ber_grid=(0.02,),
                     strategies=("random",), trials=2)
    rep = st.run_tmr_eval(cfg)
    # 384 weights fully protected -> 1152 storage words
    assert rep.cells[0]["nbf"] == round(0.02 * 1152)
    # the unprotected comparator reports the same plan-level population
    assert rep.cells[1]["nbf"] == rep.cells[0]["nbf"]
    # but its trials only applied the base-word subset
    unprot_trials = [t for t in rep.trial_results
                     if t["strategy"] == "random_unprotected"]
    assert all(t["nbf"] <= rep.cells[0]["nbf"] for t in unprot_trials)


def test_min_protect_rows_cover_grid(paths):
    cfg = config_for(paths, ber_grid=(0.05,), trials=2, target_accuracy_loss=0.9)
    res = find_min_protection(cfg, "magnitude")
    assert res.ber == 0.05  # single-entry grid is taken as the eval ber
    assert [r["fraction"] for r in res.rows] == list(MIN_PROTECT_GRID)
    counts = [r["protected_count"] for r in res.rows]
    assert counts[0] == 0
    assert counts == sorted(counts)
    assert counts[-1] == 384
    assert res.achieved  # a 0.9 loss target is unmissable for a working model
    assert res.fraction == 0.0
    for r in res.rows:
        assert r["overhead"]["replica_bytes"] == 8 * r["protected_count"]
        assert 0 <= r["mean_accuracy"] <= 1


def test_min_protect_explicit_ber_wins(paths):
    cfg = config_for(paths, trials=2, target_accuracy_loss=0.9)
    res = find_min_protection(cfg, "random", ber=0.25)
    assert res.ber == 0.25
    assert res.rows[0]["nbf"] == round(0.25 * 384)


def test_min_protect_zero_faults_collapse(paths):
    cfg = config_for(paths, ber_grid=(1e-6,), trials=4)
    res = find_min_protection(cfg, "xai")
    for r in res.rows:
        assert r["nbf"] == 0
        assert r["trials_effective"] == 1
        assert r["accuracy_loss"] == 0.0
        assert r["meets_target"]
    assert res.fraction == 0.0
    assert res.overhead.percent_overhead == 0.0


def test_min_protect_target_validated(paths):
    cfg = config_for(paths, target_accuracy_loss=0.0)
    with pytest.raises(ValueError):
        find_min_protection(cfg, "random")


def test_run_min_protect_report(paths):
    cfg = config_for(paths, ber_grid=(0.05,), trials=2,
                     strategies=("random", "magnitude"), target_accuracy_loss=0.9)
    rep = st.run_min_protect(cfg)
    assert rep.experiment == "min-protect"
    assert len(rep.min_protect) == 2
    assert len(rep.cells) == 2 * len(MIN_PROTECT_GRID)
    assert rep.cells[0]["strategy"] == "random_f=0.0"
    assert rep.cells[3]["strategy"] == "random_f=0.005"
    assert {c["ber"] for c in rep.cells} == {0.05}


def test_emit_report_files(paths, tmp_path):
    cfg = config_for(paths, strategies=("random",), ber_grid=(0.0, 0.05))
    rep = st.run_sensitivity(cfg)
    out = emit_report(rep, tmp_path / "out")
    raw = out["report"].read_text()
    assert raw.endswith("\n")
    parsed = json.loads(raw)
    # the writer's formatting is its own fixed point: sorted keys, indent 2
    assert json.dumps(parsed, indent=2, sort_keys=True) + "\n" == raw
    assert parsed["experiment"] == "sensitivity"

    with out["curves"].open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CURVE_COLUMNS
    assert len(rows) == 1 + len(rep.cells)
    # float cells survive text round-trips exactly
    for row, cell in zip(rows[1:], rep.cells):
        got = dict(zip(rows[0], row))
        assert float(got["mean_accuracy"]) == cell["mean_accuracy"]
        assert float(got["std_loss"]) == cell["std_loss"]
        assert int(got["nbf"]) == cell["nbf"]

    assert out["summary"].read_text().startswith("experiment: sensitivity")
    with out["overhead"].open() as fh:
        orows = list(csv.reader(fh))
    assert tuple(orows[0]) == OVERHEAD_COLUMNS
    assert len(orows) == 1  # sensitivity has no protection overhead


def test_emit_report_byte_identical_across_dirs(paths, tmp_path):
    cfg = config_for(paths, strategies=("random", "xai"), ber_grid=(0.0, 0.05))
    rep1 = st.run_tmr_eval(cfg)
    rep2 = st.run_tmr_eval(cfg)
    a = emit_report(rep1, tmp_path / "a")
    b = emit_report(rep2, tmp_path / "b")
    for key in ("report", "curves", "overhead", "summary"):
        assert a[key].read_bytes() == b[key].read_bytes(), key


def test_min_protect_overhead_csv(paths, tmp_path):
    cfg = config_for(paths, ber_grid=(0.05,), trials=2, strategies=("magnitude",),
                     target_accuracy_loss=0.9)
    rep = st.run_min_protect(cfg)
    out = emit_report(rep, tmp_path / "mp")
    with out["overhead"].open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + len(MIN_PROTECT_GRID)
    fr = [float(r[2]) for r in rows[1:]]
    assert fr == list(MIN_PROTECT_GRID)
