import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import random_channels

from relaycast import harness, model, sdr
from relaycast.harness import ConfigError, ExperimentConfig, MethodOptions


@pytest.fixture(scope="module")
def smoke_records(tmp_path_factory):
    cfg = harness.profile("smoke")
    out = tmp_path_factory.mktemp("smoke")
    records, _ = harness.sweep(cfg, out=str(out))
    return cfg, out, records


def _by_seed(records):
    out = {}
    for r in records:
        out.setdefault(r.seed, {})[r.method] = r
    return out


def test_smoke_sweep_orderings(smoke_records):
    cfg, _, records = smoke_records
    assert len(records) == len(cfg.seeds) * len(cfg.methods)
    assert all(r.status != "" and not r.status.startswith("error") for r in records)
    for seed, rec in _by_seed(records).items():
        ub = rec["SDR2D-UB"].min_snr
        assert ub >= rec["R2-CCCP"].min_snr * (1 - 1e-7)
        assert rec["R2-CCCP"].min_snr >= rec["R1-CCCP"].min_snr * (1 - 1e-7)
        assert ub >= rec["R2-SDR2D"].min_snr * (1 - 1e-7)
        assert ub >= rec["R1-SDR2D"].min_snr * (1 - 1e-7)
        assert rec["SDR2D-UB"].sdr_rank is not None


def test_rate_formula_on_records(smoke_records):
    for r in smoke_records[2]:
        factor = 1.0 if r.method == "DSD" else 0.5
        assert r.min_rate == pytest.approx(factor * math.log2(1 + r.min_snr))


def test_sweep_outputs(smoke_records):
    cfg, out, records = smoke_records
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert list(rows[0]) == harness.RESULT_COLUMNS
    assert len(rows) == len(records)
    keys = [(float(r["sweep_value"]), int(r["seed"]), harness.METHODS.index(r["method"]))
            for r in rows]
    assert keys == sorted(keys)
    man = json.load(open(out / "manifest.json"))
    assert man["config_sha256"] == cfg.digest()
    assert man["seeds"] == list(cfg.seeds)
    assert man["files"] == ["results.csv"]
    assert {"python", "numpy", "scipy"} <= set(man["versions"])


def test_rerun_is_byte_identical_except_runtime(tmp_path):
    cfg = harness.profile("smoke", methods=("R1-CCCP", "DSD"), seeds=(1,))
    texts = []
    for name in ("a", "b"):
        harness.sweep(cfg, out=str(tmp_path / name))
        rows = list(csv.DictReader(open(tmp_path / name / "results.csv")))
        for r in rows:
            r.pop("runtime_s")
        texts.append(rows)
    assert texts[0] == texts[1]
    assert (tmp_path / "a" / "manifest.json").read_bytes() != b""
    man = [json.load(open(tmp_path / n / "manifest.json")) for n in ("a", "b")]
    man[0]["config"].pop("out"), man[1]["config"].pop("out")
    assert man[0] == man[1]


def test_empty_sweep_gives_empty_table(tmp_path):
    cfg = harness.profile("smoke", sweep_values=())
    records, traces = harness.sweep(cfg, out=str(tmp_path))
    assert records == [] and traces == []
    assert (tmp_path / "results.csv").read_text().strip() == ",".join(harness.RESULT_COLUMNS)


def test_trace_mode_is_monotone(tmp_path):
    cfg = harness.profile("smoke", sweep_axis="trace", seeds=(0,), methods=("R2-CCCP", "SDR2D-UB"))
    records, rows = harness.sweep(cfg, out=str(tmp_path))
    k = cfg.options.trace_iterations
    assert [r["k"] for r in rows] == list(range(k + 1))
    hi = np.array([float(r["highest_min_snr_db"]) for r in rows])
    lo = np.array([float(r["lowest_min_snr_db"]) for r in rows])
    assert np.all(np.diff(hi) >= -1e-7) and np.all(np.diff(lo) >= -1e-7)
    assert np.all(hi >= lo)
    ub = next(r for r in records if r.method == "SDR2D-UB")
    assert hi[-1] <= ub.min_snr_db + 1e-6
    assert list(csv.DictReader(open(tmp_path / "traces.csv")))[0].keys() == set(
        harness.TRACE_COLUMNS)


def test_failures_are_recorded_not_raised(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(harness.sdr, "search", boom)
    cfg = harness.profile("smoke", seeds=(0,), methods=("SDR2D-UB", "DSD"))
    records, _ = harness.run_cell(cfg, 0, 20.0)
    status = {r.method: r.status for r in records}
    assert status["SDR2D-UB"] == "error: RuntimeError"
    assert status["DSD"] == "ok"


# -- methods --------------------------------------------------------------------

def test_dsd_equal_direct_links_and_budget_scaling(rng):
    ch = random_channels(rng, R=2, M=4)
    ch = type(ch)(ch.f, ch.g, np.full(4, 0.3 + 0.4j), 1.0, 1.0)
    data = model.build(ch)
    budget = model.PowerBudget.from_total(2.0)
    snr = harness.dsd_power(budget) * data.d_sq / data.sigma_nu_sq
    np.testing.assert_allclose(snr, snr[0])
    gain = harness.run_dsd(data, budget.scaled(2.0)) / harness.run_dsd(data, budget)
    assert 10 * np.log10(gain) == pytest.approx(10 * np.log10(2.0))
    assert 10 * np.log10(2.0) == pytest.approx(3.0103, abs=1e-4)


def test_dsd_matches_model_with_silent_relays(rng):
    data = model.build(random_channels(rng, R=3, M=1))
    budget = model.PowerBudget.from_total(4.0)
    p = harness.dsd_power(budget)
    assert p == pytest.approx(0.5)
    assert harness.run_dsd(data, budget) == pytest.approx(model.snr(np.zeros(8), 1 / p, data, 0))


def test_rate_helper():
    assert harness.rate(1.0, "R2-CCCP") == pytest.approx(0.5)
    assert harness.rate(3.0, "DSD") == pytest.approx(2.0)
    assert harness.rate(0.0, "DSD") == 0.0


def test_r1_dominated_by_r2_and_second_half_zero(rng):
    opts = MethodOptions(n_starts=2)
    for seed in range(3):
        data = model.build(random_channels(np.random.default_rng(seed), R=3, M=4))
        budget = model.PowerBudget.from_total(10.0)
        r1 = harness.run_r1(data, budget, opts, seed)
        r2 = harness.run_r2(data, budget, opts, seed, r1=r1)
        assert np.all(r1.solution.w2_tilde == 0)
        assert r2.min_snr >= r1.min_snr * (1 - 1e-9)


def test_rank_one_relaxation_gives_identical_recoveries(rng):
    data = model.build(random_channels(rng, R=3, M=1))
    budget = model.PowerBudget.from_total(10.0)
    out = sdr.search(data, budget, grid_size=11)
    assert out.rank == 1
    s1, how1 = sdr.recover(out, data, budget, "rank1")
    s2, how2 = sdr.recover(out, data, budget, "rank2")
    assert how1 == how2 == "decomposition"
    np.testing.assert_allclose(s1.w, s2.w)


# -- configuration ------------------------------------------------------------------

def test_profiles():
    desk = harness.profile("desk")
    assert (desk.relay_count, desk.sweep_axis, desk.sweep_values) == (10, "M", (10, 25, 50))
    assert len(desk.seeds) == 20
    smoke = harness.profile("smoke")
    assert (smoke.relay_count, smoke.destination_count, len(smoke.seeds)) == (4, 8, 3)
    with pytest.raises(ValueError):
        harness.profile("huge")


def test_budget_ratios():
    b = ExperimentConfig().budget(30.0)
    assert (b.P_T_max, b.P_S_max, b.P_R_max, b.p_r_max) == pytest.approx(
        (1.0, 0.5, 1 / 3, 1 / 15))


def test_instance_depends_on_axis():
    cfg = harness.profile("desk")
    ch, budget = cfg.instance(0, 25)
    assert ch.destination_count == 25
    assert budget.P_T_max == pytest.approx(10 ** ((5 - 30) / 10))
    pt = replace(cfg, sweep_axis="P_T", sweep_values=(10.0,))
    ch, budget = pt.instance(0, 10.0)
    assert ch.destination_count == 10 and budget.P_T_max == pytest.approx(0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(methods=())
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("MAGIC",))
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())
    with pytest.raises(ValueError):
        ExperimentConfig(source_ratio=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(sweep_axis="M", sweep_values=(2.5,))
    with pytest.raises(ValueError):
        ExperimentConfig(geometry={"antenna_gain": 3})


def test_digest_ignores_output_directory():
    a = ExperimentConfig(out="x")
    assert a.digest() == ExperimentConfig(out="y").digest()
    assert a.digest() != ExperimentConfig(P_T_dbm=21.0).digest()


def test_yaml_config_overlay(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("relay_count: 6\nsweep_axis: P_T\nsweep_values: [0, 10]\n"
                 "options:\n  grid_size: 30\n")
    cfg = harness.load_config(p, base=harness.profile("smoke"))
    assert cfg.relay_count == 6 and cfg.sweep_values == (0, 10)
    assert cfg.options.grid_size == 30 and cfg.options.n_candidates == 100


@pytest.mark.parametrize("text, where", [
    ("relay_count: 4\nbogus: 1\n", ":2: field 'bogus'"),
    ("seeds: []\n", ":1: field 'seeds'"),
    ("methods: [R2-CCCP]\noptions:\n  grid_size: 0\n", ":2: field 'options'"),
    ("options:\n  colour: red\n", ":2: field 'options.colour'"),
    ("relay_count: [1\n", "invalid YAML"),
])
def test_yaml_diagnostics(tmp_path, text, where):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError) as err:
        harness.load_config(p)
    assert where in str(err.value)
    assert str(p) in str(err.value)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        harness.sweep(harness.profile("smoke", sweep_values=()), out=str(blocker / "sub"))
