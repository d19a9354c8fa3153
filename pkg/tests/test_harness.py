import numpy as np
import pytest

from tucker_recover import cli
from tucker_recover.harness import (
    ConfigError, ExperimentSpec, make_instance, mode_condition_numbers, parse_config,
    read_csv_rows, run_experiment, run_phase_transition, success_rates, synth_conditioned, synth_tensor,
)
from tucker_recover.tensor_core import multilinear_rank


def test_synth_tensor():
    a = synth_tensor((10, 9, 8), (2, 3, 2), 4)
    assert multilinear_rank(a.dense, 1e-10) == (2, 3, 2)
    b = synth_tensor((10, 9, 8), (2, 3, 2), 4)
    assert np.array_equal(a.dense, b.dense)
    assert not np.array_equal(a.dense, synth_tensor((10, 9, 8), (2, 3, 2), 5).dense)
    c = synth_tensor((20, 20, 20), (2, 2, 2), 0)
    assert np.isfinite(c.kappa1) and c.kappa1 >= 1


def test_synth_conditioned():
    flat = synth_conditioned(12, 3, 1.0, 0)
    np.testing.assert_allclose(mode_condition_numbers(flat.dense, (3, 3, 3)), 1.0, rtol=1e-8)
    cond = synth_conditioned(12, 3, 10.0, 0)
    k1, k2, k3 = mode_condition_numbers(cond.dense, (3, 3, 3))
    assert k1 == pytest.approx(1.0, rel=1e-8)
    assert k3 == pytest.approx(1.0, rel=1e-8)
    assert abs(k2 - 10.0) <= 1e-6
    assert np.count_nonzero(cond.tucker.core) == 9
    # congruence pattern, 1-based indices
    for j1, j2, j3 in zip(*np.nonzero(cond.tucker.core)):
        assert (j1 + j2 + j3 + 3) % 3 == 0
    with pytest.raises(ValueError):
        synth_conditioned(5, 2, 0.5, 0)


def test_parse_config():
    spec = parse_config("kind = phase  # comment\ndims = 8,8,8\nranks = 1, 2\nrhos = 0.5;1.0\nmonitors = yes\n")
    assert spec.ranks == (1, 2) and spec.rhos == (0.5, 1.0) and spec.monitors
    for bad in ("kind = nope", "kind = complete\nfoo = 1", "kind = complete\ntrials = 0",
                "kind = complete\nrho = 1.5", "kind = complete\nrank = 2,2", "dims = 3,3",
                "kind = complete\ntrials = x", "kind = complete\nsolvers =", "kind complete"):
        with pytest.raises(ConfigError):
            parse_config(bad)
    with pytest.raises(ConfigError):
        parse_config("kind = phase", kind="noise")
    assert parse_config("dims = 5,5,5", kind="cond", seed=9).seed == 9


def test_spec_hash_ignores_output_location():
    a = ExperimentSpec(kind="complete", out="a", jobs=1)
    b = ExperimentSpec(kind="complete", out="b", jobs=4)
    assert a.spec_hash == b.spec_hash
    assert a.spec_hash != ExperimentSpec(kind="complete", seed=1).spec_hash


def test_instance_noise_and_operator():
    spec = ExperimentSpec(kind="noise", dims=(8, 8, 8), rank=(2, 2, 2))
    truth = synth_tensor(spec.dims, spec.rank, 0)
    clean = make_instance(spec, truth, ("x", 0))
    noisy = make_instance(spec, truth, ("x", 0), snr_db=60.0)
    np.testing.assert_array_equal(clean.y, clean.op.apply(truth.dense))
    assert 0 < np.linalg.norm(noisy.y - clean.y) < 1e-2 * np.linalg.norm(clean.y)
    small = synth_tensor((6, 6, 6), (2, 2, 2), 0)
    gspec = ExperimentSpec(kind="complete", dims=(6, 6, 6), operator="gaussian", measurements=50)
    gauss = make_instance(gspec, small, ("g", 0))
    assert gauss.op.m == 50 and gauss.y.shape == (50,)


def test_phase_full_observation(tmp_path):
    spec = ExperimentSpec(kind="phase", dims=(8, 8, 8), ranks=(1,), rhos=(1.0,), trials=3, traces=False)
    result = run_phase_transition(spec, tmp_path)
    assert success_rates(result) == {1: [1.0]}
    rows = read_csv_rows(result.csv_path)
    assert rows[0] == ["r", "rho", "successes", "trials", "mean_iters"]
    assert rows[1][:4] == ["1", "1.0", "3", "3"]


def test_modes_share_samples(tmp_path):
    spec = ExperimentSpec(kind="modes", dims=(10, 10, 10), rank=(2, 3, 4), rho=0.5, trials=2, traces=False)
    result = run_experiment(spec, tmp_path)
    assert [r[1] for r in result.rows] == [1, 2, 3, 1, 2, 3]
    assert all(r[2] == "converged" for r in result.rows)


@pytest.mark.parametrize("kind", ["complete", "noise", "cond", "compare", "modes", "phase"])
def test_rerun_is_byte_identical(tmp_path, kind):
    text = (
        f"kind = {kind}\ndims = 8,8,8\nrank = 2,2,2\nranks = 1,2\nrhos = 0.5,1.0\n"
        "snrs = 60\nkappas = 1,3\nsolvers = sm_qrgd,sempiht\ntrials = 2\nmax_iters = 15\n"
    )
    a = run_experiment(parse_config(text), tmp_path / "a")
    b = run_experiment(parse_config(text, jobs=2), tmp_path / "b")
    for pa, pb in zip(a.paths, b.paths):
        if "timings" in pa.name:
            continue
        assert pa.read_bytes() == pb.read_bytes(), pa.name
    head = (tmp_path / "a" / f"{kind}.csv").read_text().splitlines()[:4]
    assert head[1].startswith("# spec_hash=") and head[2].startswith("# rng=") and head[3] == "# seed=0"


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text("dims = 8,8,8\nrank = 2,2,2\ntrials = 1\nrho = 0.6\n")
    assert cli.main(["complete", "--config", str(good), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert (tmp_path / "o" / "complete.csv").exists()
    assert "seed=3" in (tmp_path / "o" / "meta.txt").read_text()
    bad = tmp_path / "bad.cfg"
    bad.write_text("dims = 8,8,8\nrank = 9,2,2\n")
    assert cli.main(["complete", "--config", str(bad)]) == 1
    assert cli.main(["complete", "--config", str(tmp_path / "missing.cfg")]) == 1
    boom = tmp_path / "boom.cfg"
    boom.write_text(
        "dims = 8,8,8\nrank = 2,2,2\ntrials = 1\nsolvers = sempiht\nstep_rule = constant\nalpha = 50\n"
    )
    assert cli.main(["complete", "--config", str(boom), "--out", str(tmp_path / "d")]) == 2
