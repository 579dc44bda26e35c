import json

import numpy as np
import pytest

from oracles import forward_gains, random_planted_model

import mdiqkd.pipeline as pipeline
from mdiqkd.cli import main
from mdiqkd.config import dump_config_text, preset
from mdiqkd.otp import read_key_file
from mdiqkd.pipeline import (
    PipelineError,
    estimate_only,
    run_pipeline,
    simulate_partition,
    simulate_table,
)
from mdiqkd.tally import TallyTable, write_csv


@pytest.fixture(scope="module")
def config_file(tmp_path_factory, bright_cfg):
    path = tmp_path_factory.mktemp("cfg") / "bright.json"
    path.write_text(dump_config_text(bright_cfg))
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, config_file):
    out = tmp_path_factory.mktemp("run")
    run_pipeline(config_file, out, chunk=50_000)
    return out


def test_outputs_written(run_dir):
    for name in ("tallies.csv", "estimate.json", "keyrate.json", "keyrate.txt", "manifest.json",
                 "config.snapshot.json"):
        assert (run_dir / name).is_file(), name
    assert not (run_dir / "checkpoints").exists()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["config"]["pulse_pairs"] == 200_000
    assert set(manifest["versions"]) >= {"mdiqkd", "numpy", "python"}


def test_same_seed_same_bytes(run_dir, config_file, tmp_path):
    run_pipeline(config_file, tmp_path, chunk=30_000)
    assert (tmp_path / "tallies.csv").read_bytes() == (run_dir / "tallies.csv").read_bytes()
    assert (tmp_path / "keyrate.json").read_bytes() == (run_dir / "keyrate.json").read_bytes()


def test_partitioned_run_identical(run_dir, config_file, tmp_path):
    run_pipeline(config_file, tmp_path, partitions=3, chunk=40_000)
    assert (tmp_path / "tallies.csv").read_bytes() == (run_dir / "tallies.csv").read_bytes()


def test_estimate_only_matches_run(run_dir, config_file):
    est, report = estimate_only(run_dir / "tallies.csv", config_file)
    assert est.to_dict() == json.loads((run_dir / "estimate.json").read_text())
    assert report.to_json() == (run_dir / "keyrate.json").read_text()


def test_zero_pulse_pairs_is_an_error(tmp_path, bright_cfg):
    path = tmp_path / "empty.json"
    path.write_text(json.dumps({**bright_cfg.to_dict(), "pulse_pairs": 0}))
    with pytest.raises(PipelineError, match="no data"):
        run_pipeline(path, tmp_path / "out")


def test_missing_row_names_cell(run_dir, config_file, tmp_path):
    lines = (run_dir / "tallies.csv").read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(line for line in lines if not line.startswith("3,0,Z,")) + "\n")
    with pytest.raises(PipelineError, match=r"k=3, l=0, basis=Z") as info:
        estimate_only(bad, config_file)
    assert info.value.stage == "sift-tally"


def test_planted_csv_is_sound(tmp_path, preset_cfg):
    rng = np.random.default_rng(77)
    Y, e = random_planted_model(rng)
    mu = np.array(preset_cfg.intensities_alice)
    sent = 10**12
    Q, EQ = forward_gains(Y, mu, mu), forward_gains(Y * e, mu, mu)
    counts = np.zeros((4, 4, 2, 3), np.int64)
    counts[..., 0] = sent
    counts[..., 1] = np.rint(Q * sent)[..., None]
    counts[..., 2] = np.rint(EQ * sent)[..., None]
    csv_path = tmp_path / "planted.csv"
    write_csv(TallyTable(counts, np.zeros((4, 4), np.int64)), csv_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(dump_config_text(preset_cfg.replace(pulse_pairs=32 * sent)))
    est, _ = estimate_only(csv_path, cfg_path)
    assert est.y11_lower <= Y[1, 1]
    assert est.e11_upper >= e[1, 1]


def test_resume_after_interruption(bright_cfg, tmp_path, monkeypatch):
    ckpt = tmp_path / "part.json"
    full = simulate_partition(bright_cfg, 0, 100_000, None, chunk=20_000)
    real = pipeline.simulate_rounds
    calls = {"n": 0}

    def flaky(cfg, start, stop):
        calls["n"] += 1
        if calls["n"] == 3:
            raise KeyboardInterrupt
        return real(cfg, start, stop)

    monkeypatch.setattr(pipeline, "simulate_rounds", flaky)
    with pytest.raises(KeyboardInterrupt):
        simulate_partition(bright_cfg, 0, 100_000, ckpt, chunk=20_000)
    assert json.loads(ckpt.read_text())["next"] == 40_000
    monkeypatch.setattr(pipeline, "simulate_rounds", real)
    assert simulate_partition(bright_cfg, 0, 100_000, ckpt, chunk=20_000) == full


def test_simulate_table_counts_every_round(bright_cfg):
    table = simulate_table(bright_cfg.replace(pulse_pairs=12_345), partitions=1)
    assert table.total_rounds == 12_345


# --- command line -----------------------------------------------------------

def test_cli_simulate_estimate_report(config_file, tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
    assert "key rate" in capsys.readouterr().out
    assert main(["estimate", "--tallies", str(out / "tallies.csv"), "--config",
                 str(config_file), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["estimate"] == json.loads((out / "estimate.json").read_text())
    assert main(["report", "--run", str(out)]) == 0
    for name in ("sifted_rates.png", "key_contributions.png", "report.csv"):
        assert (out / name).stat().st_size > 0
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == "k,l,mu,nu,Q_Z,E_Z,Q_X,E_X,R_kl"
    assert len(rows) == 17


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["estimate", "--tallies", str(tmp_path / "missing.csv"),
                 "--config", "paper-50km"]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_otp_round_trip_and_refusal(tmp_path, capsys):
    key = tmp_path / "k.otp"
    assert main(["otp", "keygen", "--bits", "24192", "--seed", "4", "--out", str(key)]) == 0
    image = tmp_path / "image.bin"
    image.write_bytes(bytes(range(256)) * 11 + bytes(3024 - 2816))
    assert len(image.read_bytes()) * 8 == 24192
    copy = tmp_path / "k2.otp"
    copy.write_bytes(key.read_bytes())
    enc, dec = tmp_path / "image.enc", tmp_path / "image.dec"
    assert main(["otp", "encrypt", "--key", str(key), "--in", str(image), "--out", str(enc)]) == 0
    assert read_key_file(key).remaining == 0
    assert main(["otp", "decrypt", "--key", str(copy), "--in", str(enc), "--out", str(dec)]) == 0
    assert dec.read_bytes() == image.read_bytes()
    # the spent key refuses a second message
    assert main(["otp", "encrypt", "--key", str(key), "--in", str(image), "--out", str(enc)]) == 3
    assert "insufficient key" in capsys.readouterr().err


def test_cli_calibrate(capsys):
    assert main(["calibrate", "--config", "paper-50km", "--pulse-pairs", "214200000000"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.201, abs=1e-3)


@pytest.mark.slow
def test_preset_full_report_set(tmp_path):
    cfg = preset("paper-50km", pulse_pairs=100_000_000)
    path = tmp_path / "preset.json"
    path.write_text(dump_config_text(cfg))
    out = tmp_path / "run"
    run_pipeline(path, out)
    assert main(["report", "--run", str(out)]) == 0
    for name in ("tallies.csv", "estimate.json", "keyrate.json", "keyrate.txt", "manifest.json",
                 "sifted_rates.png", "key_contributions.png", "report.csv"):
        assert (out / name).is_file()
    keyrate = json.loads((out / "keyrate.json").read_text())
    assert keyrate["total_bits_per_pulse"] > 0.0
