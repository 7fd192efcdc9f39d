import json

import numpy as np
import pytest

from parsrc.analysis import gen_multitone, octave_multitone
from parsrc.cli import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from parsrc.stream import SerialStream, read_stream, write_stream


@pytest.fixture
def out(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv("PARSRC_OUT_DIR", str(d))
    return d


def last_json(capsys):
    return json.loads(capsys.readouterr().out)


class TestDesign:
    def test_auto_order(self, out, capsys):
        assert main(["design", "--transition", "0.03", "--atten", "70"]) == EXIT_OK
        summary = last_json(capsys)
        assert summary["stopband_atten_db"] >= 70
        h = np.loadtxt(out / "halfband_coeffs.csv")
        meta = json.loads((out / "halfband_coeffs.csv.json").read_text())
        assert len(h) == meta["order"] + 1 and meta["scale"] == 32768
        assert meta["quantized"][meta["half_order"]] == 16384

    def test_table_order_reports_achieved(self, out, capsys):
        assert main(["design", "--hb-order", "122", "--transition", "0.03", "--atten", "70"]) == EXIT_INFEASIBLE
        captured = capsys.readouterr()
        assert json.loads(captured.out)["achieved_atten_db"] > 55
        assert "infeasible" in captured.err

    @pytest.mark.parametrize("order", ["0", "7"])
    def test_bad_order(self, out, order):
        assert main(["design", "--hb-order", order]) == EXIT_USAGE

    def test_cic(self, out, capsys):
        assert main(["design", "--cic", "N=5", "R=20", "M=1"]) == EXIT_OK
        summary = last_json(capsys)
        assert summary["cic"]["R"] == 20 and summary["internal_width"] == 41
        assert (out / "cic_response.csv").read_text().startswith("f,db")

    def test_cic_bad_key(self, out):
        assert main(["design", "--cic", "Q=5"]) == EXIT_USAGE


class TestProcess:
    @pytest.fixture
    def multitone_file(self, tmp_path):
        s = gen_multitone(octave_multitone(1e-3), 20e6, 80 * 250, 16, headroom_db=1.0)
        return write_stream(tmp_path / "mt.i16", s)

    def test_factor_80(self, out, multitone_file, capsys):
        assert main(["process", str(multitone_file), "--factor", "80"]) == EXIT_OK
        report = last_json(capsys)
        assert report["output_count"] == report["input_count"] // 80
        y, meta = read_stream(report["output"])
        assert len(y) == 250 and meta["sample_rate_hz"] == pytest.approx(250e3)
        assert (out / "run_config_process.json").exists()

    def test_factor_81(self, out, multitone_file, capsys):
        assert main(["process", str(multitone_file), "--factor", "81"]) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "80" in err and "160" in err

    def test_empty(self, out, tmp_path, capsys):
        path = write_stream(tmp_path / "e.i16", SerialStream(np.zeros(0, dtype=np.int64), 1.0, 16))
        assert main(["process", str(path)]) == EXIT_OK
        report = last_json(capsys)
        assert report["output_count"] == 0 and report["input_count"] == 0

    def test_missing(self, out, tmp_path):
        assert main(["process", str(tmp_path / "nope.i16")]) == EXIT_IO

    def test_malformed(self, out, tmp_path):
        (tmp_path / "bad.i16").write_bytes(b"\x01")
        assert main(["process", str(tmp_path / "bad.i16")]) == EXIT_IO

    def test_float_kind(self, out, multitone_file, capsys):
        assert main(["process", str(multitone_file), "--kind", "float"]) == EXIT_OK
        report = last_json(capsys)
        assert report["output"].endswith(".csv")

    def test_config_with_override(self, out, multitone_file, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"command": "process", "args": {"factor": 160}}))
        assert main(["process", str(multitone_file), "--config", str(cfg)]) == EXIT_OK
        assert last_json(capsys)["config"]["factor"] == 160
        assert main(["process", str(multitone_file), "--config", str(cfg), "--factor", "80"]) == EXIT_OK
        assert last_json(capsys)["config"]["factor"] == 80

    def test_config_unknown_key(self, out, multitone_file, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["process", str(multitone_file), "--config", str(cfg)]) == EXIT_USAGE

    def test_run_config_reproduces(self, out, multitone_file, capsys):
        assert main(["process", str(multitone_file), "--factor", "160"]) == EXIT_OK
        first = last_json(capsys)
        saved = out / "run_config_process.json"
        assert main(["process", str(multitone_file), "--config", str(saved)]) == EXIT_OK
        assert last_json(capsys) == first


class TestVerify:
    ARGS = ["verify", "--samples", "3000", "--lanes", "2,6,80", "--factors", "80,160"]

    def test_pass_and_deterministic(self, out, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(self.ARGS + ["--report", str(a)]) == EXIT_OK
        assert main(self.ARGS + ["--report", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        assert json.loads(a.read_text())["failed"] == 0

    def test_injected_fault(self, out, tmp_path, capsys):
        r = tmp_path / "r.json"
        assert main(self.ARGS + ["--report", str(r), "--inject-fault"]) == EXIT_VERIFY
        report = json.loads(r.read_text())
        bad = [c for c in report["cases"] if not c["pass"]]
        assert len(bad) == 1 and bad[0]["first_mismatch"] == 1500
        assert "repro" in bad[0]
        assert "first mismatch at sample 1500" in capsys.readouterr().err


class TestRespondSimulate:
    def test_respond(self, out, capsys):
        assert main(["respond", "--factor", "80"]) == EXIT_OK
        summary = last_json(capsys)
        assert summary["stopband_atten_db"] >= 65
        assert (out / "response_d80.csv").exists()

    def test_respond_bad_factor(self, out):
        assert main(["respond", "--factor", "81"]) == EXIT_USAGE

    def test_simulate_antialias(self, out, capsys):
        assert main(["simulate", "--antialias", "--factor", "80"]) == EXIT_OK
        summary = last_json(capsys)
        assert summary["antialias"]["rejection_db"] >= 70
        assert "multitone" not in summary

    def test_no_command(self):
        assert main([]) == EXIT_USAGE
