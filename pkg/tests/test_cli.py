import json
import struct

import numpy as np
import pytest

from rsnnsim.cli import main
from rsnnsim.dataset import ingest_idx, write_idx
from rsnnsim.encoding import EncodingConfig, quantize_activation
from rsnnsim.errors import DataFormatError
from rsnnsim.figures import render_figure

SMALL_NET = "8x8x1 - 4C3 - P2 - L6 - L3"


@pytest.fixture
def net_file(tmp_path):
    path = tmp_path / "net.txt"
    path.write_text(SMALL_NET + "\n")
    return str(path)


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(20, 8, 8), dtype=np.uint8)
    labels = rng.integers(0, 3, size=20, dtype=np.uint8)
    ip, lp = tmp_path / "imgs.idx", tmp_path / "lbls.idx"
    write_idx(images, labels, ip, lp)
    return str(ip), str(lp)


class TestIdxIngestion:
    def test_round_trip(self, idx_pair):
        ds = ingest_idx(*idx_pair)
        assert len(ds) == 20
        assert ds.images.shape == (20, 8, 8)
        assert 0.0 <= ds.images.min() and ds.images.max() <= 1.0

    def test_pixel_255_maps_to_max_level(self, tmp_path):
        write_idx(np.full((1, 2, 2), 255, dtype=np.uint8), np.zeros(1),
                  tmp_path / "i", tmp_path / "l")
        ds = ingest_idx(tmp_path / "i", tmp_path / "l")
        assert ds.images[0, 0, 0] == 1.0
        cfg = EncodingConfig(4)
        assert quantize_activation(float(ds.images[0, 0, 0]), cfg) == cfg.max_level

    def test_pad_to_32(self, tmp_path):
        write_idx(np.ones((2, 28, 28), dtype=np.uint8), np.zeros(2),
                  tmp_path / "i", tmp_path / "l")
        ds = ingest_idx(tmp_path / "i", tmp_path / "l", pad_to_32=True)
        assert ds.images.shape == (2, 32, 32)
        assert ds.images[0, 0, 0] == 0.0  # border is padding
        assert ds.images[0, 16, 16] > 0.0

    def test_truncated_images(self, tmp_path, idx_pair):
        data = open(idx_pair[0], "rb").read()
        bad = tmp_path / "cut.idx"
        bad.write_bytes(data[:-5])
        with pytest.raises(DataFormatError, match="pixel bytes"):
            ingest_idx(bad, idx_pair[1])

    def test_wrong_magic(self, tmp_path, idx_pair):
        bad = tmp_path / "magic.idx"
        bad.write_bytes(struct.pack(">4i", 1234, 1, 2, 2) + bytes(4))
        with pytest.raises(DataFormatError, match="magic"):
            ingest_idx(bad, idx_pair[1])

    def test_count_mismatch(self, tmp_path, idx_pair):
        lbl = tmp_path / "short.idx"
        lbl.write_bytes(struct.pack(">2i", 2049, 3) + bytes(3))
        with pytest.raises(DataFormatError, match="count"):
            ingest_idx(idx_pair[0], lbl)


class TestFigures:
    def test_sweep_figures(self, tmp_path):
        report = {"kind": "sweep_t", "rows": [
            {"T": t, "total_cycles": 100 * t, "latency_us": t} for t in (3, 4, 5)]}
        out = tmp_path / "t.png"
        render_figure(report, out)
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

        report = {"kind": "sweep_units", "rows": [
            {"conv_units": u, "total_cycles": 1000 // u, "latency_us": 1,
             "speedup_vs_baseline": float(u)} for u in (1, 2, 4)]}
        out = tmp_path / "u.png"
        render_figure(report, out)
        assert out.stat().st_size > 0

    def test_breakdown_figure(self, tmp_path):
        report = {"kind": "inference", "cycle_report": {"layers": [
            {"index": 0, "kind": "conv", "detail": "4C3x3",
             "compute_cycles": 100, "weight_fetch_cycles": 10, "total_cycles": 110},
        ]}}
        out = tmp_path / "b.png"
        render_figure(report, out)
        assert out.stat().st_size > 0


class TestCliCommands:
    def test_infer_json_report_and_figure(self, net_file, tmp_path):
        report = tmp_path / "r.json"
        figure = tmp_path / "r.png"
        code = main(["infer", "--net", net_file, "--random-params", "--random-input",
                     "--seed", "3", "--report", str(report), "--format", "json",
                     "--figure", str(figure)])
        assert code == 0
        data = json.loads(report.read_text())
        assert data["kind"] == "inference"
        assert len(data["logits"]) == 3
        assert data["cycle_report"]["total_cycles"] > 0
        assert figure.stat().st_size > 0

    def test_infer_matches_oracle_command(self, net_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        common = ["--net", net_file, "--random-params", "--random-input",
                  "--seed", "11", "--format", "json"]
        assert main(["infer", *common, "--report", str(a)]) == 0
        assert main(["oracle", *common, "--report", str(b)]) == 0
        assert json.loads(a.read_text())["logits"] == json.loads(b.read_text())["logits"]

    def test_reports_are_byte_identical(self, net_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["infer", "--net", net_file, "--random-params", "--random-input",
                "--seed", "5", "--format", "json"]
        assert main([*args, "--report", str(a)]) == 0
        assert main([*args, "--report", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_save_and_reload_params(self, net_file, tmp_path):
        saved = tmp_path / "w.rsnn"
        r1, r2 = tmp_path / "1.json", tmp_path / "2.json"
        assert main(["infer", "--net", net_file, "--random-params", "--random-input",
                     "--seed", "7", "--save-params", str(saved),
                     "--report", str(r1), "--format", "json"]) == 0
        assert main(["infer", "--net", net_file, "--params", str(saved),
                     "--random-input", "--seed", "7",
                     "--report", str(r2), "--format", "json"]) == 0
        assert json.loads(r1.read_text())["logits"] == json.loads(r2.read_text())["logits"]

    def test_evaluate(self, net_file, idx_pair, tmp_path):
        report = tmp_path / "e.json"
        code = main(["evaluate", "--net", net_file, "--random-params",
                     "--idx-images", idx_pair[0], "--idx-labels", idx_pair[1],
                     "--limit", "5", "--report", str(report), "--format", "json"])
        assert code == 0
        data = json.loads(report.read_text())
        assert data["items"] == 5
        assert 0.0 <= data["accuracy"] <= 1.0

    def test_sweep_t_csv(self, net_file, tmp_path):
        report = tmp_path / "t.csv"
        code = main(["sweep-t", "--net", net_file, "--random-params", "--random-input",
                     "--t-list", "2,3,4", "--report", str(report), "--format", "csv"])
        assert code == 0
        lines = report.read_text().splitlines()
        assert lines[0] == "T,total_cycles,latency_us"
        assert len(lines) == 4

    def test_sweep_units_text(self, net_file, tmp_path, capsys):
        code = main(["sweep-units", "--net", net_file, "--random-params",
                     "--random-input", "--u-list", "1,2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "sweep_units" in out

    def test_calibrate_writes_updated_net(self, net_file, tmp_path):
        out_net = tmp_path / "calibrated.txt"
        report = tmp_path / "c.json"
        code = main(["calibrate", "--net", net_file, "--random-params", "--random-input",
                     "--samples", "3", "--out-net", str(out_net),
                     "--report", str(report), "--format", "json"])
        assert code == 0
        data = json.loads(report.read_text())
        assert data["samples"] == 3
        assert all(r["requant_shift"] >= 0 for r in data["rows"])
        text = out_net.read_text()
        assert text.startswith("input 8x8x1")
        from rsnnsim.netmodel import parse_network
        parse_network(text)  # reparses cleanly

    def test_plan_buffers(self, net_file, tmp_path):
        report = tmp_path / "p.json"
        code = main(["plan-buffers", "--net", net_file,
                     "--report", str(report), "--format", "json"])
        assert code == 0
        data = json.loads(report.read_text())
        assert data["plan"]["buf2d_bits"] > 0

    def test_config_file_flows_through(self, net_file, tmp_path):
        cfg = tmp_path / "accel.cfg"
        cfg.write_text("T = 3\nconv_units = 2\nmemory_mode = off_chip\n")
        report = tmp_path / "r.json"
        code = main(["infer", "--net", net_file, "--random-params", "--random-input",
                     "--config", str(cfg), "--report", str(report), "--format", "json"])
        assert code == 0
        data = json.loads(report.read_text())
        assert data["time_steps"] == 3
        assert data["conv_units"] == 2
        assert data["cycle_report"]["total_weight_fetch_cycles"] > 0


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("8x8x1 - 4Q3 - L2\n")
        assert main(["infer", "--net", str(bad), "--random-params",
                     "--random-input"]) == 2

    def test_capacity_error_is_3(self, net_file, tmp_path):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("conv_xy = 2,1\n")
        assert main(["infer", "--net", net_file, "--random-params", "--random-input",
                     "--config", str(cfg)]) == 3

    def test_data_format_error_is_4(self, net_file, tmp_path):
        bad = tmp_path / "bad.rsnn"
        bad.write_bytes(b"JUNKJUNK")
        assert main(["infer", "--net", net_file, "--params", str(bad),
                     "--random-input"]) == 4

    def test_missing_input_source_is_2(self, net_file):
        assert main(["infer", "--net", net_file, "--random-params"]) == 2

    def test_missing_file_is_4(self):
        assert main(["infer", "--net", "/nonexistent/net.txt", "--random-params",
                     "--random-input"]) == 4
