import struct

import numpy as np
import pytest

from stochprec import mnist
from stochprec.config import (ExperimentConfig, format_summary_table,
                              parse_allocation, parse_config, read_summary,
                              summarize, write_config, write_summary)


def tiny_set(n=12, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, (n, 1, 28, 28)).astype(np.float64) / 255.0
    labels = rng.integers(0, 10, n).astype(np.int64)
    return mnist.MnistSet(images=images, labels=labels)


class TestIdx:
    def test_round_trip_exact(self, tmp_path):
        ds = tiny_set()
        ip, lp = tmp_path / "imgs", tmp_path / "lbls"
        mnist.save_idx(ds, ip, lp)
        back = mnist.load_idx(ip, lp)
        assert np.array_equal(back.images, ds.images)
        assert np.array_equal(back.labels, ds.labels)

    def test_bad_image_magic(self, tmp_path):
        ds = tiny_set()
        ip, lp = tmp_path / "imgs", tmp_path / "lbls"
        mnist.save_idx(ds, ip, lp)
        raw = bytearray(ip.read_bytes())
        raw[:4] = struct.pack(">i", 1234)
        ip.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="magic 1234"):
            mnist.load_idx(ip, lp)

    def test_truncated_images(self, tmp_path):
        ds = tiny_set()
        ip, lp = tmp_path / "imgs", tmp_path / "lbls"
        mnist.save_idx(ds, ip, lp)
        ip.write_bytes(ip.read_bytes()[:-5])
        with pytest.raises(ValueError, match="truncated"):
            mnist.load_idx(ip, lp)

    def test_trailing_bytes(self, tmp_path):
        ds = tiny_set()
        ip, lp = tmp_path / "imgs", tmp_path / "lbls"
        mnist.save_idx(ds, ip, lp)
        ip.write_bytes(ip.read_bytes() + b"x")
        with pytest.raises(ValueError, match="trailing"):
            mnist.load_idx(ip, lp)

    def test_count_mismatch(self, tmp_path):
        ds = tiny_set()
        ip, lp = tmp_path / "imgs", tmp_path / "lbls"
        mnist.save_idx(ds, ip, lp)
        mnist.save_idx(tiny_set(n=5), tmp_path / "i2", lp)
        with pytest.raises(ValueError, match="does not match"):
            mnist.load_idx(ip, lp)

    def test_check_dir(self, tmp_path):
        mnist.ensure_dataset(tmp_path, n_train=30, n_test=10, seed=1)
        assert mnist.check_dir(tmp_path) == (30, 10)

    def test_synthesize_deterministic(self):
        a = mnist.synthesize_digits(8, seed=3)
        b = mnist.synthesize_digits(8, seed=3)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)
        assert a.images.min() >= 0.0 and a.images.max() <= 1.0


class TestAllocationString:
    def test_digit_form(self):
        assert parse_allocation("22222") == [2, 2, 2, 2, 2]
        assert parse_allocation("84211") == [8, 4, 2, 1, 1]

    def test_comma_form(self):
        assert parse_allocation("10,2,2") == [10, 2, 2]

    def test_zero_rejected(self):
        with pytest.raises(ValueError, match="0-bit"):
            parse_allocation("20222")

    def test_garbage_rejected(self):
        with pytest.raises(ValueError, match="invalid"):
            parse_allocation("2a222")


class TestConfig:
    def test_parse_round_trip(self, tmp_path):
        cfg = ExperimentConfig(arm="manual", bits="88888", epochs=7, seed=3,
                               lr=5e-4, train_limit=1000)
        path = tmp_path / "run.cfg"
        write_config(cfg, path)
        assert parse_config(path) == cfg

    def test_types_and_comments(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("arm = learned  # learned allocation\nbudget = 40\n"
                        "\nlr = 0.002\n")
        cfg = parse_config(path)
        assert cfg.arm == "learned" and cfg.budget == 40 and cfg.lr == 0.002

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("learning_rate = 0.1\n")
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("epochs\n")
        with pytest.raises(ValueError, match="key=value"):
            parse_config(path)

    def test_manual_requires_bits(self):
        with pytest.raises(ValueError, match="bits"):
            ExperimentConfig(arm="manual")

    def test_manual_budget_derived(self):
        cfg = ExperimentConfig(arm="manual", bits="88888")
        assert cfg.budget == 40
        assert cfg.name == "budget=40_88888"
        assert cfg.fixed_allocation() == [8] * 5

    def test_learned_name(self):
        assert ExperimentConfig(arm="learned", budget=10).name == "budget=10_learn"

    def test_bad_arm(self):
        with pytest.raises(ValueError, match="arm"):
            ExperimentConfig(arm="auto")


class TestSummaries:
    def test_write_read(self, tmp_path):
        path = tmp_path / "summary.csv"
        write_summary(path, "budget=10_learn", 10, 0.0234, [2, 2, 2, 2, 2])
        s = read_summary(path)
        assert s["network"] == "budget=10_learn"
        assert s["budget"] == 10
        assert s["val_error"] == pytest.approx(0.0234)
        assert s["allocation"] == "2 2 2 2 2"

    def test_summarize_mean_and_std(self, tmp_path):
        paths = []
        for i, err in enumerate([0.02, 0.03]):
            p = tmp_path / f"s{i}.csv"
            write_summary(p, "budget=10_22222", 10, err, [2] * 5)
            paths.append(p)
        rows = summarize(paths)
        assert len(rows) == 1
        assert rows[0]["mean_error"] == pytest.approx(0.025)
        assert rows[0]["std_error"] == pytest.approx(0.00707, abs=1e-4)

    def test_summarize_budget_consistency(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_summary(p1, "net", 10, 0.1, [2] * 5)
        write_summary(p2, "net", 40, 0.1, [8] * 5)
        with pytest.raises(ValueError, match="inconsistent budgets"):
            summarize([p1, p2])

    def test_format_table(self, tmp_path):
        p = tmp_path / "s.csv"
        write_summary(p, "budget=10_learn", 10, 0.0232, [2] * 5)
        table = format_summary_table(summarize([p]))
        assert "budget=10_learn" in table
        assert "2.32%" in table
        assert "2 2 2 2 2" in table
